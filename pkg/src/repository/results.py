import os
from typing import List

import pandas as pd

from src.exceptions import ValidationError
from src.schemas import RunResult

RESULT_COLUMNS = ["method", "seed", "k_cutoff", "eta_true", "eta_hat", "noise", "sessions",
                  "ndcg1", "ndcg3", "map", "seconds"]
SUMMARY_COLUMNS = ["axis", "value", "method", "metric", "mean", "ci_low", "ci_high", "n"]
PLOT_COLUMNS = ["x", "mean", "ci_low", "ci_high"]
FLOAT_FORMAT = "%.10g"


def results_frame(runs: List[RunResult], record_timing: bool = False) -> pd.DataFrame:
    """
    The results_frame function lays run results out in the results CSV schema.

    Failed cells keep their row with empty metric fields. Wall time is
    reported only with ``record_timing``, otherwise as 0.0.

    :param runs: List[RunResult]: Results in output order
    :param record_timing: bool: Keep measured seconds
    :return: One row per run
    """
    rows = []
    for run in runs:
        metrics = run.metrics
        rows.append({
            "method": run.method,
            "seed": run.seed,
            "k_cutoff": run.k_cutoff,
            "eta_true": run.eta_true,
            "eta_hat": run.eta_hat,
            "noise": run.noise,
            "sessions": run.sessions,
            "ndcg1": metrics.ndcg_at_1 if metrics else None,
            "ndcg3": metrics.ndcg_at_3 if metrics else None,
            "map": metrics.map if metrics else None,
            "seconds": run.seconds if record_timing else 0.0,
        })
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def _write(frame: pd.DataFrame, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_results(runs: List[RunResult], path: str, record_timing: bool = False) -> None:
    _write(results_frame(runs, record_timing), path)


def _read_csv(path: str, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(path, **kwargs)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ValidationError(f"{path} is not a well-formed CSV file: {e}") from e


def read_header(path: str) -> List[str]:
    return list(_read_csv(path, nrows=0).columns)


def _read(path: str, columns: List[str]) -> pd.DataFrame:
    frame = _read_csv(path)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ValidationError(f"{path} lacks columns {missing}")
    if frame.empty:
        raise ValidationError(f"{path} holds no rows")
    return frame


def read_results(path: str) -> pd.DataFrame:
    return _read(path, RESULT_COLUMNS)


def write_summary(summary: pd.DataFrame, path: str) -> None:
    _write(summary[SUMMARY_COLUMNS], path)


def read_summary(path: str) -> pd.DataFrame:
    """
    Loads a summary written by write_summary.

    :param path: str: Summary CSV
    :return: The summary frame
    """
    return _read(path, SUMMARY_COLUMNS)


def write_series(series: pd.DataFrame, path: str) -> None:
    _write(series[PLOT_COLUMNS], path)


def write_table(frame: pd.DataFrame, path: str) -> None:
    _write(frame, path)
