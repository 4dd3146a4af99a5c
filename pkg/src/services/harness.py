"""
Experiment orchestration.

A run draws one logging policy and one click log per seed, hands every
method the same log (with the propensities the estimators are told), and
evaluates each trained ranker on the test split. Sweeps repeat the run over
one axis and summarize the seeds with t-intervals.
"""
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from src.conf.config import settings
from src.domain.entities import ClickLog, Dataset, PropensityTable, QueryGroup
from src.exceptions import CldError, ValidationError
from src.repository import results as results_repository
from src.repository.letor import read_letor
from src.schemas import INTEGER_AXES, SWEEP_AXES, ExperimentConfig, Fig2Config, RunResult
from src.services.clicksim import build_click_log, misspecified_table
from src.services.dataset import (fit_standardizer, generate_fig2_data, generate_synthetic_ltr, standardize)
from src.services.estimators import train_method
from src.services.metrics import evaluate
from src.services.policy import LoggingPolicy, train_logging_policy

logger = logging.getLogger(__name__)

AXIS_COLUMNS = {
    "k_cutoff": "k_cutoff",
    "eta_true": "eta_true",
    "noise_eps": "noise",
    "n_sessions": "sessions",
    "eta_hat": "eta_hat",
}
METRIC_COLUMNS = ("ndcg1", "ndcg3", "map")
# numerical failures of one cell are recorded on its result
CELL_ERRORS = (CldError, ValueError, ArithmeticError, np.linalg.LinAlgError)
CONFIDENCE = 0.90


def _pad(dataset: Dataset, dim: int) -> Dataset:
    if dataset.feature_dim == dim:
        return dataset
    groups = [
        QueryGroup(g.query_id, g.doc_ids, np.pad(g.features, ((0, 0), (0, dim - dataset.feature_dim))),
                   g.grades, g.labels)
        for g in dataset.groups
    ]
    return Dataset(groups, dim, dataset.split_tag)


def prepare_data(config: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """
    The prepare_data function loads or generates the train and test splits.

    LETOR files are padded to a common feature dimension; synthetic data is
    generated from ``data_seed``. Both splits are standardized with the
    training statistics.

    :param config: ExperimentConfig: Experiment configuration
    :return: Train and test datasets
    """
    if config.train_path:
        train = read_letor(config.train_path, "train")
        test = read_letor(config.test_path, "test")
        dim = max(train.feature_dim, test.feature_dim)
        train, test = _pad(train, dim), _pad(test, dim)
    else:
        beta_rng = np.random.default_rng(config.data_seed)
        true_beta = beta_rng.standard_normal(config.feature_dim)
        train = generate_synthetic_ltr(config.n_train_queries, config.docs_per_query, config.feature_dim,
                                       true_beta, config.label_noise_sd, config.data_seed + 1, "train")
        test = generate_synthetic_ltr(config.n_test_queries, config.docs_per_query, config.feature_dim,
                                      true_beta, config.label_noise_sd, config.data_seed + 2, "test",
                                      query_prefix="t")
    mean, scale = fit_standardizer(train)
    logger.info("prepared %d train and %d test queries of dimension %d", len(train), len(test), train.feature_dim)
    return standardize(train, mean, scale), standardize(test, mean, scale)


def true_table(config: ExperimentConfig, dataset: Dataset) -> PropensityTable:
    n_positions = max(g.n_docs for g in dataset.groups)
    return PropensityTable(eta=config.eta_true, k_cutoff=config.k_cutoff, n_positions=max(n_positions, config.k_cutoff))


def simulate(config: ExperimentConfig, train: Dataset, seed: int) -> Tuple[LoggingPolicy, ClickLog]:
    """
    Trains the logging policy of ``seed`` and simulates its click log.

    The returned log carries the propensities the estimators are told,
    computed from ``eta_hat`` when it is set.

    :param config: ExperimentConfig: Experiment configuration
    :param train: Dataset: Training split
    :param seed: int: Run seed
    :return: The policy and the click log
    """
    policy = train_logging_policy(train, config.policy_fraction, seed)
    table = true_table(config, train)
    log = build_click_log(policy, train, table, config.n_sessions, config.noise_eps, seed)
    if config.eta_hat is not None:
        log = log.with_propensities(misspecified_table(table, config.eta_hat))
    return policy, log


def _result(config: ExperimentConfig, method: str, seed: int, **fields) -> RunResult:
    return RunResult(
        method=method,
        seed=seed,
        k_cutoff=config.k_cutoff,
        eta_true=config.eta_true,
        eta_hat=config.estimator_eta,
        noise=config.noise_eps,
        sessions=config.n_sessions,
        **fields,
    )


def run_cell(method: str, seed: int, config: ExperimentConfig, train: Dataset, test: Dataset,
             policy: LoggingPolicy, log: ClickLog) -> RunResult:
    """
    Trains and evaluates one (method, seed) cell; a library or numerical error becomes a failed result.

    :param method: str: Method name
    :param seed: int: Run seed
    :param config: ExperimentConfig: Experiment configuration
    :param train: Dataset: Training split the log refers to
    :param test: Dataset: Test split
    :param policy: LoggingPolicy: Logging policy of the seed
    :param log: ClickLog: Click log of the seed
    :return: The cell result
    """
    logger.info("cell %s seed %d started", method, seed)
    started = time.perf_counter()
    try:
        ranker = train_method(method, log, train, config.cld_config(seed), policy, config.k_cutoff)
        metrics = evaluate(ranker, test, graded=config.graded_eval)
    except CELL_ERRORS as e:
        logger.exception("cell %s seed %d failed", method, seed)
        return _result(config, method, seed, seconds=time.perf_counter() - started, error=str(e))
    seconds = time.perf_counter() - started
    logger.info("cell %s seed %d finished in %.1fs: ndcg@1 %.4f", method, seed, seconds, metrics.ndcg_at_1)
    return _result(config, method, seed, metrics=metrics, seconds=seconds)


def _run_seed(config: ExperimentConfig, train: Dataset, test: Dataset, seed: int) -> List[RunResult]:
    try:
        policy, log = simulate(config, train, seed)
    except CELL_ERRORS as e:
        logger.exception("simulation of seed %d failed", seed)
        return [_result(config, method, seed, error=str(e)) for method in config.methods]
    return [run_cell(method, seed, config, train, test, policy, log) for method in config.methods]


def run_experiment(config: ExperimentConfig, data: Tuple[Dataset, Dataset] | None = None,
                   max_workers: int | None = None) -> List[RunResult]:
    """
    The run_experiment function runs every (method, seed) cell of a configuration.

    Seeds run concurrently on ``max_workers`` threads (``settings.max_workers``
    by default); results come back ordered by method, then seed.

    :param config: ExperimentConfig: Experiment configuration
    :param data: Tuple[Dataset, Dataset] | None: Prepared splits, prepared from config when None
    :param max_workers: int | None: Number of worker threads
    :return: One RunResult per (method, seed)
    """
    train, test = data if data is not None else prepare_data(config)
    workers = max_workers or settings.max_workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            per_seed = list(executor.map(lambda seed: _run_seed(config, train, test, seed), config.seeds))
    else:
        per_seed = [_run_seed(config, train, test, seed) for seed in config.seeds]
    method_rank = {method: i for i, method in enumerate(config.methods)}
    seed_rank = {seed: i for i, seed in enumerate(config.seeds)}
    runs = [run for seed_runs in per_seed for run in seed_runs]
    return sorted(runs, key=lambda run: (method_rank[run.method], seed_rank[run.seed]))


def sweep(config: ExperimentConfig, axis: str, values: Sequence[float],
          data: Tuple[Dataset, Dataset] | None = None) -> List[RunResult]:
    """
    The sweep function repeats run_experiment over the values of one axis.

    :param config: ExperimentConfig: Base configuration
    :param axis: str: One of k_cutoff, eta_true, noise_eps, n_sessions, eta_hat
    :param values: Sequence[float]: Axis values, non-empty
    :param data: Tuple[Dataset, Dataset] | None: Prepared splits, shared by every value
    :return: Results of every value, in value order
    """
    if axis not in SWEEP_AXES:
        raise ValidationError(f"unknown sweep axis {axis!r}, expected one of {list(SWEEP_AXES)}")
    if not values:
        raise ValidationError("a sweep needs at least one value")
    if axis in INTEGER_AXES:
        fractional = [value for value in values if not float(value).is_integer()]
        if fractional:
            raise ValidationError(f"{axis} takes whole numbers, got {fractional}")
        values = [int(value) for value in values]
    data = data if data is not None else prepare_data(config)
    runs: List[RunResult] = []
    for value in values:
        point = ExperimentConfig(**{**config.dict(), axis: value})
        logger.info("sweep %s = %s", axis, value)
        runs.extend(run_experiment(point, data))
    return runs


def t_interval(values: Sequence[float], confidence: float = CONFIDENCE) -> Tuple[float, float, float]:
    """
    Mean and two-sided t-interval of a sample.

    :param values: Sequence[float]: Sample, e.g. one metric over seeds
    :param confidence: float: Coverage of the interval
    :return: mean, lower bound, upper bound; a single value has a zero-width interval
    """
    sample = np.asarray(values, dtype=float)
    if sample.size == 0:
        raise ValidationError("an interval needs at least one value")
    mean = float(sample.mean())
    if sample.size < 2:
        return mean, mean, mean
    half = stats.t.ppf(0.5 + confidence / 2, sample.size - 1) * sample.std(ddof=1) / np.sqrt(sample.size)
    return mean, float(mean - half), float(mean + half)


def summarize(runs: List[RunResult] | pd.DataFrame, axis: str) -> pd.DataFrame:
    """
    The summarize function aggregates seeds into long-format interval rows.

    Failed cells are left out; ``n`` counts the seeds that contributed.

    :param runs: List[RunResult] | pd.DataFrame: Results or a results frame
    :param axis: str: Sweep axis the rows are keyed by
    :return: Frame with columns axis, value, method, metric, mean, ci_low, ci_high, n
    """
    if axis not in AXIS_COLUMNS:
        raise ValidationError(f"unknown sweep axis {axis!r}")
    frame = runs if isinstance(runs, pd.DataFrame) else results_repository.results_frame(runs)
    if frame.empty:
        raise ValidationError("no results to summarize")
    column = AXIS_COLUMNS[axis]
    method_order = list(dict.fromkeys(frame["method"]))
    rows = []
    for value in sorted(frame[column].unique()):
        at_value = frame[frame[column] == value]
        for method in method_order:
            cell = at_value[at_value["method"] == method]
            for metric in METRIC_COLUMNS:
                sample = cell[metric].dropna().to_numpy(dtype=float)
                if sample.size == 0:
                    continue
                mean, low, high = t_interval(sample)
                rows.append({"axis": axis, "value": value, "method": method, "metric": metric,
                             "mean": mean, "ci_low": low, "ci_high": high, "n": int(sample.size)})
    if not rows:
        raise ValidationError("every cell failed, nothing to summarize")
    return pd.DataFrame(rows, columns=results_repository.SUMMARY_COLUMNS)


def _infer_axis(frame: pd.DataFrame) -> str:
    for axis, column in AXIS_COLUMNS.items():
        if frame[column].nunique() > 1:
            return axis
    return "k_cutoff"


def emit_plot_data(csv_path: str, out_dir: str, axis: str | None = None) -> List[str]:
    """
    The emit_plot_data function writes one series file per (metric, method).

    Accepts a summary CSV or a raw results CSV; raw results are summarized
    along ``axis``, or along the first axis whose value varies.

    :param csv_path: str: Summary or results CSV
    :param out_dir: str: Directory of the series files
    :param axis: str | None: Axis of a raw results file
    :return: Paths of the written files
    """
    header = results_repository.read_header(csv_path)
    if set(results_repository.SUMMARY_COLUMNS) <= set(header):
        summary = results_repository.read_summary(csv_path)
    else:
        frame = results_repository.read_results(csv_path)
        summary = summarize(frame, axis or _infer_axis(frame))
    paths = []
    for (metric, method), series in summary.groupby(["metric", "method"], sort=False):
        series = series.sort_values("value").rename(columns={"value": "x"})
        path = os.path.join(out_dir, f"{metric}_{method}.csv")
        results_repository.write_series(series, path)
        paths.append(path)
    logger.info("wrote %d plot series to %s", len(paths), out_dir)
    return paths


def fig2_study(config: Fig2Config) -> pd.DataFrame:
    """
    The fig2_study function fits straight lines to clean and biased 1-D data.

    Consecutive points form lists of ``list_size`` ranked by relevance. The
    position-biased observation is r·(1/p)^eta and selection keeps positions
    up to ``k_cutoff``; the four fits use clean, position-biased, selected and
    selected position-biased data.

    :param config: Fig2Config: Study configuration
    :return: Frame with columns setting, slope, intercept
    """
    x, r = generate_fig2_data(config.n_points, config.slope, config.intercept, config.noise_sd, config.seed)
    list_id = np.arange(config.n_points) // config.list_size
    order = np.lexsort((-r, list_id))
    positions = np.empty(config.n_points, dtype=np.int64)
    starts = np.searchsorted(list_id[order], list_id[order], side="left")
    positions[order] = np.arange(config.n_points) - starts + 1
    observed = r * (1.0 / positions) ** config.eta
    kept = positions <= config.k_cutoff

    settings_data: Dict[str, Tuple[np.ndarray, np.ndarray]] = {
        "clean": (x, r),
        "position": (x, observed),
        "selection": (x[kept], r[kept]),
        "both": (x[kept], observed[kept]),
    }
    rows = []
    for setting, (xs, ys) in settings_data.items():
        slope, intercept = np.polyfit(xs, ys, 1)
        rows.append({"setting": setting, "slope": float(slope), "intercept": float(intercept)})
        logger.info("fig2 %s: slope %.4f intercept %.4f", setting, slope, intercept)
    return pd.DataFrame(rows, columns=["setting", "slope", "intercept"])
