import numpy as np
import pandas as pd

from src.domain.entities import ClickLog, Dataset
from src.exceptions import ValidationError

COLUMNS = ["query_id", "doc_index", "position", "selected", "clicked", "propensity"]


def write_click_log(log: ClickLog, path: str) -> None:
    """
    The write_click_log function stores a click log as CSV with a header line.

    Records keep their session order. A trailing ``session`` column marks
    session boundaries, which the pairwise estimators need.

    :param log: ClickLog: The log to store
    :param path: str: Destination file
    :return: None
    """
    frame = pd.DataFrame({
        "query_id": [log.query_ids[q] for q in log.query_index],
        "doc_index": log.doc_index,
        "position": log.position,
        "selected": log.selected,
        "clicked": log.clicked,
        "propensity": log.propensity,
        "session": log.session,
    })
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def sessions_from_stream(query_index: np.ndarray, position: np.ndarray) -> np.ndarray:
    """
    Rebuilds session numbers of a log stored without its ``session`` column.

    Each session writes its query's documents in display order, so a session
    starts at every position 1 and wherever the query changes.

    :param query_index: np.ndarray: Query of every record, in file order
    :param position: np.ndarray: Display position of every record, in file order
    :return: Session number of every record, counting from 0
    """
    if len(position) == 0:
        return np.zeros(0, dtype=np.int64)
    starts = position == 1
    starts[1:] |= query_index[1:] != query_index[:-1]
    starts[0] = True
    return np.cumsum(starts).astype(np.int64) - 1


def read_click_log(path: str, dataset: Dataset) -> ClickLog:
    """
    The read_click_log function loads a click log written by write_click_log.

    Files without the ``session`` column get their sessions rebuilt from the
    record stream.

    :param path: str: Source file
    :param dataset: Dataset: Dataset the log was simulated on, resolves query ids to feature rows
    :return: The click log
    """
    frame = pd.read_csv(path, dtype={"query_id": str})
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise ValidationError(f"click log {path} lacks columns {missing}")
    index_of = {group.query_id: q for q, group in enumerate(dataset.groups)}
    unknown = set(frame["query_id"]) - set(index_of)
    if unknown:
        raise ValidationError(f"click log refers to queries not in the dataset: {sorted(unknown)[:5]}")
    query_index = frame["query_id"].map(index_of).to_numpy(dtype=np.int64)
    doc_index = frame["doc_index"].to_numpy(dtype=np.int64)
    n_docs = np.array([group.n_docs for group in dataset.groups], dtype=np.int64)
    out_of_range = (doc_index < 0) | (doc_index >= n_docs[query_index])
    if out_of_range.any():
        row = int(np.flatnonzero(out_of_range)[0])
        query = dataset.groups[query_index[row]]
        raise ValidationError(f"click log row {row + 1}: doc_index {doc_index[row]} is out of range for query "
                              f"{query.query_id!r} with {query.n_docs} documents")
    position = frame["position"].to_numpy(dtype=np.int64)
    if "session" in frame.columns:
        session = frame["session"].to_numpy(dtype=np.int64)
    else:
        session = sessions_from_stream(query_index, position)
    return ClickLog(
        session=session,
        query_index=query_index,
        doc_index=doc_index,
        doc_key=dataset.offsets[query_index] + doc_index,
        position=position,
        selected=frame["selected"].to_numpy(dtype=np.int64),
        clicked=frame["clicked"].to_numpy(dtype=np.int64),
        propensity=frame["propensity"].to_numpy(dtype=float),
        query_ids=[group.query_id for group in dataset.groups],
        n_sessions=int(len(np.unique(session))),
    )
