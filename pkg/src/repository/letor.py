import re
from typing import Dict, Iterable, List, TextIO, Tuple

import numpy as np

from src.domain.entities import Dataset, QueryGroup
from src.exceptions import ParseError, ValidationError

LINE_RE = re.compile(r"^(?P<grade>-?\d+)\s+qid:(?P<qid>\S+)(?P<features>(?:\s+\d+:\S+)*)\s*$")
FEATURE_RE = re.compile(r"(\d+):(\S+)")
MAX_GRADE = 4


def binary_labels(grades: np.ndarray) -> np.ndarray:
    return (np.asarray(grades) >= 3).astype(np.int64)


def parse_letor(text_stream: Iterable[str], split_tag: str = "train") -> Dataset:
    """
    The parse_letor function reads LETOR / SVMlight ranking data.

    Every line looks like ``<grade> qid:<id> <fid>:<val> ... [# comment]``.
    Documents are grouped by qid in order of first appearance, missing
    feature ids are filled with 0.0 and the feature dimension is the largest
    feature id seen.

    :param text_stream: Iterable[str]: Lines of the file
    :param split_tag: str: Tag of the returned dataset, train or test
    :return: The parsed dataset with binarized labels
    """
    rows: Dict[str, List[Tuple[int, Dict[int, float]]]] = {}
    max_fid = 0
    for line_no, raw in enumerate(text_stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = LINE_RE.match(line)
        if match is None:
            raise ParseError(line_no, f"malformed LETOR line: {raw.rstrip()!r}")
        grade = int(match.group("grade"))
        if not 0 <= grade <= MAX_GRADE:
            raise ValidationError(f"line {line_no}: grade {grade} outside 0..{MAX_GRADE}")
        features: Dict[int, float] = {}
        for fid_text, value_text in FEATURE_RE.findall(match.group("features")):
            fid = int(fid_text)
            if fid < 1:
                raise ParseError(line_no, f"feature id {fid} is not positive")
            try:
                features[fid] = float(value_text)
            except ValueError:
                raise ParseError(line_no, f"feature value {value_text!r} is not a number")
            max_fid = max(max_fid, fid)
        rows.setdefault(match.group("qid"), []).append((grade, features))

    if not rows:
        raise ValidationError("LETOR stream contains no documents")

    groups = []
    for qid, docs in rows.items():
        matrix = np.zeros((len(docs), max_fid))
        for d, (_, features) in enumerate(docs):
            for fid, value in features.items():
                matrix[d, fid - 1] = value
        grades = np.array([g for g, _ in docs], dtype=np.int64)
        groups.append(QueryGroup(
            query_id=qid,
            doc_ids=np.arange(len(docs)),
            features=matrix,
            grades=grades,
            labels=binary_labels(grades),
        ))
    return Dataset(groups=groups, feature_dim=max_fid, split_tag=split_tag)


def serialize_letor(dataset: Dataset, stream: TextIO) -> None:
    """
    Writes a dataset in the format parse_letor reads, one dense line per document.

    :param dataset: Dataset: The dataset to write
    :param stream: TextIO: Destination
    :return: None
    """
    for group in dataset.groups:
        for grade, row in zip(group.grades, group.features):
            features = " ".join(f"{fid}:{float(value)!r}" for fid, value in enumerate(row, start=1))
            stream.write(f"{int(grade)} qid:{group.query_id} {features}\n")


def read_letor(path: str, split_tag: str = "train") -> Dataset:
    with open(path, "r", encoding="utf-8") as f:
        return parse_letor(f, split_tag)


def write_letor(dataset: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        serialize_letor(dataset, f)
