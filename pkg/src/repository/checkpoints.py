"""
Flat text checkpoints.

A checkpoint is a header followed by parameter blocks::

    # cld checkpoint
    kind mlp
    method ips
    dropout 0.5
    block ranking.W0 20 256
    <row-major values separated by spaces>
    ...
    end

RankAgg checkpoints nest the two member checkpoints after ``member a`` and
``member b`` lines.
"""
from typing import Iterator, List, TextIO

import numpy as np
import pandas as pd

from src.exceptions import ParseError
from src.services.models import LinearModel, MlpModel, TrainedRanker

MAGIC = "# cld checkpoint"


def _format(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).ravel())


def _write_block(stream: TextIO, name: str, value: np.ndarray) -> None:
    shape = " ".join(str(d) for d in np.shape(value))
    stream.write(f"block {name} {shape}\n{_format(value)}\n")


def _write_ranker(stream: TextIO, ranker: TrainedRanker) -> None:
    stream.write(f"kind {ranker.kind}\nmethod {ranker.method}\n")
    if ranker.kind == "rankagg":
        for tag, member in zip("ab", ranker.members):
            stream.write(f"member {tag}\n")
            _write_ranker(stream, member)
    else:
        if ranker.kind == "mlp":
            stream.write(f"dropout {ranker.ranking.dropout_p!r}\n")
        for name, value in ranker.ranking.parameters():
            _write_block(stream, f"ranking.{name}", value)
        if ranker.selection is not None:
            for name, value in ranker.selection.parameters():
                _write_block(stream, f"selection.{name}", value)
    stream.write("end\n")


def save_ranker(ranker: TrainedRanker, path: str) -> None:
    """
    Writes a trained ranker as a flat text checkpoint.

    :param ranker: TrainedRanker: The ranker to store
    :param path: str: Destination file
    :return: None
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write(MAGIC + "\n")
        _write_ranker(f, ranker)


class _Lines:
    def __init__(self, stream: TextIO):
        self._lines: Iterator[str] = iter(stream)
        self.line_no = 0

    def next(self) -> str:
        for raw in self._lines:
            self.line_no += 1
            line = raw.strip()
            if line:
                return line
        raise ParseError(self.line_no, "unexpected end of checkpoint")

    def expect(self, key: str) -> str:
        line = self.next()
        head, _, rest = line.partition(" ")
        if head != key:
            raise ParseError(self.line_no, f"expected {key!r}, found {line!r}")
        return rest


def _read_block(lines: _Lines, header: str) -> tuple:
    name, *dims = header.split()
    shape = tuple(int(d) for d in dims)
    values = np.array([float(v) for v in lines.next().split()])
    if values.size != int(np.prod(shape)):
        raise ParseError(lines.line_no, f"block {name} holds {values.size} values, shape {shape}")
    return name, values.reshape(shape)


def _read_ranker(lines: _Lines) -> TrainedRanker:
    kind = lines.expect("kind")
    method = lines.expect("method")
    if kind == "rankagg":
        members = []
        for tag in "ab":
            if lines.expect("member") != tag:
                raise ParseError(lines.line_no, f"expected member {tag}")
            members.append(_read_ranker(lines))
        lines.expect("end")
        return TrainedRanker(kind=kind, method=method, members=tuple(members))

    dropout = float(lines.expect("dropout")) if kind == "mlp" else 0.0
    blocks = {}
    while True:
        line = lines.next()
        if line == "end":
            break
        head, _, rest = line.partition(" ")
        if head != "block":
            raise ParseError(lines.line_no, f"expected a parameter block, found {line!r}")
        name, value = _read_block(lines, rest)
        blocks[name] = value

    if kind == "linear":
        ranking = LinearModel(blocks["ranking.weights"], float(blocks["ranking.bias"][0]))
    elif kind == "mlp":
        n_layers = len([k for k in blocks if k.startswith("ranking.W")])
        ranking = MlpModel(
            weights=[blocks[f"ranking.W{i}"] for i in range(n_layers)],
            biases=[blocks[f"ranking.b{i}"] for i in range(n_layers)],
            dropout_p=dropout,
        )
    else:
        raise ParseError(lines.line_no, f"unknown ranker kind {kind!r}")
    selection = None
    if "selection.weights" in blocks:
        selection = LinearModel(blocks["selection.weights"], float(blocks["selection.bias"][0]))
    return TrainedRanker(kind=kind, method=method, ranking=ranking, selection=selection)


def load_ranker(path: str) -> TrainedRanker:
    """
    Reads a checkpoint written by save_ranker.

    :param path: str: Source file
    :return: The stored ranker, without its training trace
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = _Lines(f)
        if lines.next() != MAGIC:
            raise ParseError(lines.line_no, "not a cld checkpoint")
        return _read_ranker(lines)


def save_vector(vector: np.ndarray, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for value in np.asarray(vector).ravel():
            f.write(f"{float(value)!r}\n")


def load_vector(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        return np.array([float(line) for line in f if line.strip()])


def write_trace(trace: List[tuple], path: str) -> None:
    pd.DataFrame(trace, columns=["epoch", "loss"]).to_csv(path, index=False, float_format="%.17g",
                                                          lineterminator="\n")
