from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, List, Literal, NamedTuple

import numpy as np

from src.exceptions import ValidationError


@dataclass
class QueryGroup:
    """
    One query with its candidate documents.

    ``features`` has one row per document, ``grades`` holds the five-grade
    relevance and ``labels`` the binarized relevance (1 for grades 3 and 4).
    """

    query_id: str
    doc_ids: np.ndarray
    features: np.ndarray
    grades: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.doc_ids) == 0:
            raise ValidationError(f"query {self.query_id} has no documents")
        if len(np.unique(self.doc_ids)) != len(self.doc_ids):
            raise ValidationError(f"query {self.query_id} has duplicate doc ids")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError(f"query {self.query_id} has non-finite features")

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)


@dataclass
class Dataset:
    groups: List[QueryGroup]
    feature_dim: int
    split_tag: Literal["train", "test"] = "train"

    def __post_init__(self):
        if not self.groups:
            raise ValidationError("dataset has no queries")
        for group in self.groups:
            if group.features.shape[1] != self.feature_dim:
                raise ValidationError(
                    f"query {group.query_id} has {group.features.shape[1]} features, expected {self.feature_dim}")

    def __len__(self) -> int:
        return len(self.groups)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Row offset of each query inside ``flat_features``."""
        sizes = np.array([g.n_docs for g in self.groups], dtype=np.int64)
        return np.concatenate(([0], np.cumsum(sizes)[:-1]))

    @cached_property
    def flat_features(self) -> np.ndarray:
        return np.vstack([g.features for g in self.groups])

    @cached_property
    def flat_labels(self) -> np.ndarray:
        return np.concatenate([g.labels for g in self.groups])


@dataclass
class RankedList:
    """Per-document positions (1-based) and top-k selection flags of one query."""

    query_id: str
    order: np.ndarray
    positions: np.ndarray
    selected: np.ndarray


@dataclass
class PropensityTable:
    eta: float
    k_cutoff: int
    n_positions: int | None = None
    rho: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_positions is None:
            self.n_positions = self.k_cutoff
        if self.eta < 0:
            raise ValidationError("eta must be non-negative")
        if self.k_cutoff < 1:
            raise ValidationError("k_cutoff must be at least 1")
        positions = np.arange(1, self.n_positions + 1)
        self.rho = np.where(positions <= self.k_cutoff, (1.0 / positions) ** self.eta, 0.0)

    def lookup(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions)
        safe = np.clip(positions, 1, None).astype(float)
        return np.where(positions <= self.k_cutoff, (1.0 / safe) ** self.eta, 0.0)


class ClickRecord(NamedTuple):
    query_id: str
    doc_index: int
    position: int
    selected: int
    clicked: int
    propensity: float


@dataclass
class ClickLog:
    """
    Columnar click log D = D_s ∪ D_u.

    Records are stored session after session; ``doc_key`` indexes the rows of
    ``Dataset.flat_features`` of the dataset the log was simulated on.
    """

    session: np.ndarray
    query_index: np.ndarray
    doc_index: np.ndarray
    doc_key: np.ndarray
    position: np.ndarray
    selected: np.ndarray
    clicked: np.ndarray
    propensity: np.ndarray
    query_ids: List[str]
    n_sessions: int

    def __post_init__(self):
        if np.any((self.selected == 0) & (self.clicked == 1)):
            raise ValidationError("unselected records cannot be clicked")
        if np.any((self.selected == 1) & (self.propensity <= 0)):
            raise ValidationError("selected records need a positive propensity")

    def __len__(self) -> int:
        return len(self.session)

    @property
    def selected_mask(self) -> np.ndarray:
        return self.selected == 1

    def subset(self, mask: np.ndarray) -> "ClickLog":
        return ClickLog(
            session=self.session[mask],
            query_index=self.query_index[mask],
            doc_index=self.doc_index[mask],
            doc_key=self.doc_key[mask],
            position=self.position[mask],
            selected=self.selected[mask],
            clicked=self.clicked[mask],
            propensity=self.propensity[mask],
            query_ids=self.query_ids,
            n_sessions=self.n_sessions,
        )

    @property
    def d_s(self) -> "ClickLog":
        return self.subset(self.selected_mask)

    def with_propensities(self, table: PropensityTable) -> "ClickLog":
        """Returns a copy whose selected records carry the propensities of ``table``."""
        propensity = np.where(self.selected == 1, table.lookup(self.position), 0.0)
        return ClickLog(
            session=self.session,
            query_index=self.query_index,
            doc_index=self.doc_index,
            doc_key=self.doc_key,
            position=self.position,
            selected=self.selected,
            clicked=self.clicked,
            propensity=propensity,
            query_ids=self.query_ids,
            n_sessions=self.n_sessions,
        )

    def session_bounds(self) -> np.ndarray:
        """Start offsets of every session plus the final end offset."""
        if len(self) == 0:
            return np.zeros(1, dtype=np.int64)
        starts = np.flatnonzero(np.diff(self.session)) + 1
        return np.concatenate(([0], starts, [len(self)]))


class PreferencePair(NamedTuple):
    i: int
    j: int
    s_i: int
    s_j: int


@dataclass
class PairSet:
    """
    Preference pairs as record indices into a ClickLog, ``i`` preferred over ``j``.

    ``count`` is the number of sessions a pair stands for; pairs that repeat
    identically in every session of a query are stored once.
    """

    i: np.ndarray
    j: np.ndarray
    s_i: np.ndarray
    s_j: np.ndarray
    count: np.ndarray | None = None

    def __post_init__(self):
        if self.count is None:
            self.count = np.ones(len(self.i), dtype=np.int64)

    @classmethod
    def empty(cls) -> "PairSet":
        none = np.zeros(0, dtype=np.int64)
        return cls(none, none.copy(), none.copy(), none.copy(), none.copy())

    def __len__(self) -> int:
        return len(self.i)

    def __iter__(self) -> Iterator[PreferencePair]:
        for a, b, sa, sb in zip(self.i, self.j, self.s_i, self.s_j):
            yield PreferencePair(int(a), int(b), int(sa), int(sb))

    @property
    def total(self) -> int:
        return int(self.count.sum())

    def take(self, index: np.ndarray) -> "PairSet":
        return PairSet(self.i[index], self.j[index], self.s_i[index], self.s_j[index], self.count[index])

    @staticmethod
    def concat(parts: List["PairSet"]) -> "PairSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return PairSet.empty()
        return PairSet(*(np.concatenate([getattr(p, name) for p in parts])
                         for name in ("i", "j", "s_i", "s_j", "count")))
