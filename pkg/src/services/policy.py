"""
Deterministic logging policy.

The production ranker is a linear model trained with a pairwise hinge loss
by stochastic subgradient descent on a small labeled sample of queries.
Rankings are sorted by descending score with ties broken by ascending doc id,
so a query is always displayed the same way.
"""
import logging
from dataclasses import dataclass

import numpy as np

from src.domain.entities import Dataset, QueryGroup, RankedList
from src.exceptions import TrainingError, ValidationError

logger = logging.getLogger(__name__)


@dataclass
class LoggingPolicy:
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(self.weights)):
            raise ValidationError("logging policy weights must be finite")

    def scores(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=float) @ self.weights


def preference_pairs(group: QueryGroup) -> np.ndarray:
    better, worse = np.nonzero(group.labels[:, None] > group.labels[None, :])
    return np.stack([better, worse], axis=1)


def train_logging_policy(dataset: Dataset, sample_fraction: float = 0.01, seed: int = 0, epochs: int = 20,
                         learning_rate: float = 0.05, reg: float = 1e-4, batch_size: int = 64) -> LoggingPolicy:
    """
    The train_logging_policy function fits the production ranker.

    A share ``sample_fraction`` of the queries (at least one) is drawn; every
    pair of documents of a sampled query with different binary labels is a
    training pair for the hinge loss max(0, 1 - w·(x_i - x_j)).

    :param dataset: Dataset: Labeled training data
    :param sample_fraction: float: Share of queries used, in (0, 1]
    :param seed: int: Random seed of the sample and the pair order
    :param epochs: int: Passes over the sampled pairs
    :param learning_rate: float: Initial subgradient step, decayed as 1/sqrt(t)
    :param reg: float: L2 coefficient
    :param batch_size: int: Pairs per subgradient step
    :return: The trained policy
    """
    if not 0 < sample_fraction <= 1:
        raise ValueError("sample_fraction must be in (0, 1]")
    rng = np.random.default_rng(seed)
    n_sample = max(1, int(round(sample_fraction * len(dataset))))
    sampled = np.sort(rng.choice(len(dataset), size=n_sample, replace=False))

    diffs = []
    for q in sampled:
        group = dataset.groups[q]
        pairs = preference_pairs(group)
        if len(pairs):
            diffs.append(group.features[pairs[:, 0]] - group.features[pairs[:, 1]])
    if not diffs:
        raise TrainingError(
            f"the {n_sample} sampled queries contain no preference pair; increase sample_fraction")
    diffs = np.vstack(diffs)
    logger.info("training logging policy on %d queries, %d pairs", n_sample, len(diffs))

    weights = np.zeros(dataset.feature_dim)
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(len(diffs))
        for start in range(0, len(order), batch_size):
            batch = diffs[order[start:start + batch_size]]
            step += 1
            violated = batch @ weights < 1.0
            subgradient = reg * weights - batch[violated].sum(axis=0) / len(batch)
            weights -= learning_rate / np.sqrt(step) * subgradient
    return LoggingPolicy(weights)


def rank_query(policy: LoggingPolicy, query_group: QueryGroup, k_cutoff: int) -> RankedList:
    """
    The rank_query function displays one query with the logging policy.

    :param policy: LoggingPolicy: The production ranker
    :param query_group: QueryGroup: Query to rank
    :param k_cutoff: int: Number of displayed (selected) documents
    :return: Positions and selection flags per document
    """
    if k_cutoff < 1:
        raise ValueError("k_cutoff must be at least 1")
    scores = policy.scores(query_group.features)
    order = np.lexsort((query_group.doc_ids, -scores))
    positions = np.empty(len(order), dtype=np.int64)
    positions[order] = np.arange(1, len(order) + 1)
    return RankedList(
        query_id=query_group.query_id,
        order=order,
        positions=positions,
        selected=positions <= k_cutoff,
    )
