import logging
from typing import Sequence

import numpy as np

from src.domain.entities import Dataset
from src.exceptions import ValidationError
from src.schemas import MetricsReport
from src.services.estimators import rank_documents
from src.services.models import TrainedRanker

logger = logging.getLogger(__name__)


def dcg_at_k(ranked_labels, k: int) -> float:
    """
    Discounted cumulative gain with gain 2^label - 1 and discount 1/log2(position + 1).

    :param ranked_labels: Sequence[int]: Labels in ranked order
    :param k: int: Cutoff
    :return: DCG@k
    """
    labels = np.asarray(ranked_labels, dtype=float)[:k]
    if labels.size == 0:
        return 0.0
    return float(np.sum((2.0 ** labels - 1.0) / np.log2(np.arange(2, labels.size + 2))))


def ndcg_at_k(ranked_labels, k: int) -> float:
    """
    The ndcg_at_k function normalizes DCG@k by the DCG@k of the ideal order.

    :param ranked_labels: Sequence[int]: Non-negative labels in ranked order
    :param k: int: Cutoff, at least 1
    :return: NDCG@k, 0 when the list has no relevant document
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    labels = np.asarray(ranked_labels)
    if np.any(labels < 0):
        raise ValidationError("labels must be non-negative")
    ideal = dcg_at_k(np.sort(labels)[::-1], k)
    if ideal == 0:
        return 0.0
    return dcg_at_k(labels, k) / ideal


def average_precision(ranked_labels) -> float:
    """
    Mean of precision@i over the positions i of relevant documents.

    :param ranked_labels: Sequence[int]: Binary labels in ranked order
    :return: AP, 0 when nothing is relevant
    """
    labels = np.asarray(ranked_labels)
    if not np.all(np.isin(labels, (0, 1))):
        raise ValidationError("average precision needs binary labels")
    hits = np.flatnonzero(labels == 1)
    if hits.size == 0:
        return 0.0
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def evaluate(ranker: TrainedRanker, test_dataset: Dataset, ks: Sequence[int] = (1, 3),
             graded: bool = False) -> MetricsReport:
    """
    The evaluate function macro-averages NDCG@k and MAP over the test queries.

    Each query is ranked by descending score with ties by doc id. Queries whose
    NDCG gains are all zero are excluded from every average. NDCG uses
    binary labels unless ``graded`` is set; MAP always uses binary labels, so a
    graded query without a binary relevant document scores AP 0.

    :param ranker: TrainedRanker: Ranker to evaluate
    :param test_dataset: Dataset: Held-out queries
    :param ks: Sequence[int]: Extra NDCG cutoffs, reported in ``ndcg_at``
    :param graded: bool: Use five-grade gains for NDCG
    :return: The metrics report
    """
    if len(test_dataset) == 0:
        raise ValidationError("evaluation needs at least one query")
    cutoffs = sorted({1, 3, *ks})
    ndcg = {k: [] for k in cutoffs}
    aps = []
    for group in test_dataset.groups:
        gains = group.grades if graded else group.labels
        if not np.any(gains > 0):
            continue
        order, _ = rank_documents(ranker, group.features, group.doc_ids)
        gains = gains[order]
        for k in cutoffs:
            ndcg[k].append(ndcg_at_k(gains, k))
        aps.append(average_precision(group.labels[order]))
    if not aps:
        raise ValidationError("no test query has a relevant document")

    means = {k: float(np.mean(values)) for k, values in ndcg.items()}
    report = MetricsReport(
        ndcg_at_1=means[1],
        ndcg_at_3=means[3],
        map=float(np.mean(aps)),
        n_queries=len(aps),
        ndcg_at=means,
    )
    logger.debug("evaluated %s on %d queries: %s", ranker.method, report.n_queries, report)
    return report
