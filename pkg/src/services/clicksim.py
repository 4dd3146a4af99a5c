"""
Position-based click simulation.

A session draws one query uniformly, displays it with the logging policy and
lets the user examine every selected document at position k with probability
ρ[k]; an examined document is clicked with probability 1 when it is relevant
and ``noise_eps`` otherwise. Documents beyond the cutoff are never examined.

Every session owns a counter-based random stream keyed by the seed and the
session index, so a session's clicks do not depend on how many sessions came
before it.
"""
import logging
from typing import Dict, List, Tuple

import numpy as np

from src.domain.entities import ClickLog, ClickRecord, Dataset, PropensityTable, QueryGroup, RankedList
from src.services.policy import LoggingPolicy, rank_query

logger = logging.getLogger(__name__)


def examination_probability(position: int, eta: float, k_cutoff: int) -> float:
    """
    The examination_probability function returns ρ[position] = (1/position)^eta inside the cutoff, 0 outside.

    :param position: int: Display position, 1-based
    :param eta: float: Severity of the position bias
    :param k_cutoff: int: Number of displayed documents
    :return: The examination probability
    """
    if position < 1:
        raise ValueError("position must be at least 1")
    if position > k_cutoff:
        return 0.0
    return float((1.0 / position) ** eta)


def misspecified_table(true_table: PropensityTable, eta_hat: float) -> PropensityTable:
    """
    Propensities the estimators believe in; the simulator keeps ``true_table``.

    :param true_table: PropensityTable: Table the clicks were generated with
    :param eta_hat: float: Assumed severity
    :return: A table with the same cutoff and ρ from eta_hat
    """
    if eta_hat < 0:
        raise ValueError("eta_hat must be non-negative")
    return PropensityTable(eta=eta_hat, k_cutoff=true_table.k_cutoff, n_positions=true_table.n_positions)


def session_rng(seed: int, session_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=session_index << 64))


def _session_clicks(ranked: RankedList, labels: np.ndarray, table: PropensityTable, noise_eps: float,
                    rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    # records follow display order
    order = ranked.order
    positions = ranked.positions[order]
    selected = ranked.selected[order].astype(np.int64)
    rho = np.where(selected == 1, table.lookup(positions), 0.0)
    examined = rng.random(len(order)) < rho
    click_prob = np.where(labels[order] == 1, 1.0, noise_eps)
    clicked = (examined & (rng.random(len(order)) < click_prob)).astype(np.int64)
    return order, positions, selected, clicked


def simulate_session(policy: LoggingPolicy, query_group: QueryGroup, table: PropensityTable, noise_eps: float,
                     rng: np.random.Generator) -> List[ClickRecord]:
    """
    The simulate_session function plays one user session on one query.

    :param policy: LoggingPolicy: Ranker that displays the query
    :param query_group: QueryGroup: The issued query
    :param table: PropensityTable: True examination probabilities
    :param noise_eps: float: Click probability of an examined irrelevant document
    :param rng: np.random.Generator: Stream of this session
    :return: One record per document of the query, in display order
    """
    if not 0 <= noise_eps < 1:
        raise ValueError("noise_eps must be in [0, 1)")
    ranked = rank_query(policy, query_group, table.k_cutoff)
    order, positions, selected, clicked = _session_clicks(ranked, query_group.labels, table, noise_eps, rng)
    rho = np.where(selected == 1, table.lookup(positions), 0.0)
    return [
        ClickRecord(query_group.query_id, int(d), int(p), int(s), int(c), float(r))
        for d, p, s, c, r in zip(order, positions, selected, clicked, rho)
    ]


def build_click_log(policy: LoggingPolicy, dataset: Dataset, table: PropensityTable, n_sessions: int,
                    noise_eps: float, seed: int) -> ClickLog:
    """
    The build_click_log function simulates ``n_sessions`` sessions over a dataset.

    Queries are drawn uniformly with replacement from a stream derived from
    ``seed``; session ``i`` then uses its own stream ``(seed, i)``. Records are
    concatenated in session order.

    :param policy: LoggingPolicy: Ranker that displays every query
    :param dataset: Dataset: Queries with binary labels
    :param table: PropensityTable: True examination probabilities
    :param n_sessions: int: Number of sessions, at least 1
    :param noise_eps: float: Click probability of an examined irrelevant document
    :param seed: int: Non-negative simulation seed
    :return: The click log D = D_s ∪ D_u
    """
    if n_sessions < 1:
        raise ValueError("n_sessions must be at least 1")
    if not 0 <= noise_eps < 1:
        raise ValueError("noise_eps must be in [0, 1)")
    query_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    queries = query_rng.integers(len(dataset), size=n_sessions)

    sizes = np.array([g.n_docs for g in dataset.groups], dtype=np.int64)[queries]
    total = int(sizes.sum())
    session = np.repeat(np.arange(n_sessions, dtype=np.int64), sizes)
    query_index = np.repeat(queries.astype(np.int64), sizes)
    doc_index = np.empty(total, dtype=np.int64)
    position = np.empty(total, dtype=np.int64)
    selected = np.empty(total, dtype=np.int64)
    clicked = np.empty(total, dtype=np.int64)

    rankings: Dict[int, RankedList] = {}
    offset = 0
    for i, q in enumerate(queries):
        q = int(q)
        group = dataset.groups[q]
        if q not in rankings:
            rankings[q] = rank_query(policy, group, table.k_cutoff)
        order, pos, sel, clk = _session_clicks(rankings[q], group.labels, table, noise_eps, session_rng(seed, i))
        end = offset + len(order)
        doc_index[offset:end] = order
        position[offset:end] = pos
        selected[offset:end] = sel
        clicked[offset:end] = clk
        offset = end

    log = ClickLog(
        session=session,
        query_index=query_index,
        doc_index=doc_index,
        doc_key=dataset.offsets[query_index] + doc_index,
        position=position,
        selected=selected,
        clicked=clicked,
        propensity=np.where(selected == 1, table.lookup(position), 0.0),
        query_ids=[g.query_id for g in dataset.groups],
        n_sessions=n_sessions,
    )
    logger.info("simulated %d sessions: %d records, %d selected, %d clicks",
                n_sessions, total, int(selected.sum()), int(clicked.sum()))
    return log
