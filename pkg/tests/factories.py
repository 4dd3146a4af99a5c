from typing import Sequence, Tuple

import numpy as np

from src.domain.entities import ClickLog, Dataset, PropensityTable, QueryGroup
from src.schemas import CldConfig, ExperimentConfig
from src.services.clicksim import build_click_log
from src.services.dataset import generate_synthetic_ltr
from src.services.policy import LoggingPolicy, train_logging_policy


def make_dataset(n_queries: int = 20, docs_per_query: int = 8, feature_dim: int = 4, seed: int = 1,
                 split_tag: str = "train", label_noise_sd: float = 0.1) -> Dataset:
    beta = np.linspace(1.0, -0.5, feature_dim)
    return generate_synthetic_ltr(n_queries, docs_per_query, feature_dim, beta, label_noise_sd, seed, split_tag)


def make_group(features: Sequence[Sequence[float]], labels: Sequence[int], query_id: str = "q",
               doc_ids: Sequence[int] | None = None) -> QueryGroup:
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    return QueryGroup(
        query_id=query_id,
        doc_ids=np.arange(len(features)) if doc_ids is None else np.asarray(doc_ids),
        features=features,
        grades=labels * 3,
        labels=labels,
    )


def small_config(**overrides) -> CldConfig:
    values = dict(epochs=2, batch_size=32, hidden_sizes=[8, 4], learning_rate=1e-2, seed=0)
    values.update(overrides)
    return CldConfig(**values)


def make_log(dataset: Dataset, k_cutoff: int = 3, eta: float = 1.0, n_sessions: int = 200,
             noise_eps: float = 0.1, seed: int = 0) -> Tuple[LoggingPolicy, ClickLog]:
    policy = train_logging_policy(dataset, sample_fraction=1.0, seed=seed)
    table = PropensityTable(eta=eta, k_cutoff=k_cutoff)
    return policy, build_click_log(policy, dataset, table, n_sessions, noise_eps, seed)


def log_from_records(dataset: Dataset, query_index: Sequence[int], doc_index: Sequence[int],
                     position: Sequence[int], selected: Sequence[int], clicked: Sequence[int],
                     propensity: Sequence[float], session: Sequence[int] | None = None) -> ClickLog:
    query_index = np.asarray(query_index, dtype=np.int64)
    doc_index = np.asarray(doc_index, dtype=np.int64)
    session = np.zeros(len(query_index), dtype=np.int64) if session is None else np.asarray(session, dtype=np.int64)
    return ClickLog(
        session=session,
        query_index=query_index,
        doc_index=doc_index,
        doc_key=dataset.offsets[query_index] + doc_index,
        position=np.asarray(position, dtype=np.int64),
        selected=np.asarray(selected, dtype=np.int64),
        clicked=np.asarray(clicked, dtype=np.int64),
        propensity=np.asarray(propensity, dtype=float),
        query_ids=[g.query_id for g in dataset.groups],
        n_sessions=int(len(np.unique(session))),
    )


TINY_EXPERIMENT = dict(
    n_train_queries=20, n_test_queries=10, docs_per_query=6, feature_dim=4, n_sessions=200, k_cutoff=3,
    policy_fraction=0.5, methods=["oracle"], seeds=[0, 1], epochs=2, batch_size=32, hidden_sizes=[8, 4],
    learning_rate=1e-2,
)


def tiny_experiment(**overrides) -> ExperimentConfig:
    return ExperimentConfig(**{**TINY_EXPERIMENT, **overrides})


def config_text(values: dict) -> str:
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
