import logging
from typing import Tuple

import numpy as np

from src.domain.entities import Dataset, QueryGroup
from src.repository.letor import binary_labels

logger = logging.getLogger(__name__)

N_GRADES = 5


def binarize_grades(dataset: Dataset) -> Dataset:
    """
    The binarize_grades function sets label = 1 for grades 3 and 4, 0 otherwise.

    :param dataset: Dataset: Dataset with five-grade relevance
    :return: A new dataset with the same grades and binarized labels
    """
    groups = [
        QueryGroup(g.query_id, g.doc_ids, g.features, g.grades, binary_labels(g.grades))
        for g in dataset.groups
    ]
    return Dataset(groups, dataset.feature_dim, dataset.split_tag)


def quintile_grades(latent: np.ndarray) -> np.ndarray:
    ranks = np.empty(len(latent), dtype=np.int64)
    ranks[np.argsort(latent, kind="stable")] = np.arange(len(latent))
    return (ranks * N_GRADES) // len(latent)


def generate_synthetic_ltr(n_queries: int, docs_per_query: int, feature_dim: int, true_beta: np.ndarray,
                           label_noise_sd: float, seed: int, split_tag: str = "train",
                           query_prefix: str = "") -> Dataset:
    """
    The generate_synthetic_ltr function simulates a learning-to-rank dataset.

    Features are standard normal; the latent relevance is x·true_beta plus
    Gaussian noise, and grades 0..4 are the quintiles of the latent score
    within each query.

    :param n_queries: int: Number of queries
    :param docs_per_query: int: Documents per query
    :param feature_dim: int: Feature dimension
    :param true_beta: np.ndarray: Generating relevance weights
    :param label_noise_sd: float: Standard deviation of the latent noise
    :param seed: int: Random seed
    :param split_tag: str: Tag of the returned dataset
    :param query_prefix: str: Prefix of the generated query ids
    :return: The generated dataset
    """
    if min(n_queries, docs_per_query, feature_dim) < 1:
        raise ValueError("dimensions must be positive")
    true_beta = np.asarray(true_beta, dtype=float)
    if true_beta.shape != (feature_dim,):
        raise ValueError(f"true_beta must have shape ({feature_dim},)")
    rng = np.random.default_rng(seed)
    groups = []
    for q in range(n_queries):
        features = rng.standard_normal((docs_per_query, feature_dim))
        latent = features @ true_beta + label_noise_sd * rng.standard_normal(docs_per_query)
        grades = quintile_grades(latent)
        groups.append(QueryGroup(
            query_id=f"{query_prefix}{q + 1}",
            doc_ids=np.arange(docs_per_query),
            features=features,
            grades=grades,
            labels=binary_labels(grades),
        ))
    return Dataset(groups, feature_dim, split_tag)


def generate_fig2_data(n_points: int, slope: float, intercept: float, noise_sd: float,
                       seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    One-dimensional regression data: x ~ U[0, 1], r = slope·x + intercept + noise.

    :param n_points: int: Number of points, at least 2
    :param slope: float: Generating slope
    :param intercept: float: Generating intercept
    :param noise_sd: float: Standard deviation of the Gaussian noise
    :param seed: int: Random seed
    :return: Arrays x and r
    """
    if n_points <= 1:
        raise ValueError("n_points must be greater than 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, n_points)
    r = slope * x + intercept + noise_sd * rng.standard_normal(n_points)
    return x, r


def fit_standardizer(dataset: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-dimension mean and standard deviation; constant dimensions get scale 1.

    :param dataset: Dataset: Usually the training split
    :return: Means and scales
    """
    flat = dataset.flat_features
    mean = flat.mean(axis=0)
    scale = flat.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def standardize(dataset: Dataset, mean: np.ndarray, scale: np.ndarray) -> Dataset:
    groups = [
        QueryGroup(g.query_id, g.doc_ids, (g.features - mean) / scale, g.grades, g.labels)
        for g in dataset.groups
    ]
    return Dataset(groups, dataset.feature_dim, dataset.split_tag)


def split_queries(dataset: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Random query-level split.

    :param dataset: Dataset: Dataset to split
    :param test_fraction: float: Share of queries in the test split, in (0, 1)
    :param seed: int: Random seed
    :return: Train and test datasets
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    n_test = min(max(1, int(round(test_fraction * len(dataset)))), len(dataset) - 1)
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    train = Dataset([dataset.groups[i] for i in train_idx], dataset.feature_dim, "train")
    test = Dataset([dataset.groups[i] for i in test_idx], dataset.feature_dim, "test")
    return train, test
