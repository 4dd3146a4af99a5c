import itertools
import unittest

import numpy as np

from src.domain.entities import Dataset, QueryGroup
from src.exceptions import ValidationError
from src.services.metrics import average_precision, dcg_at_k, evaluate, ndcg_at_k
from src.services.models import LinearModel, TrainedRanker
from tests.factories import make_group


def brute_force_ndcg(labels, k):
    best = max(dcg_at_k(perm, k) for perm in itertools.permutations(labels))
    return 0.0 if best == 0 else dcg_at_k(labels, k) / best


def label_ranker(dim: int) -> TrainedRanker:
    # scores equal to the first feature
    weights = np.zeros(dim)
    weights[0] = 1.0
    return TrainedRanker(kind="linear", method="oracle", ranking=LinearModel(weights))


class TestNdcg(unittest.TestCase):

    def test_ideal_order(self):
        for k in (1, 2, 3, 4):
            self.assertEqual(ndcg_at_k([4, 3, 1, 0], k), 1.0)

    def test_irrelevant_first(self):
        self.assertEqual(ndcg_at_k([0, 1], 1), 0.0)

    def test_example(self):
        self.assertAlmostEqual(ndcg_at_k([1, 0, 1], 3), 0.9197207, places=7)

    def test_no_relevant_documents(self):
        self.assertEqual(ndcg_at_k([0, 0, 0], 2), 0.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(40):
            labels = list(rng.integers(0, 5, size=int(rng.integers(1, 7))))
            for k in (1, 3, 5):
                self.assertAlmostEqual(ndcg_at_k(labels, k), brute_force_ndcg(labels, k), places=12)

    def test_argument_checks(self):
        with self.assertRaises(ValueError):
            ndcg_at_k([1, 0], 0)
        with self.assertRaises(ValidationError):
            ndcg_at_k([1, -1], 2)


class TestAveragePrecision(unittest.TestCase):

    def test_examples(self):
        self.assertEqual(average_precision([1, 0, 0]), 1.0)
        self.assertAlmostEqual(average_precision([0, 0, 1]), 1.0 / 3.0)
        self.assertAlmostEqual(average_precision([1, 0, 1, 0]), 0.8333333, places=7)
        self.assertEqual(average_precision([0, 0]), 0.0)

    def test_non_binary(self):
        with self.assertRaises(ValidationError):
            average_precision([2, 0, 1])


class TestEvaluate(unittest.TestCase):

    def setUp(self):
        self.groups = [
            make_group([[0.2, 1.0], [0.9, 0.0], [0.1, 0.5]], [0, 1, 0], query_id="a"),
            make_group([[0.8, 0.3], [0.7, 0.1], [0.0, 0.2], [0.5, 0.9]], [1, 1, 0, 0], query_id="b"),
        ]

    def test_perfect_scores(self):
        report = evaluate(label_ranker(2), Dataset(self.groups, 2))
        self.assertEqual((report.ndcg_at_1, report.ndcg_at_3, report.map), (1.0, 1.0, 1.0))
        self.assertEqual(report.n_queries, 2)

    def test_extra_cutoffs(self):
        report = evaluate(label_ranker(2), Dataset(self.groups, 2), ks=(1, 3, 5))
        self.assertEqual(sorted(report.ndcg_at), [1, 3, 5])

    def test_queries_without_relevant_documents_are_skipped(self):
        empty = make_group([[0.3, 0.3], [0.1, 0.1]], [0, 0], query_id="c")
        report = evaluate(label_ranker(2), Dataset(self.groups + [empty], 2))
        self.assertEqual(report.n_queries, 2)

    def test_graded_query_without_binary_relevance_counts_when_graded(self):
        features = np.array([[0.9, 0.0], [0.5, 0.0], [0.1, 0.0]])
        graded_only = QueryGroup(query_id="g", doc_ids=np.arange(3), features=features,
                                 grades=np.array([2, 1, 0]), labels=np.zeros(3, dtype=np.int64))
        dataset = Dataset(self.groups + [graded_only], 2)

        self.assertEqual(evaluate(label_ranker(2), dataset).n_queries, 2)
        graded = evaluate(label_ranker(2), dataset, graded=True)
        self.assertEqual(graded.n_queries, 3)
        self.assertEqual(graded.ndcg_at_1, 1.0)
        # the graded-only query has no binary relevant document
        self.assertAlmostEqual(graded.map, 2.0 / 3.0)

    def test_reversed_scores(self):
        ranker = TrainedRanker(kind="linear", method="naive", ranking=LinearModel(np.array([-1.0, 0.0])))
        report = evaluate(ranker, Dataset(self.groups[:1], 2))
        self.assertEqual(report.ndcg_at_1, 0.0)
        self.assertAlmostEqual(report.map, 1.0 / 3.0)

    def test_invariant_under_increasing_transform(self):
        base = evaluate(label_ranker(2), Dataset(self.groups, 2))
        scaled = TrainedRanker(kind="linear", method="oracle", ranking=LinearModel(np.array([5.0, 0.0]), -2.0))
        self.assertEqual(evaluate(scaled, Dataset(self.groups, 2)), base)

    def test_nothing_relevant(self):
        empty = make_group([[0.3, 0.3], [0.1, 0.1]], [0, 0], query_id="c")
        with self.assertRaises(ValidationError):
            evaluate(label_ranker(2), Dataset([empty], 2))

    def test_random_scores_match_expected_reciprocal_rank(self):
        rng = np.random.default_rng(0)
        n_queries, m = 10000, 5
        groups = []
        for q in range(n_queries):
            labels = np.zeros(m, dtype=int)
            labels[rng.integers(m)] = 1
            groups.append(make_group(rng.random((m, 1)), labels, query_id=str(q)))
        report = evaluate(label_ranker(1), Dataset(groups, 1))
        expected = sum(1.0 / r for r in range(1, m + 1)) / m
        sd = np.std([1.0 / r for r in range(1, m + 1)]) / np.sqrt(n_queries)
        self.assertLess(abs(report.map - expected), 3 * sd)


if __name__ == '__main__':
    unittest.main()
