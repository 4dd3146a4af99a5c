import unittest

import numpy as np

from src.domain.entities import Dataset, QueryGroup
from src.exceptions import ValidationError
from src.services.dataset import (binarize_grades, fit_standardizer, generate_fig2_data, generate_synthetic_ltr,
                                  quintile_grades, split_queries, standardize)
from tests.factories import make_dataset


def graded_dataset(grades):
    grades = np.asarray(grades)
    group = QueryGroup("q", np.arange(len(grades)), np.zeros((len(grades), 1)), grades, np.zeros(len(grades), int))
    return Dataset([group], 1)


class TestBinarize(unittest.TestCase):

    def test_examples(self):
        binarized = binarize_grades(graded_dataset([0, 1, 2, 3, 4]))
        np.testing.assert_array_equal(binarized.groups[0].labels, [0, 0, 0, 1, 1])
        np.testing.assert_array_equal(binarized.groups[0].grades, [0, 1, 2, 3, 4])

    def test_idempotent(self):
        once = binarize_grades(graded_dataset([4, 2, 3, 0]))
        twice = binarize_grades(once)
        np.testing.assert_array_equal(once.flat_labels, twice.flat_labels)


class TestSyntheticLtr(unittest.TestCase):

    def test_deterministic(self):
        a = make_dataset(seed=5)
        b = make_dataset(seed=5)
        np.testing.assert_array_equal(a.flat_features, b.flat_features)
        np.testing.assert_array_equal(a.flat_labels, b.flat_labels)

    def test_seed_changes_data(self):
        self.assertFalse(np.array_equal(make_dataset(seed=5).flat_features, make_dataset(seed=6).flat_features))

    def test_noise_free_grades_follow_latent(self):
        beta = np.array([1.0, 0.5, -0.25])
        dataset = generate_synthetic_ltr(1, 5, 3, beta, 0.0, seed=3)
        group = dataset.groups[0]
        latent = group.features @ beta
        np.testing.assert_array_equal(group.grades[np.argsort(latent)], [0, 1, 2, 3, 4])
        self.assertEqual(group.labels.sum(), 2)

    def test_grades_correlate_with_latent(self):
        beta = np.linspace(1.0, -0.5, 6)
        dataset = generate_synthetic_ltr(50, 20, 6, beta, 0.1, seed=0)
        latent = dataset.flat_features @ beta
        grades = np.concatenate([g.grades for g in dataset.groups])
        self.assertGreater(np.corrcoef(latent, grades)[0, 1], 0.8)

    def test_shapes_and_prefix(self):
        dataset = generate_synthetic_ltr(3, 4, 2, np.ones(2), 0.1, seed=0, split_tag="test", query_prefix="t")
        self.assertEqual([g.query_id for g in dataset.groups], ["t1", "t2", "t3"])
        self.assertEqual(dataset.split_tag, "test")
        self.assertEqual(dataset.flat_features.shape, (12, 2))

    def test_beta_shape(self):
        with self.assertRaises(ValueError):
            generate_synthetic_ltr(2, 3, 4, np.ones(3), 0.1, seed=0)

    def test_quintiles(self):
        np.testing.assert_array_equal(quintile_grades(np.arange(10.0)), [0, 0, 1, 1, 2, 2, 3, 3, 4, 4])


class TestFig2Data(unittest.TestCase):

    def test_noise_free_is_exact_line(self):
        x, r = generate_fig2_data(100, 2.0, -1.0, 0.0, seed=0)
        np.testing.assert_allclose(r, 2.0 * x - 1.0, atol=1e-12)
        slope, intercept = np.polyfit(x, r, 1)
        self.assertAlmostEqual(slope, 2.0, delta=1e-10)
        self.assertAlmostEqual(intercept, -1.0, delta=1e-10)

    def test_noisy_fit_recovers_slope(self):
        x, r = generate_fig2_data(10000, 1.0, 0.5, 0.1, seed=1)
        self.assertTrue(np.all((x >= 0) & (x <= 1)))
        self.assertAlmostEqual(np.polyfit(x, r, 1)[0], 1.0, delta=0.05)

    def test_needs_two_points(self):
        with self.assertRaises(ValueError):
            generate_fig2_data(1, 1.0, 0.0, 0.1, seed=0)


class TestStandardize(unittest.TestCase):

    def test_zero_mean_unit_scale(self):
        dataset = make_dataset()
        mean, scale = fit_standardizer(dataset)
        flat = standardize(dataset, mean, scale).flat_features
        np.testing.assert_allclose(flat.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(flat.std(axis=0), 1.0, atol=1e-12)

    def test_constant_dimension_keeps_scale_one(self):
        mean, scale = fit_standardizer(graded_dataset([0, 1, 2]))
        np.testing.assert_array_equal(scale, [1.0])


class TestSplitQueries(unittest.TestCase):

    def test_partition(self):
        dataset = make_dataset(n_queries=10)
        train, test = split_queries(dataset, 0.3, seed=0)
        self.assertEqual((len(train), len(test)), (7, 3))
        ids = sorted(g.query_id for g in train.groups + test.groups)
        self.assertEqual(ids, sorted(g.query_id for g in dataset.groups))
        self.assertEqual(test.split_tag, "test")

    def test_fraction_range(self):
        with self.assertRaises(ValueError):
            split_queries(make_dataset(), 1.0, seed=0)


class TestEntities(unittest.TestCase):

    def test_duplicate_doc_ids(self):
        with self.assertRaises(ValidationError):
            QueryGroup("q", np.array([1, 1]), np.zeros((2, 1)), np.zeros(2), np.zeros(2))

    def test_offsets(self):
        dataset = make_dataset(n_queries=3, docs_per_query=4)
        np.testing.assert_array_equal(dataset.offsets, [0, 4, 8])


if __name__ == '__main__':
    unittest.main()
