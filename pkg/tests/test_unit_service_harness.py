import math
import unittest

import numpy as np
import pandas as pd
import pytest

from src.exceptions import TrainingError, ValidationError
from src.repository.letor import write_letor
from src.repository.results import read_results, read_summary, write_results, write_summary
from src.schemas import BASE_MODEL_METHODS, Fig2Config
from src.services import estimators
from src.services.harness import (emit_plot_data, fig2_study, prepare_data, run_experiment, simulate, summarize,
                                  sweep, t_interval)
from tests.factories import make_dataset, tiny_experiment


@pytest.fixture(scope="module")
def tiny_data():
    return prepare_data(tiny_experiment())


class TestTInterval(unittest.TestCase):

    def test_five_values(self):
        values = [1.0, 2.0, 3.0, 4.0, 5.0]
        mean, low, high = t_interval(values)
        self.assertEqual(mean, 3.0)
        half = (high - low) / 2
        self.assertAlmostEqual(half / (np.std(values, ddof=1) / math.sqrt(5)), 2.1318, places=4)

    def test_single_value(self):
        self.assertEqual(t_interval([0.4]), (0.4, 0.4, 0.4))

    def test_empty(self):
        with self.assertRaises(ValidationError):
            t_interval([])


class TestFig2(unittest.TestCase):

    def test_bias_compounds(self):
        frame = fig2_study(Fig2Config()).set_index("setting")
        gap = (frame["slope"] - frame.loc["clean", "slope"]).abs()
        self.assertGreater(gap["both"], gap["position"])
        self.assertGreater(gap["both"], gap["selection"])
        self.assertAlmostEqual(frame.loc["clean", "slope"], 1.0, delta=0.05)

    def test_noise_free_clean_fit_is_exact(self):
        frame = fig2_study(Fig2Config(noise_sd=0.0, slope=2.0, intercept=-1.0)).set_index("setting")
        self.assertAlmostEqual(frame.loc["clean", "slope"], 2.0, delta=1e-10)
        self.assertAlmostEqual(frame.loc["clean", "intercept"], -1.0, delta=1e-10)

    def test_no_bias_without_position_effect_or_cutoff(self):
        frame = fig2_study(Fig2Config(eta=0.0, k_cutoff=10)).set_index("setting")
        self.assertEqual(frame.loc["both", "slope"], frame.loc["clean", "slope"])


def test_prepare_synthetic_data_is_standardized(tiny_data):
    train, test = tiny_data
    assert (len(train), len(test)) == (20, 10)
    np.testing.assert_allclose(train.flat_features.mean(axis=0), 0.0, atol=1e-12)
    assert all(g.query_id.startswith("t") for g in test.groups)


def test_prepare_letor_data_pads_dimensions(tmp_path):
    train_path, test_path = tmp_path / "train.txt", tmp_path / "test.txt"
    write_letor(make_dataset(n_queries=3, feature_dim=4), str(train_path))
    write_letor(make_dataset(n_queries=2, feature_dim=3, seed=2), str(test_path))
    train, test = prepare_data(tiny_experiment(train_path=str(train_path), test_path=str(test_path)))
    assert train.feature_dim == test.feature_dim == 4
    np.testing.assert_allclose(test.flat_features[:, 3], test.flat_features[0, 3])


def test_simulate_uses_assumed_propensities(tiny_data):
    train, _ = tiny_data
    _, log = simulate(tiny_experiment(eta_true=1.0, eta_hat=2.0), train, seed=0)
    selected = log.selected == 1
    np.testing.assert_allclose(log.propensity[selected], (1.0 / log.position[selected]) ** 2.0)


def test_single_cell(tiny_data):
    runs = run_experiment(tiny_experiment(seeds=[0]), tiny_data, max_workers=1)
    assert len(runs) == 1
    run = runs[0]
    assert run.ok and (run.method, run.seed, run.k_cutoff, run.sessions) == ("oracle", 0, 3, 200)
    assert 0.0 <= run.metrics.ndcg_at_1 <= 1.0


def test_failed_cell_does_not_stop_the_run(tiny_data, mocker):
    real = estimators.train_method

    def flaky(method, *args, **kwargs):
        if method == "ips":
            raise TrainingError("boom")
        return real(method, *args, **kwargs)

    mocker.patch("src.services.harness.train_method", side_effect=flaky)
    runs = run_experiment(tiny_experiment(methods=["ips", "oracle"], seeds=[0]), tiny_data, max_workers=1)
    assert [run.method for run in runs] == ["ips", "oracle"]
    assert runs[0].error == "boom" and runs[0].metrics is None
    assert runs[1].ok


def test_numerical_error_of_one_cell_is_recorded(tiny_data, mocker):
    real = estimators.train_method

    def singular(method, *args, **kwargs):
        if method == "ips":
            raise np.linalg.LinAlgError("Singular matrix")
        return real(method, *args, **kwargs)

    mocker.patch("src.services.harness.train_method", side_effect=singular)
    runs = run_experiment(tiny_experiment(methods=["ips", "oracle"], seeds=[0, 1]), tiny_data, max_workers=2)
    assert [(run.method, run.seed, run.ok) for run in runs] == [
        ("ips", 0, False), ("ips", 1, False), ("oracle", 0, True), ("oracle", 1, True)]
    assert runs[0].error == "Singular matrix"


def test_base_model_variants_on_the_tiny_benchmark(tiny_data):
    config = tiny_experiment(methods=list(BASE_MODEL_METHODS), seeds=[0])
    runs = run_experiment(config, tiny_data, max_workers=1)
    assert [run.method for run in runs] == ["cld", "cld_n", "cld_pair", "cld_pair_l"]
    for run in runs:
        assert run.ok, run.error
        assert 0.0 <= run.metrics.ndcg_at_1 <= 1.0 and 0.0 <= run.metrics.map <= 1.0


def test_results_are_reproducible(tiny_data, tmp_path):
    config = tiny_experiment(methods=["oracle", "cld"])
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    write_results(run_experiment(config, tiny_data, max_workers=1), str(first))
    write_results(run_experiment(config, tiny_data, max_workers=2), str(second))
    assert first.read_bytes() == second.read_bytes()
    frame = read_results(str(first))
    assert list(frame["method"]) == ["oracle", "oracle", "cld", "cld"]
    assert list(frame["seed"]) == [0, 1, 0, 1]
    assert (frame["seconds"] == 0.0).all()


def test_sweep_summary_and_plot_series(tiny_data, tmp_path):
    runs = sweep(tiny_experiment(), "k_cutoff", [2, 3, 4], tiny_data)
    assert len(runs) == 6
    assert [run.k_cutoff for run in runs] == [2, 2, 3, 3, 4, 4]

    summary = summarize(runs, "k_cutoff")
    assert len(summary) == 3 * 3
    assert (summary["ci_low"] <= summary["mean"]).all() and (summary["mean"] <= summary["ci_high"]).all()
    assert (summary["n"] == 2).all()

    results_path = tmp_path / "sweep.csv"
    write_results(runs, str(results_path))
    paths = emit_plot_data(str(results_path), str(tmp_path / "plots"))
    assert sorted(p.rsplit("/", 1)[-1] for p in paths) == ["map_oracle.csv", "ndcg1_oracle.csv", "ndcg3_oracle.csv"]
    series = pd.read_csv(paths[0])
    assert list(series.columns) == ["x", "mean", "ci_low", "ci_high"]
    assert list(series["x"]) == [2, 3, 4]

    summary_path = tmp_path / "summary.csv"
    write_summary(summary, str(summary_path))
    assert len(read_summary(str(summary_path))) == 9
    assert len(emit_plot_data(str(summary_path), str(tmp_path / "from_summary"))) == 3


def test_sweep_arguments(tiny_data):
    with pytest.raises(ValidationError):
        sweep(tiny_experiment(), "gamma", [0.1], tiny_data)
    with pytest.raises(ValidationError):
        sweep(tiny_experiment(), "k_cutoff", [], tiny_data)
    with pytest.raises(ValidationError):
        sweep(tiny_experiment(), "k_cutoff", [2.5], tiny_data)
    with pytest.raises(ValidationError):
        sweep(tiny_experiment(), "n_sessions", [100, 150.5], tiny_data)


def test_whole_float_values_on_integer_axes(tiny_data):
    runs = sweep(tiny_experiment(seeds=[0]), "k_cutoff", [2.0], tiny_data)
    assert [run.k_cutoff for run in runs] == [2]


def test_summary_of_failed_cells(tiny_data, mocker):
    mocker.patch("src.services.harness.train_method", side_effect=TrainingError("boom"))
    runs = run_experiment(tiny_experiment(seeds=[0]), tiny_data, max_workers=1)
    with pytest.raises(ValidationError):
        summarize(runs, "k_cutoff")


def test_empty_results_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(ValidationError):
        emit_plot_data(str(path), str(tmp_path))


BENCHMARK = dict(
    n_train_queries=300, n_test_queries=100, docs_per_query=20, feature_dim=10, n_sessions=20_000, k_cutoff=5,
    eta_true=1.0, noise_eps=0.1, seeds=[0, 1, 2, 3, 4], epochs=5, batch_size=256, hidden_sizes=[64, 32],
    learning_rate=3e-3,
)
# slack on comparisons of 5-seed means
TOLERANCE = 0.01


def benchmark(**overrides):
    return tiny_experiment(**{**BENCHMARK, **overrides})


@pytest.fixture(scope="module")
def benchmark_data():
    return prepare_data(benchmark())


def mean_ndcg1(runs, method, **cell) -> float:
    values = [run.metrics.ndcg_at_1 for run in runs
              if run.method == method and run.ok and all(getattr(run, k) == v for k, v in cell.items())]
    assert len(values) == 5
    return float(np.mean(values))


@pytest.mark.slow
def test_method_ordering(benchmark_data):
    runs = run_experiment(benchmark(methods=["naive", "ips", "heckman", "cld", "cld_pair", "oracle"]),
                          benchmark_data)
    ndcg = {method: mean_ndcg1(runs, method) for method in ("naive", "ips", "heckman", "cld", "cld_pair", "oracle")}
    assert ndcg["oracle"] >= ndcg["cld_pair"] - TOLERANCE
    assert ndcg["cld"] >= ndcg["ips"] - TOLERANCE
    assert ndcg["ips"] >= ndcg["naive"] - TOLERANCE
    assert ndcg["cld"] >= ndcg["heckman"] - TOLERANCE


@pytest.mark.slow
def test_cld_gain_over_ips_shrinks_with_cutoff(benchmark_data):
    runs = sweep(benchmark(methods=["ips", "cld"]), "k_cutoff", [2, 20], benchmark_data)
    gap = {k: mean_ndcg1(runs, "cld", k_cutoff=k) - mean_ndcg1(runs, "ips", k_cutoff=k) for k in (2, 20)}
    assert gap[20] <= gap[2] + TOLERANCE


@pytest.mark.slow
def test_position_bias_hurts_heckman_more_than_cld(benchmark_data):
    runs = sweep(benchmark(methods=["heckman", "cld"]), "eta_true", [0.0, 2.0], benchmark_data)
    drop = {method: mean_ndcg1(runs, method, eta_true=0.0) - mean_ndcg1(runs, method, eta_true=2.0)
            for method in ("heckman", "cld")}
    assert drop["heckman"] > 0.0
    assert drop["cld"] < drop["heckman"]


@pytest.mark.slow
def test_pointwise_cld_is_more_robust_to_click_noise(benchmark_data):
    runs = sweep(benchmark(methods=["cld", "cld_pair"]), "noise_eps", [0.0, 0.5], benchmark_data)
    drop = {method: mean_ndcg1(runs, method, noise=0.0) - mean_ndcg1(runs, method, noise=0.5)
            for method in ("cld", "cld_pair")}
    assert drop["cld"] <= drop["cld_pair"] + TOLERANCE


@pytest.mark.slow
def test_underestimated_propensities_hurt_more_than_overestimated(benchmark_data):
    runs = sweep(benchmark(methods=["ips", "cld"]), "eta_hat", [0.5, 1.0, 2.0], benchmark_data)
    loss = {}
    for method in ("ips", "cld"):
        exact = mean_ndcg1(runs, method, eta_hat=1.0)
        loss[method] = {eta: exact - mean_ndcg1(runs, method, eta_hat=eta) for eta in (0.5, 2.0)}
        assert loss[method][0.5] <= loss[method][2.0] + TOLERANCE
    assert loss["cld"][2.0] < loss["ips"][2.0]


@pytest.mark.slow
def test_naive_degrades_with_position_bias(benchmark_data):
    runs = sweep(benchmark(methods=["naive"]), "eta_true", [0.0, 2.0], benchmark_data)
    assert mean_ndcg1(runs, "naive", eta_true=2.0) <= mean_ndcg1(runs, "naive", eta_true=0.0) + TOLERANCE


@pytest.mark.slow
def test_cld_improves_with_sessions(benchmark_data):
    runs = sweep(benchmark(methods=["cld"]), "n_sessions", [1_000, 100_000], benchmark_data)
    assert mean_ndcg1(runs, "cld", sessions=100_000) >= mean_ndcg1(runs, "cld", sessions=1_000) - TOLERANCE


if __name__ == '__main__':
    unittest.main()
