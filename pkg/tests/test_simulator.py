import dataclasses

import numpy as np
import pytest

from rtpr.estimation.fitter import FitOptions
from rtpr.kernels.kernel import gram_matrix
from rtpr.simulation.scenarios import (ConstantDisturbance, EtpErrors, GaussianErrors, NoDisturbance,
                                       RandomT2Disturbance, Scenario, disturbance_from_name, error_kind_from_name)
from rtpr.simulation.simulator import (Replication, SimConfig, SimResult, inject_disturbance, make_design, mse,
                                       num_processes, run_experiment, sample_errors, sample_truth, scenario_config,
                                       simulate_data)
from rtpr.simulation.tables import mean_sd, r_hat_table, replications_frame, summarize_scenarios
from rtpr.utils.errors import DomainError, InputError

LENIENT = FitOptions(strict=False, max_outer=10)


@pytest.fixture
def tiny():
    return SimConfig(J=3, n_train=6, grid_size=12, disturbed_curve=3, reps=2, seed=5)


class TestDesign:

    def test_default_grid(self):
        S, train, test = make_design(SimConfig())
        assert S[0] == 0.0
        assert S[29] == pytest.approx(3.0)
        np.testing.assert_array_equal(train, np.arange(0, 30, 3))
        assert test.size == 20
        assert not set(train) & set(test)

    def test_offset(self):
        _, train, _ = make_design(SimConfig(train_offset=2))
        np.testing.assert_array_equal(train, np.arange(2, 30, 3))

    def test_offset_overflow(self):
        with pytest.raises(InputError):
            make_design(SimConfig(train_offset=3))

    @pytest.mark.parametrize("kwargs", [{"n_train": 31}, {"n_train": 0}, {"disturbed_curve": 7}, {"reps": 0},
                                        {"phi": 0.0}, {"J": 0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(InputError):
            SimConfig(**kwargs)


class TestSampling:

    def test_truth_deterministic(self):
        config = SimConfig()
        np.testing.assert_array_equal(sample_truth(config, 0, 11), sample_truth(config, 0, 11))
        assert not np.array_equal(sample_truth(config, 0, 11), sample_truth(config, 0, 12))

    def test_truth_covariance(self):
        config = SimConfig()
        S, _, _ = make_design(config)
        points = [0, 10, 29]
        draws = np.array([sample_truth(config, 0, k)[points] for k in range(4000)])
        K = gram_matrix(config.truth, S[points])
        for a in range(3):
            for b in range(a, 3):
                products = draws[:, a] * draws[:, b]
                se = products.std(ddof=1) / np.sqrt(products.size)
                assert abs(products.mean() - K[a, b]) < 4 * se

    def test_errors(self):
        config = SimConfig(error=EtpErrors(2.0))
        draws = sample_errors(config, 0, 1, 9)
        assert draws.shape == (10,)
        np.testing.assert_array_equal(draws, sample_errors(config, 0, 1, 9))
        gaussian = np.concatenate([sample_errors(SimConfig(), 0, 0, k) for k in range(2000)])
        assert gaussian.var() == pytest.approx(0.2, rel=0.05)

    def test_constant_disturbance(self):
        config = SimConfig(disturbance=ConstantDisturbance(1.5))
        y = np.linspace(-1.0, 1.0, 10)
        np.testing.assert_allclose(inject_disturbance(y, config, 0), y + 1.5)

    def test_t2_per_curve(self):
        y = np.zeros(10)
        out = RandomT2Disturbance(0.5, per_response=False).apply(y, np.random.default_rng(42))
        assert np.ptp(out) == 0.0

    def test_t2_per_response(self):
        out = RandomT2Disturbance(0.5).apply(np.zeros(10), np.random.default_rng(42))
        assert np.unique(out).size == 10

    def test_only_disturbed_curve_changes(self):
        seed = np.random.SeedSequence(3)
        clean, truths = simulate_data(SimConfig(disturbance=NoDisturbance()), seed)
        shifted, truths_again = simulate_data(SimConfig(disturbance=ConstantDisturbance(2.0)), seed)
        np.testing.assert_array_equal(truths, truths_again)
        np.testing.assert_array_equal(clean.groups[0].Y[:5], shifted.groups[0].Y[:5])
        np.testing.assert_allclose(shifted.groups[0].Y[5], clean.groups[0].Y[5] + 2.0)

    def test_simulate_data_shapes(self):
        data, truths = simulate_data(SimConfig(I=2), np.random.SeedSequence(1))
        assert data.I == 2
        assert data.groups[1].Y.shape == (6, 10)
        assert truths.shape == (2, 30)


class TestScenarios:

    def test_etp_needs_nu(self):
        with pytest.raises(InputError):
            error_kind_from_name("etp")

    def test_etp_domain(self):
        with pytest.raises(DomainError):
            EtpErrors(1.0)

    def test_unknown_disturbance(self):
        with pytest.raises(InputError):
            disturbance_from_name("uniform", 1.0)

    def test_labels(self):
        scenario = Scenario(error_kind_from_name("etp", 2.0), disturbance_from_name("constant", 0.5))
        assert scenario.label == "ETP(nu=2) | constant(0.5)"
        assert scenario.to_dict() == {"error": "etp", "nu": 2.0, "disturbance": "constant", "gamma": 0.5}


class TestMse:

    def test_against_loop(self):
        rng = np.random.default_rng(42)
        f_hat = rng.standard_normal((2, 20))
        f0 = rng.standard_normal((2, 20))
        total = 0.0
        for i in range(2):
            for k in range(20):
                total += (f_hat[i, k] - f0[i, k]) ** 2
        assert mse(f_hat, f0, 2, 10) == pytest.approx(total / 20)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            mse(np.zeros((1, 3)), np.zeros((1, 4)), 1, 10)


class TestRunExperiment:

    def test_deterministic(self, tiny):
        first = run_experiment(tiny, ["gp-gp", "gp-tp"], LENIENT, num_proc=1)
        second = run_experiment(tiny, ["gp-gp", "gp-tp"], LENIENT, num_proc=1)
        for model in ("gp-gp", "gp-tp"):
            np.testing.assert_array_equal(first.mse_values(model), second.mse_values(model))
        np.testing.assert_array_equal(first.r_hat_values("gp-tp"), second.r_hat_values("gp-tp"))
        assert len(first.to_frame()) == 4

    def test_curves_kept_for_first_replication(self, tiny):
        result = run_experiment(tiny, ["gp-tp"], LENIENT, num_proc=1, curves=True)
        frame = result.curves
        assert len(frame) == 12
        assert {"group", "x", "truth", "clean_curve_mean", "gp-tp_mean", "gp-tp_lower95"} <= set(frame.columns)
        assert result.replications[1].curves is None

    def test_duplicate_models(self, tiny):
        with pytest.raises(InputError):
            run_experiment(tiny, ["gp-tp", "gp-tp"], LENIENT, num_proc=1)

    def test_no_test_points(self):
        with pytest.raises(InputError):
            run_experiment(SimConfig(n_train=30, reps=1), ["gp-gp"], LENIENT, num_proc=1)

    def test_scenario_seeds_differ(self, tiny):
        scenario = Scenario(GaussianErrors(), ConstantDisturbance(2.0))
        a = scenario_config(tiny, scenario, 0)
        b = scenario_config(tiny, scenario, 1)
        assert a.seed == (5, 0)
        assert b.seed == (5, 1)
        data_a, _ = simulate_data(a, np.random.SeedSequence(a.seed_entropy))
        data_b, _ = simulate_data(b, np.random.SeedSequence(b.seed_entropy))
        assert not np.array_equal(data_a.groups[0].Y, data_b.groups[0].Y)

    def test_num_processes_env(self, monkeypatch):
        monkeypatch.setenv("RTPR_NUM_PROC", "3")
        assert num_processes() == 3
        monkeypatch.setenv("RTPR_NUM_PROC", "many")
        with pytest.raises(InputError):
            num_processes()

    @pytest.mark.slow
    def test_pool_matches_sequential(self, tiny):
        config = dataclasses.replace(tiny, reps=4)
        sequential = run_experiment(config, ["gp-tp"], LENIENT, num_proc=1)
        pooled = run_experiment(config, ["gp-tp"], LENIENT, num_proc=2)
        np.testing.assert_array_equal(sequential.mse_values("gp-tp"), pooled.mse_values("gp-tp"))


def _replication(index, mses, r_hat=None, flagged=None, failures=None):
    return Replication(index, (index,), mses, r_hat or {}, flagged or {}, {}, failures or {})


class TestTables:

    def test_mean_sd(self):
        assert mean_sd(0.1449, 0.0521) == "0.145(0.052)"

    def test_summarize(self):
        result = SimResult(SimConfig(), ("gp-gp", "gp-tp"),
                           (_replication(0, {"gp-gp": 0.1, "gp-tp": 0.05}),
                            _replication(1, {"gp-gp": 0.3}, failures={"gp-tp": "did not converge"})))
        frame = summarize_scenarios([(Scenario(GaussianErrors(), ConstantDisturbance(2.0)), result)])
        row = frame.iloc[0]
        assert row["error"] == "Gaussian"
        assert row["disturbance"] == "constant"
        assert row["gamma"] == 2.0
        assert row["gp-gp"] == "0.200(0.141)"
        assert row["gp-tp"] == "0.050(0.000)"
        assert row["gp-tp_failed"] == 1

    def test_r_hat_table(self):
        reps = (_replication(0, {"gp-tp": 0.1}, {"gp-tp": np.array([[1.0, 3.0]])}, {"gp-tp": np.array([True])}),
                _replication(1, {"gp-tp": 0.1}, {"gp-tp": np.array([[1.0, 5.0]])}, {"gp-tp": np.array([False])}))
        frame = r_hat_table([(Scenario(GaussianErrors(), NoDisturbance()), SimResult(SimConfig(), ("gp-tp",), reps))])
        row = frame.iloc[0]
        assert row["r1"] == "1.000(0.000)"
        assert row["r2"] == "4.000(1.414)"
        assert row["flag_rate"] == 0.5

    def test_replications_frame(self):
        result = SimResult(SimConfig(), ("gp-gp",), (_replication(0, {"gp-gp": 0.1}),))
        frame = replications_frame([(Scenario(GaussianErrors(), NoDisturbance()), result)] * 2)
        assert list(frame.columns[:6]) == ["scenario", "error", "disturbance", "gamma", "replication", "model"]
        assert list(frame.scenario) == [0, 1]


@pytest.mark.slow
class TestReproduction:
    """Scaled-down reproductions of the robustness and outlier tables (100 replications)."""

    def test_constant_disturbance_mse(self):
        ratios = {}
        for gamma in (0.5, 1.0, 2.0):
            config = SimConfig(disturbance=ConstantDisturbance(gamma), seed=(20180101, int(gamma * 10)))
            result = run_experiment(config, ["gp-gp", "gp-tp"], FitOptions(strict=False))
            ratios[gamma] = result.mse_mean("gp-tp") / result.mse_mean("gp-gp")
        assert ratios[2.0] < 0.7
        assert ratios[1.0] < 1.0
        assert 0.75 <= ratios[0.5] <= 1.25

    def test_clean_data_rarely_flagged(self):
        config = SimConfig(disturbance=NoDisturbance(), seed=(20180101, 0))
        result = run_experiment(config, ["gp-tp"], FitOptions(strict=False))
        assert 1.0 - result.any_flag_rate("gp-tp") >= 0.9

    def test_outlier_table(self):
        config = SimConfig(I=2, disturbance=ConstantDisturbance(2.0), seed=(20180101, 3))
        result = run_experiment(config, ["gp-tp"], FitOptions(strict=False))
        means = result.r_hat_mean("gp-tp")
        for i in range(2):
            assert means[i, 5] > 5 * means[i, :5].mean()
        assert np.all(result.flag_rate("gp-tp") >= 0.9)
