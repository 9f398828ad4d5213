import math

import mock
import numpy as np
import pytest

from util import recovery
from util.galois import build_field
from util.recovery import MpConfig
from util.rng import trial_rng
from util.sensing import additive_character_family
from util.sensing import build_construction_1a
from util.sensing import partial_fourier_family


@pytest.fixture(scope="module")
def matrix9():
    return build_construction_1a(build_field(3, 2))


@pytest.fixture(scope="module")
def matrix81():
    return build_construction_1a(build_field(3, 4))


class TestSparseSignal:
    def test_random_signal(self):
        signal = recovery.random_sparse_signal(100, 5, trial_rng(1, "signal"))
        assert signal.s == 5
        assert len(set(signal.support.tolist())) == 5
        assert np.all(signal.values != 0.0)
        dense = signal.to_dense()
        assert np.count_nonzero(dense) == 5
        assert np.array_equal(dense[signal.support], signal.values)

    def test_deterministic(self):
        first = recovery.random_sparse_signal(100, 5, trial_rng(1, "signal"))
        second = recovery.random_sparse_signal(100, 5, trial_rng(1, "signal"))
        assert np.array_equal(first.support, second.support)
        assert np.array_equal(first.values, second.values)

    def test_dense_signal(self):
        signal = recovery.random_sparse_signal(10, 10, trial_rng(2))
        assert sorted(signal.support.tolist()) == list(range(10))

    @pytest.mark.parametrize("s", [0, 11, -1])
    def test_sparsity_range(self, s):
        with pytest.raises(recovery.SparsityRangeError):
            recovery.random_sparse_signal(10, s, trial_rng(2))

    def test_amplitude_variance(self):
        rng = trial_rng(3, "variance")
        values = np.concatenate(
            [recovery.random_sparse_signal(1000, 1000, rng).values for _ in range(100)]
        )
        assert np.var(values) == pytest.approx(1.0, rel=0.05)

    def test_zero_amplitude_is_redrawn(self):
        rng = mock.Mock()
        rng.standard_normal.side_effect = [np.array([0.0, 1.0]), np.array([0.5, 1.0])]
        values = recovery._draw_amplitudes(2, rng)
        assert np.array_equal(values, [0.5, 1.0])
        assert rng.standard_normal.call_count == 2

    def test_invalid_signal(self):
        with pytest.raises(recovery.SparsityRangeError):
            recovery.SparseSignal(5, np.array([1, 1]), np.array([1.0, 2.0]))
        with pytest.raises(recovery.SparsityRangeError):
            recovery.SparseSignal(5, np.array([1]), np.array([0.0]))


class TestMeasurement:
    def test_noiseless(self, matrix9):
        x = recovery.random_sparse_signal(81, 3, trial_rng(4)).to_dense()
        assert np.allclose(recovery.measure(matrix9, x), matrix9.to_dense() @ x)

    def test_zero_signal(self, matrix9):
        assert not np.any(recovery.measure(matrix9, np.zeros(81)))

    def test_wrong_dimension(self, matrix9):
        with pytest.raises(ValueError):
            recovery.measure(matrix9, np.zeros(80))

    def test_infinite_snr(self, matrix9):
        signal = recovery.random_sparse_signal(81, 2, trial_rng(5))
        noisy = recovery.measure_noisy(matrix9, signal, math.inf, trial_rng(6))
        assert np.array_equal(noisy, recovery.measure(matrix9, signal))

    def test_degenerate_snr(self, matrix9):
        with pytest.raises(recovery.DegenerateSnrError):
            recovery.measure_noisy(matrix9, np.zeros(81), 20.0, trial_rng(6))

    def test_minus_infinite_snr(self, matrix9):
        y = recovery.measure(matrix9, recovery.random_sparse_signal(81, 1, trial_rng(5)))
        with pytest.raises(recovery.DegenerateSnrError):
            recovery.add_noise(y, -math.inf, trial_rng(6))

    def test_noise_power(self, matrix9):
        y = recovery.measure(matrix9, recovery.random_sparse_signal(81, 2, trial_rng(7)))
        snr_db = 10.0
        expected = recovery.noise_variance(y, 9, snr_db)
        assert expected == pytest.approx(np.vdot(y, y).real / 90.0)
        rng = trial_rng(8, "noise")
        noises = [recovery.add_noise(y, snr_db, rng) - y for _ in range(10000)]
        powers = [np.sum(np.abs(noise) ** 2) / 9 for noise in noises]
        assert np.mean(powers) == pytest.approx(expected, rel=0.05)


class TestMatchingPursuit:
    def test_single_atoms(self, matrix9):
        pursuit = recovery.pursue(matrix9, matrix9.to_dense(), MpConfig())
        assert np.allclose(pursuit.estimates, np.eye(81), atol=1e-12)
        assert np.all(pursuit.iterations == 1)
        assert np.allclose(pursuit.residuals, 0.0, atol=1e-12)

    def test_single_atom_vector(self, matrix9):
        x_hat = recovery.matching_pursuit(matrix9, matrix9.column(17))
        expected = np.zeros(81)
        expected[17] = 1.0
        assert np.allclose(x_hat, expected, atol=1e-12)

    def test_zero_measurement(self, matrix9):
        pursuit = recovery.pursue(matrix9, np.zeros(9), MpConfig())
        assert not np.any(pursuit.estimates)
        assert pursuit.iterations[0] == 0

    def test_residual_history(self, matrix9):
        signal = recovery.random_sparse_signal(81, 4, trial_rng(9))
        y = recovery.measure(matrix9, signal)
        pursuit = recovery.pursue(matrix9, y, MpConfig(max_iterations=30), record_history=True)
        norms = np.array([h[0] for h in pursuit.history])
        assert norms[0] == pytest.approx(np.linalg.norm(y))
        assert np.all(np.diff(norms) <= 1e-12)
        assert np.allclose(y - matrix9.apply(pursuit.estimates), pursuit.residuals)

    def test_energy_per_step(self, matrix9):
        y = recovery.measure(matrix9, recovery.random_sparse_signal(81, 3, trial_rng(10)))
        residual = y.copy()
        for _ in range(5):
            step = recovery.pursue(matrix9, residual, MpConfig(max_iterations=1))
            gain = np.max(np.abs(matrix9.adjoint(residual)))
            new_norm = np.linalg.norm(step.residuals) ** 2
            assert np.linalg.norm(residual) ** 2 == pytest.approx(new_norm + gain**2, abs=1e-10)
            residual = step.residuals

    def test_batch_matches_single(self, matrix9):
        rng = trial_rng(12)
        Y = np.stack(
            [
                recovery.measure(matrix9, recovery.random_sparse_signal(81, 3, rng))
                for _ in range(6)
            ],
            axis=1,
        )
        batch = recovery.pursue(matrix9, Y, MpConfig())
        for i in range(6):
            single = recovery.pursue(matrix9, Y[:, i], MpConfig())
            assert np.allclose(batch.estimates[:, i], single.estimates, atol=1e-12)
            assert batch.iterations[i] == single.iterations[0]

    def test_guaranteed_recovery(self, matrix81):
        for t in range(20):
            signal = recovery.random_sparse_signal(6561, 2, trial_rng(2011, "k81", t))
            x_hat = recovery.matching_pursuit(matrix81, recovery.measure(matrix81, signal))
            result = recovery.evaluate_success(signal, x_hat, recovery.NOISELESS_THRESHOLD)
            assert result.success

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MpConfig(max_iterations=0)
        with pytest.raises(ValueError):
            MpConfig(success_threshold=0.0)
        assert MpConfig.noisy().success_threshold == recovery.NOISY_THRESHOLD


class TestEvaluateSuccess:
    def test_exact(self):
        signal = recovery.SparseSignal(4, np.array([1]), np.array([2.0]))
        result = recovery.evaluate_success(signal, signal.to_dense().astype(complex), 1e-4)
        assert result.squared_error == 0.0
        assert result.success
        assert result.s == 1

    def test_zero_estimate(self):
        signal = recovery.SparseSignal(4, np.array([2]), np.array([1.0]))
        for threshold in (recovery.NOISELESS_THRESHOLD, recovery.NOISY_THRESHOLD):
            result = recovery.evaluate_success(signal, np.zeros(4, dtype=complex), threshold)
            assert result.squared_error == pytest.approx(1.0)
            assert not result.success

    def test_real_projection(self):
        x = np.array([1.0, 0.0])
        result = recovery.evaluate_success(x, np.array([1.0 + 0.1j, 0.0]), 1e-4)
        assert result.squared_error == pytest.approx(0.01)
        assert result.squared_error_real == 0.0
        assert result.success_real
        assert not result.success

    def test_threshold_monotone(self):
        x = np.array([1.0, -1.0])
        x_hat = np.array([1.005, -1.0])
        strict = recovery.evaluate_success(x, x_hat, recovery.NOISELESS_THRESHOLD)
        loose = recovery.evaluate_success(x, x_hat, recovery.NOISY_THRESHOLD)
        assert strict.success
        assert loose.success

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            recovery.evaluate_success(np.zeros(3), np.zeros(4), 1e-4)


class TestExperiments:
    def test_noiseless(self, matrix9):
        families = [additive_character_family(matrix9), partial_fourier_family(9, 81)]
        report = recovery.run_noiseless_experiment(
            families, [0, 1, 2], trials=60, seed=7, workers=1
        )
        assert report.rate("additive-character", 0) == 1.0
        assert report.rate("additive-character", 1) == 1.0
        assert all(0.0 <= c.success_rate <= 1.0 for c in report.conditions)
        assert all(c.trials == 60 for c in report.conditions)
        frame = report.to_frame()
        assert list(frame.columns) == ["family", "s", "trials", "success_rate"]
        assert len(frame) == 6

    def test_reproducible_across_workers(self, matrix9):
        families = [additive_character_family(matrix9), partial_fourier_family(9, 81)]
        one = recovery.run_noiseless_experiment(families, [2, 3], trials=120, seed=3, workers=1)
        many = recovery.run_noiseless_experiment(families, [2, 3], trials=120, seed=3, workers=4)
        assert one.conditions == many.conditions

    def test_trial_log(self, matrix9):
        report = recovery.run_noiseless_experiment(
            [additive_character_family(matrix9)],
            [2],
            trials=10,
            seed=1,
            workers=1,
            keep_trials=True,
        )
        frame = report.trial_frame()
        assert len(frame) == 10
        assert list(frame["trial"]) == list(range(10))
        assert "success_rate_real" in report.to_frame(include_real=True).columns
        assert all(frame["squared_error_real"] <= frame["squared_error"] + 1e-15)

    def test_noisy(self, matrix9):
        report = recovery.run_noisy_experiment(
            [additive_character_family(matrix9)],
            s_set=[1],
            snr_grid_db=[math.inf, 40.0],
            trials=40,
            seed=9,
            workers=1,
        )
        assert report.threshold == recovery.NOISY_THRESHOLD
        assert report.rate("additive-character", 1, math.inf) == 1.0
        assert report.rate("additive-character", 1, 40.0) >= 0.9
        assert list(report.to_frame().columns) == [
            "family",
            "s",
            "snr_db",
            "trials",
            "success_rate",
        ]

    def test_noisy_needs_signal(self, matrix9):
        with pytest.raises(recovery.SparsityRangeError):
            recovery.run_noisy_experiment([additive_character_family(matrix9)], s_set=[0])

    def test_trials_must_be_positive(self, matrix9):
        with pytest.raises(ValueError):
            recovery.run_noiseless_experiment([additive_character_family(matrix9)], [1], trials=0)

    def test_default_grid(self):
        assert recovery.DEFAULT_SNR_GRID == (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
        assert recovery.DEFAULT_NOISY_SPARSITY == (1, 2, 3)

    @pytest.mark.slow
    def test_noiseless_k81(self, matrix81):
        report = recovery.run_noiseless_experiment(
            [additive_character_family(matrix81)], range(1, 8), trials=2000, seed=2011
        )
        for s in range(1, 5):
            assert report.rate("additive-character", s) > 0.99
        for s in range(1, 8):
            assert report.rate("additive-character", s) > 0.95

    @pytest.mark.slow
    def test_noisy_k81(self, matrix81):
        family = additive_character_family(matrix81)
        noiseless = recovery.run_noiseless_experiment(
            [family], [1, 2, 3], trials=2000, config=MpConfig.noisy(), seed=2011
        )
        noisy = recovery.run_noisy_experiment(
            [family], [1, 2, 3], [30.0, 60.0], trials=2000, seed=2011
        )
        for s in (1, 2, 3):
            assert abs(noisy.rate(family.name, s, 60.0) - noiseless.rate(family.name, s)) <= 0.01
            assert noisy.rate(family.name, s, 30.0) > 0.9
