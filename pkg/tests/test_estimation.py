"""Tests for fractional path estimation and NMSE."""

import numpy as np
import pytest

from dd_sounder.channel import Path, PathSet
from dd_sounder.core import make_frame_config
from dd_sounder.estimation import (
    EstimatorConfig,
    eq_channel_delay,
    eq_channel_doppler,
    estimate_paths,
    fractional_grid,
    match_paths,
    matched_filter_surface,
    model_csf,
    nmse,
    path_template,
)
from dd_sounder.exceptions import ConfigurationError, EstimationError
from dd_sounder.receiver import Csf


@pytest.fixture
def cfg():
    """(128, 32) frame at 10 MHz with l_tau = 32."""
    return make_frame_config(128, 32, 10e6, l_tau=32)


def path_at(cfg, k, l, gain=1.0):
    """Path at fractional (Doppler, delay) taps."""
    return Path(gain, l * cfg.delay_resolution, k * cfg.doppler_resolution)


class TestKernels:
    """Test equivalent channel kernels."""

    def test_on_grid_peak(self):
        """Test an integer path concentrates on one tap."""
        values = eq_channel_doppler(np.arange(-4, 5), 0.0, 16)
        assert abs(values[4]) == pytest.approx(16.0)
        assert np.allclose(np.delete(np.abs(values), 4), 0.0, atol=1e-9)

    def test_half_tap_symmetry(self):
        """Test a half-tap offset splits power evenly between neighbours."""
        values = np.abs(eq_channel_delay(np.array([0, 1]), 0.5, 64))
        assert values[0] == pytest.approx(values[1])

    def test_conjugate_twins(self):
        """Test the delay kernel is the conjugate of the Doppler kernel."""
        dk = np.arange(-3, 4)
        assert np.allclose(eq_channel_delay(dk, 0.3, 32), np.conj(eq_channel_doppler(dk, 0.3, 32)))

    @pytest.mark.parametrize('position', [0.0, 0.37, 2.5, -3.81])
    def test_parseval(self, position):
        """Test each kernel carries N^2 (or M^2) energy over one period for any real position."""
        N, M = 32, 64
        doppler = eq_channel_doppler(np.arange(N), position, N)
        delay = eq_channel_delay(np.arange(M), position, M)
        assert np.sum(np.abs(doppler) ** 2) == pytest.approx(N ** 2, rel=1e-9)
        assert np.sum(np.abs(delay) ** 2) == pytest.approx(M ** 2, rel=1e-9)

    def test_doppler_direct_sum(self):
        """Test the closed form against the defining sum at half a tap."""
        n = np.arange(16)
        expected = np.sum(np.exp(1j * np.pi * n / 16))
        assert eq_channel_doppler(np.array([0]), 0.5, 16)[0] == pytest.approx(expected, abs=1e-9)

    def test_delay_direct_sum(self):
        """Test the delay closed form against the defining sum one tap from the path."""
        m = np.arange(16)
        expected = np.sum(np.exp(2j * np.pi * m * (1 - 0.2) / 16))
        assert eq_channel_delay(np.array([1]), 0.2, 16)[0] == pytest.approx(expected, abs=1e-9)

    def test_fractional_grid_nesting(self):
        """Test finer grids contain coarser ones."""
        coarse = fractional_grid(0.1)
        fine = fractional_grid(0.05)
        assert len(coarse) == 11
        assert coarse[0] == -0.5 and coarse[-1] == 0.5
        assert np.all(np.isin(coarse, fine))

    def test_fractional_grid_window(self):
        """Test restricting the grid to a window."""
        grid = fractional_grid(0.01, 0.2, 0.4)
        assert grid[0] == pytest.approx(0.2)
        assert grid[-1] == pytest.approx(0.4)
        assert len(grid) == 21


class TestEstimatorConfig:
    """Test estimator settings."""

    def test_defaults(self):
        """Test default steps."""
        est = EstimatorConfig()
        assert est.delay_step == 0.1
        assert est.doppler_step == 0.01
        assert est.validate() == []

    def test_invalid_steps(self):
        """Test step bounds."""
        with pytest.raises(ConfigurationError):
            EstimatorConfig(delay_step=0.0)
        with pytest.raises(ConfigurationError):
            EstimatorConfig(doppler_step=0.6)

    def test_invalid_search(self):
        """Test unknown search modes."""
        with pytest.raises(ConfigurationError) as exc_info:
            EstimatorConfig(search='random')
        assert 'search' in str(exc_info.value)

    def test_from_dict_ignores_unknown(self):
        """Test unknown keys are dropped."""
        est = EstimatorConfig.from_dict({'delay_step': 0.05, 'colour': 'blue'})
        assert est.delay_step == 0.05


class TestEstimatePaths:
    """Test serial interference cancellation."""

    def test_on_grid_path(self, cfg):
        """Test an integer path is recovered exactly."""
        truth = PathSet([path_at(cfg, 3, 7, gain=0.5)])
        estimates = estimate_paths(model_csf(truth, cfg))

        assert len(estimates) == 1
        e = estimates[0]
        assert e.integer_taps == (3, 7)
        assert e.fractional_taps == pytest.approx((0.0, 0.0), abs=1e-9)
        assert e.gain == pytest.approx(0.5, rel=1e-9)
        assert e.delay == pytest.approx(7 * cfg.delay_resolution)

    def test_fractional_path(self, cfg):
        """Test a fractional path on the search grid."""
        truth = PathSet([path_at(cfg, 2.3, 5.4)])
        est = EstimatorConfig(delay_step=0.1, doppler_step=0.1)
        (e,) = estimate_paths(model_csf(truth, cfg), est)

        assert e.integer_taps == (2, 5)
        assert e.fractional_taps == pytest.approx((0.3, 0.4), abs=1e-9)
        assert e.gain == pytest.approx(1.0, rel=1e-6)
        assert e.doppler == pytest.approx(2.3 * cfg.doppler_resolution)
        assert e.phase == pytest.approx(-2 * np.pi * e.doppler * e.delay)

    def test_negative_doppler(self, cfg):
        """Test negative fractional Doppler."""
        truth = PathSet([path_at(cfg, -4.2, 3.0)])
        (e,) = estimate_paths(model_csf(truth, cfg), EstimatorConfig(doppler_step=0.1))
        assert e.doppler_taps == pytest.approx(-4.2, abs=1e-9)

    def test_coarse_to_fine_matches_exhaustive(self, cfg):
        """Test both search modes find the same path."""
        truth = PathSet([path_at(cfg, 1.37, 4.2)])
        csf = model_csf(truth, cfg)
        fine = EstimatorConfig(delay_step=0.1, doppler_step=0.01)
        (a,) = estimate_paths(csf, fine)
        (b,) = estimate_paths(csf, EstimatorConfig(delay_step=0.1, doppler_step=0.01, search='coarse_to_fine'))
        assert a.fractional_taps == pytest.approx(b.fractional_taps)
        assert a.doppler_taps == pytest.approx(1.37, abs=1e-9)

    def test_multiple_paths(self, cfg):
        """Test separated paths are all recovered with near-zero NMSE."""
        truth = PathSet([
            path_at(cfg, 0.0, 0.0),
            path_at(cfg, 3.4, 6.2, gain=0.5),
            path_at(cfg, -5.1, 12.7, gain=0.3),
        ])
        est = EstimatorConfig(delay_step=0.1, doppler_step=0.1)
        estimates = estimate_paths(model_csf(truth, cfg), est)

        result = nmse(estimates, truth, cfg)
        assert not result.unmatched_truth
        assert result.index_nmse < 1e-3
        assert result.amplitude_nmse < 1e-3

    def test_cancellation_lowers_residual_energy(self, cfg):
        """Test every extracted path strictly lowers the residual CSF energy."""
        truth = PathSet([
            path_at(cfg, 0.0, 0.0),
            path_at(cfg, 2.4, 3.7, gain=0.6),
            path_at(cfg, -3.1, 5.2, gain=0.4),
        ])
        csf = model_csf(truth, cfg)
        estimates = estimate_paths(csf, EstimatorConfig(delay_step=0.1, doppler_step=0.1, max_paths=8))

        residual = csf.data.copy()
        energies = [np.sum(np.abs(residual) ** 2)]
        for e in estimates:
            residual -= e.complex_gain * path_template(cfg, e.doppler_taps, e.delay_taps)
            energies.append(np.sum(np.abs(residual) ** 2))
        assert len(estimates) >= 3
        assert np.all(np.diff(energies) < 0)

    def test_scaling_leaves_positions_unchanged(self, cfg):
        """Test scaling the CSF scales the gains and keeps every position."""
        truth = PathSet([path_at(cfg, 1.3, 2.6), path_at(cfg, -4.2, 9.1, gain=0.5)])
        csf = model_csf(truth, cfg, noise_floor=1e-6)
        est = EstimatorConfig(delay_step=0.1, doppler_step=0.1, max_paths=2)

        base = estimate_paths(csf, est)
        scaled = estimate_paths(csf.scaled(1e3), est)
        assert [e.integer_taps for e in scaled] == [e.integer_taps for e in base]
        assert [e.fractional_taps for e in scaled] == [e.fractional_taps for e in base]
        for a, b in zip(base, scaled):
            assert b.complex_gain == pytest.approx(1e3 * a.complex_gain, rel=1e-9)

    def test_max_paths(self, cfg):
        """Test extraction stops at max_paths."""
        truth = PathSet([path_at(cfg, 0, 0), path_at(cfg, 4, 8, 0.5), path_at(cfg, -6, 16, 0.3)])
        estimates = estimate_paths(model_csf(truth, cfg), EstimatorConfig(max_paths=2))
        assert len(estimates) == 2
        assert estimates[0].gain >= estimates[1].gain

    def test_power_threshold(self, cfg):
        """Test the explicit threshold drops weak paths."""
        truth = PathSet([path_at(cfg, 0, 0), path_at(cfg, 4, 8, 0.1)])
        estimates = estimate_paths(model_csf(truth, cfg), EstimatorConfig(power_threshold=0.05))
        assert len(estimates) == 1

    def test_zero_csf(self, cfg):
        """Test an empty CSF yields no paths."""
        csf = Csf(np.zeros((cfg.N, cfg.l_tau + 1)), cfg)
        assert estimate_paths(csf) == []

    def test_surface_bounds(self, cfg):
        """Test integer positions outside the CSF."""
        csf = model_csf(PathSet([path_at(cfg, 0, 0)]), cfg)
        with pytest.raises(EstimationError):
            matched_filter_surface(csf, 0, cfg.l_tau + 1, EstimatorConfig())

    def test_surface_peak(self, cfg):
        """Test the matched-filter surface peaks at the true fraction."""
        csf = model_csf(PathSet([path_at(cfg, 1.2, 2.3)]), cfg)
        surface = matched_filter_surface(csf, 1, 2, EstimatorConfig(delay_step=0.1, doppler_step=0.1))
        a, b = surface.best()
        assert surface.k_offsets[a] == pytest.approx(0.2)
        assert surface.l_offsets[b] == pytest.approx(0.3)
        assert abs(surface.values[a, b]) == pytest.approx(1.0, rel=1e-6)


class TestNmse:
    """Test path matching and NMSE."""

    def test_missing_estimates(self, cfg):
        """Test unmatched truth counts as full error."""
        truth = PathSet([path_at(cfg, 2, 3)])
        result = nmse([], truth, cfg)
        assert result.as_tuple() == (1.0, 1.0)
        assert result.unmatched_truth == [0]

    def test_extra_estimates_reported(self, cfg):
        """Test extra estimates are reported but not scored."""
        truth = PathSet([path_at(cfg, 0, 0)])
        csf = model_csf(PathSet([path_at(cfg, 0, 0), path_at(cfg, 5, 10, 0.5)]), cfg)
        result = nmse(estimate_paths(csf), truth, cfg)
        assert result.unmatched_estimates == [1]
        assert result.index_nmse == pytest.approx(0.0, abs=1e-12)

    def test_match_radius(self, cfg):
        """Test estimates farther than the radius stay unmatched."""
        truth = PathSet([path_at(cfg, 0, 0)])
        estimates = estimate_paths(model_csf(PathSet([path_at(cfg, 3, 3)]), cfg))
        matched, unmatched_truth, unmatched_est = match_paths(estimates, truth, cfg)
        assert matched == []
        assert unmatched_truth == [0]
        assert unmatched_est == [0]
