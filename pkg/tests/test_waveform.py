"""Tests for the sounding waveform and transforms."""

import numpy as np
import pytest

from dd_sounder.core import FrameConfig, make_frame_config
from dd_sounder.exceptions import ConfigurationError, SignalError
from dd_sounder.waveform import (
    DdGrid,
    IqBuffer,
    build_full_pn_grid,
    build_single_pilot_grid,
    build_sounding_grid,
    default_pn,
    generate_pn,
    heisenberg_modulate,
    isfft,
    papr,
    repeat_frame,
    sfft,
    synthesize_frame,
    wigner_demodulate,
)


class TestGeneratePn:
    """Test maximal-length sequence generation."""

    def test_degree_three_sequence(self):
        """Test the x^3 + x + 1 sequence chip by chip."""
        assert generate_pn(7, 0b1011, 0b001).tolist() == [-1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0]

    def test_period_balance(self):
        """Test one period holds one more -1 than +1."""
        chips = generate_pn(1023, (1 << 10) | (1 << 3) | 1, 1)
        assert chips.sum() == -1.0

    def test_repeats_after_period(self):
        """Test longer sequences repeat periodically."""
        chips = generate_pn(21, 0b1011, 0b001)
        assert np.array_equal(chips[:7], chips[7:14])
        assert np.array_equal(chips[:7], chips[14:])

    def test_zero_seed_rejected(self):
        """Test the all-zero register state is rejected."""
        with pytest.raises(ConfigurationError):
            generate_pn(7, 0b1011, 0)

    def test_default_pn_values(self):
        """Test default chips are +/-1."""
        chips = default_pn(4096)
        assert set(np.unique(chips)) == {-1.0, 1.0}


class TestSoundingGrid:
    """Test sounding grid layouts."""

    def test_designed_layout(self, small_cfg):
        """Test pilot, guard band and PN cells."""
        cfg = small_cfg
        grid = build_sounding_grid(cfg, default_pn(cfg.pn_cell_count)).data

        assert grid[cfg.k_p, cfg.l_p] == 1.0
        guard = grid[:, cfg.l_p - cfg.l_tau:cfg.l_p + cfg.l_tau + 1].copy()
        guard[cfg.k_p, cfg.l_tau] = 0.0
        assert np.all(guard == 0)
        assert np.count_nonzero(grid) == cfg.pn_cell_count + 1

        outside = np.delete(grid, cfg.guard_columns, axis=1)
        assert np.all(np.abs(outside) == cfg.A_pn)

    def test_pn_amplitude(self):
        """Test A_pn scales the PN cells only."""
        cfg = make_frame_config(64, 16, 1e6, l_tau=16, A_pn=0.5)
        grid = build_sounding_grid(cfg, default_pn(cfg.pn_cell_count)).data
        assert grid[cfg.k_p, cfg.l_p] == 1.0
        assert np.abs(grid[0, 0]) == 0.5

    def test_short_pn_rejected(self, small_cfg):
        """Test a PN sequence shorter than the PN cell count."""
        with pytest.raises(SignalError) as exc_info:
            build_sounding_grid(small_cfg, np.ones(10))
        assert exc_info.value.details['needed'] == small_cfg.pn_cell_count

    def test_comparison_patterns(self, small_cfg):
        """Test single-pilot and full-PN grids."""
        pilot = build_single_pilot_grid(small_cfg).data
        assert np.count_nonzero(pilot) == 1
        full = build_full_pn_grid(small_cfg).data
        assert np.count_nonzero(full) == small_cfg.frame_samples

    def test_full_pn_columns_are_contiguous_runs(self, small_cfg):
        """Test each delay column of the full-PN grid holds consecutive chips."""
        N = small_cfg.N
        chips = default_pn(small_cfg.frame_samples)
        full = build_full_pn_grid(small_cfg).data
        for column in (0, 1, small_cfg.M - 1):
            assert np.array_equal(full[:, column].real, chips[column * N:(column + 1) * N])

    def test_grid_shape_checked(self, small_cfg):
        """Test DdGrid rejects a wrong shape."""
        with pytest.raises(SignalError):
            DdGrid(np.zeros((4, 4)), small_cfg)


class TestTransforms:
    """Test ISFFT/SFFT and Heisenberg/Wigner."""

    def test_sfft_inverts_isfft(self, small_cfg):
        """Test the symplectic transforms are exact inverses."""
        rng = np.random.default_rng(0)
        data = rng.standard_normal((16, 64)) + 1j * rng.standard_normal((16, 64))
        grid = DdGrid(data, small_cfg)

        tf = isfft(grid)
        assert tf.energy == pytest.approx(grid.energy)
        assert np.max(np.abs(sfft(tf).data - data)) < 1e-10

    def test_isfft_matches_double_sum(self):
        """Test isfft against the explicit double sum on a 16 x 8 grid."""
        cfg = FrameConfig(M=16, N=8, B=1e6, l_tau=4)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((8, 16)) + 1j * rng.standard_normal((8, 16))

        n = np.arange(8)[:, None, None, None]
        m = np.arange(16)[None, :, None, None]
        k = np.arange(8)[None, None, :, None]
        l = np.arange(16)[None, None, None, :]
        phase = np.exp(2j * np.pi * (n * k / 8 - m * l / 16))
        expected = np.sum(phase * x[None, None, :, :], axis=(2, 3)) / np.sqrt(128)

        actual = isfft(DdGrid(x, cfg)).data
        assert np.max(np.abs(actual - expected)) < 1e-9 * np.max(np.abs(expected))

    def test_round_trip_large(self):
        """Test sfft(isfft(x)) on a 256 x 256 grid."""
        cfg = make_frame_config(256, 256, 1e6)
        rng = np.random.default_rng(2)
        data = rng.standard_normal((256, 256)) + 1j * rng.standard_normal((256, 256))
        assert np.max(np.abs(sfft(isfft(DdGrid(data, cfg))).data - data)) < 1e-10

    def test_wigner_inverts_heisenberg(self, small_frame, small_cfg):
        """Test demodulating a modulated frame recovers the DD grid."""
        grid, buf = small_frame
        recovered = sfft(wigner_demodulate(buf, small_cfg)).data
        assert np.max(np.abs(recovered - grid.data)) < 1e-10

    def test_single_pilot_is_impulse_train(self, small_cfg):
        """Test the lone pilot becomes one sample per slot at the pilot delay."""
        buf = heisenberg_modulate(isfft(build_single_pilot_grid(small_cfg)))
        slots = np.abs(buf.samples.reshape(small_cfg.N, small_cfg.M))
        assert np.all(slots[:, small_cfg.l_p] > 0)
        slots[:, small_cfg.l_p] = 0
        assert np.max(slots) < 1e-12

    def test_wigner_short_buffer(self, small_cfg):
        """Test a buffer shorter than one frame."""
        with pytest.raises(SignalError):
            wigner_demodulate(IqBuffer(np.ones(10), small_cfg.B), small_cfg)


class TestSynthesize:
    """Test frame synthesis, repetition and PAPR."""

    def test_frame_length(self, small_frame, small_cfg):
        """Test one frame is M*N samples at the frame bandwidth."""
        _, buf = small_frame
        assert len(buf) == small_cfg.frame_samples
        assert buf.sample_rate == small_cfg.B

    def test_unknown_pattern(self, small_cfg):
        """Test unknown pattern names are rejected."""
        with pytest.raises(ConfigurationError):
            synthesize_frame(small_cfg, pattern='chirp')

    def test_repeat_frame(self, small_frame):
        """Test back-to-back repetition."""
        _, buf = small_frame
        stream = repeat_frame(buf, 3)
        assert len(stream) == 3 * len(buf)
        assert np.array_equal(stream.samples[len(buf):2 * len(buf)], buf.samples)
        with pytest.raises(SignalError):
            repeat_frame(buf, 0)

    def test_papr_constant(self):
        """Test a constant envelope has 0 dB PAPR."""
        assert papr(IqBuffer(np.ones(16, dtype=complex), 1.0)) == pytest.approx(0.0)

    def test_papr_undefined(self):
        """Test empty and all-zero buffers."""
        with pytest.raises(SignalError):
            papr(IqBuffer(np.zeros(0, dtype=complex), 1.0))
        with pytest.raises(SignalError):
            papr(IqBuffer(np.zeros(8, dtype=complex), 1.0))

    def test_papr_ordering(self):
        """Test single pilot > designed > full PN."""
        cfg = make_frame_config(256, 128, 100e6)
        values = {
            pattern: papr(synthesize_frame(cfg, pattern=pattern)[1])
            for pattern in ('single_pilot', 'designed', 'full_pn')
        }
        assert values['single_pilot'] == pytest.approx(10 * np.log10(256), abs=1e-6)
        assert values['single_pilot'] > values['designed'] > values['full_pn']

    def test_full_pn_papr_noise_like(self):
        """Test the full-PN frame peaks like a random frame, a few dB over ln(MN)."""
        cfg = make_frame_config(256, 128, 100e6)
        value = papr(synthesize_frame(cfg, pattern='full_pn')[1])
        # max of MN unit exponentials is about ln(MN) + 0.58, i.e. 10.4 dB here
        assert 8.0 < value < 13.0

    def test_papr_oversampled(self, small_frame):
        """Test oversampling never lowers the measured peak much."""
        _, buf = small_frame
        assert papr(buf, oversample=4) >= papr(buf) - 1.0


class TestIqBuffer:
    """Test IqBuffer."""

    def test_segment(self):
        """Test segment copies and bounds."""
        buf = IqBuffer(np.arange(10, dtype=complex), 1e3)
        seg = buf.segment(2, 3)
        assert seg.samples.tolist() == [2, 3, 4]
        with pytest.raises(SignalError):
            buf.segment(8, 5)

    def test_rejects_non_finite(self):
        """Test NaN samples are rejected."""
        with pytest.raises(SignalError):
            IqBuffer(np.array([1.0, np.nan]), 1e3)

    def test_empty_allowed(self):
        """Test an empty buffer is valid with zero mean power."""
        buf = IqBuffer(np.zeros(0, dtype=complex), 1e3)
        assert len(buf) == 0
        assert buf.mean_power == 0.0
