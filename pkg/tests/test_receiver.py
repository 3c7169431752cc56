"""Tests for synchronization, CSF extraction and the OFDM reference."""

import math

import numpy as np
import pytest

from dd_sounder.channel import Path, PathSet, add_awgn, emulate
from dd_sounder.estimation import model_csf
from dd_sounder.exceptions import ChannelError, ConfigurationError, SignalError
from dd_sounder.receiver import (
    CorrelationSeries,
    Csf,
    dynamic_range,
    extract_csf,
    find_frame_start,
    ofdm_reference_sounder,
    receive,
    sliding_correlation,
    sync_gain,
)
from dd_sounder.waveform import IqBuffer, repeat_frame, synthesize_frame


class TestSynchronization:
    """Test sliding correlation and sync gain."""

    def test_finds_offset(self, small_frame):
        """Test the correlation peak marks the frame start."""
        _, tx = small_frame
        rx = IqBuffer(np.concatenate([np.zeros(37, dtype=complex), tx.samples]), tx.sample_rate)
        corr = sliding_correlation(rx, tx.segment(0, 256))
        assert find_frame_start(corr) == 37

    def test_direct_matches_fft(self, small_frame):
        """Test both correlation methods agree."""
        _, tx = small_frame
        stream = repeat_frame(tx, 2)
        a = sliding_correlation(stream, tx.segment(0, 128), window=512, method='fft')
        b = sliding_correlation(stream, tx.segment(0, 128), window=512, method='direct')
        assert np.allclose(a.values, b.values, rtol=1e-8, atol=1e-8)

    def test_window_too_large(self, small_frame):
        """Test a window that does not fit the buffer."""
        _, tx = small_frame
        with pytest.raises(SignalError) as exc_info:
            sliding_correlation(tx, tx.segment(0, 256), window=len(tx))
        assert exc_info.value.details['sync_length'] == 256

    def test_ties_go_to_first_index(self):
        """Test argmax ties resolve to the smallest lag."""
        assert find_frame_start(CorrelationSeries(np.array([1.0, 3.0, 3.0]), 1)) == 1

    def test_sync_gain_rises_with_snr(self, small_frame, small_cfg):
        """Test sync gain grows with SNR."""
        _, tx = small_frame
        clean = repeat_frame(tx, 2)
        sync = tx.segment(0, small_cfg.frame_samples // 4)
        low = sync_gain(sliding_correlation(add_awgn(clean, -10.0, 1), sync, window=small_cfg.frame_samples))
        high = sync_gain(sliding_correlation(add_awgn(clean, 10.0, 1), sync, window=small_cfg.frame_samples))
        assert high > low

    def test_sync_gain_approximation(self, small_frame, small_cfg):
        """Test gain at 0 dB SNR is near L / (1 + 1/snr)."""
        _, tx = small_frame
        L = small_cfg.frame_samples // 4
        gains = []
        for seed in range(5):
            noisy = add_awgn(repeat_frame(tx, 2), 0.0, seed)
            gains.append(sync_gain(sliding_correlation(noisy, tx.segment(0, L), window=small_cfg.frame_samples)))
        assert np.mean(gains) == pytest.approx(10 * np.log10(L / 2), abs=2.0)

    def test_sync_gain_guard(self):
        """Test a guard covering the whole series."""
        with pytest.raises(SignalError):
            sync_gain(CorrelationSeries(np.ones(5), 2), guard=3)


class TestCsfExtraction:
    """Test CSF extraction and dynamic range."""

    def test_back_to_back_channel(self, small_frame, small_cfg):
        """Test an ideal channel yields a lone unit pilot."""
        _, tx = small_frame
        csf = extract_csf(tx, small_cfg)

        assert csf.data.shape == (small_cfg.N, small_cfg.l_tau + 1)
        assert csf.peak() == (0, 0)
        assert csf.cell(0, 0) == pytest.approx(1.0)
        assert csf.energy == pytest.approx(1.0)
        assert math.isinf(dynamic_range(csf))

    def test_on_grid_path(self, sound_cfg):
        """Test an on-grid path appears at its taps with the path phase."""
        _, tx = synthesize_frame(sound_cfg)
        tau = 5 * sound_cfg.delay_resolution
        nu = 2 * sound_cfg.doppler_resolution
        paths = PathSet([Path(0.5, tau, nu)])
        rx = emulate(repeat_frame(tx, 2), paths)
        csf = extract_csf(rx.segment(sound_cfg.frame_samples, sound_cfg.frame_samples), sound_cfg)

        assert csf.peak() == (2, 5)
        assert csf.cell(2, 5) == pytest.approx(0.5 * np.exp(-2j * np.pi * nu * tau), abs=1e-8)
        assert csf.energy == pytest.approx(0.25, rel=1e-6)

    def test_fractional_path_matches_model(self, sound_cfg):
        """Test a fractional path through the time-domain channel reads as the kernel model."""
        _, tx = synthesize_frame(sound_cfg, pattern='single_pilot')
        paths = PathSet([Path(0.8, 5.4 * sound_cfg.delay_resolution, 2.3 * sound_cfg.doppler_resolution)])
        rx = emulate(repeat_frame(tx, 3), paths)
        measured = extract_csf(rx.segment(sound_cfg.frame_samples, sound_cfg.frame_samples), sound_cfg).data
        model = model_csf(paths, sound_cfg).data

        # frames start at different absolute times, so compare up to one common phase
        row, col = np.unravel_index(int(np.argmax(np.abs(model))), model.shape)
        assert (row - sound_cfg.N // 2, col) == (2, 5)
        assert np.allclose(measured / measured[row, col], model / model[row, col], atol=1e-3)
        assert abs(measured[row, col]) == pytest.approx(abs(model[row, col]), rel=1e-3)

    def test_dynamic_range_tracks_snr(self, small_frame, small_cfg):
        """Test dynamic range grows about 10 dB per 10 dB of SNR."""
        _, tx = small_frame
        stream = repeat_frame(tx, 2)
        values = []
        for snr in (20.0, 30.0):
            rx = add_awgn(stream, snr, 3)
            values.append(dynamic_range(extract_csf(rx.segment(small_cfg.frame_samples, small_cfg.frame_samples), small_cfg)))
        assert values[1] - values[0] == pytest.approx(10.0, abs=2.0)

    def test_csf_shape_checked(self, small_cfg):
        """Test Csf rejects a wrong shape."""
        with pytest.raises(SignalError):
            Csf(np.zeros((small_cfg.N, small_cfg.l_tau)), small_cfg)

    def test_to_frame(self, small_frame, small_cfg):
        """Test the long-form CSF table."""
        _, tx = small_frame
        frame = extract_csf(tx, small_cfg).to_frame()
        assert list(frame.columns) == ['doppler_hz', 'delay_s', 'power_db', 'phase_rad']
        assert len(frame) == small_cfg.N * (small_cfg.l_tau + 1)
        assert frame['power_db'].max() == pytest.approx(0.0, abs=1e-9)


class TestReceive:
    """Test the combined receive step."""

    def test_receive_with_offset(self, sound_cfg):
        """Test sync on a stream that starts mid-frame."""
        _, tx = synthesize_frame(sound_cfg)
        MN = sound_cfg.frame_samples
        stream = repeat_frame(tx, 3).segment(1000, 2 * MN)
        result = receive(stream, tx, sound_cfg, window=MN)

        assert result.frame_start == MN - 1000
        assert result.csf.peak() == (0, 0)
        assert result.sync_gain_db > 20.0

    def test_receive_known_start(self, small_frame, small_cfg):
        """Test a known frame start skips correlation."""
        _, tx = small_frame
        result = receive(tx, tx, small_cfg, frame_start=0)
        assert result.correlation is None
        assert result.sync_gain_db is None


class TestOfdmReference:
    """Test the OFDM reference sounder."""

    def test_cfo_degrades_dynamic_range(self):
        """Test CFO lowers the OFDM dynamic range."""
        ideal = PathSet([Path(1.0, 0.0, 0.0)])
        clean = ofdm_reference_sounder(ideal, 0.0, 30.0, 1024, seed=1, sample_rate=10e6)
        offset = ofdm_reference_sounder(ideal, 0.25 * 10e6 / 1024, 30.0, 1024, seed=1, sample_rate=10e6)
        assert clean.dynamic_range_db > offset.dynamic_range_db

    def test_unpacks(self):
        """Test the result unpacks as (pdp, dynamic range)."""
        profile, dr = ofdm_reference_sounder(PathSet([Path(1.0, 0.0)]), 0.0, 30.0, 256, seed=0)
        assert profile.kind == 'delay'
        assert len(profile.axis) == 256
        assert dr > 20.0

    def test_cp_too_short(self):
        """Test the CP must cover the channel delay."""
        paths = PathSet([Path(1.0, 0.0), Path(0.5, 1e-6)])
        with pytest.raises(ChannelError):
            ofdm_reference_sounder(paths, 0.0, 30.0, 64, seed=0, sample_rate=100e6)

    def test_subcarriers_power_of_two(self):
        """Test subcarrier count validation."""
        with pytest.raises(ConfigurationError):
            ofdm_reference_sounder(PathSet([Path(1.0, 0.0)]), 0.0, 30.0, 100, seed=0)
