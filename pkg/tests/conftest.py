"""Pytest configuration and fixtures."""

import json

import numpy as np
import pytest

from dd_sounder.channel import Path, PathSet
from dd_sounder.core import FrameConfig, make_frame_config
from dd_sounder.estimation import PathEstimate
from dd_sounder.waveform import synthesize_frame


def make_estimate(delay: float, doppler: float, power_db: float, phase: float = 0.0) -> PathEstimate:
    """PathEstimate with the given delay, Doppler and power (integer taps left at zero)."""
    gain = 10.0 ** (power_db / 20.0)
    return PathEstimate(
        gain=gain,
        phase=phase,
        delay=delay,
        doppler=doppler,
        integer_taps=(0, 0),
        fractional_taps=(0.0, 0.0),
        complex_gain=gain * np.exp(1j * phase),
    )


# ==================== Frame Fixtures ====================


@pytest.fixture
def small_cfg() -> FrameConfig:
    """Small frame for fast pipeline tests: (64, 16) at 1 MHz, l_tau = 16."""
    return make_frame_config(64, 16, 1e6, l_tau=16)


@pytest.fixture
def sound_cfg() -> FrameConfig:
    """Mid-size frame used by the sounding and CLI tests: (256, 32) at 10 MHz."""
    return make_frame_config(256, 32, 10e6, l_tau=64)


@pytest.fixture
def small_frame(small_cfg):
    """Designed sounding frame (grid, samples) for small_cfg."""
    return synthesize_frame(small_cfg)


# ==================== Channel Fixtures ====================


@pytest.fixture
def on_grid_paths(sound_cfg) -> PathSet:
    """Two on-grid paths: LOS at the origin and a -6 dB echo at (2, 5) taps."""
    return PathSet([
        Path(1.0, 0.0, 0.0),
        Path(10.0 ** (-6.0 / 20.0), 5 * sound_cfg.delay_resolution, 2 * sound_cfg.doppler_resolution),
    ])


@pytest.fixture
def paths_json(tmp_path, on_grid_paths):
    """on_grid_paths written as a PathSet JSON file."""
    path = tmp_path / 'paths.json'
    on_grid_paths.to_json(path)
    return path


@pytest.fixture
def pure_doppler_estimates():
    """Estimates matching the three-path pure-Doppler verification channel."""
    return [
        make_estimate(0.0, 0.0, 0.0),
        make_estimate(1.25e-6, -610.35, -5.0),
        make_estimate(2.49e-6, 1251.22, -10.0),
    ]


@pytest.fixture
def spec_dict():
    """Minimal experiment spec as a dictionary."""
    return {
        'schema_version': 1,
        'kind': 'papr_sweep',
        'frame': {'M': 256, 'N': 128, 'bandwidth_hz': 100e6},
        'params': {'grid_sizes': [64, 128, 256]},
    }


@pytest.fixture
def spec_file(tmp_path, spec_dict):
    """spec_dict written as a JSON spec file with its own output directory."""
    data = dict(spec_dict, output_dir=str(tmp_path / 'out'))
    path = tmp_path / 'spec.json'
    path.write_text(json.dumps(data))
    return path
