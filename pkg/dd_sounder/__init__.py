"""
dd-sounder - Delay-Doppler Channel Sounding Toolkit

Synthesizes OTFS sounding frames, emulates fractional delay/Doppler channels,
extracts the channel spreading function (CSF) at the receiver, estimates paths
with fractional resolution and derives channel statistics.

Example:
    >>> from dd_sounder import make_frame_config, synthesize_frame, emulate, receive
    >>> from dd_sounder import PathSet, Path, estimate_paths, frame_statistics
    >>>
    >>> cfg = make_frame_config(512, 64, 20e6)
    >>> grid, tx = synthesize_frame(cfg)
    >>> paths = PathSet([Path(1.0, 0.0, 0.0), Path(0.3, 150e-9, 400.0)])
    >>> rx = emulate(tx, paths, snr_db=30, seed=1)
    >>> result = receive(rx, tx, cfg)
    >>> stats = frame_statistics(estimate_paths(result.csf))
"""

import logging

from .__version__ import (
    __version__,
    __author__,
    __email__,
    __license__,
    __description__
)
from .core import FrameConfig, SoundingCapability, make_frame_config, capability_metrics
from .waveform import (
    DdGrid,
    TfGrid,
    IqBuffer,
    generate_pn,
    default_pn,
    build_sounding_grid,
    build_single_pilot_grid,
    build_full_pn_grid,
    isfft,
    sfft,
    heisenberg_modulate,
    wigner_demodulate,
    synthesize_frame,
    repeat_frame,
    papr,
)
from .channel import (
    Path,
    PathSet,
    apply_paths,
    add_awgn,
    apply_cfo,
    emulate,
    rayleigh_tap_paths,
    pure_doppler_paths,
)
from .receiver import (
    CorrelationSeries,
    Csf,
    ReceiveResult,
    sliding_correlation,
    find_frame_start,
    sync_gain,
    extract_csf,
    dynamic_range,
    receive,
    ofdm_reference_sounder,
)
from .estimation import (
    EstimatorConfig,
    PathEstimate,
    NmseResult,
    eq_channel_doppler,
    eq_channel_delay,
    model_csf,
    matched_filter_surface,
    estimate_paths,
    match_paths,
    nmse,
)
from .analysis import (
    PowerProfile,
    FrameStatistics,
    pdp,
    dpsd,
    count_mpcs,
    k_factor,
    rms_delay_spread,
    rms_doppler_spread,
    frame_statistics,
    statistics_table,
    cdf,
    time_variant_profiles,
)
from .io import (
    write_iq,
    read_iq,
    write_csf,
    read_csf,
    csf_to_csv,
    estimates_to_csv,
    read_estimates,
)
from .config import ExperimentSpec, SounderConfig, load_experiment_spec
from .experiments import ExperimentResult, run_experiment
from .exceptions import (
    SounderError,
    ConfigurationError,
    SignalError,
    ChannelError,
    FileFormatError,
    EstimationError,
    AcceptanceError,
)

# Configure package-level logging
logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    # Frame geometry
    'FrameConfig',
    'SoundingCapability',
    'make_frame_config',
    'capability_metrics',
    # Waveform
    'DdGrid',
    'TfGrid',
    'IqBuffer',
    'generate_pn',
    'default_pn',
    'build_sounding_grid',
    'build_single_pilot_grid',
    'build_full_pn_grid',
    'isfft',
    'sfft',
    'heisenberg_modulate',
    'wigner_demodulate',
    'synthesize_frame',
    'repeat_frame',
    'papr',
    # Channel
    'Path',
    'PathSet',
    'apply_paths',
    'add_awgn',
    'apply_cfo',
    'emulate',
    'rayleigh_tap_paths',
    'pure_doppler_paths',
    # Receiver
    'CorrelationSeries',
    'Csf',
    'ReceiveResult',
    'sliding_correlation',
    'find_frame_start',
    'sync_gain',
    'extract_csf',
    'dynamic_range',
    'receive',
    'ofdm_reference_sounder',
    # Estimation
    'EstimatorConfig',
    'PathEstimate',
    'NmseResult',
    'eq_channel_doppler',
    'eq_channel_delay',
    'model_csf',
    'matched_filter_surface',
    'estimate_paths',
    'match_paths',
    'nmse',
    # Analysis
    'PowerProfile',
    'FrameStatistics',
    'pdp',
    'dpsd',
    'count_mpcs',
    'k_factor',
    'rms_delay_spread',
    'rms_doppler_spread',
    'frame_statistics',
    'statistics_table',
    'cdf',
    'time_variant_profiles',
    # Files
    'write_iq',
    'read_iq',
    'write_csf',
    'read_csf',
    'csf_to_csv',
    'estimates_to_csv',
    'read_estimates',
    # Experiments
    'ExperimentSpec',
    'SounderConfig',
    'load_experiment_spec',
    'ExperimentResult',
    'run_experiment',
    # Exceptions
    'SounderError',
    'ConfigurationError',
    'SignalError',
    'ChannelError',
    'FileFormatError',
    'EstimationError',
    'AcceptanceError',
    # Version
    '__version__',
]
