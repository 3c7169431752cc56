"""
Channel characterization statistics.

Power delay profiles, Doppler power spectral densities, MPC counts, Rician
K-factor and RMS delay/Doppler spreads, computed either from a raw CSF or from
estimated paths (binned at refined resolutions). Per-frame statistics and
time-variant profiles are collected into pandas DataFrames for CSV export.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .estimation import PathEstimate
from .exceptions import EstimationError
from .receiver import Csf

logger = logging.getLogger(__name__)

# Refined binning for estimate-based profiles
DEFAULT_DELAY_BIN_S = 1e-9
DEFAULT_DOPPLER_BIN_HZ = 1.0
MPC_THRESHOLD_DB = 20.0

Source = Union[Csf, Sequence[PathEstimate]]


@dataclass
class PowerProfile:
    """
    Marginal power distribution over delay or Doppler.

    Attributes:
        axis: Strictly increasing bin positions (s for delay, Hz for doppler)
        power: Linear power per bin
        kind: 'delay' or 'doppler'
    """
    axis: np.ndarray
    power: np.ndarray
    kind: str

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=np.float64)
        self.power = np.asarray(self.power, dtype=np.float64)
        if self.kind not in ('delay', 'doppler'):
            raise EstimationError(f"Unknown profile kind: {self.kind}", component='analysis')
        if self.axis.shape != self.power.shape:
            raise EstimationError("Profile axis and power lengths differ", component='analysis')

    @property
    def total_power(self) -> float:
        return float(np.sum(self.power))

    def power_db(self) -> np.ndarray:
        with np.errstate(divide='ignore'):
            return 10.0 * np.log10(self.power)

    def power_at(self, value: float) -> float:
        """Power of the bin nearest `value`."""
        return float(self.power[int(np.argmin(np.abs(self.axis - value)))])

    def to_frame(self) -> pd.DataFrame:
        """Two-column table (axis, power_db)."""
        axis_name = 'delay_s' if self.kind == 'delay' else 'doppler_hz'
        return pd.DataFrame({axis_name: self.axis, 'power_db': self.power_db()})


def _is_csf(source) -> bool:
    return isinstance(source, Csf)


def _require_estimates(source) -> List[PathEstimate]:
    estimates = list(source)
    if not estimates:
        raise EstimationError("No path estimates given", component='analysis')
    return estimates


def _binned(values: np.ndarray, powers: np.ndarray, bin_width: float, kind: str) -> PowerProfile:
    bins = np.round(values / bin_width).astype(np.int64)
    unique, inverse = np.unique(bins, return_inverse=True)
    summed = np.zeros(unique.size, dtype=np.float64)
    np.add.at(summed, inverse, powers)
    return PowerProfile(unique * bin_width, summed, kind)


def pdp(
    source: Source,
    bin_width: float = DEFAULT_DELAY_BIN_S,
    doppler_range: Optional[Tuple[float, float]] = None,
) -> PowerProfile:
    """
    Power delay profile.

    From a CSF: power per delay column summed over Doppler. From estimates:
    impulses of power |h|^2 at each delay, binned at `bin_width`.

    Args:
        source: Csf or list of PathEstimate
        bin_width: Delay bin for estimate-based profiles (default: 1 ns)
        doppler_range: Optional (low, high) Hz restriction

    Returns:
        PowerProfile of kind 'delay'
    """
    if _is_csf(source):
        power = source.power
        if doppler_range is not None:
            keep = (source.doppler_axis >= doppler_range[0]) & (source.doppler_axis <= doppler_range[1])
            power = power[keep]
        return PowerProfile(source.delay_axis, power.sum(axis=0), 'delay')
    estimates = _require_estimates(source)
    if doppler_range is not None:
        estimates = [e for e in estimates if doppler_range[0] <= e.doppler <= doppler_range[1]]
    values = np.array([e.delay for e in estimates])
    powers = np.array([e.power for e in estimates])
    return _binned(values, powers, bin_width, 'delay')


def dpsd(
    source: Source,
    bin_width: float = DEFAULT_DOPPLER_BIN_HZ,
    delay_range: Optional[Tuple[float, float]] = None,
) -> PowerProfile:
    """
    Doppler power spectral density.

    From a CSF: power per Doppler row summed over delay (optionally only over
    delays inside `delay_range`). From estimates: impulses binned at `bin_width`.

    Args:
        source: Csf or list of PathEstimate
        bin_width: Doppler bin for estimate-based profiles (default: 1 Hz)
        delay_range: Optional (low, high) seconds restriction, e.g. one delay ridge

    Returns:
        PowerProfile of kind 'doppler'
    """
    if _is_csf(source):
        power = source.power
        if delay_range is not None:
            axis = source.delay_axis
            tol = 0.5 * source.cfg.delay_resolution
            keep = (axis >= delay_range[0] - tol) & (axis <= delay_range[1] + tol)
            power = power[:, keep]
        return PowerProfile(source.doppler_axis, power.sum(axis=1), 'doppler')
    estimates = _require_estimates(source)
    if delay_range is not None:
        estimates = [e for e in estimates if delay_range[0] <= e.delay <= delay_range[1]]
    values = np.array([e.doppler for e in estimates])
    powers = np.array([e.power for e in estimates])
    return _binned(values, powers, bin_width, 'doppler')


def count_mpcs(estimates: Sequence[PathEstimate], threshold_db: float = MPC_THRESHOLD_DB) -> int:
    """Number of paths strictly above max power - threshold_db."""
    estimates = _require_estimates(estimates)
    powers = np.array([e.power for e in estimates])
    return int(np.sum(powers > powers.max() * 10.0 ** (-threshold_db / 10.0)))


def k_factor(estimates: Sequence[PathEstimate]) -> float:
    """
    Rician K-factor in dB: dominant path power over the sum of all others.

    Returns +inf for a single path.
    """
    estimates = _require_estimates(estimates)
    powers = np.sort(np.array([e.power for e in estimates]))[::-1]
    others = float(np.sum(powers[1:]))
    if len(powers) == 1 or others == 0.0:
        logger.warning("K-factor of a single path is unbounded")
        return math.inf
    return float(10.0 * np.log10(powers[0] / others))


def _rms_spread(profile: PowerProfile, kind: str) -> float:
    if profile.kind != kind:
        raise EstimationError(
            f"Expected a {kind} profile, got {profile.kind}", component='analysis'
        )
    total = profile.total_power
    if total <= 0:
        raise EstimationError("Profile has zero total power", component='analysis')
    weights = profile.power / total
    mean = float(np.sum(weights * profile.axis))
    return float(np.sqrt(np.sum(weights * (profile.axis - mean) ** 2)))


def rms_delay_spread(profile: PowerProfile) -> float:
    """Square root of the second central moment of a PDP (seconds)."""
    return _rms_spread(profile, 'delay')


def rms_doppler_spread(profile: PowerProfile) -> float:
    """Square root of the second central moment of a DPSD (Hz)."""
    return _rms_spread(profile, 'doppler')


def doppler_support(profile: PowerProfile, threshold_db: float = 15.0) -> Tuple[float, float]:
    """
    Outermost Doppler bins within threshold_db of the profile peak.

    Returns:
        (lowest, highest) Doppler in Hz
    """
    if profile.total_power <= 0:
        raise EstimationError("Profile has zero total power", component='analysis')
    above = np.nonzero(profile.power >= profile.power.max() * 10.0 ** (-threshold_db / 10.0))[0]
    return float(profile.axis[above[0]]), float(profile.axis[above[-1]])


# ==================== Per-frame statistics ====================


@dataclass
class FrameStatistics:
    """One row of per-frame channel statistics."""
    frame_index: int
    n_mpcs: int
    kf_db: float
    rms_ds_s: float
    rms_dps_hz: float
    timestamp_s: Optional[float] = None

    def to_dict(self):
        return asdict(self)


def frame_statistics(
    estimates: Sequence[PathEstimate],
    frame_index: int = 0,
    timestamp_s: Optional[float] = None,
    threshold_db: float = MPC_THRESHOLD_DB,
) -> FrameStatistics:
    """
    Statistics of one frame from its path estimates.

    Spreads are computed over the MPCs that pass the count threshold.
    """
    estimates = _require_estimates(estimates)
    strongest = max(e.power for e in estimates)
    kept = [e for e in estimates if e.power > strongest * 10.0 ** (-threshold_db / 10.0)]
    return FrameStatistics(
        frame_index=frame_index,
        n_mpcs=len(kept),
        kf_db=k_factor(estimates),
        rms_ds_s=rms_delay_spread(pdp(kept)),
        rms_dps_hz=rms_doppler_spread(dpsd(kept)),
        timestamp_s=timestamp_s,
    )


def statistics_table(rows: Iterable[FrameStatistics]) -> pd.DataFrame:
    """Per-frame statistics sorted by frame index."""
    columns = ['frame_index', 'timestamp_s', 'n_mpcs', 'kf_db', 'rms_ds_s', 'rms_dps_hz']
    frame = pd.DataFrame([r.to_dict() for r in rows], columns=columns)
    return frame.sort_values('frame_index').reset_index(drop=True)


def cdf(values: Sequence[float]) -> pd.DataFrame:
    """Empirical CDF of finite values as (value, probability)."""
    data = np.sort(np.asarray([v for v in values if np.isfinite(v)], dtype=np.float64))
    if data.size == 0:
        return pd.DataFrame({'value': [], 'probability': []})
    return pd.DataFrame({'value': data, 'probability': np.arange(1, data.size + 1) / data.size})


def time_variant_profiles(sources: Sequence[Source], kind: str = 'delay', **kwargs) -> pd.DataFrame:
    """
    Stack one profile per frame into (frame_index, axis, power_db).

    Args:
        sources: One Csf (raw view) or estimate list (refined view) per frame
        kind: 'delay' for PDPs, 'doppler' for DPSDs
        **kwargs: Passed to pdp / dpsd

    Returns:
        Long-form DataFrame
    """
    builder = pdp if kind == 'delay' else dpsd
    frames = []
    for index, source in enumerate(sources):
        profile = builder(source, **kwargs)
        frames.append(pd.DataFrame({
            'frame_index': index,
            'axis': profile.axis,
            'power_db': profile.power_db(),
        }))
    if not frames:
        return pd.DataFrame(columns=['frame_index', 'axis', 'power_db'])
    return pd.concat(frames, ignore_index=True)
