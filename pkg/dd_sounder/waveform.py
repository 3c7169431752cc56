"""
Delay-Doppler sounding waveform.

This module builds the DD-domain sounding grid (a unit pilot at the grid
center, a zero guard band of half-width l_tau around the pilot's delay column,
and +/-A_pn PN symbols everywhere else), moves it to the time-frequency domain
(ISFFT) and to time samples (Heisenberg transform with rectangular pulses), and
back again (Wigner transform, SFFT). It also measures PAPR.

Transform normalization: the 1/sqrt(NM) factor lives entirely in isfft/sfft.
Heisenberg/Wigner are per-slot M-point inverse/forward transforms scaled so
that they compose to the identity.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy import signal as sp_signal

from .core import FrameConfig
from .exceptions import ConfigurationError, SignalError

logger = logging.getLogger(__name__)

# x^20 + x^3 + 1, primitive, period 2^20 - 1
DEFAULT_PN_POLYNOMIAL = (1 << 20) | (1 << 3) | 1
DEFAULT_PN_SEED = 0x1


# ==================== Value types ====================


@dataclass
class DdGrid:
    """
    Delay-Doppler grid: row k = Doppler tap, column l = delay tap.
    """
    data: np.ndarray
    cfg: FrameConfig

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        expected = (self.cfg.N, self.cfg.M)
        if self.data.shape != expected:
            raise SignalError(
                f"DD grid shape {self.data.shape} does not match frame {expected}",
                component='waveform',
            )

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2))


@dataclass
class TfGrid:
    """
    Time-frequency grid: row n = time slot, column m = subcarrier.
    """
    data: np.ndarray
    cfg: FrameConfig

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        expected = (self.cfg.N, self.cfg.M)
        if self.data.shape != expected:
            raise SignalError(
                f"TF grid shape {self.data.shape} does not match frame {expected}",
                component='waveform',
            )

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2))


@dataclass
class IqBuffer:
    """
    Complex baseband samples at a known sample rate.

    Example:
        >>> buf = IqBuffer(np.ones(8, dtype=complex), sample_rate=1e6)
        >>> len(buf)
        8
    """
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.complex128).reshape(-1)
        if not (self.sample_rate > 0 and np.isfinite(self.sample_rate)):
            raise SignalError(
                f"sample_rate must be positive, got {self.sample_rate}", component='waveform'
            )
        if not np.all(np.isfinite(self.samples)):
            raise SignalError("IQ buffer contains non-finite samples", component='waveform')

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    @property
    def mean_power(self) -> float:
        if len(self) == 0:
            return 0.0
        return self.energy / len(self)

    def segment(self, start: int, length: int) -> 'IqBuffer':
        """
        Return a copy of samples [start, start + length).

        Raises:
            SignalError: If the segment runs past the buffer end
        """
        if start < 0 or start + length > len(self):
            raise SignalError(
                f"Segment [{start}, {start + length}) outside buffer of {len(self)} samples",
                component='waveform',
                details={'start': start, 'length': length, 'available': len(self)},
            )
        return IqBuffer(self.samples[start:start + length].copy(), self.sample_rate)


# ==================== PN sequences ====================


def generate_pn(length: int, polynomial: int, seed: int) -> np.ndarray:
    """
    Generate a maximal-length shift-register sequence mapped to +/-1.

    The polynomial is a bit pattern: bit i set means x^i is present, and the
    highest set bit gives the degree n. The register follows
    a[t+n] = XOR of a[t+i] over the lower-order terms i, seeded with
    a[i] = bit i of seed. Output bits map 0 -> +1 and 1 -> -1. Sequences longer
    than one period repeat periodically.

    Args:
        length: Number of chips to produce
        polynomial: Feedback polynomial bit pattern (e.g. 0b1011 for x^3 + x + 1)
        seed: Nonzero initial register state

    Returns:
        float64 array of +/-1 of the requested length

    Raises:
        ConfigurationError: On zero seed or degenerate polynomial

    Example:
        >>> generate_pn(7, 0b1011, 0b001).tolist()
        [-1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0]
    """
    if length < 0:
        raise ConfigurationError(f"PN length must be >= 0, got {length}", component='waveform')
    degree = int(polynomial).bit_length() - 1
    if degree < 2 or not (polynomial & 1):
        raise ConfigurationError(
            f"Polynomial {polynomial:#x} is not a valid feedback polynomial",
            component='waveform',
        )
    seed &= (1 << degree) - 1
    if seed == 0:
        raise ConfigurationError(
            "PN seed must be nonzero (all-zero register state is degenerate)",
            component='waveform',
        )
    period = (1 << degree) - 1
    bits = _lfsr_period(int(polynomial), int(seed))
    if length <= period:
        chips = bits[:length]
    else:
        chips = np.resize(bits, length)
    return 1.0 - 2.0 * chips.astype(np.float64)


@lru_cache(maxsize=8)
def _lfsr_period(polynomial: int, seed: int) -> np.ndarray:
    """One full period of register output bits (cached, read-only)."""
    degree = polynomial.bit_length() - 1
    period = (1 << degree) - 1
    taps = [i for i in range(degree) if (polynomial >> i) & 1]
    # a[t+n] only reads a[t+i] with i <= max(taps), so blocks of this size are independent
    block = degree - max(taps)
    out = np.zeros(period + degree + block, dtype=np.uint8)
    out[:degree] = [(seed >> i) & 1 for i in range(degree)]
    for start in range(0, period, block):
        acc = np.zeros(block, dtype=np.uint8)
        for i in taps:
            acc ^= out[start + i:start + i + block]
        out[start + degree:start + degree + block] = acc
    bits = out[:period].copy()
    bits.setflags(write=False)
    logger.debug(f"Generated LFSR period of {period} chips for polynomial {polynomial:#x}")
    return bits


def default_pn(length: int) -> np.ndarray:
    """PN chips from the default degree-20 generator, restarted per frame."""
    return generate_pn(length, DEFAULT_PN_POLYNOMIAL, DEFAULT_PN_SEED)


# ==================== Sounding patterns ====================


def build_sounding_grid(cfg: FrameConfig, pn: np.ndarray) -> DdGrid:
    """
    Build the DD-domain sounding grid.

    Layout: data[k_p, l_p] = 1; zero guard cells in every row for delay columns
    [l_p - l_tau, l_p + l_tau] other than the pilot; +/-A_pn PN chips filled
    row-major over the remaining cells.

    Args:
        cfg: Frame configuration
        pn: +/-1 chips, at least cfg.pn_cell_count long

    Returns:
        DdGrid satisfying the sounding layout

    Raises:
        SignalError: If the PN sequence is too short

    Example:
        >>> cfg = FrameConfig(M=8, N=4, B=8.0, l_tau=2)
        >>> grid = build_sounding_grid(cfg, default_pn(cfg.pn_cell_count))
        >>> grid.data[2, 4]
        (1+0j)
    """
    pn = np.asarray(pn, dtype=np.float64).reshape(-1)
    needed = cfg.pn_cell_count
    if pn.size < needed:
        raise SignalError(
            f"PN sequence too short: need {needed} chips, got {pn.size}",
            component='waveform',
            details={'needed': needed, 'provided': int(pn.size)},
        )
    mask = np.ones((cfg.N, cfg.M), dtype=bool)
    mask[:, cfg.l_p - cfg.l_tau:cfg.l_p + cfg.l_tau + 1] = False

    data = np.zeros((cfg.N, cfg.M), dtype=np.complex128)
    data[mask] = cfg.A_pn * pn[:needed]
    data[cfg.k_p, cfg.l_p] = 1.0
    return DdGrid(data, cfg)


def build_single_pilot_grid(cfg: FrameConfig) -> DdGrid:
    """Grid carrying only the unit pilot (comparison pattern)."""
    data = np.zeros((cfg.N, cfg.M), dtype=np.complex128)
    data[cfg.k_p, cfg.l_p] = 1.0
    return DdGrid(data, cfg)


def build_full_pn_grid(cfg: FrameConfig, pn: Optional[np.ndarray] = None) -> DdGrid:
    """
    Grid with PN chips in every cell (comparison pattern, no pilot, no guard).

    Chips fill column-major: each delay column carries a contiguous run of N
    chips, so no column is a decimation of the sequence.
    """
    if pn is None:
        pn = default_pn(cfg.frame_samples)
    pn = np.asarray(pn, dtype=np.float64).reshape(-1)
    if pn.size < cfg.frame_samples:
        raise SignalError(
            f"PN sequence too short: need {cfg.frame_samples} chips, got {pn.size}",
            component='waveform',
        )
    data = cfg.A_pn * pn[:cfg.frame_samples].reshape(cfg.M, cfg.N).T
    return DdGrid(data, cfg)


# ==================== Transforms ====================


def isfft(grid: DdGrid) -> TfGrid:
    """
    Inverse symplectic finite Fourier transform.

    X[n,m] = 1/sqrt(NM) sum_k sum_l x[k,l] exp(j2pi(nk/N - ml/M)): an N-point
    inverse transform along Doppler and an M-point forward transform along
    delay, both orthonormal.
    """
    tf = sp_fft.ifft(grid.data, axis=0, norm='ortho')
    tf = sp_fft.fft(tf, axis=1, norm='ortho')
    return TfGrid(tf, grid.cfg)


def sfft(grid: TfGrid) -> DdGrid:
    """Symplectic finite Fourier transform, the exact inverse of isfft."""
    dd = sp_fft.fft(grid.data, axis=0, norm='ortho')
    dd = sp_fft.ifft(dd, axis=1, norm='ortho')
    return DdGrid(dd, grid.cfg)


def heisenberg_modulate(grid: TfGrid) -> IqBuffer:
    """
    Heisenberg transform with a rectangular pulse of one slot.

    Slot n holds s[i] = sum_m X[n,m] exp(j2pi m i / M), i.e. the unscaled
    inverse transform of row n, so sample nM + i sits at t = (nM + i)/B.

    Args:
        grid: Time-frequency grid

    Returns:
        IqBuffer of M*N samples at the frame bandwidth
    """
    slots = sp_fft.ifft(grid.data, axis=1, norm='forward')
    return IqBuffer(slots.reshape(-1), grid.cfg.sample_rate)


def wigner_demodulate(buf: IqBuffer, cfg: FrameConfig) -> TfGrid:
    """
    Wigner transform matched to heisenberg_modulate.

    Each length-M slot of the first M*N samples is forward transformed with a
    1/M scale.

    Args:
        buf: Received samples starting at the frame boundary
        cfg: Frame configuration

    Returns:
        Time-frequency grid

    Raises:
        SignalError: If the buffer holds fewer than M*N samples
    """
    if len(buf) < cfg.frame_samples:
        raise SignalError(
            f"Buffer of {len(buf)} samples is shorter than one frame ({cfg.frame_samples})",
            component='waveform',
            details={'expected': cfg.frame_samples, 'actual': len(buf)},
        )
    slots = buf.samples[:cfg.frame_samples].reshape(cfg.N, cfg.M)
    return TfGrid(sp_fft.fft(slots, axis=1, norm='forward'), cfg)


def synthesize_frame(
    cfg: FrameConfig,
    pn: Optional[np.ndarray] = None,
    pattern: str = 'designed',
) -> Tuple[DdGrid, IqBuffer]:
    """
    Build a sounding grid and modulate it to time samples.

    Args:
        cfg: Frame configuration
        pn: PN chips (default: degree-20 generator restarted for this frame)
        pattern: 'designed', 'single_pilot' or 'full_pn'

    Returns:
        Tuple of (DD grid, time-domain frame)
    """
    if pattern == 'designed':
        grid = build_sounding_grid(cfg, default_pn(cfg.pn_cell_count) if pn is None else pn)
    elif pattern == 'single_pilot':
        grid = build_single_pilot_grid(cfg)
    elif pattern == 'full_pn':
        grid = build_full_pn_grid(cfg, pn)
    else:
        raise ConfigurationError(
            f"Unknown sounding pattern: {pattern}. "
            f"Available: designed, single_pilot, full_pn",
            component='waveform',
        )
    return grid, heisenberg_modulate(isfft(grid))


def repeat_frame(buf: IqBuffer, count: int) -> IqBuffer:
    """Continuous transmission of `count` back-to-back copies of a frame."""
    if count < 1:
        raise SignalError(f"count must be >= 1, got {count}", component='waveform')
    return IqBuffer(np.tile(buf.samples, count), buf.sample_rate)


# ==================== PAPR ====================


def papr(buf: IqBuffer, oversample: int = 1) -> float:
    """
    Peak-to-average power ratio in dB.

    Args:
        buf: Time-domain samples
        oversample: FFT-resampling factor applied before measuring (1 = critically sampled)

    Returns:
        10*log10(max |s|^2 / mean |s|^2)

    Raises:
        SignalError: If the buffer is empty or all-zero

    Example:
        >>> papr(IqBuffer(np.ones(16, dtype=complex), 1.0))
        0.0
    """
    samples = buf.samples
    if samples.size == 0:
        raise SignalError("PAPR of an empty buffer is undefined", component='waveform')
    if oversample > 1:
        samples = sp_signal.resample(samples, samples.size * int(oversample))
    power = np.abs(samples) ** 2
    mean_power = float(np.mean(power))
    if mean_power == 0.0:
        raise SignalError("PAPR of an all-zero buffer is undefined", component='waveform')
    return float(10.0 * np.log10(np.max(power) / mean_power))
