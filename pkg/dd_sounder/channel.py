"""
Channel emulation.

Ground-truth channels for the sounder: sparse delay-Doppler paths with
arbitrary fractional delay and Doppler, Rayleigh taps with Jakes spectra
(sum-of-sinusoids), pure-Doppler multipath, AWGN and carrier frequency offset.

A path (h, tau, nu) maps x(t) to h * x(t - tau) * exp(j2pi nu (t - tau)).
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft

from .core import FrameConfig
from .exceptions import ChannelError, SignalError
from .waveform import IqBuffer

logger = logging.getLogger(__name__)

# Sample block for the Doppler envelope product
_ENVELOPE_BLOCK = 4096
# Delays within this many samples of an integer count as integer when sizing the output
_DELAY_SNAP = 1e-9


@dataclass(frozen=True)
class Path:
    """
    One propagation path.

    Attributes:
        gain: Complex linear gain
        delay: Delay in seconds (>= 0)
        doppler: Doppler shift in Hz (signed)
    """
    gain: complex
    delay: float
    doppler: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.delay) or self.delay < 0:
            raise ChannelError(
                f"Path delay must be finite and >= 0, got {self.delay}",
                component='channel',
                details={'delay': self.delay},
            )
        if not np.isfinite(self.gain) or abs(self.gain) == 0:
            raise ChannelError(
                f"Path gain must be finite and nonzero, got {self.gain}",
                component='channel',
                details={'gain': str(self.gain)},
            )
        if not np.isfinite(self.doppler):
            raise ChannelError(f"Path Doppler must be finite, got {self.doppler}", component='channel')

    @property
    def power(self) -> float:
        return float(abs(self.gain) ** 2)

    @property
    def gain_db(self) -> float:
        return float(20.0 * np.log10(abs(self.gain)))

    def to_dict(self) -> Dict[str, float]:
        return {
            'gain_db': self.gain_db,
            'phase_rad': float(np.angle(self.gain)),
            'delay_s': float(self.delay),
            'doppler_hz': float(self.doppler),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Path':
        try:
            gain = 10.0 ** (float(data['gain_db']) / 20.0) * np.exp(1j * float(data.get('phase_rad', 0.0)))
            return cls(gain=complex(gain), delay=float(data['delay_s']),
                       doppler=float(data.get('doppler_hz', 0.0)))
        except KeyError as e:
            raise ChannelError(f"Path record missing field: {e}", component='channel')


@dataclass
class PathSet:
    """
    Ordered collection of propagation paths.

    Example:
        >>> ps = PathSet([Path(1.0, 0.0, 0.0), Path(0.5, 1e-6, 100.0)])
        >>> ps.P
        2
    """
    paths: List[Path] = field(default_factory=list)

    def __post_init__(self):
        self.paths = list(self.paths)
        if not self.paths:
            raise ChannelError("PathSet needs at least one path", component='channel')

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def __getitem__(self, index: int) -> Path:
        return self.paths[index]

    @property
    def P(self) -> int:
        return len(self.paths)

    @property
    def max_delay(self) -> float:
        return max(p.delay for p in self.paths)

    @property
    def total_power(self) -> float:
        return float(sum(p.power for p in self.paths))

    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=np.complex128)

    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths], dtype=np.float64)

    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler for p in self.paths], dtype=np.float64)

    def taps(self, cfg: FrameConfig) -> Tuple[np.ndarray, np.ndarray]:
        """
        Path positions in grid units.

        Returns:
            Tuple of (Doppler taps, delay taps) as real arrays
        """
        return self.dopplers() / cfg.doppler_resolution, self.delays() * cfg.B

    def check_fits(self, cfg: FrameConfig) -> List[str]:
        """
        Check the path set against a frame's measurable ranges.

        Returns:
            List of error messages (empty if every path is measurable)
        """
        errors = []
        max_delay = cfg.l_tau * cfg.delay_resolution
        max_doppler = cfg.doppler_resolution * cfg.N / 2
        for i, p in enumerate(self.paths):
            if p.delay > max_delay * (1 + 1e-12):
                errors.append(f"path {i}: delay {p.delay:.4e} s exceeds {max_delay:.4e} s")
            if abs(p.doppler) > max_doppler:
                errors.append(f"path {i}: Doppler {p.doppler:.2f} Hz exceeds +/-{max_doppler:.2f} Hz")
        return errors

    def shifted(self, delay: float = 0.0, doppler: float = 0.0) -> 'PathSet':
        """Copy with every path moved by a constant delay/Doppler."""
        return PathSet([Path(p.gain, p.delay + delay, p.doppler + doppler) for p in self.paths])

    def to_list(self) -> List[Dict[str, float]]:
        return [p.to_dict() for p in self.paths]

    def to_json(self, path: Optional[Union[str, FilePath]] = None) -> str:
        """
        Serialize to a JSON array of {gain_db, phase_rad, delay_s, doppler_hz}.

        Args:
            path: Optional file to write

        Returns:
            JSON text
        """
        text = json.dumps(self.to_list(), indent=2)
        if path is not None:
            FilePath(path).write_text(text)
        return text

    @classmethod
    def from_list(cls, records: Iterable[Dict[str, Any]]) -> 'PathSet':
        return cls([Path.from_dict(r) for r in records])

    @classmethod
    def from_json(cls, text_or_path: Union[str, FilePath]) -> 'PathSet':
        """Load a path set from JSON text or from a .json file."""
        candidate = FilePath(str(text_or_path))
        if not str(text_or_path).lstrip().startswith('[') and candidate.exists():
            text = candidate.read_text()
        else:
            text = str(text_or_path)
        try:
            records = json.loads(text)
        except json.JSONDecodeError as e:
            raise ChannelError(f"Invalid PathSet JSON: {e}", component='channel')
        if not isinstance(records, list):
            raise ChannelError("PathSet JSON must be an array of path records", component='channel')
        return cls.from_list(records)


# ==================== Propagation ====================


def output_extension(paths: PathSet, sample_rate: float) -> int:
    """Samples appended to a buffer to hold the longest delay."""
    return int(math.ceil(paths.max_delay * sample_rate - _DELAY_SNAP))


def apply_paths(buf: IqBuffer, paths: PathSet) -> IqBuffer:
    """
    Pass a buffer through a sparse multipath channel.

    The buffer is zero-padded by ceil(max_delay * B) samples. Each delay is
    applied as a linear phase over signed frequency bins on a support of
    len(buf) + ceil(delay * B) samples, i.e. periodic sinc interpolation
    centred on the delay (integer shifts are exact). Each delayed copy is
    rotated by exp(j2pi nu (t - tau)) and scaled by its gain. Paths sharing a
    delay share one interpolation. Every copy depends only on its own delay,
    so the channel is linear in the path set.

    Args:
        buf: Input samples at rate B
        paths: Channel paths

    Returns:
        IqBuffer of len(buf) + ceil(max_delay * B) samples

    Raises:
        SignalError: If the input buffer is empty
    """
    fs = buf.sample_rate
    n_in = len(buf)
    if n_in == 0:
        raise SignalError("Cannot propagate an empty buffer", component='channel')
    length = n_in + output_extension(paths, fs)

    spectra: Dict[int, np.ndarray] = {}
    t = np.arange(length, dtype=np.float64) / fs

    groups: Dict[float, List[Path]] = {}
    for p in paths:
        groups.setdefault(p.delay, []).append(p)

    out = np.zeros(length, dtype=np.complex128)
    for delay, group in groups.items():
        shift = delay * fs
        if abs(shift - round(shift)) < _DELAY_SNAP:
            s = int(round(shift))
            support = s + n_in
            delayed = np.zeros(support, dtype=np.complex128)
            delayed[s:] = buf.samples
        else:
            support = n_in + int(math.ceil(shift - _DELAY_SNAP))
            if support not in spectra:
                spectra[support] = sp_fft.fft(buf.samples, n=support)
            bins = sp_fft.fftfreq(support, d=1.0 / support)
            delayed = sp_fft.ifft(spectra[support] * np.exp(-2j * np.pi * bins * shift / support))
        out[:support] += delayed * _doppler_envelope(group, delay, t[:support])

    logger.debug(f"Applied {paths.P} paths in {len(groups)} delay groups, {n_in} -> {length} samples")
    return IqBuffer(out, fs)


def _doppler_envelope(group: Sequence[Path], delay: float, t: np.ndarray) -> np.ndarray:
    """sum_p h_p exp(j2pi nu_p (t - tau)) for paths sharing one delay."""
    gains = np.array([p.gain for p in group], dtype=np.complex128)
    nus = np.array([p.doppler for p in group], dtype=np.float64)
    coeff = gains * np.exp(-2j * np.pi * nus * delay)
    if np.all(nus == 0.0):
        return np.full(t.size, coeff.sum(), dtype=np.complex128)
    if len(group) == 1:
        return coeff[0] * np.exp(2j * np.pi * nus[0] * t)

    length = t.size
    block = min(_ENVELOPE_BLOCK, length)
    n_blocks = -(-length // block)
    dt = t[1] - t[0] if length > 1 else 0.0
    starts = np.arange(n_blocks) * block * dt
    within = np.arange(block) * dt
    # (n_blocks x P) @ (P x block)
    start_phase = coeff[None, :] * np.exp(2j * np.pi * np.outer(starts, nus))
    inner = np.exp(2j * np.pi * np.outer(nus, within))
    return (start_phase @ inner).reshape(-1)[:length]


def add_awgn(buf: IqBuffer, snr_db: float, seed: int) -> IqBuffer:
    """
    Add circularly-symmetric complex Gaussian noise.

    Noise variance per sample is mean signal power / 10^(snr_db/10).
    snr_db = +inf disables noise.

    Args:
        buf: Input samples
        snr_db: Signal-to-noise ratio in dB
        seed: Noise generator seed

    Returns:
        Noisy copy of the buffer
    """
    if len(buf) == 0:
        raise SignalError("Cannot add noise to an empty buffer", component='channel')
    if math.isinf(snr_db) and snr_db > 0:
        return IqBuffer(buf.samples.copy(), buf.sample_rate)
    variance = buf.mean_power / (10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(buf)) + 1j * rng.standard_normal(len(buf))
    return IqBuffer(buf.samples + np.sqrt(variance / 2.0) * noise, buf.sample_rate)


def apply_cfo(buf: IqBuffer, cfo_hz: float) -> IqBuffer:
    """
    Apply a carrier frequency offset: sample i times exp(j2pi cfo i / fs).
    """
    if cfo_hz == 0.0:
        return IqBuffer(buf.samples.copy(), buf.sample_rate)
    n = np.arange(len(buf), dtype=np.float64)
    return IqBuffer(buf.samples * np.exp(2j * np.pi * cfo_hz * n / buf.sample_rate), buf.sample_rate)


# ==================== Channel models ====================


def _check_lengths(**lists) -> int:
    lengths = {name: len(values) for name, values in lists.items()}
    if len(set(lengths.values())) != 1:
        raise ChannelError(
            f"Per-tap lists must have equal length, got {lengths}",
            component='channel',
            details=lengths,
        )
    count = next(iter(lengths.values()))
    if count == 0:
        raise ChannelError("Per-tap lists are empty", component='channel')
    return count


def rayleigh_tap_paths(
    delays: Sequence[float],
    powers_db: Sequence[float],
    max_dopplers: Sequence[float],
    n_sinusoids: int,
    seed: int,
) -> PathSet:
    """
    Rayleigh fading taps with Jakes spectra as sums of sinusoids.

    Each tap becomes n_sinusoids paths at the tap delay with Dopplers
    f_max * cos(theta), theta uniform on [0, 2pi), i.i.d. uniform phases and
    power tap_power / n_sinusoids each.

    Args:
        delays: Tap delays in seconds
        powers_db: Tap powers in dB
        max_dopplers: Maximum Doppler shift per tap in Hz
        n_sinusoids: Sinusoids per tap (>= 8)
        seed: Generator seed

    Returns:
        PathSet with len(delays) * n_sinusoids paths

    Example:
        >>> ps = rayleigh_tap_paths([0.0], [0.0], [100.0], 16, seed=1)
        >>> ps.P
        16
    """
    _check_lengths(delays=delays, powers_db=powers_db, max_dopplers=max_dopplers)
    if n_sinusoids < 8:
        raise ChannelError(f"n_sinusoids must be >= 8, got {n_sinusoids}", component='channel')

    rng = np.random.default_rng(seed)
    paths = []
    for delay, power_db, f_max in zip(delays, powers_db, max_dopplers):
        amplitude = np.sqrt(10.0 ** (power_db / 10.0) / n_sinusoids)
        theta = rng.uniform(0.0, 2.0 * np.pi, n_sinusoids)
        phase = rng.uniform(0.0, 2.0 * np.pi, n_sinusoids)
        dopplers = f_max * np.cos(theta)
        for nu, phi in zip(dopplers, phase):
            paths.append(Path(complex(amplitude * np.exp(1j * phi)), float(delay), float(nu)))
    return PathSet(paths)


def pure_doppler_paths(
    delays: Sequence[float],
    dopplers: Sequence[float],
    powers_db: Sequence[float],
) -> PathSet:
    """
    Deterministic paths with zero phase.

    Example:
        >>> ps = pure_doppler_paths([0.0, 1.25e-6], [0.0, -610.35], [0.0, -5.0])
        >>> round(abs(ps[1].gain) ** 2, 4)
        0.3162
    """
    _check_lengths(delays=delays, dopplers=dopplers, powers_db=powers_db)
    return PathSet([
        Path(complex(10.0 ** (p / 20.0)), float(d), float(nu))
        for d, nu, p in zip(delays, dopplers, powers_db)
    ])


def emulate(
    buf: IqBuffer,
    paths: PathSet,
    snr_db: float = math.inf,
    cfo_hz: float = 0.0,
    seed: int = 0,
) -> IqBuffer:
    """Channel, then CFO, then AWGN."""
    out = apply_paths(buf, paths)
    out = apply_cfo(out, cfo_hz)
    return add_awgn(out, snr_db, seed)
