"""
Frame geometry and sounding capability.

This module defines the OTFS frame configuration that every other part of the
package consumes, the delay-Doppler coordinate conventions, and the sounding
capability metrics (resolutions, measurable ranges, frame length).

Grid convention: a frame is an N x M grid. Row k is a Doppler tap, column l is
a delay tap. The pilot sits at the grid center (k_p, l_p) = (N/2, M/2). Row k
maps to the signed Doppler offset ((k - k_p + N/2) mod N) - N/2, which for
k_p = N/2 is simply k - N/2.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

MIN_GRID_SIZE = 16


def _is_power_of_two(value: int) -> bool:
    return isinstance(value, (int, np.integer)) and value > 0 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class FrameConfig:
    """
    OTFS sounding frame geometry and pilot/guard layout.

    The grid is critically sampled (T * delta_f = 1, no cyclic prefix), so
    every derived quantity follows from (M, N, B).

    Attributes:
        M: Delay-tap count (power of two)
        N: Doppler-tap count (power of two)
        B: Bandwidth in Hz (= sample rate)
        l_tau: Measurable-delay tap span, guard half-width around the pilot
        A_pn: PN symbol amplitude

    Example:
        >>> cfg = FrameConfig(M=2048, N=256, B=100e6, l_tau=512)
        >>> cfg.delta_f
        48828.125
        >>> cfg.k_p, cfg.l_p
        (128, 1024)
    """
    M: int
    N: int
    B: float
    l_tau: int
    A_pn: float = 1.0

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ConfigurationError(
                '; '.join(errors),
                component='core',
                details={'M': self.M, 'N': self.N, 'B': self.B, 'l_tau': self.l_tau},
            )

    def validate(self) -> List[str]:
        """
        Validate frame geometry.

        Returns:
            List of error messages (empty if valid)
        """
        errors = []
        if not _is_power_of_two(self.M):
            errors.append(f"M must be a power of two, got {self.M}")
        if not _is_power_of_two(self.N):
            errors.append(f"N must be a power of two, got {self.N}")
        if not (self.B > 0 and np.isfinite(self.B)):
            errors.append(f"bandwidth must be positive and finite, got {self.B}")
        if _is_power_of_two(self.M) and not (0 < self.l_tau <= self.M // 2 - 1):
            errors.append(
                f"l_tau={self.l_tau} out of range (0, {self.M // 2 - 1}]: guard band would "
                f"overflow the grid around l_p={self.M // 2}"
            )
        if not np.isfinite(self.A_pn) or self.A_pn <= 0:
            errors.append(f"A_pn must be positive, got {self.A_pn}")
        return errors

    # ==================== Derived geometry ====================

    @property
    def delta_f(self) -> float:
        """Subcarrier spacing in Hz (B / M)."""
        return self.B / self.M

    @property
    def T(self) -> float:
        """Symbol (slot) duration in seconds (1 / delta_f)."""
        return self.M / self.B

    @property
    def k_p(self) -> int:
        return self.N // 2

    @property
    def l_p(self) -> int:
        return self.M // 2

    @property
    def frame_samples(self) -> int:
        """Samples per frame (M * N)."""
        return self.M * self.N

    @property
    def frame_length(self) -> float:
        """Frame duration N * T in seconds."""
        return self.N * self.T

    @property
    def sample_rate(self) -> float:
        return self.B

    @property
    def delay_resolution(self) -> float:
        return 1.0 / self.B

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.N * self.T)

    @property
    def guard_columns(self) -> range:
        """Delay columns [l_p - l_tau, l_p + l_tau] that carry no PN."""
        return range(self.l_p - self.l_tau, self.l_p + self.l_tau + 1)

    @property
    def pn_cell_count(self) -> int:
        """Number of PN cells outside the guard band."""
        return self.N * self.M - self.N * (2 * self.l_tau + 1)

    # ==================== Coordinate conventions ====================

    def signed_doppler_index(self, k):
        """
        Map grid row(s) to signed Doppler offsets from the pilot row.

        Args:
            k: Row index or array of row indices in [0, N)

        Returns:
            Signed offset(s) in [-N/2, N/2)
        """
        return ((np.asarray(k) - self.k_p + self.N // 2) % self.N) - self.N // 2

    def doppler_axis(self) -> np.ndarray:
        """Doppler value in Hz of each signed CSF row."""
        return (np.arange(self.N) - self.N // 2) * self.doppler_resolution

    def delay_axis(self) -> np.ndarray:
        """Delay value in seconds of each CSF column (offsets 0..l_tau)."""
        return np.arange(self.l_tau + 1) * self.delay_resolution

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to the experiment-config frame block."""
        return {
            'M': int(self.M),
            'N': int(self.N),
            'bandwidth_hz': float(self.B),
            'l_tau': int(self.l_tau),
            'a_pn': float(self.A_pn),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FrameConfig':
        """
        Build a config from an experiment-config frame block.

        Args:
            data: Dict with M, N, bandwidth_hz and optional l_tau, a_pn

        Returns:
            FrameConfig

        Raises:
            ConfigurationError: If required keys are missing
        """
        missing = [key for key in ('M', 'N', 'bandwidth_hz') if key not in data]
        if missing:
            raise ConfigurationError(
                f"Frame block missing keys: {', '.join(missing)}",
                component='core',
                details={'missing': missing},
            )
        return make_frame_config(
            int(data['M']),
            int(data['N']),
            float(data['bandwidth_hz']),
            l_tau=data.get('l_tau'),
            A_pn=float(data.get('a_pn', 1.0)),
        )


@dataclass(frozen=True)
class SoundingCapability:
    """
    Sounding capability of a frame configuration.

    All times in seconds, all frequencies in Hz.
    """
    delay_resolution: float
    doppler_resolution: float
    max_delay: float
    max_doppler: float
    frame_length: float
    min_si: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def to_display(self) -> Dict[str, float]:
        """Values in the display units used by capability tables."""
        return {
            'frame_length_ms': self.frame_length * 1e3,
            'delay_resolution_ns': self.delay_resolution * 1e9,
            'doppler_resolution_hz': self.doppler_resolution,
            'max_delay_us': self.max_delay * 1e6,
            'max_doppler_khz': self.max_doppler * 1e-3,
            'min_si_ms': self.min_si * 1e3,
        }


def make_frame_config(
    M: int,
    N: int,
    B: float,
    l_tau: Optional[int] = None,
    A_pn: float = 1.0,
) -> FrameConfig:
    """
    Create a validated frame configuration.

    Args:
        M: Delay-tap count, power of two >= 16
        N: Doppler-tap count, power of two >= 16
        B: Bandwidth in Hz
        l_tau: Measurable-delay span in taps (default: M/4)
        A_pn: PN symbol amplitude (default: 1.0)

    Returns:
        FrameConfig with derived delta_f, T, k_p, l_p

    Raises:
        ConfigurationError: If M/N are not powers of two >= 16 or l_tau is out of range

    Example:
        >>> cfg = make_frame_config(2048, 256, 100e6, l_tau=512)
        >>> round(cfg.T * 1e6, 2)
        20.48
    """
    for name, value in (('M', M), ('N', N)):
        if not _is_power_of_two(value) or value < MIN_GRID_SIZE:
            raise ConfigurationError(
                f"{name} must be a power of two >= {MIN_GRID_SIZE}, got {value}",
                component='core',
                details={name: value},
            )
    if l_tau is None:
        l_tau = M // 4
    cfg = FrameConfig(M=int(M), N=int(N), B=float(B), l_tau=int(l_tau), A_pn=float(A_pn))
    logger.debug(
        f"Frame config ({M}, {N}) at {B / 1e6:.3f} MHz: delta_f={cfg.delta_f:.3f} Hz, "
        f"T={cfg.T * 1e6:.3f} us, l_tau={l_tau}"
    )
    return cfg


def capability_metrics(cfg: FrameConfig) -> SoundingCapability:
    """
    Compute the sounding capability of a frame configuration.

    Args:
        cfg: Frame configuration

    Returns:
        SoundingCapability with resolutions, measurable ranges and frame length

    Example:
        >>> cap = capability_metrics(make_frame_config(4096, 2048, 100e6, l_tau=1024))
        >>> round(cap.doppler_resolution, 2)
        11.92
    """
    frame_length = cfg.N * cfg.T
    delay_resolution = 1.0 / cfg.B
    doppler_resolution = 1.0 / frame_length
    return SoundingCapability(
        delay_resolution=delay_resolution,
        doppler_resolution=doppler_resolution,
        max_delay=cfg.l_tau * delay_resolution,
        max_doppler=doppler_resolution * cfg.N / 2,
        frame_length=frame_length,
        min_si=frame_length,
    )
