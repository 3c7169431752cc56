"""
Receiver: synchronization, CSF extraction and dynamic range.

Synchronization slides the first L transmitted samples over the received
stream and takes the correlation peak as the frame start. The CSF is the
delay-Doppler grid recovered by Wigner + SFFT, cut to the pilot's delay span
[l_p, l_p + l_tau]. An OFDM frequency-domain sounder is included as the
reference for CFO robustness comparisons.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import fft as sp_fft
from scipy import signal as sp_signal

from .channel import PathSet, emulate, output_extension
from .core import FrameConfig
from .exceptions import ChannelError, ConfigurationError, SignalError
from .waveform import IqBuffer, default_pn, sfft, wigner_demodulate

logger = logging.getLogger(__name__)

# Floors this far below the peak are treated as zero (saturated measurement)
SATURATION_DB = 200.0


def _saturated(peak: float, floor: float) -> bool:
    return floor <= peak * 10.0 ** (-SATURATION_DB / 10.0)


# ==================== Synchronization ====================


@dataclass
class CorrelationSeries:
    """
    Sliding-correlation output R_c[k] = |sum_i y[k+i] s*[i]|^2.
    """
    values: np.ndarray
    sync_length: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self) -> int:
        return int(self.values.size)


def sliding_correlation(
    rx: IqBuffer,
    sync: IqBuffer,
    window: Optional[int] = None,
    method: str = 'fft',
) -> CorrelationSeries:
    """
    Correlate a received stream against the synchronization signal.

    Args:
        rx: Received samples
        sync: First L samples of the transmitted frame
        window: Number of lags to evaluate (default: every lag that fits)
        method: 'fft' (transform-accelerated) or 'direct'

    Returns:
        CorrelationSeries of length `window`

    Raises:
        SignalError: If the window does not fit the buffer

    Example:
        >>> s = IqBuffer(np.exp(2j * np.pi * np.random.rand(64)), 1.0)
        >>> find_frame_start(sliding_correlation(s, s))
        0
    """
    L = len(sync)
    if L == 0:
        raise SignalError("Synchronization signal is empty", component='receiver')
    max_window = len(rx) - L + 1
    if window is None:
        window = max_window
    if window < 1 or window > max_window:
        raise SignalError(
            f"Correlation window {window} does not fit: rx has {len(rx)} samples, "
            f"sync has {L} (max window {max_window})",
            component='receiver',
            details={'window': window, 'rx_length': len(rx), 'sync_length': L},
        )
    segment = rx.samples[:window + L - 1]
    corr = sp_signal.correlate(segment, sync.samples, mode='valid', method=method)
    return CorrelationSeries(np.abs(corr) ** 2, L)


def find_frame_start(corr: CorrelationSeries) -> int:
    """Index of the correlation peak; ties go to the smallest index."""
    if len(corr) == 0:
        raise SignalError("Empty correlation series", component='receiver')
    return int(np.argmax(corr.values))


def sync_gain(corr: CorrelationSeries, guard: Optional[int] = None) -> float:
    """
    Synchronization gain in dB.

    Ratio of the correlation peak to the noise level NL, where NL is the mean
    of R_c outside +/-guard samples around the peak.

    Args:
        corr: Correlation series
        guard: Exclusion half-width (default: sync length L)

    Returns:
        Gain in dB, or +inf when NL is zero

    Raises:
        SignalError: If the guard window swallows the whole series
    """
    if guard is None:
        guard = corr.sync_length
    n = len(corr)
    if 2 * guard + 1 >= n:
        raise SignalError(
            f"Guard {guard} leaves no noise samples in a series of {n}",
            component='receiver',
            details={'guard': guard, 'length': n},
        )
    peak_index = find_frame_start(corr)
    peak = float(corr.values[peak_index])
    mask = np.ones(n, dtype=bool)
    mask[max(0, peak_index - guard):peak_index + guard + 1] = False
    noise_level = float(np.mean(corr.values[mask]))
    if _saturated(peak, noise_level):
        logger.info("Sync noise level is zero; gain saturated")
        return math.inf
    return float(10.0 * np.log10(peak / noise_level))


# ==================== CSF ====================


@dataclass
class Csf:
    """
    Measured channel spreading function.

    Rows are signed Doppler offsets from the pilot (row r is offset r - N/2),
    columns are delay offsets 0..l_tau from the pilot column.
    """
    data: np.ndarray
    cfg: FrameConfig
    noise_floor_estimate: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        expected = (self.cfg.N, self.cfg.l_tau + 1)
        if self.data.shape != expected:
            raise SignalError(
                f"CSF shape {self.data.shape} does not match {expected}", component='receiver'
            )
        if self.noise_floor_estimate < 0:
            raise SignalError("Noise floor estimate must be >= 0", component='receiver')

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.data) ** 2

    @property
    def energy(self) -> float:
        return float(np.sum(self.power))

    @property
    def doppler_axis(self) -> np.ndarray:
        return self.cfg.doppler_axis()

    @property
    def delay_axis(self) -> np.ndarray:
        return self.cfg.delay_axis()

    def peak(self) -> Tuple[int, int]:
        """(signed Doppler offset, delay offset) of the strongest cell."""
        row, col = np.unravel_index(int(np.argmax(self.power)), self.data.shape)
        return int(row) - self.cfg.N // 2, int(col)

    def cell(self, doppler_offset: int, delay_offset: int) -> complex:
        """Value at a signed Doppler offset and delay offset."""
        return complex(self.data[(doppler_offset + self.cfg.N // 2) % self.cfg.N, delay_offset])

    def scaled(self, factor: float) -> 'Csf':
        return Csf(self.data * factor, self.cfg, self.noise_floor_estimate * abs(factor) ** 2)

    def to_frame(self) -> pd.DataFrame:
        """Long-form table: doppler_hz, delay_s, power_db, phase_rad."""
        doppler, delay = np.meshgrid(self.doppler_axis, self.delay_axis, indexing='ij')
        with np.errstate(divide='ignore'):
            power_db = 10.0 * np.log10(self.power)
        return pd.DataFrame({
            'doppler_hz': doppler.reshape(-1),
            'delay_s': delay.reshape(-1),
            'power_db': power_db.reshape(-1),
            'phase_rad': np.angle(self.data).reshape(-1),
        })


def extract_csf(rx_frame: IqBuffer, cfg: FrameConfig) -> Csf:
    """
    Demodulate one synchronized frame and cut out the CSF.

    Wigner then SFFT give the received DD grid. Columns l_p..l_p+l_tau form the
    CSF. Each cell at signed Doppler offset k and delay offset d is rotated by
    exp(-j2pi k (l_p + d) / (NM)) to remove the intra-frame Doppler ramp, so an
    on-grid path (h, tau, nu) reads h * exp(-j2pi nu tau). The noise floor is
    the median cell power over the guard columns l_p - l_tau..l_p - 1.

    Args:
        rx_frame: Samples starting at the detected frame start
        cfg: Frame configuration

    Returns:
        Csf

    Raises:
        SignalError: If fewer than M*N samples are available
    """
    dd = sfft(wigner_demodulate(rx_frame, cfg)).data
    lp, lt = cfg.l_p, cfg.l_tau
    region = dd[:, lp:lp + lt + 1]
    guard = dd[:, lp - lt:lp]
    noise_floor = float(np.median(np.abs(guard) ** 2))
    logger.debug(f"Extracted CSF {region.shape}, noise floor {noise_floor:.3e}")
    return Csf(region * doppler_ramp(cfg), cfg, noise_floor)


def doppler_ramp(cfg: FrameConfig) -> np.ndarray:
    """N x (l_tau+1) compensation exp(-j2pi k (l_p + d) / (NM)) over signed rows k."""
    kappa = cfg.signed_doppler_index(np.arange(cfg.N))
    columns = cfg.l_p + np.arange(cfg.l_tau + 1)
    return np.exp(-2j * np.pi * np.outer(kappa, columns) / cfg.frame_samples)


def dynamic_range(csf: Csf) -> float:
    """
    Peak cell power over the noise floor estimate, in dB.

    Returns +inf (saturation) when the floor is zero.
    """
    peak = float(np.max(csf.power))
    if _saturated(peak, csf.noise_floor_estimate):
        logger.warning("CSF noise floor is zero; dynamic range saturated")
        return math.inf
    return float(10.0 * np.log10(peak / csf.noise_floor_estimate))


@dataclass
class ReceiveResult:
    """Synchronization and CSF of one received frame."""
    frame_start: int
    csf: Csf
    correlation: Optional[CorrelationSeries] = None

    @property
    def sync_gain_db(self) -> Optional[float]:
        if self.correlation is None:
            return None
        return sync_gain(self.correlation)


def receive(
    rx: IqBuffer,
    tx_frame: IqBuffer,
    cfg: FrameConfig,
    sync_length: Optional[int] = None,
    window: Optional[int] = None,
    frame_start: Optional[int] = None,
) -> ReceiveResult:
    """
    Synchronize and extract the CSF of the first frame in a received stream.

    Args:
        rx: Received samples
        tx_frame: One transmitted frame (source of the sync signal)
        cfg: Frame configuration
        sync_length: L, samples of the frame used for sync (default: MN/4)
        window: Lags searched (default: min(2MN, every lag that fits))
        frame_start: Known timing; skips correlation when given

    Returns:
        ReceiveResult with frame start, CSF and correlation series
    """
    corr = None
    if frame_start is None:
        L = sync_length or cfg.frame_samples // 4
        fits = len(rx) - L + 1
        window = min(window or 2 * cfg.frame_samples, fits, max(1, len(rx) - cfg.frame_samples + 1))
        corr = sliding_correlation(rx, tx_frame.segment(0, L), window)
        frame_start = find_frame_start(corr)
        logger.info(f"Frame start detected at sample {frame_start}")
    csf = extract_csf(rx.segment(frame_start, cfg.frame_samples), cfg)
    return ReceiveResult(frame_start, csf, corr)


# ==================== OFDM reference ====================


@dataclass
class OfdmSoundingResult:
    """PDP and dynamic range from the OFDM reference sounder."""
    pdp: Any
    dynamic_range_db: float
    cp_length: int

    def __iter__(self):
        yield self.pdp
        yield self.dynamic_range_db


def ofdm_reference_sounder(
    paths: PathSet,
    cfo_hz: float,
    snr_db: float,
    n_subcarriers: int,
    seed: int,
    sample_rate: float = 100e6,
    cp_length: Optional[int] = None,
) -> OfdmSoundingResult:
    """
    Single-symbol OFDM channel sounder with PN pilots.

    Unit-amplitude +/-1 pilots on every subcarrier, a cyclic prefix, channel +
    CFO + AWGN, CTF by pilot division and PDP = |IDFT(CTF)|^2. The dynamic
    range is the peak tap over the median power of the taps beyond the CP.

    Args:
        paths: Channel
        cfo_hz: Carrier frequency offset in Hz
        snr_db: SNR in dB (+inf disables noise)
        n_subcarriers: Subcarrier count (power of two)
        seed: Noise seed
        sample_rate: Sample rate in Hz
        cp_length: Cyclic prefix in samples (default: n_subcarriers / 4)

    Returns:
        OfdmSoundingResult, which unpacks as (pdp, dynamic_range_db)

    Raises:
        ConfigurationError: If n_subcarriers is not a power of two
        ChannelError: If the CP is shorter than the channel's max delay
    """
    from .analysis import PowerProfile

    n = int(n_subcarriers)
    if n < 2 or (n & (n - 1)) != 0:
        raise ConfigurationError(
            f"n_subcarriers must be a power of two, got {n_subcarriers}", component='receiver'
        )
    cp = n // 4 if cp_length is None else int(cp_length)
    needed = output_extension(paths, sample_rate)
    if cp < needed:
        raise ChannelError(
            f"Cyclic prefix of {cp} samples is shorter than the channel delay ({needed} samples)",
            component='receiver',
            details={'cp_length': cp, 'max_delay_samples': needed},
        )

    pilots = default_pn(n).astype(np.complex128)
    symbol = sp_fft.ifft(pilots, norm='ortho')
    tx = IqBuffer(np.concatenate([symbol[-cp:], symbol]), sample_rate)
    rx = emulate(tx, paths, snr_db=snr_db, cfo_hz=cfo_hz, seed=seed)

    received = sp_fft.fft(rx.samples[cp:cp + n], norm='ortho')
    ctf = received / pilots
    taps = np.abs(sp_fft.ifft(ctf)) ** 2

    peak = float(np.max(taps))
    floor = float(np.median(taps[cp:])) if cp < n else 0.0
    dr = math.inf if _saturated(peak, floor) else float(10.0 * np.log10(peak / floor))
    profile = PowerProfile(np.arange(n) / sample_rate, taps, 'delay')
    logger.debug(f"OFDM reference: cfo={cfo_hz:.2f} Hz, snr={snr_db} dB, DR={dr:.2f} dB")
    return OfdmSoundingResult(profile, dr, cp)
