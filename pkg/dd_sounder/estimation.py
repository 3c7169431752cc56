"""
Joint fractional delay and Doppler estimation.

A path at fractional grid position (k_i, l_i) spreads over the CSF as the
product of two Dirichlet kernels, one per axis. The estimator repeatedly takes
the strongest residual cell as the integer position, searches a fractional
grid around it with a 2-D matched filter against those kernels, records the
path, and cancels its reconstruction from the residual.

Kernel convention (raw, unnormalized):
    Doppler: h_nu[dk]  = sum_n exp(-j2pi n (dk - k_i) / N)
    Delay:   h_tau[dl] = sum_m exp(+j2pi m (dl - l_i) / M)
The channel interpolates delays symmetrically, so the delay kernel enters
with its linear phase removed, g(x) = sin(pi x) / (M sin(pi x / M)) with
x = dl - l_i. A path of gain h therefore appears in the CSF as
    h * exp(-j2pi nu tau) * h_nu[dk] / N * g(dl - l_i)
      * exp(j2pi (k_i - dk)(l_p + dl) / (NM)),
the last factor being the intra-frame rotation left after the receiver
compensates the integer row dk.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import PathSet
from .core import FrameConfig
from .exceptions import ConfigurationError, EstimationError
from .receiver import Csf, doppler_ramp

logger = logging.getLogger(__name__)

SEARCH_MODES = ('exhaustive', 'coarse_to_fine')
COARSE_STEP = 0.1
# Threshold over the CSF noise floor when no explicit power threshold is set
DYNAMIC_THRESHOLD_DB = 6.0


# ==================== Configuration and results ====================


@dataclass
class EstimatorConfig:
    """
    Settings for the fractional search and interference cancellation.

    Attributes:
        delay_step: Fractional delay step in taps, in (0, 0.5]
        doppler_step: Fractional Doppler step in taps, in (0, 0.5]
        power_threshold: Linear power threshold; None = noise floor + 6 dB
        max_paths: Maximum number of extracted paths
        search: 'exhaustive' or 'coarse_to_fine'
        dynamic_range_db: Stop once candidates fall this far below the first path
    """
    delay_step: float = 0.1
    doppler_step: float = 0.01
    power_threshold: Optional[float] = None
    max_paths: int = 60
    search: str = 'exhaustive'
    dynamic_range_db: float = 60.0

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ConfigurationError('; '.join(errors), component='estimation')

    def validate(self) -> List[str]:
        """
        Validate estimator settings.

        Returns:
            List of error messages (empty if valid)
        """
        errors = []
        for name in ('delay_step', 'doppler_step'):
            step = getattr(self, name)
            if not (0 < step <= 0.5):
                errors.append(f"{name} must be in (0, 0.5], got {step}")
        if self.max_paths < 1:
            errors.append(f"max_paths must be >= 1, got {self.max_paths}")
        if self.search not in SEARCH_MODES:
            errors.append(f"search must be one of {SEARCH_MODES}, got {self.search!r}")
        if self.power_threshold is not None and self.power_threshold < 0:
            errors.append(f"power_threshold must be >= 0, got {self.power_threshold}")
        if self.dynamic_range_db <= 0:
            errors.append(f"dynamic_range_db must be > 0, got {self.dynamic_range_db}")
        return errors

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'EstimatorConfig':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class PathEstimate:
    """
    One extracted path.

    delay = (l_I + l_F) * delta_tau, doppler = (k_I + k_F) * delta_nu and
    phase = -2pi * doppler * delay. complex_gain is the fitted amplitude used for
    cancellation; for a path with real positive gain it equals
    gain * exp(j * phase).
    """
    gain: float
    phase: float
    delay: float
    doppler: float
    integer_taps: Tuple[int, int]
    fractional_taps: Tuple[float, float]
    complex_gain: complex = 0j

    @property
    def power(self) -> float:
        return self.gain ** 2

    @property
    def power_db(self) -> float:
        return float(10.0 * np.log10(self.power)) if self.power > 0 else -math.inf

    @property
    def doppler_taps(self) -> float:
        return self.integer_taps[0] + self.fractional_taps[0]

    @property
    def delay_taps(self) -> float:
        return self.integer_taps[1] + self.fractional_taps[1]

    def to_record(self, index: int) -> Dict:
        return {
            'path_index': index,
            'delay_s': self.delay,
            'doppler_hz': self.doppler,
            'gain_db': 20.0 * np.log10(self.gain) if self.gain > 0 else -math.inf,
            'phase_rad': self.phase,
            'k_I': self.integer_taps[0],
            'l_I': self.integer_taps[1],
            'k_F': self.fractional_taps[0],
            'l_F': self.fractional_taps[1],
        }


@dataclass
class MatchedFilterSurface:
    """
    Matched-filter output over the fractional search grid.

    values[a, b] is the least-squares amplitude R at Doppler fraction
    k_offsets[a] and delay fraction l_offsets[b]; template_energy[a, b] is the
    kernel energy inside the CSF region at that point.
    """
    k_I: int
    l_I: int
    k_offsets: np.ndarray
    l_offsets: np.ndarray
    values: np.ndarray
    template_energy: np.ndarray

    @property
    def score(self) -> np.ndarray:
        """Normalized correlation magnitude |<g, y>| / ||g||."""
        return np.abs(self.values) * np.sqrt(self.template_energy)

    def best(self) -> Tuple[int, int]:
        """Grid indices of the highest score; ties resolve to the first (most negative) offsets."""
        a, b = np.unravel_index(int(np.argmax(self.score)), self.values.shape)
        return int(a), int(b)


# ==================== Equivalent channel kernels ====================


def _dirichlet(x: np.ndarray, size: int, sign: float) -> np.ndarray:
    """sum_{n<size} exp(sign * j2pi n x / size), closed form with the removable singularity."""
    x = np.asarray(x, dtype=np.float64)
    den = np.sin(np.pi * x / size)
    singular = np.abs(den) < 1e-12
    safe_den = np.where(singular, 1.0, den)
    value = np.exp(sign * 1j * np.pi * x * (size - 1) / size) * np.sin(np.pi * x) / safe_den
    return np.where(singular, complex(size), value)


def eq_channel_doppler(delta_k, k_i: float, N: int) -> np.ndarray:
    """
    Doppler-domain equivalent channel function.

    h[dk] = exp(-j pi (dk - k_i)(N-1)/N) sin(pi (dk - k_i)) / sin(pi (dk - k_i)/N),
    equal to N where dk - k_i is a multiple of N.

    Args:
        delta_k: Integer Doppler grid offsets
        k_i: Path Doppler position in taps (real)
        N: Doppler-tap count

    Returns:
        Complex kernel values

    Example:
        >>> abs(eq_channel_doppler(np.array([0]), 0.0, 16)[0])
        16.0
    """
    return _dirichlet(np.asarray(delta_k, dtype=np.float64) - k_i, N, -1.0)


def eq_channel_delay(delta_l, l_i: float, M: int) -> np.ndarray:
    """
    Delay-domain equivalent channel function (conjugate-sign twin of the Doppler kernel).

    Args:
        delta_l: Integer delay grid offsets
        l_i: Path delay position in taps (real)
        M: Delay-tap count

    Returns:
        Complex kernel values
    """
    return _dirichlet(np.asarray(delta_l, dtype=np.float64) - l_i, M, 1.0)


def fractional_grid(step: float, lower: float = -0.5, upper: float = 0.5) -> np.ndarray:
    """
    Fractional offsets -0.5, -0.5 + step, ... restricted to [lower, upper].

    The grid is anchored at -0.5 so that finer grids nest coarser ones when
    the steps divide each other.
    """
    count = int(math.floor(1.0 / step + 1e-9)) + 1
    grid = -0.5 + step * np.arange(count)
    grid = np.round(grid, 12)
    return grid[(grid >= lower - 1e-12) & (grid <= upper + 1e-12)]


def _doppler_templates(cfg: FrameConfig, k_positions: np.ndarray) -> np.ndarray:
    """N x len(k_positions) Doppler templates over the signed CSF rows, scaled by 1/N."""
    rows = np.arange(cfg.N) - cfg.N // 2
    return _dirichlet(rows[:, None] - k_positions[None, :], cfg.N, -1.0) / cfg.N


def _delay_templates(cfg: FrameConfig, l_positions: np.ndarray) -> np.ndarray:
    """
    (l_tau+1) x len(l_positions) delay templates over the CSF columns, scaled by 1/M.

    The delay kernel with its linear phase removed: sin(pi x) / (M sin(pi x / M))
    with x = d - l, real and symmetric about the path.
    """
    cols = np.arange(cfg.l_tau + 1, dtype=np.float64)[:, None]
    x = cols - l_positions[None, :]
    kernel = eq_channel_delay(cols, l_positions[None, :], cfg.M)
    return (kernel * np.exp(-1j * np.pi * x * (cfg.M - 1) / cfg.M)).real / cfg.M


def _frame_phase(cfg: FrameConfig, k_positions: np.ndarray) -> np.ndarray:
    """len(k_positions) x (l_tau+1) intra-frame Doppler rotation exp(j2pi k (l_p + d) / (NM))."""
    columns = cfg.l_p + np.arange(cfg.l_tau + 1)
    return np.exp(2j * np.pi * np.outer(k_positions, columns) / cfg.frame_samples)


def path_template(cfg: FrameConfig, k: float, l: float) -> np.ndarray:
    """
    Normalized CSF footprint of a unit path at (k, l) taps, circular in Doppler.

    Includes the part of the intra-frame Doppler rotation that the receiver's
    integer-row compensation leaves behind; it vanishes for on-grid Doppler.
    """
    a = _doppler_templates(cfg, np.array([k]))[:, 0]
    b = _delay_templates(cfg, np.array([l]))[:, 0]
    residual_ramp = _frame_phase(cfg, np.array([k]))[0][None, :] * doppler_ramp(cfg)
    return np.outer(a, b) * residual_ramp


def model_csf(paths: PathSet, cfg: FrameConfig, noise_floor: float = 0.0) -> Csf:
    """
    Ideal CSF of a path set.

    Each path (h, tau, nu) contributes h * exp(-j2pi nu tau) times its kernel
    footprint. Useful as an oracle and for Monte-Carlo runs that skip the
    time-domain pipeline.

    Args:
        paths: Channel paths (delays within l_tau taps)
        cfg: Frame configuration
        noise_floor: Value stored as the CSF noise floor estimate

    Returns:
        Csf
    """
    data = np.zeros((cfg.N, cfg.l_tau + 1), dtype=np.complex128)
    k_taps, l_taps = paths.taps(cfg)
    for p, k, l in zip(paths, k_taps, l_taps):
        data += p.gain * np.exp(-2j * np.pi * p.doppler * p.delay) * path_template(cfg, k, l)
    return Csf(data, cfg, noise_floor)


# ==================== Matched filter ====================


def matched_filter_surface(
    csf: Csf,
    k_I: int,
    l_I: int,
    est_cfg: EstimatorConfig,
    k_offsets: Optional[np.ndarray] = None,
    l_offsets: Optional[np.ndarray] = None,
) -> MatchedFilterSurface:
    """
    2-D correlation of the CSF with path templates around (k_I, l_I).

    For every (k_F, l_F) on the step grid, R = sum g* y / sum |g|^2 over all N
    Doppler rows (circular) and delay offsets 0..l_tau, with g the template of a
    unit path at (k_I + k_F, l_I + l_F). Apart from the intra-frame rotation,
    which only couples Doppler position and column, the templates are
    separable, so the whole surface is two matrix products.

    Args:
        csf: Measured (or residual) CSF
        k_I: Signed integer Doppler offset
        l_I: Integer delay offset
        est_cfg: Estimator settings (grid steps)
        k_offsets: Explicit Doppler fractions (default: doppler_step grid)
        l_offsets: Explicit delay fractions (default: delay_step grid)

    Returns:
        MatchedFilterSurface
    """
    cfg = csf.cfg
    if not (-cfg.N // 2 <= k_I < cfg.N // 2) or not (0 <= l_I <= cfg.l_tau):
        raise EstimationError(
            f"Integer position ({k_I}, {l_I}) outside the CSF", component='estimation'
        )
    if k_offsets is None:
        k_offsets = fractional_grid(est_cfg.doppler_step)
    if l_offsets is None:
        l_offsets = fractional_grid(est_cfg.delay_step)

    k_positions = k_I + np.asarray(k_offsets, dtype=np.float64)
    doppler_t = _doppler_templates(cfg, k_positions)
    delay_t = _delay_templates(cfg, l_I + np.asarray(l_offsets, dtype=np.float64))

    # back to the uncompensated grid, where the residual rotation depends on k only
    raw = csf.data * doppler_ramp(cfg).conj()
    per_column = (doppler_t.conj().T @ raw) * _frame_phase(cfg, k_positions).conj()
    corr = per_column @ delay_t
    energy = np.outer(
        np.sum(np.abs(doppler_t) ** 2, axis=0),
        np.sum(np.abs(delay_t) ** 2, axis=0),
    )
    return MatchedFilterSurface(
        k_I=int(k_I),
        l_I=int(l_I),
        k_offsets=np.asarray(k_offsets, dtype=np.float64),
        l_offsets=np.asarray(l_offsets, dtype=np.float64),
        values=corr / energy,
        template_energy=energy,
    )


def _search(csf: Csf, k_I: int, l_I: int, est_cfg: EstimatorConfig) -> Tuple[float, float, complex]:
    """Fractional search; returns (k_F, l_F, R)."""
    if est_cfg.search == 'coarse_to_fine':
        coarse = matched_filter_surface(
            csf, k_I, l_I, est_cfg,
            fractional_grid(max(COARSE_STEP, est_cfg.doppler_step)),
            fractional_grid(max(COARSE_STEP, est_cfg.delay_step)),
        )
        a, b = coarse.best()
        kc, lc = coarse.k_offsets[a], coarse.l_offsets[b]
        surface = matched_filter_surface(
            csf, k_I, l_I, est_cfg,
            fractional_grid(est_cfg.doppler_step, kc - COARSE_STEP, kc + COARSE_STEP),
            fractional_grid(est_cfg.delay_step, lc - COARSE_STEP, lc + COARSE_STEP),
        )
    else:
        surface = matched_filter_surface(csf, k_I, l_I, est_cfg)
    a, b = surface.best()
    return float(surface.k_offsets[a]), float(surface.l_offsets[b]), complex(surface.values[a, b])


# ==================== Estimation ====================


def estimate_paths(csf: Csf, est_cfg: Optional[EstimatorConfig] = None) -> List[PathEstimate]:
    """
    Extract paths from a CSF with serial interference cancellation.

    Each iteration: the strongest residual cell gives (k_I, l_I); the
    fractional grid search picks (k_F, l_F); the path is accepted if its power
    exceeds the threshold, then its reconstruction is subtracted from the
    residual. Stops at the threshold, at max_paths, or when a candidate falls
    more than dynamic_range_db below the first path.

    Args:
        csf: Measured CSF
        est_cfg: Estimator settings (default: EstimatorConfig())

    Returns:
        PathEstimates in extraction order

    Example:
        estimates = estimate_paths(result.csf, EstimatorConfig(delay_step=0.1, doppler_step=0.01))
        delays_us = [round(e.delay * 1e6, 3) for e in estimates]
    """
    est_cfg = est_cfg or EstimatorConfig()
    cfg = csf.cfg
    if est_cfg.power_threshold is not None:
        threshold = est_cfg.power_threshold
    else:
        threshold = csf.noise_floor_estimate * 10.0 ** (DYNAMIC_THRESHOLD_DB / 10.0)

    residual = csf.data.copy()
    residual_csf = Csf(residual, cfg, csf.noise_floor_estimate)
    estimates: List[PathEstimate] = []
    first_power = None

    while len(estimates) < est_cfg.max_paths:
        row, l_I = np.unravel_index(int(np.argmax(np.abs(residual))), residual.shape)
        k_I = int(row) - cfg.N // 2
        k_F, l_F, amplitude = _search(residual_csf, k_I, int(l_I), est_cfg)
        power = abs(amplitude) ** 2

        if power <= threshold:
            logger.debug(f"Stopping: candidate power {power:.3e} <= threshold {threshold:.3e}")
            break
        if first_power is not None and power < first_power * 10.0 ** (-est_cfg.dynamic_range_db / 10.0):
            logger.debug("Stopping: candidate below the dynamic-range floor")
            break
        if first_power is None:
            first_power = power

        doppler = (k_I + k_F) * cfg.doppler_resolution
        delay = (int(l_I) + l_F) * cfg.delay_resolution
        estimates.append(PathEstimate(
            gain=abs(amplitude),
            phase=-2.0 * np.pi * doppler * delay,
            delay=delay,
            doppler=doppler,
            integer_taps=(k_I, int(l_I)),
            fractional_taps=(k_F, l_F),
            complex_gain=amplitude,
        ))
        residual -= amplitude * path_template(cfg, k_I + k_F, int(l_I) + l_F)
        logger.debug(
            f"Path {len(estimates)}: k={k_I}{k_F:+.3f}, l={int(l_I)}{l_F:+.3f}, "
            f"power={10 * np.log10(power):.2f} dB"
        )

    logger.info(f"Extracted {len(estimates)} paths")
    return estimates


# ==================== NMSE ====================


@dataclass
class NmseResult:
    """Index and amplitude NMSE with matching bookkeeping."""
    index_nmse: float
    amplitude_nmse: float
    matched: List[Tuple[int, int]] = field(default_factory=list)
    unmatched_truth: List[int] = field(default_factory=list)
    unmatched_estimates: List[int] = field(default_factory=list)

    def as_tuple(self) -> Tuple[float, float]:
        return self.index_nmse, self.amplitude_nmse


def match_paths(
    estimates: Sequence[PathEstimate],
    truth: PathSet,
    cfg: FrameConfig,
    radius: float = 1.0,
) -> Tuple[List[Tuple[int, int]], List[int], List[int]]:
    """
    Pair estimates with truth paths by nearest (Doppler tap, delay tap).

    Truth paths are visited strongest first; each takes the nearest unused
    estimate within `radius` taps.

    Returns:
        (matched (truth, estimate) index pairs, unmatched truth, unmatched estimates)
    """
    k_true, l_true = truth.taps(cfg)
    est_pos = np.array([[e.doppler_taps, e.delay_taps] for e in estimates]).reshape(-1, 2)
    used = set()
    matched = []
    unmatched_truth = []
    for t in sorted(range(truth.P), key=lambda i: -truth[i].power):
        if est_pos.size:
            dist = np.hypot(est_pos[:, 0] - k_true[t], est_pos[:, 1] - l_true[t])
            dist[list(used)] = np.inf
            j = int(np.argmin(dist))
            if dist[j] <= radius:
                used.add(j)
                matched.append((t, j))
                continue
        unmatched_truth.append(t)
    unmatched_est = [j for j in range(len(estimates)) if j not in used]
    return sorted(matched), sorted(unmatched_truth), unmatched_est


def nmse(estimates: Sequence[PathEstimate], truth: PathSet, cfg: FrameConfig) -> NmseResult:
    """
    Normalized mean square error of path indices and amplitudes.

    index_nmse = sum ||(k^, l^) - (k, l)||^2 / sum ||(k, l)||^2 and
    amplitude_nmse = sum (|h^| - |h|)^2 / sum |h|^2, over truth paths. A truth
    path without a match contributes its full position and amplitude as error.
    Extra estimates are reported, not scored.

    Args:
        estimates: Extracted paths
        truth: Ground-truth paths
        cfg: Frame configuration (tap units)

    Returns:
        NmseResult

    Example:
        index_err, amp_err = nmse(estimate_paths(csf), truth, cfg).as_tuple()
    """
    if truth.P == 0:
        raise EstimationError("NMSE needs at least one truth path", component='estimation')
    matched, unmatched_truth, unmatched_est = match_paths(estimates, truth, cfg)
    if unmatched_truth or unmatched_est:
        logger.warning(
            f"NMSE matching: {len(unmatched_truth)} truth paths and "
            f"{len(unmatched_est)} estimates unmatched"
        )
    k_true, l_true = truth.taps(cfg)
    amp_true = np.abs(truth.gains())

    index_err = 0.0
    amp_err = 0.0
    for t, j in matched:
        e = estimates[j]
        index_err += (e.doppler_taps - k_true[t]) ** 2 + (e.delay_taps - l_true[t]) ** 2
        amp_err += (e.gain - amp_true[t]) ** 2
    for t in unmatched_truth:
        index_err += k_true[t] ** 2 + l_true[t] ** 2
        amp_err += amp_true[t] ** 2

    index_norm = float(np.sum(k_true ** 2 + l_true ** 2))
    amp_norm = float(np.sum(amp_true ** 2))
    return NmseResult(
        index_nmse=_ratio(index_err, index_norm),
        amplitude_nmse=_ratio(amp_err, amp_norm),
        matched=matched,
        unmatched_truth=unmatched_truth,
        unmatched_estimates=unmatched_est,
    )


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return float(num / den)
    return 0.0 if num == 0 else math.inf
