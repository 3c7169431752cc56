"""
Experiment spec validation.
"""

import logging
from pathlib import Path
from typing import Dict, List

from .config import CHANNEL_TYPES, EXPERIMENT_KINDS, STOCHASTIC_KINDS, ExperimentSpec

logger = logging.getLogger(__name__)

# Keys each channel type must carry
_CHANNEL_KEYS = {
    'paths': ('paths',),
    'rayleigh': ('delays_s', 'powers_db', 'max_dopplers_hz'),
    'pure_doppler': ('delays_s', 'dopplers_hz', 'powers_db'),
    'iq_file': ('path',),
}


class ValidationResult:
    """Container for validation results."""

    def __init__(self):
        self.errors: List[str] = []
        self.warnings: List[str] = []

    def add_error(self, message: str) -> None:
        self.errors.append(message)
        logger.error(f"Validation error: {message}")

    def add_warning(self, message: str) -> None:
        self.warnings.append(message)
        logger.warning(f"Validation warning: {message}")

    def has_errors(self) -> bool:
        return len(self.errors) > 0

    def has_warnings(self) -> bool:
        return len(self.warnings) > 0

    def to_dict(self) -> Dict[str, List[str]]:
        return {'errors': self.errors, 'warnings': self.warnings}

    def __repr__(self) -> str:
        return f"ValidationResult(errors={len(self.errors)}, warnings={len(self.warnings)})"


def validate_experiment_spec(spec: ExperimentSpec) -> ValidationResult:
    """
    Check an ExperimentSpec before running it.

    Frame and estimator blocks are validated when the spec is built; this
    covers the cross-field rules.

    Args:
        spec: Spec to check

    Returns:
        ValidationResult with errors and warnings
    """
    result = ValidationResult()

    if spec.kind not in EXPERIMENT_KINDS:
        result.add_error(f"Unknown experiment kind '{spec.kind}'. Known: {', '.join(EXPERIMENT_KINDS)}")
        return result

    if spec.kind in STOCHASTIC_KINDS and not spec.seeds:
        result.add_error(f"Experiment kind '{spec.kind}' needs a nonempty seeds list")
    if len(set(spec.seeds)) != len(spec.seeds):
        result.add_warning("Duplicate seeds will repeat identical trials")

    for message in spec.estimator.validate():
        result.add_error(f"estimator: {message}")

    _validate_channel(spec, result)

    if spec.cfo_hz and spec.frame is not None:
        if abs(spec.cfo_hz) >= spec.frame.N / 2 * spec.frame.doppler_resolution:
            result.add_warning("CFO exceeds the measurable Doppler range and will wrap")
    return result


def _validate_channel(spec: ExperimentSpec, result: ValidationResult) -> None:
    channel = spec.channel
    if not channel:
        if spec.kind == 'sound':
            result.add_error(f"Experiment kind '{spec.kind}' needs a channel block")
        return

    ctype = channel.get('type')
    if ctype not in CHANNEL_TYPES:
        result.add_error(f"Unknown channel type '{ctype}'. Known: {', '.join(CHANNEL_TYPES)}")
        return

    missing = [key for key in _CHANNEL_KEYS[ctype] if key not in channel]
    if missing:
        result.add_error(f"Channel type '{ctype}' missing keys: {', '.join(missing)}")
        return

    if ctype == 'iq_file':
        if spec.kind != 'sound':
            result.add_error("Channel type 'iq_file' is only valid for kind 'sound'")
        if not Path(channel['path']).exists():
            result.add_error(f"IQ file not found: {channel['path']}")
        if spec.frame is None:
            result.add_error("An IQ-file capture needs an explicit frame block")
    elif ctype in ('rayleigh', 'pure_doppler'):
        lengths = {len(channel[key]) for key in _CHANNEL_KEYS[ctype]}
        if len(lengths) != 1:
            result.add_error(f"Channel '{ctype}' lists must have equal lengths")
        if any(d < 0 for d in channel['delays_s']):
            result.add_error("Channel delays must be >= 0")
    elif ctype == 'paths' and not channel['paths']:
        result.add_error("Channel 'paths' list is empty")

    if spec.frame is not None and 'delays_s' in channel and channel['delays_s']:
        max_delay = spec.frame.l_tau * spec.frame.delay_resolution
        if max(channel['delays_s']) > max_delay:
            result.add_error(
                f"Channel delay {max(channel['delays_s']):.3e} s exceeds the measurable "
                f"{max_delay:.3e} s"
            )
