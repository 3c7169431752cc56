"""
Experiment configuration.

Loads experiment specs from JSON or YAML files with environment variable
interpolation and .env support, and turns them into ExperimentSpec objects.
"""

import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .core import FrameConfig
from .estimation import EstimatorConfig
from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXPERIMENT_KINDS = (
    'papr_sweep',
    'sync_gain_sweep',
    'dynamic_range_cfo',
    'nmse_sweep',
    'verify_rayleigh',
    'verify_pure_doppler',
    'sound',
    'los_nlos_demo',
)
STOCHASTIC_KINDS = ('sync_gain_sweep', 'dynamic_range_cfo', 'nmse_sweep', 'verify_rayleigh', 'los_nlos_demo')
CHANNEL_TYPES = ('paths', 'rayleigh', 'pure_doppler', 'iq_file')

OUTPUT_DIR_ENV = 'DD_SOUNDER_OUTPUT_DIR'
LOG_LEVEL_ENV = 'DD_SOUNDER_LOG_LEVEL'
DEFAULT_OUTPUT_DIR = 'results'

_ENV_PATTERN = re.compile(r'\$\{([^}:]+)(?::-(.*?))?\}')


@dataclass
class ExperimentSpec:
    """
    One experiment run.

    Attributes:
        kind: Experiment kind (see EXPERIMENT_KINDS)
        frame: Frame geometry, or None to use the kind's default
        channel: Channel description: {type: paths|rayleigh|pure_doppler|iq_file, ...}
        snr_db: Receiver SNR in dB (inf for noise-free)
        cfo_hz: Carrier frequency offset in Hz
        estimator: Path extraction settings
        seeds: Seeds for stochastic kinds
        output_dir: Result directory
        params: Kind-specific parameters
    """
    kind: str
    frame: Optional[FrameConfig] = None
    channel: Dict[str, Any] = field(default_factory=dict)
    snr_db: float = float('inf')
    cfo_hz: float = 0.0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    seeds: List[int] = field(default_factory=list)
    output_dir: str = DEFAULT_OUTPUT_DIR
    params: Dict[str, Any] = field(default_factory=dict)
    source: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Spec echo for the run manifest."""
        return {
            'schema_version': SCHEMA_VERSION,
            'kind': self.kind,
            'frame': self.frame.to_dict() if self.frame else None,
            'channel': self.channel,
            'impairments': {'snr_db': _finite_or_str(self.snr_db), 'cfo_hz': self.cfo_hz},
            'estimator': self.estimator.to_dict(),
            'seeds': list(self.seeds),
            'output_dir': str(self.output_dir),
            'params': self.params,
        }


def _finite_or_str(value: float):
    return value if value == value and abs(value) != float('inf') else str(value)


class SounderConfig:
    """
    Loader for experiment spec files.

    Examples:
        From a file:
        >>> config = SounderConfig('specs/rayleigh.yaml')
        >>> spec = config.to_spec()

        From a dictionary (for testing):
        >>> spec = SounderConfig.from_dict({'kind': 'papr_sweep'}).to_spec()
    """

    def __init__(
        self,
        config_path: Optional[str] = None,
        env_file: Optional[str] = None,
        auto_load_env: bool = True,
    ):
        """
        Args:
            config_path: Path to a .json, .yaml or .yml spec (optional)
            env_file: Path to a .env file (default: .env)
            auto_load_env: Load the .env file if it exists (default: True)

        Raises:
            ConfigurationError: If the spec file cannot be loaded
        """
        self.config_path = config_path
        self.env_file = env_file or '.env'
        self._config: Dict[str, Any] = {}

        if auto_load_env:
            self._load_env_file()
        if config_path:
            self._load_file()

    def _load_env_file(self) -> None:
        """Load .env defaults without overriding the environment."""
        if not Path(self.env_file).exists():
            logger.debug(f".env file not found: {self.env_file}")
            return
        try:
            from dotenv import load_dotenv
        except ImportError:
            logger.warning("python-dotenv not installed; .env file ignored")
            return
        load_dotenv(self.env_file, override=False)
        logger.info(f"Loaded environment from: {self.env_file}")

    def _load_file(self) -> None:
        config_file = Path(self.config_path)
        if not config_file.exists():
            raise ConfigurationError(
                f"Experiment spec not found: {self.config_path}",
                component='config',
                details={'absolute_path': str(config_file.absolute())},
            )
        try:
            content = config_file.read_text(encoding='utf-8')
            self._config = yaml.safe_load(self._interpolate_env_vars(content)) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(
                f"Invalid spec syntax: {e}", component='config', details={'file': self.config_path}
            )
        except OSError as e:
            raise ConfigurationError(
                f"Error reading spec: {e}", component='config', details={'file': self.config_path}
            )
        if not isinstance(self._config, dict):
            raise ConfigurationError("Spec must be a mapping", component='config')
        logger.info(f"Loaded experiment spec from: {self.config_path}")

    @staticmethod
    def _interpolate_env_vars(content: str) -> str:
        """
        Replace ${VAR} and ${VAR:-default} with environment values.

        Raises:
            ConfigurationError: If a required variable is not set
        """
        def replace_var(match):
            name, default = match.group(1), match.group(2)
            value = os.getenv(name)
            if value is not None:
                return value
            if default is not None:
                logger.debug(f"Environment variable {name} not set, using default: {default}")
                return default
            raise ConfigurationError(
                f"Environment variable not set: {name}. Set it in environment or .env file.",
                component='config',
                details={'variable': name},
            )

        return _ENV_PATTERN.sub(replace_var, content)

    @classmethod
    def from_dict(cls, config_dict: Dict[str, Any]) -> 'SounderConfig':
        """Create a config from an in-memory dict (no file, no .env)."""
        instance = cls(auto_load_env=False)
        instance._config = dict(config_dict)
        return instance

    @property
    def raw(self) -> Dict[str, Any]:
        return self._config

    def to_spec(self) -> ExperimentSpec:
        """
        Build the ExperimentSpec.

        Raises:
            ConfigurationError: On an unsupported schema version or invalid sections
        """
        data = self._config
        version = data.get('schema_version', SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(
                f"Unsupported schema_version {version}", component='config',
                details={'supported': SCHEMA_VERSION},
            )
        if 'kind' not in data:
            raise ConfigurationError("Spec is missing 'kind'", component='config')

        frame = FrameConfig.from_dict(data['frame']) if data.get('frame') else None
        impairments = data.get('impairments') or {}
        estimator = EstimatorConfig.from_dict(data.get('estimator') or {})
        output_dir = data.get('output_dir') or os.getenv(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR
        seeds = _expand_seeds(data.get('seeds') or [])

        spec = ExperimentSpec(
            kind=str(data['kind']),
            frame=frame,
            channel=dict(data.get('channel') or {}),
            snr_db=float(impairments.get('snr_db', float('inf'))),
            cfo_hz=float(impairments.get('cfo_hz', 0.0)),
            estimator=estimator,
            seeds=[int(s) for s in seeds],
            output_dir=str(output_dir),
            params=dict(data.get('params') or {}),
            source=self.config_path,
        )
        self._resolve_channel_paths(spec)
        return spec

    def _resolve_channel_paths(self, spec: ExperimentSpec) -> None:
        """Make iq_file paths relative to the spec file's directory."""
        if spec.channel.get('type') != 'iq_file' or not self.config_path:
            return
        path = Path(spec.channel.get('path', ''))
        if not path.is_absolute():
            spec.channel['path'] = str(Path(self.config_path).parent / path)


def load_experiment_spec(path: str, env_file: Optional[str] = None) -> ExperimentSpec:
    """Load a spec file and build its ExperimentSpec."""
    return SounderConfig(path, env_file=env_file).to_spec()


def _expand_seeds(seeds: Any) -> List[int]:
    """Seeds as a list: an integer, a list, or a {start, count} range."""
    if isinstance(seeds, int):
        return [seeds]
    if isinstance(seeds, dict):
        missing = {'start', 'count'} - set(seeds)
        if missing:
            raise ConfigurationError(
                f"Seed range is missing {sorted(missing)}", component='config',
                details={'seeds': seeds},
            )
        start, count = int(seeds['start']), int(seeds['count'])
        if count < 1:
            raise ConfigurationError(f"Seed range count must be >= 1, got {count}", component='config')
        return list(range(start, start + count))
    return [int(s) for s in seeds]
