"""Tests for experiment spec loading."""

import json
import math
from pathlib import Path

import pytest

from dd_sounder.config import (
    DEFAULT_OUTPUT_DIR,
    OUTPUT_DIR_ENV,
    SounderConfig,
    load_experiment_spec,
)
from dd_sounder.exceptions import ConfigurationError
from dd_sounder.validators import validate_experiment_spec


class TestSounderConfig:
    """Test SounderConfig and ExperimentSpec construction."""

    def test_from_dict(self, spec_dict):
        """Test building a spec from a dictionary."""
        spec = SounderConfig.from_dict(spec_dict).to_spec()

        assert spec.kind == 'papr_sweep'
        assert spec.frame.M == 256
        assert spec.frame.l_tau == 64
        assert math.isinf(spec.snr_db)
        assert spec.cfo_hz == 0.0
        assert spec.params['grid_sizes'] == [64, 128, 256]

    def test_json_file(self, spec_file):
        """Test JSON parses through the YAML loader."""
        spec = load_experiment_spec(str(spec_file))
        assert spec.kind == 'papr_sweep'
        assert spec.output_dir.endswith('out')
        assert spec.source == str(spec_file)

    def test_yaml_with_env_default(self, tmp_path, monkeypatch):
        """Test ${VAR:-default} falls back when VAR is unset."""
        monkeypatch.delenv('DD_TEST_SNR', raising=False)
        path = tmp_path / 'spec.yaml'
        path.write_text(
            "kind: sound\n"
            "impairments:\n"
            "  snr_db: ${DD_TEST_SNR:-25}\n"
            "  cfo_hz: 100\n"
        )
        spec = SounderConfig(str(path), auto_load_env=False).to_spec()
        assert spec.snr_db == 25.0
        assert spec.cfo_hz == 100.0

    def test_env_value_wins(self, tmp_path, monkeypatch):
        """Test a set variable replaces the default."""
        monkeypatch.setenv('DD_TEST_SNR', '12')
        path = tmp_path / 'spec.yaml'
        path.write_text("kind: sound\nimpairments:\n  snr_db: ${DD_TEST_SNR:-25}\n")
        assert SounderConfig(str(path), auto_load_env=False).to_spec().snr_db == 12.0

    def test_missing_env_var(self, tmp_path, monkeypatch):
        """Test ${VAR} without a default must be set."""
        monkeypatch.delenv('DD_TEST_MISSING', raising=False)
        path = tmp_path / 'spec.yaml'
        path.write_text("kind: ${DD_TEST_MISSING}\n")
        with pytest.raises(ConfigurationError) as exc_info:
            SounderConfig(str(path), auto_load_env=False)
        assert exc_info.value.details['variable'] == 'DD_TEST_MISSING'

    def test_env_file(self, tmp_path, monkeypatch):
        """Test variables are loaded from a .env file."""
        monkeypatch.setenv('DD_TEST_KIND', 'placeholder')
        monkeypatch.delenv('DD_TEST_KIND')
        env_file = tmp_path / '.env'
        env_file.write_text("DD_TEST_KIND=papr_sweep\n")
        path = tmp_path / 'spec.yaml'
        path.write_text("kind: ${DD_TEST_KIND}\n")

        spec = SounderConfig(str(path), env_file=str(env_file)).to_spec()
        assert spec.kind == 'papr_sweep'

    def test_missing_file(self, tmp_path):
        """Test a spec path that does not exist."""
        with pytest.raises(ConfigurationError):
            SounderConfig(str(tmp_path / 'absent.yaml'), auto_load_env=False)

    def test_invalid_yaml(self, tmp_path):
        """Test malformed YAML."""
        path = tmp_path / 'bad.yaml'
        path.write_text("kind: [unclosed\n")
        with pytest.raises(ConfigurationError):
            SounderConfig(str(path), auto_load_env=False)

    def test_non_mapping(self, tmp_path):
        """Test a spec that is not a mapping."""
        path = tmp_path / 'list.yaml'
        path.write_text("- a\n- b\n")
        with pytest.raises(ConfigurationError):
            SounderConfig(str(path), auto_load_env=False)

    def test_schema_version(self, spec_dict):
        """Test unknown schema versions are rejected."""
        spec_dict['schema_version'] = 2
        with pytest.raises(ConfigurationError) as exc_info:
            SounderConfig.from_dict(spec_dict).to_spec()
        assert exc_info.value.details['supported'] == 1

    def test_missing_kind(self):
        """Test kind is required."""
        with pytest.raises(ConfigurationError):
            SounderConfig.from_dict({'schema_version': 1}).to_spec()

    def test_frame_missing_keys(self):
        """Test an incomplete frame block names what is missing."""
        with pytest.raises(ConfigurationError) as exc_info:
            SounderConfig.from_dict({'kind': 'sound', 'frame': {'M': 64}}).to_spec()
        assert 'bandwidth_hz' in str(exc_info.value)

    def test_seed_scalar(self):
        """Test a single integer seed becomes a list."""
        spec = SounderConfig.from_dict({'kind': 'nmse_sweep', 'seeds': 7}).to_spec()
        assert spec.seeds == [7]

    def test_seed_range(self):
        """Test a {start, count} seed range expands in order."""
        spec = SounderConfig.from_dict({'kind': 'nmse_sweep', 'seeds': {'start': 5, 'count': 3}}).to_spec()
        assert spec.seeds == [5, 6, 7]

    def test_seed_range_incomplete(self):
        """Test a seed range without a count is rejected."""
        with pytest.raises(ConfigurationError):
            SounderConfig.from_dict({'kind': 'nmse_sweep', 'seeds': {'start': 5}}).to_spec()

    def test_output_dir_env(self, monkeypatch):
        """Test the output directory falls back to the environment, then the default."""
        monkeypatch.setenv(OUTPUT_DIR_ENV, '/tmp/dd-results')
        assert SounderConfig.from_dict({'kind': 'sound'}).to_spec().output_dir == '/tmp/dd-results'
        monkeypatch.delenv(OUTPUT_DIR_ENV)
        assert SounderConfig.from_dict({'kind': 'sound'}).to_spec().output_dir == DEFAULT_OUTPUT_DIR

    def test_iq_file_relative_to_spec(self, tmp_path):
        """Test IQ file paths resolve against the spec's directory."""
        path = tmp_path / 'spec.json'
        path.write_text(json.dumps({'kind': 'sound', 'channel': {'type': 'iq_file', 'path': 'rx.ddiq'}}))
        spec = load_experiment_spec(str(path))
        assert spec.channel['path'] == str(tmp_path / 'rx.ddiq')

    def test_estimator_block(self):
        """Test estimator settings pass through."""
        spec = SounderConfig.from_dict({
            'kind': 'sound',
            'estimator': {'delay_step': 0.05, 'search': 'coarse_to_fine'},
        }).to_spec()
        assert spec.estimator.delay_step == 0.05
        assert spec.estimator.search == 'coarse_to_fine'

    def test_to_dict_echo(self, spec_dict):
        """Test the manifest echo keeps infinite SNR serializable."""
        echo = SounderConfig.from_dict(spec_dict).to_spec().to_dict()
        assert echo['impairments']['snr_db'] == 'inf'
        assert echo['frame']['bandwidth_hz'] == 100e6
        json.dumps(echo)


SPECS_DIR = Path(__file__).resolve().parent.parent / 'specs'


class TestShippedSpecs:
    """Test the specs shipped with the package."""

    @pytest.mark.parametrize('spec_path', sorted(SPECS_DIR.glob('*.yaml')), ids=lambda p: p.stem)
    def test_spec_is_valid(self, spec_path, monkeypatch):
        """Test every shipped spec loads and validates."""
        monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
        spec = SounderConfig(str(spec_path), auto_load_env=False).to_spec()
        result = validate_experiment_spec(spec)
        assert not result.has_errors(), result.errors
        assert spec.output_dir.startswith(DEFAULT_OUTPUT_DIR)

    def test_sweeps_carry_enough_trials(self):
        """Test the NMSE and sync-gain specs average over enough seeds."""
        nmse = SounderConfig(str(SPECS_DIR / 'nmse.yaml'), auto_load_env=False).to_spec()
        sync = SounderConfig(str(SPECS_DIR / 'sync_gain.yaml'), auto_load_env=False).to_spec()
        assert len(set(nmse.seeds)) >= 50
        assert len(set(sync.seeds)) >= 100
