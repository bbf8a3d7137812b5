"""
配置加载、校验与命令行覆盖
"""
import json
import os

import pytest

from config.config_manager import SCHEMA_VERSION, ConfigManager, PathsConfig, PipelineConfig, path_errors
from fitting.fit_config import FitConfig
from utils.exceptions import ConfigError

EXAMPLE_CONFIG = os.path.join(os.path.dirname(__file__), '..', 'config', 'config.example.json')


def write_config(tmp_path, data) -> str:
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(data), encoding='utf-8')
    return str(path)


class TestConfigManager:
    def test_load_missing_file(self, tmp_path):
        assert not ConfigManager(str(tmp_path / 'nope.json')).load()

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / 'config.json'
        path.write_text('{not json', encoding='utf-8')
        assert not ConfigManager(str(path)).load()

    def test_save_and_reload(self, tmp_path):
        manager = ConfigManager(str(tmp_path / 'sub' / 'config.json'))
        manager.set('jobs', 3)
        manager.update_section('fit', {'max_iters': 800})
        assert manager.save()
        reloaded = ConfigManager(manager.config_path)
        assert reloaded.load()
        assert reloaded.get('jobs') == 3
        assert reloaded.get_fit_config().max_iters == 800

    def test_empty_config_uses_defaults(self):
        config = ConfigManager().pipeline_config()
        assert config == PipelineConfig()
        assert config.histogram.bins == 25
        assert config.render.sigma == 1e-4

    def test_shipped_example_config_is_valid(self):
        manager = ConfigManager(EXAMPLE_CONFIG)
        assert manager.load()
        valid, errors = manager.validate(check_paths=False)
        assert valid, errors

    def test_unknown_key_rejected(self, tmp_path):
        manager = ConfigManager(write_config(tmp_path, {'fit': {'learning_rate': 0.1}}))
        manager.load()
        valid, errors = manager.validate(check_paths=False)
        assert not valid
        assert any('fit.learning_rate' in e for e in errors)
        with pytest.raises(ConfigError):
            manager.pipeline_config()

    def test_schema_version_mismatch(self, tmp_path):
        manager = ConfigManager(write_config(tmp_path, {'schema_version': SCHEMA_VERSION + 1}))
        manager.load()
        valid, errors = manager.validate(check_paths=False)
        assert not valid
        assert 'schema_version' in errors[0]

    def test_missing_paths_reported(self, tmp_path):
        manager = ConfigManager(write_config(tmp_path, {'paths': {'calibration': str(tmp_path / 'calib.json')}}))
        manager.load()
        assert manager.validate(check_paths=False)[0]
        valid, errors = manager.validate(check_paths=True)
        assert not valid
        assert errors == [f"paths.calibration 不存在: {tmp_path / 'calib.json'}"]


class TestOverrides:
    def test_overrides_applied(self):
        config = PipelineConfig().with_overrides(frames='scene', output='out', jobs=4, seed=9, use_bending=False)
        assert config.paths.frames == 'scene'
        assert config.paths.output == 'out'
        assert config.jobs == 4
        assert config.seed == 9 and config.fit.seed == 9
        assert config.fit.use_bending is False

    def test_none_keeps_values(self):
        base = PipelineConfig(jobs=2)
        assert base.with_overrides() == base

    def test_invalid_override(self):
        with pytest.raises(ValueError):
            PipelineConfig().with_overrides(jobs=0)


class TestSeed:
    def test_top_level_seed_reaches_fit(self):
        assert PipelineConfig.model_validate({'seed': 7}).fit.seed == 7

    def test_fit_section_without_seed_inherits(self):
        config = PipelineConfig.model_validate({'seed': 5, 'fit': {'max_iters': 600}})
        assert config.fit.seed == 5
        assert config.fit.max_iters == 600

    def test_explicit_fit_seed_kept(self):
        config = PipelineConfig.model_validate({'seed': 5, 'fit': {'seed': 2}})
        assert config.seed == 5 and config.fit.seed == 2

    def test_fit_config_instance_inherits(self):
        assert PipelineConfig(seed=4, fit=FitConfig(max_iters=600)).fit.seed == 4
        assert PipelineConfig(seed=4, fit=FitConfig(seed=1)).fit.seed == 1

    def test_seed_from_file(self, tmp_path):
        manager = ConfigManager(write_config(tmp_path, {'seed': 11}))
        assert manager.load()
        assert manager.pipeline_config().fit.seed == 11
        assert manager.get_fit_config().seed == 11

    def test_example_config_uses_top_level_seed(self):
        manager = ConfigManager(EXAMPLE_CONFIG)
        manager.load()
        manager.set('seed', 3)
        assert manager.get_fit_config().seed == 3

    def test_override_after_inherit(self):
        config = PipelineConfig.model_validate({'seed': 7}).with_overrides(seed=8)
        assert config.seed == 8 and config.fit.seed == 8


class TestPathErrors:
    def test_require_frames(self):
        assert path_errors(PathsConfig(), require_frames=True) == ["paths.frames 未配置"]

    def test_existing_paths_pass(self, tmp_path):
        assert path_errors(PathsConfig(frames=str(tmp_path))) == []
