"""
配置管理模块
"""
import json
import os
import logging
from typing import Dict, Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from evaluation.histogram_metrics import HistogramConfig
from fitting.fit_config import FitConfig
from losses.total_loss import LossWeights
from rendering.soft_renderer import RenderConfig
from utils.exceptions import ConfigError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_CONFIG_PATH = "config/config.json"


class PathsConfig(BaseModel):
    """
    输入输出路径

    template 为空时使用程序化鱼体模板；annotations 为空时取模板同名 .json。
    """
    model_config = ConfigDict(frozen=True, extra='forbid')

    template: Optional[str] = None
    annotations: Optional[str] = None
    calibration: Optional[str] = None
    frames: Optional[str] = None
    output: str = "output"


class PipelineConfig(BaseModel):
    """完整运行配置"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    schema_version: int = SCHEMA_VERSION
    paths: PathsConfig = Field(default_factory=PathsConfig)
    fit: FitConfig = Field(default_factory=FitConfig)
    render: RenderConfig = Field(default_factory=RenderConfig)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    histogram: HistogramConfig = Field(default_factory=HistogramConfig)
    jobs: int = Field(default=1, ge=1)
    seed: int = 0

    @model_validator(mode='before')
    @classmethod
    def _inherit_seed(cls, data: Any) -> Any:
        """fit.seed 未显式给出时沿用顶层 seed"""
        if not isinstance(data, dict) or 'seed' not in data:
            return data
        seed = data['seed']
        fit = data.get('fit')
        if fit is None:
            return {**data, 'fit': {'seed': seed}}
        if isinstance(fit, dict) and 'seed' not in fit:
            return {**data, 'fit': {**fit, 'seed': seed}}
        if isinstance(fit, FitConfig) and 'seed' not in fit.model_fields_set:
            return {**data, 'fit': fit.model_copy(update={'seed': seed})}
        return data

    def with_overrides(self, frames: Optional[str] = None, output: Optional[str] = None,
                       jobs: Optional[int] = None, seed: Optional[int] = None,
                       use_bending: Optional[bool] = None) -> 'PipelineConfig':
        """命令行参数覆盖配置值（None 表示不覆盖）"""
        paths = self.paths
        if frames is not None:
            paths = paths.model_copy(update={'frames': frames})
        if output is not None:
            paths = paths.model_copy(update={'output': output})
        fit = self.fit
        if seed is not None:
            fit = fit.model_copy(update={'seed': seed})
        if use_bending is not None:
            fit = fit.model_copy(update={'use_bending': use_bending})
        data = self.model_dump()
        data.update(paths=paths.model_dump(), fit=fit.model_dump())
        if jobs is not None:
            data['jobs'] = jobs
        if seed is not None:
            data['seed'] = seed
        # 重新校验，非法覆盖值（如 jobs=0）在此报错
        return PipelineConfig.model_validate(data)


def _format_validation_error(error: ValidationError) -> list[str]:
    messages = []
    for item in error.errors():
        location = '.'.join(str(part) for part in item['loc']) or '<root>'
        messages.append(f"{location}: {item['msg']}")
    return messages


class ConfigManager:
    """配置管理器"""

    def __init__(self, config_path: str = DEFAULT_CONFIG_PATH):
        """
        初始化配置管理器

        Args:
            config_path: 配置文件路径
        """
        self.config_path = config_path
        self.config: Dict[str, Any] = {}

    def load(self) -> bool:
        """
        加载配置文件

        Returns:
            是否加载成功
        """
        if not os.path.exists(self.config_path):
            logger.warning(f"配置文件不存在: {self.config_path}")
            return False

        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                self.config = json.load(f)
            logger.info(f"配置文件加载成功: {self.config_path}")
            return True
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"加载配置文件失败: {e}")
            return False

    def save(self) -> bool:
        """
        保存配置文件

        Returns:
            是否保存成功
        """
        try:
            config_dir = os.path.dirname(self.config_path)
            if config_dir:
                os.makedirs(config_dir, exist_ok=True)

            with open(self.config_path, 'w', encoding='utf-8') as f:
                json.dump(self.config, f, indent=4, ensure_ascii=False)

            logger.info(f"配置文件保存成功: {self.config_path}")
            return True
        except OSError as e:
            logger.error(f"保存配置文件失败: {e}")
            return False

    def get(self, key: str, default: Any = None) -> Any:
        """
        获取配置项

        Args:
            key: 配置键
            default: 默认值

        Returns:
            配置值
        """
        return self.config.get(key, default)

    def set(self, key: str, value: Any):
        """
        设置配置项

        Args:
            key: 配置键
            value: 配置值
        """
        self.config[key] = value

    def update_section(self, section: str, values: Dict[str, Any]):
        """更新某个配置节"""
        if section not in self.config or not isinstance(self.config[section], dict):
            self.config[section] = {}
        self.config[section].update(values)

    def pipeline_config(self) -> PipelineConfig:
        """
        物化为 PipelineConfig

        Raises:
            ConfigError: 配置不符合模式
        """
        try:
            return PipelineConfig.model_validate(self.config)
        except ValidationError as e:
            raise ConfigError("; ".join(_format_validation_error(e))) from e

    def get_paths(self) -> PathsConfig:
        return self.pipeline_config().paths

    def get_fit_config(self) -> FitConfig:
        return self.pipeline_config().fit

    def get_render_config(self) -> RenderConfig:
        return self.pipeline_config().render

    def get_loss_weights(self) -> LossWeights:
        return self.pipeline_config().loss_weights

    def get_histogram_config(self) -> HistogramConfig:
        return self.pipeline_config().histogram

    def validate(self, check_paths: bool = True) -> tuple[bool, list[str]]:
        """
        验证配置

        Args:
            check_paths: 是否检查引用的输入路径存在

        Returns:
            (是否有效, 错误消息列表)
        """
        errors = []

        version = self.config.get('schema_version', SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            errors.append(f"不支持的 schema_version: {version}，当前仅支持 {SCHEMA_VERSION}")

        try:
            config = PipelineConfig.model_validate(self.config)
        except ValidationError as e:
            errors.extend(_format_validation_error(e))
            return (False, errors)

        if check_paths:
            errors.extend(path_errors(config.paths))

        return (len(errors) == 0, errors)

    def show_validation_errors(self, errors: list[str]):
        """
        显示验证错误

        Args:
            errors: 错误消息列表
        """
        if not errors:
            return

        print("\n" + "="*50)
        print("配置验证失败")
        print("="*50 + "\n")

        for i, error in enumerate(errors, 1):
            print(f"  {i}. {error}")

        print("\n请修正这些错误后重试\n")


def path_errors(paths: PathsConfig, require_frames: bool = False) -> list[str]:
    """检查已填写的输入路径是否存在"""
    errors = []
    for name in ('template', 'annotations', 'calibration', 'frames'):
        value = getattr(paths, name)
        if value and not os.path.exists(value):
            errors.append(f"paths.{name} 不存在: {value}")
    if require_frames and not paths.frames:
        errors.append("paths.frames 未配置")
    return errors
