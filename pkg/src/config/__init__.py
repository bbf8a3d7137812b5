"""
配置管理模块
"""
from .config_manager import ConfigManager, PipelineConfig, PathsConfig, path_errors, SCHEMA_VERSION

__all__ = ['ConfigManager', 'PipelineConfig', 'PathsConfig', 'path_errors', 'SCHEMA_VERSION']
