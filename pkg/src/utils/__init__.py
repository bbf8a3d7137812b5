"""
工具模块
"""
from .logger import setup_logging, get_logger

__all__ = ['setup_logging', 'get_logger']
