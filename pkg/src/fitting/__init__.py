"""
拟合模块
"""
from .adam import AdamState, adam_step
from .fit_config import FitConfig, StageConfig, default_stages
from .fitter import FitResult, fit_frame, sharp_iou
from .initialization import initial_guess, mask_principal_axis
from .objective import FrameObjective

__all__ = [
    'AdamState', 'adam_step', 'FitConfig', 'StageConfig', 'default_stages',
    'FitResult', 'fit_frame', 'sharp_iou', 'initial_guess', 'mask_principal_axis', 'FrameObjective',
]
