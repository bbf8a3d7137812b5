"""
软光栅化渲染模块
"""
from .soft_renderer import (
    RenderConfig, SoftSilhouette, render_silhouette, render_backward, render_silhouette_vjp,
    project_keypoints, hard_mask, hard_iou,
)

__all__ = [
    'RenderConfig', 'SoftSilhouette', 'render_silhouette', 'render_backward', 'render_silhouette_vjp',
    'project_keypoints', 'hard_mask', 'hard_iou',
]
