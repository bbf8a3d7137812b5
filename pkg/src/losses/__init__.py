"""
损失函数模块
"""
from .silhouette_losses import binarize, soft_iou_loss, boundary_loss, distance_transform
from .regularizers import scale_trans_reg, normal_consistency_loss, laplacian_loss, uniform_laplacian
from .total_loss import LossWeights, LossReport, LossGradients, total_loss, LOSS_TERMS

__all__ = [
    'binarize', 'soft_iou_loss', 'boundary_loss', 'distance_transform',
    'scale_trans_reg', 'normal_consistency_loss', 'laplacian_loss', 'uniform_laplacian',
    'LossWeights', 'LossReport', 'LossGradients', 'total_loss', 'LOSS_TERMS',
]
