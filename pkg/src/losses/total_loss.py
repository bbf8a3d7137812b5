"""
重建总损失

L = L_iou + L_boundary + λ_s L_s + λ_t L_t + λ_n L_n + λ_l L_l
"""
import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from deformation.deform_params import DeformParams
from losses.regularizers import laplacian_loss, normal_consistency_loss, scale_trans_reg
from losses.silhouette_losses import boundary_loss, soft_iou_loss
from utils.exceptions import DegenerateFace, IsolatedVertex

logger = logging.getLogger(__name__)

LOSS_TERMS = ('total', 'iou', 'boundary', 'scale_reg', 'trans_reg', 'normal', 'laplacian')


class LossWeights(BaseModel):
    """正则项权重"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    lambda_s: float = Field(default=1.0, ge=0)
    lambda_t: float = Field(default=10.0, ge=0)
    lambda_n: float = Field(default=0.003, ge=0)
    lambda_l: float = Field(default=0.003, ge=0)


@dataclass(frozen=True)
class LossReport:
    """各损失项数值"""
    total: float
    iou: float
    boundary: float
    scale_reg: float
    trans_reg: float
    normal: float
    laplacian: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class LossGradients:
    """
    按使用方划分的梯度

    Attributes:
        pixels: (H, W)，交给渲染器反向
        vertices: (N, 3)，交给变形雅可比
        params: (PARAM_DIM,)，直接作用于参数
    """
    pixels: np.ndarray
    vertices: np.ndarray
    params: np.ndarray


def _mesh_term(name: str, fn: Callable, mesh, weight: float) -> Tuple[float, Optional[np.ndarray]]:
    """
    网格正则项；权重为 0 时退化网格记为 NaN 而不报错
    """
    if weight > 0:
        return fn(mesh)
    try:
        value, _ = fn(mesh)
    except (DegenerateFace, IsolatedVertex) as e:
        logger.debug(f"{name} 项无法计算（权重为 0）: {e}")
        return float('nan'), None
    return value, None


def total_loss(pred, target, target_sdf: np.ndarray, mesh, params: DeformParams, weights: LossWeights):
    """
    计算总损失及其梯度

    Args:
        pred: 渲染得到的软剪影
        target: 目标剪影（软，用于 IoU）
        target_sdf: 目标二值化后的有符号距离图
        mesh: 变形后网格
        params: 变形参数
        weights: 正则权重

    Returns:
        (LossReport, LossGradients)
    """
    iou, g_iou = soft_iou_loss(pred, target)
    boundary, g_boundary = boundary_loss(pred, target_sdf)
    loss_s, loss_t, g_s, g_t = scale_trans_reg(params)

    n_vertices = len(mesh.vertices)
    g_vertices = np.zeros((n_vertices, 3))
    total = iou + boundary + weights.lambda_s * loss_s + weights.lambda_t * loss_t
    normal, g_n = _mesh_term('normal', normal_consistency_loss, mesh, weights.lambda_n)
    laplacian, g_l = _mesh_term('laplacian', laplacian_loss, mesh, weights.lambda_l)
    # 权重为 0 的项只记录数值，不进入总损失与梯度
    if weights.lambda_n > 0:
        total += weights.lambda_n * normal
        g_vertices += weights.lambda_n * g_n
    if weights.lambda_l > 0:
        total += weights.lambda_l * laplacian
        g_vertices += weights.lambda_l * g_l
    report = LossReport(total, iou, boundary, loss_s, loss_t, normal, laplacian)
    grads = LossGradients(
        pixels=g_iou + g_boundary,
        vertices=g_vertices,
        params=weights.lambda_s * g_s + weights.lambda_t * g_t,
    )
    return report, grads
