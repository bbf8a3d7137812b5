"""
剪影损失：软 IoU、基于距离变换的边界损失
"""
import logging
from typing import Tuple

import numpy as np
from scipy import ndimage

from rendering.soft_renderer import SoftSilhouette
from utils.exceptions import DegenerateMask, DimensionMismatch, EmptyUnion

logger = logging.getLogger(__name__)


def _pixels(image) -> np.ndarray:
    if isinstance(image, SoftSilhouette):
        return image.pixels
    return np.asarray(image, dtype=np.float64)


def _check_shapes(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionMismatch(f"图像尺寸不一致: {a.shape} vs {b.shape}")


def binarize(mask, level: float = 0.5) -> np.ndarray:
    """灰度掩码 -> {0, 1}（>= level 为前景）"""
    return (_pixels(mask) >= level).astype(np.float64)


def soft_iou_loss(pred, target) -> Tuple[float, np.ndarray]:
    """
    软 IoU 损失 L = 1 - Σ(p·t) / Σ(p + t - p·t)

    Args:
        pred: 预测剪影
        target: 目标剪影（二值或软）

    Returns:
        (损失值, 对 pred 的逐像素梯度)

    Raises:
        EmptyUnion: 两幅图像全为零
    """
    p = _pixels(pred)
    t = _pixels(target)
    _check_shapes(p, t)
    inter = float(np.sum(p * t))
    union = float(np.sum(p + t - p * t))
    if union <= 0.0:
        raise EmptyUnion("预测与目标剪影都为空，IoU 无定义")
    loss = 1.0 - inter / union
    grad = -(t * union - inter * (1.0 - t)) / (union * union)
    return loss, grad


def distance_transform(mask) -> np.ndarray:
    """
    精确欧氏有符号距离图（像素为单位，内部为负）

    外部像素取到最近前景像素的距离；内部像素取 -(到最近背景像素的距离 - 1)，
    因此紧贴边界的内部像素为 0、外侧相邻像素为 1。

    Args:
        mask: 二值掩码（非二值输入按 0.5 二值化）

    Returns:
        与 mask 同形状的有符号距离图

    Raises:
        DegenerateMask: 缺少前景或背景像素
    """
    pos = binarize(mask).astype(bool)
    if not pos.any() or pos.all():
        raise DegenerateMask(f"掩码必须同时包含前景与背景像素（前景 {int(pos.sum())}/{pos.size}）")
    neg = ~pos
    # distance_transform_edt: 非零像素到最近零像素的精确欧氏距离
    dist_out = ndimage.distance_transform_edt(neg)
    dist_in = ndimage.distance_transform_edt(pos)
    return dist_out * neg - (dist_in - 1.0) * pos


def boundary_loss(pred, target_sdf: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    水平集边界损失 L = (1/|Ω|) Σ pred · sdf

    Returns:
        (损失值, 逐像素梯度 sdf / |Ω|)
    """
    p = _pixels(pred)
    sdf = np.asarray(target_sdf, dtype=np.float64)
    _check_shapes(p, sdf)
    n = p.size
    grad = sdf / n
    return float(np.sum(p * sdf) / n), grad
