"""
有限差分梯度检验工具
"""
import logging
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)


def central_difference(func: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """
    中心差分数值梯度

    Args:
        func: 标量函数，输入与 x 同形状的数组
        x: 求导位置
        step: 差分步长

    Returns:
        与 x 同形状的数值梯度
    """
    x0 = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = grad.reshape(-1)
    for j in range(x0.size):
        xp = x0.copy().reshape(-1)
        xm = x0.copy().reshape(-1)
        xp[j] += step
        xm[j] -= step
        flat[j] = (func(xp.reshape(x0.shape)) - func(xm.reshape(x0.shape))) / (2.0 * step)
    return grad


def central_difference_jacobian(func: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """
    中心差分数值雅可比，返回形状 func(x).shape + x.shape
    """
    x0 = np.asarray(x, dtype=np.float64).reshape(-1)
    out_shape = np.shape(func(x0.copy()))
    jac = np.zeros(out_shape + (x0.size,))
    for j in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[j] += step
        xm[j] -= step
        jac[..., j] = (np.asarray(func(xp)) - np.asarray(func(xm))) / (2.0 * step)
    return jac


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """
    最大相对误差 |a - n| / max(|a|, |n|, floor)

    floor 防止两者都接近零时放大舍入误差。
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    err = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
    logger.debug(f"梯度检验最大相对误差: {err:.3e}")
    return err
