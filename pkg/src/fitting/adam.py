"""
Adam 更新（带偏差校正，支持参数掩码）
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np


@dataclass(frozen=True, eq=False)
class AdamState:
    """一阶/二阶矩估计与已执行步数"""
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> 'AdamState':
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(
    theta: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: Union[float, np.ndarray],
    mask: Optional[np.ndarray] = None,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[np.ndarray, AdamState]:
    """
    单步 Adam

    Args:
        theta: 参数向量
        grad: 梯度
        state: 当前矩估计
        lr: 学习率（标量或逐参数）
        mask: 本阶段启用的参数，未启用的参数与其矩估计保持不变

    Returns:
        (新参数, 新状态)
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape or state.m.shape != theta.shape:
        raise ValueError(f"形状不一致: theta {theta.shape}, grad {grad.shape}, state {state.m.shape}")
    if mask is None:
        mask = np.ones(theta.shape, dtype=bool)

    t = state.t + 1
    m = np.where(mask, beta1 * state.m + (1.0 - beta1) * grad, state.m)
    v = np.where(mask, beta2 * state.v + (1.0 - beta2) * grad * grad, state.v)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    step = lr * m_hat / (np.sqrt(v_hat) + eps)
    new_theta = np.where(mask, theta - step, theta)
    return new_theta, AdamState(m, v, t)
