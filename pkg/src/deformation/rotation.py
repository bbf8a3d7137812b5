"""
轴角旋转工具（指数映射 / 对数映射 / 旋转向量雅可比）
"""
import numpy as np

SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    """
    叉乘矩阵 [v]x，支持批量输入 (..., 3) -> (..., 3, 3)
    """
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def axis_angle_to_matrix(r: np.ndarray) -> np.ndarray:
    """
    Rodrigues 公式: 轴角向量 -> 旋转矩阵

    Args:
        r: (3,) 轴角向量，模长为旋转角（弧度）

    Returns:
        (3, 3) 旋转矩阵
    """
    r = np.asarray(r, dtype=np.float64)
    theta = float(np.linalg.norm(r))
    K = skew(r)
    if theta < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + (np.sin(theta) / theta) * K + ((1.0 - np.cos(theta)) / theta ** 2) * (K @ K)


def matrix_to_axis_angle(R: np.ndarray) -> np.ndarray:
    """
    对数映射: 旋转矩阵 -> 轴角向量（角度在 [0, π]）
    """
    R = np.asarray(R, dtype=np.float64)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    vee = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-6:
        return 0.5 * vee
    if np.pi - theta < 1e-4:
        # 接近 π 时 sinθ 不可用，从对称部分取旋转轴
        B = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if np.dot(axis, vee) < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * vee


def rotate_jacobian(r: np.ndarray, u: np.ndarray) -> np.ndarray:
    """
    d(R(r) u) / dr

    Args:
        r: (3,) 轴角向量
        u: (N, 3) 被旋转的向量

    Returns:
        (N, 3, 3) 雅可比，[n, a, b] = d(R u_n)_a / d r_b
    """
    r = np.asarray(r, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64).reshape(-1, 3)
    theta2 = float(r @ r)
    if theta2 < SMALL_ANGLE ** 2:
        return -skew(u)
    R = axis_angle_to_matrix(r)
    G = (np.outer(r, r) + (R.T - np.eye(3)) @ skew(r)) / theta2
    return -np.einsum('ab,nbc,cd->nad', R, skew(u), G)
