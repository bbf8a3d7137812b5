"""
参数与网格正则项：缩放/平移正则、法向一致性、均匀拉普拉斯
"""
import logging
from typing import Dict, Optional, Set, Tuple

import numpy as np

from deformation.deform_params import DeformParams, PARAM_DIM, PARAM_SLICES
from mesh.template_mesh import DEGENERATE_AREA, face_adjacency, uniform_laplacian, vertex_neighbors
from utils.exceptions import DegenerateFace

logger = logging.getLogger(__name__)


def scale_trans_reg(params: DeformParams) -> Tuple[float, float, np.ndarray, np.ndarray]:
    """
    关节缩放与平移正则

    L_s = Σ_j (S_j - 1)²，L_t = Σ_j ‖T_j‖²（只含关节项）

    Returns:
        (L_s, L_t, dL_s/dθ, dL_t/dθ)，梯度为 (PARAM_DIM,) 向量
    """
    s = params.joint_scale
    loss_s = float(np.sum((s - 1.0) ** 2))
    loss_t = float(np.sum(params.joint_trans ** 2))
    grad_s = np.zeros(PARAM_DIM)
    grad_t = np.zeros(PARAM_DIM)
    # S = exp(log s)
    grad_s[PARAM_SLICES['joint_log_scale']] = 2.0 * (s - 1.0) * s
    grad_t[PARAM_SLICES['joint_trans']] = 2.0 * params.joint_trans.reshape(-1)
    return loss_s, loss_t, grad_s, grad_t


def _face_pairs(mesh) -> np.ndarray:
    template = getattr(mesh, 'template', None)
    if template is not None:
        return template.face_pairs
    return face_adjacency(mesh.faces)


def normal_consistency_loss(mesh) -> Tuple[float, np.ndarray]:
    """
    相邻面（共享一条边）法向一致性 Σ (1 - cos(n_i, n_j))

    Returns:
        (损失值, (N, 3) 顶点梯度)

    Raises:
        DegenerateFace: 存在面积 < 1e-12 的面
    """
    v = np.asarray(mesh.vertices, dtype=np.float64)
    f = np.asarray(mesh.faces, dtype=np.int64)
    grad = np.zeros_like(v)
    pairs = _face_pairs(mesh)
    if not len(f):
        return 0.0, grad

    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    cross = np.cross(e1, e2)
    norm = np.linalg.norm(cross, axis=1)
    if (0.5 * norm).min() < DEGENERATE_AREA:
        bad = int(np.argmin(norm))
        raise DegenerateFace(f"第 {bad} 个面退化，面积 {0.5 * norm[bad]:.3e}")
    if not len(pairs):
        return 0.0, grad
    n = cross / norm[:, None]

    fi, fj = pairs[:, 0], pairs[:, 1]
    loss = float(np.sum(1.0 - np.einsum('ij,ij->i', n[fi], n[fj])))

    # dL/dn_i = -n_j
    grad_n = np.zeros_like(n)
    for axis in range(3):
        grad_n[:, axis] -= np.bincount(fi, weights=n[fj, axis], minlength=len(f))
        grad_n[:, axis] -= np.bincount(fj, weights=n[fi, axis], minlength=len(f))
    # 单位化：dn/dc = (I - n nᵀ) / |c|
    grad_c = (grad_n - np.einsum('ij,ij->i', grad_n, n)[:, None] * n) / norm[:, None]
    # c = e1 × e2
    g1 = np.cross(e2, grad_c)
    g2 = np.cross(grad_c, e1)
    for axis in range(3):
        grad[:, axis] += np.bincount(f[:, 1], weights=g1[:, axis], minlength=len(v))
        grad[:, axis] += np.bincount(f[:, 2], weights=g2[:, axis], minlength=len(v))
        grad[:, axis] -= np.bincount(f[:, 0], weights=g1[:, axis] + g2[:, axis], minlength=len(v))
    return loss, grad


def laplacian_loss(mesh, neighbors: Optional[Dict[int, Set[int]]] = None) -> Tuple[float, np.ndarray]:
    """
    拉普拉斯正则 Σ_i ‖V_i - mean_{j∈N_i} V_j‖²

    Args:
        mesh: 网格
        neighbors: 邻接表，缺省时取模板缓存的拉普拉斯矩阵或由面推出

    Returns:
        (损失值, (N, 3) 顶点梯度 2 LᵀL V)
    """
    v = np.asarray(mesh.vertices, dtype=np.float64)
    template = getattr(mesh, 'template', None)
    if neighbors is not None:
        lap = uniform_laplacian(neighbors, len(v))
    elif template is not None:
        lap = template.laplacian
    else:
        lap = uniform_laplacian(vertex_neighbors(mesh), len(v))
    delta = lap @ v
    loss = float(np.sum(delta * delta))
    return loss, 2.0 * (lap.T @ delta)
