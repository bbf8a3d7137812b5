"""
线性混合蒙皮（LBS）与高斯混合蒙皮权重

每个顶点依次经过：
  (a) 关节缩放（绕关节枢轴，按权重混合）
  (b) 关节旋转（绕关节枢轴，按权重混合）
  (c) 关节平移（按权重混合）
  (d) 根缩放、绕模板质心的根旋转、根平移
关节枢轴与关键点随同一变换移动。
"""
import logging
from dataclasses import dataclass

import numpy as np

from deformation.deform_params import DeformParams, NUM_JOINTS, PARAM_DIM, PARAM_SLICES, SKIN_EPS, TRIL_INDEX
from deformation.rotation import axis_angle_to_matrix, rotate_jacobian
from mesh.template_mesh import DeformedMesh, TemplateMesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SkinWeights:
    """(N, 2) 蒙皮权重，每行和为 1"""
    w: np.ndarray

    @property
    def num_vertices(self) -> int:
        return len(self.w)


def _gaussian_weights(points: np.ndarray, joints: np.ndarray, params: DeformParams):
    """返回 (w, d, Ad): 权重 (N,2)、相对关节偏移 (N,2,3)、A_j d (N,2,3)"""
    d = points[:, None, :] - joints[None, :, :]
    Ad = np.einsum('jab,njb->nja', params.skin_chol, d)
    # q = d^T (A^T A + eps I) d
    q = np.sum(Ad * Ad, axis=2) + SKIN_EPS * np.sum(d * d, axis=2)
    logits = -0.5 * q
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    w = e / e.sum(axis=1, keepdims=True)
    return w, d, Ad


def skin_weights(template: TemplateMesh, params: DeformParams) -> SkinWeights:
    """
    高斯混合蒙皮权重 W_{j,i} ∝ exp(-1/2 (V_i - V_j)^T Q_j (V_i - V_j))

    Args:
        template: 模板网格（2 个关节）
        params: 变形参数

    Returns:
        行归一化的 SkinWeights
    """
    w, _, _ = _gaussian_weights(template.vertices, template.joints, params)
    return SkinWeights(w)


@dataclass
class _Forward:
    """正向计算的中间量，供雅可比复用"""
    w: np.ndarray
    d: np.ndarray
    Ad: np.ndarray
    s: np.ndarray
    R: np.ndarray
    e: np.ndarray
    Re: np.ndarray
    Vc: np.ndarray
    u: np.ndarray
    R0: np.ndarray
    s0: float
    out: np.ndarray


def _forward(points: np.ndarray, template: TemplateMesh, params: DeformParams) -> _Forward:
    P = template.joints
    w, d, Ad = _gaussian_weights(points, P, params)
    s = params.joint_scale
    Va = points + np.einsum('nj,j,nja->na', w, s - 1.0, d)
    R = np.stack([axis_angle_to_matrix(params.joint_rot[j]) for j in range(NUM_JOINTS)])
    e = Va[:, None, :] - P[None, :, :]
    Re = np.einsum('jab,njb->nja', R, e)
    # 写成增量形式（利用 Σ_j w_j = 1），恒等参数下结果与模板逐位相同
    Vb = Va + np.einsum('nj,nja->na', w, Re - e)
    Vc = Vb + w @ params.joint_trans
    c = template.centroid
    u = Vc - c
    R0 = axis_angle_to_matrix(params.root_rot)
    s0 = params.root_scale
    out = Vc + u @ (s0 * R0 - np.eye(3)).T + params.root_trans
    return _Forward(w, d, Ad, s, R, e, Re, Vc, u, R0, s0, out)


def transform_points(points: np.ndarray, template: TemplateMesh, params: DeformParams) -> np.ndarray:
    """
    用模板的蒙皮场变换任意点

    Args:
        points: (M, 3) 模板坐标系中的点

    Returns:
        (M, 3) 变形后的点
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return _forward(points, template, params).out


def deform(template: TemplateMesh, params: DeformParams) -> DeformedMesh:
    """
    对模板执行 LBS 变形

    Args:
        template: 模板网格
        params: 变形参数

    Returns:
        拓扑与模板共享的 DeformedMesh
    """
    vertices = transform_points(template.vertices, template, params)
    joints = transform_points(template.joints, template, params)
    return DeformedMesh(template, vertices, joints)


def deform_jacobian(template: TemplateMesh, params: DeformParams) -> np.ndarray:
    """
    变形顶点对全部参数的解析雅可比

    Args:
        template: 模板网格
        params: 变形参数

    Returns:
        (N, 3, PARAM_DIM)，[i, a, k] = d V_{i,a} / d θ_k
    """
    fw = _forward(template.vertices, template, params)
    n = template.num_vertices
    J = np.zeros((n, 3, PARAM_DIM))
    M = fw.s0 * fw.R0

    # 根变换
    J[:, :, PARAM_SLICES['root_trans']] = np.eye(3)[None]
    J[:, :, PARAM_SLICES['root_log_scale']] = (fw.s0 * fw.u @ fw.R0.T)[:, :, None]
    J[:, :, PARAM_SLICES['root_rot']] = fw.s0 * rotate_jacobian(params.root_rot, fw.u)

    # 关节参数先求 dVc/dθ，再左乘 M
    B = np.einsum('nj,jab->nab', fw.w, fw.R)
    dVc = np.zeros((n, 3, PARAM_DIM))
    rot_start = PARAM_SLICES['joint_rot'].start
    trans_start = PARAM_SLICES['joint_trans'].start
    scale_start = PARAM_SLICES['joint_log_scale'].start
    skin_start = PARAM_SLICES['skin_chol'].start

    # dVc/dw_k，w 视为独立变量
    g = (template.joints[None, :, :] + fw.Re + params.joint_trans[None, :, :]
         + np.einsum('nab,j,njb->nja', B, fw.s - 1.0, fw.d))
    g_mean = np.einsum('nj,nja->na', fw.w, g)

    for j in range(NUM_JOINTS):
        wj = fw.w[:, j]
        dVc[:, :, rot_start + 3 * j: rot_start + 3 * j + 3] = wj[:, None, None] * rotate_jacobian(params.joint_rot[j], fw.e[:, j])
        dVc[:, :, trans_start + 3 * j: trans_start + 3 * j + 3] = wj[:, None, None] * np.eye(3)[None]
        dVc[:, :, scale_start + j] = np.einsum('nab,nb->na', B, (wj * fw.s[j])[:, None] * fw.d[:, j])

        # dVc/dq_j = -1/2 w_j (g_j - Σ_k w_k g_k)，dq_j/dA_j[a,b] = 2 (A_j d_j)_a d_j[b]
        dq = -0.5 * wj[:, None] * (g[:, j] - g_mean)
        for k, (a, b) in enumerate(TRIL_INDEX):
            dVc[:, :, skin_start + 6 * j + k] = dq * (2.0 * fw.Ad[:, j, a] * fw.d[:, j, b])[:, None]

    inner = slice(rot_start, PARAM_DIM)
    J[:, :, inner] = np.einsum('ab,nbk->nak', M, dVc[:, :, inner])
    return J
