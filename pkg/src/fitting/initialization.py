"""
初始位姿估计

由掩码的质心与二维主轴确定根平移/旋转，再在两种头尾朝向、两种腹背朝向与
一组关节弯曲角上做粗搜索，取初始损失最小的候选。
"""
import logging
import math
from typing import List, Tuple

import numpy as np

from camera.camera_model import CameraModel
from deformation.deform_params import DeformParams
from deformation.rotation import axis_angle_to_matrix, matrix_to_axis_angle
from fitting.fit_config import FitConfig
from fitting.objective import FrameObjective
from losses.silhouette_losses import binarize
from mesh.template_mesh import TemplateMesh
from rendering.soft_renderer import RenderConfig
from utils.exceptions import DmrError, TargetEmpty

logger = logging.getLogger(__name__)


def mask_principal_axis(mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    二值掩码的质心、主轴方向与沿主轴的像素跨度

    Returns:
        (质心 (u, v), 单位主轴, 跨度)

    Raises:
        TargetEmpty: 掩码没有前景
    """
    vs, us = np.nonzero(binarize(mask) > 0)
    if not len(us):
        raise TargetEmpty("目标掩码没有前景像素")
    pts = np.stack([us, vs], axis=1).astype(np.float64)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    if len(pts) < 2:
        return centroid, np.array([1.0, 0.0]), 1.0
    cov = centered.T @ centered / len(pts)
    eigval, eigvec = np.linalg.eigh(cov)
    axis = eigvec[:, np.argmax(eigval)]
    # 固定符号，保证结果确定
    if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
        axis = -axis
    proj = centered @ axis
    extent = max(float(proj.max() - proj.min()) + 1.0, 1.0)
    return centroid, axis, extent


def _orientation_candidates(angle: float) -> List[np.ndarray]:
    """两种头尾朝向 × 两种腹背朝向的根旋转矩阵"""
    flip = axis_angle_to_matrix(np.array([math.pi, 0.0, 0.0]))
    out = []
    for polarity in (0.0, math.pi):
        rz = axis_angle_to_matrix(np.array([0.0, 0.0, angle + polarity]))
        out.append(rz)
        out.append(rz @ flip)
    return out


def _root_pose(template: TemplateMesh, cam: CameraModel, render_cfg: RenderConfig,
               centroid: np.ndarray, extent: float) -> np.ndarray:
    """模板质心平移到掩码质心视线上、使投影长度与掩码跨度一致的深度处"""
    lengths = template.vertices.max(axis=0) - template.vertices.min(axis=0)
    body_mm = float(lengths[0]) * render_cfg.model_unit_mm
    focal = 0.5 * (cam.k[0, 0] + cam.k[1, 1])
    depth_mm = focal * body_mm / extent
    ray = np.linalg.solve(cam.k, np.array([centroid[0], centroid[1], 1.0]))
    target = ray * depth_mm / render_cfg.model_unit_mm
    return target - template.centroid


def _bend_candidates(cfg: FitConfig, rng: np.random.Generator) -> List[Tuple[float, float]]:
    grid = [math.radians(b) for b in cfg.init_bend_grid_deg] or [0.0]
    bends = [(b0, b1) for b0 in grid for b1 in grid]
    limit = max(abs(b) for b in grid) or math.radians(30.0)
    for _ in range(cfg.init_random_candidates):
        b0, b1 = rng.uniform(-limit, limit, size=2)
        bends.append((float(b0), float(b1)))
    return bends


def initial_guess(template: TemplateMesh, objective: FrameObjective, cfg: FitConfig) -> DeformParams:
    """
    粗搜索初始参数

    Args:
        template: 模板
        objective: 单帧目标（提供目标掩码、相机与损失）
        cfg: 拟合配置（弯曲网格、随机候选数与随机种子）

    Returns:
        初始损失最小的 DeformParams
    """
    centroid, axis, extent = mask_principal_axis(objective.target.pixels)
    angle = math.atan2(axis[1], axis[0])
    trans = _root_pose(template, objective.cam, objective.render_cfg, centroid, extent)
    rng = np.random.default_rng(cfg.seed)
    base = DeformParams.identity()

    best = None
    best_loss = math.inf
    evaluated = 0
    bends = _bend_candidates(cfg, rng)
    for rot in _orientation_candidates(angle):
        root_rot = matrix_to_axis_angle(rot)
        for b0, b1 in bends:
            # 关节绕模板 z 轴旋转即图像内弯曲
            joint_rot = np.array([[0.0, 0.0, b0], [0.0, 0.0, b1]])
            candidate = base.replace(root_rot=root_rot, root_trans=trans, joint_rot=joint_rot)
            try:
                loss = objective.evaluate(candidate, with_grad=False).report.total
            except DmrError as e:
                logger.debug(f"初始候选被跳过: {e}")
                continue
            evaluated += 1
            if np.isfinite(loss) and loss < best_loss:
                best, best_loss = candidate, loss

    if best is None:
        logger.warning("所有初始候选均无效，使用仅含根平移的初始值")
        return base.replace(root_trans=trans)
    logger.info(f"初始位姿搜索完成: {evaluated} 个候选，最佳初始损失 {best_loss:.6f}")
    return best
