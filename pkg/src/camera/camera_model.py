"""
针孔相机模型

像素约定：(U, V) 以像素中心计，原点在左上角像素中心，U 向右、V 向下。
世界/相机坐标单位均为毫米。
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from utils.exceptions import BehindCamera, SingularIntrinsics

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CameraModel:
    """
    相机内外参

    Attributes:
        k: 3x3 内参矩阵（像素）
        rot: 3x3 世界 -> 相机旋转
        trans: 相机坐标系下的平移（毫米）
        width, height: 图像尺寸（像素）
    """
    k: np.ndarray
    rot: np.ndarray
    trans: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        k = np.array(self.k, dtype=np.float64).reshape(3, 3)
        rot = np.array(self.rot, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.trans, dtype=np.float64).reshape(3)
        for arr in (k, rot, trans):
            arr.setflags(write=False)
        object.__setattr__(self, 'k', k)
        object.__setattr__(self, 'rot', rot)
        object.__setattr__(self, 'trans', trans)
        object.__setattr__(self, 'width', int(self.width))
        object.__setattr__(self, 'height', int(self.height))

        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ValueError("相机参数包含非有限值")
        if k[1, 0] != 0 or k[2, 0] != 0 or k[2, 1] != 0:
            raise ValueError(f"内参矩阵必须为上三角:\n{k}")
        if k[2, 2] != 1.0:
            raise ValueError(f"内参矩阵 k[2][2] 必须为 1，当前: {k[2, 2]}")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise SingularIntrinsics(f"焦距必须为正: fx={k[0, 0]}, fy={k[1, 1]}")
        if np.abs(rot @ rot.T - np.eye(3)).max() > ORTHONORMAL_TOL or abs(np.linalg.det(rot) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rot 必须是行列式为 +1 的正交矩阵")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"图像尺寸必须为正: {self.width}x{self.height}")

    @property
    def k_inv(self) -> np.ndarray:
        return np.linalg.inv(self.k)

    @property
    def principal_point(self) -> np.ndarray:
        return self.k[:2, 2].copy()

    def with_pose(self, rot: np.ndarray, trans: np.ndarray) -> 'CameraModel':
        return CameraModel(self.k, rot, trans, self.width, self.height)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'k': self.k.reshape(-1).tolist(),
            'rot': self.rot.reshape(-1).tolist(),
            'trans': self.trans.tolist(),
            'width': self.width,
            'height': self.height,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CameraModel':
        missing = [key for key in ('k', 'rot', 'trans', 'width', 'height') if key not in data]
        if missing:
            raise ValueError(f"标定记录缺少字段: {missing}")
        return cls(data['k'], data['rot'], data['trans'], data['width'], data['height'])


def make_intrinsics(focal: float, width: int, height: int, principal: Optional[np.ndarray] = None) -> np.ndarray:
    """
    构造方形像素内参，默认主点位于图像中心（像素中心约定）
    """
    if principal is None:
        principal = ((width - 1) / 2.0, (height - 1) / 2.0)
    return np.array([
        [focal, 0.0, principal[0]],
        [0.0, focal, principal[1]],
        [0.0, 0.0, 1.0],
    ])


def project(cam: CameraModel, point: np.ndarray) -> np.ndarray:
    """
    相机坐标系 3D 点 -> 像素坐标

    Args:
        cam: 相机
        point: (..., 3) 相机坐标（毫米）

    Returns:
        (..., 2) 像素坐标

    Raises:
        BehindCamera: 存在 Z <= 0 的点
    """
    point = np.asarray(point, dtype=np.float64)
    z = point[..., 2]
    if np.any(z <= 0):
        raise BehindCamera(f"点位于相机后方，最小深度 {float(np.min(z)):.6g} mm")
    hom = point @ cam.k.T
    return hom[..., :2] / hom[..., 2:3]


def back_project(cam: CameraModel, uv: np.ndarray) -> np.ndarray:
    """
    像素 -> Z = 1 的视线方向 K^-1 (U, V, 1)

    Args:
        cam: 相机
        uv: (..., 2) 像素坐标

    Returns:
        (..., 3) 视线方向，第三分量为 1
    """
    uv = np.asarray(uv, dtype=np.float64)
    hom = np.concatenate([uv, np.ones(uv.shape[:-1] + (1,))], axis=-1)
    try:
        rays = np.linalg.solve(cam.k, hom.reshape(-1, 3).T).T
    except np.linalg.LinAlgError as e:
        raise SingularIntrinsics(f"内参矩阵不可逆: {e}") from e
    rays = rays.reshape(hom.shape)
    # 上三角且 k22 = 1 时第三分量恒为 1
    rays[..., 2] = 1.0
    return rays


def world_to_camera(cam: CameraModel, point_w: np.ndarray) -> np.ndarray:
    return np.asarray(point_w, dtype=np.float64) @ cam.rot.T + cam.trans


def camera_to_world(cam: CameraModel, point_c: np.ndarray) -> np.ndarray:
    return (np.asarray(point_c, dtype=np.float64) - cam.trans) @ cam.rot


def load_calibration(path: str) -> CameraModel:
    """
    读取标定 JSON

    若文件缺少 rot/trans 但提供了 plane_correspondences（世界平面毫米坐标 -> 像素），
    则由 DLT 单应估计并分解得到位姿。

    Args:
        path: 标定文件路径

    Returns:
        CameraModel
    """
    # 延迟导入，homography 依赖本模块
    from camera.homography import decompose_plane_homography, estimate_plane_homography

    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)

    if ('rot' not in data or 'trans' not in data) and data.get('plane_correspondences'):
        pairs = data['plane_correspondences']
        world = np.array([p['world'] for p in pairs], dtype=np.float64)
        image = np.array([p['image'] for p in pairs], dtype=np.float64)
        k = np.array(data['k'], dtype=np.float64).reshape(3, 3)
        estimate = estimate_plane_homography(world, image)
        _, rot, trans = decompose_plane_homography(k, estimate)
        logger.info(f"由 {len(pairs)} 组平面对应点恢复相机位姿，重投影 RMS {estimate.rms:.4f} px")
        data = dict(data, rot=rot.reshape(-1).tolist(), trans=trans.tolist())

    cam = CameraModel.from_dict(data)
    logger.debug(f"标定已加载: {path} ({cam.width}x{cam.height})")
    return cam


def save_calibration(cam: CameraModel, path: str, plane_correspondences: Optional[list] = None):
    """写出标定 JSON"""
    data = cam.to_dict()
    if plane_correspondences:
        data['plane_correspondences'] = plane_correspondences
    out_dir = os.path.dirname(path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=4)
    except OSError as e:
        logger.error(f"保存标定失败: {path}: {e}")
        raise
