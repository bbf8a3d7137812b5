"""
参考平面单应：H = K [r1 r2 T]，以及归一化 DLT 估计
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from camera.camera_model import CameraModel
from utils.exceptions import DegenerateConfiguration, DegeneratePlane

logger = logging.getLogger(__name__)

MIN_DET = 1e-12
# DLT 设计矩阵次小奇异值与最大奇异值之比低于此值视为解不唯一
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PlaneHomography:
    """世界 Z=0 平面齐次坐标 -> 图像齐次坐标"""
    h: np.ndarray
    rms: Optional[float] = field(default=None)

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64).reshape(3, 3)
        h.setflags(write=False)
        object.__setattr__(self, 'h', h)
        if not np.all(np.isfinite(h)) or abs(np.linalg.det(h)) <= MIN_DET:
            raise DegeneratePlane(f"单应矩阵奇异: det = {np.linalg.det(h) if np.all(np.isfinite(h)) else 'nan'}")

    @property
    def h_inv(self) -> np.ndarray:
        return np.linalg.inv(self.h)

    def normalized(self) -> np.ndarray:
        """h[2][2] 缩放为 1 的副本"""
        return self.h / self.h[2, 2]


def _homogenize(points: np.ndarray) -> np.ndarray:
    return np.concatenate([points, np.ones(points.shape[:-1] + (1,))], axis=-1)


def apply_homography(h: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    对 (..., 2) 点施加 3x3 单应并去齐次化
    """
    h = h.h if isinstance(h, PlaneHomography) else np.asarray(h, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    out = _homogenize(points) @ h.T
    return out[..., :2] / out[..., 2:3]


def compose_homography(cam: CameraModel) -> PlaneHomography:
    """
    由相机内外参构造参考平面单应

    Args:
        cam: 相机

    Returns:
        h = k · [rot 第一列, rot 第二列, trans]

    Raises:
        DegeneratePlane: 相机中心位于平面上
    """
    h = cam.k @ np.column_stack([cam.rot[:, 0], cam.rot[:, 1], cam.trans])
    return PlaneHomography(h)


def _normalizing_transform(points: np.ndarray) -> np.ndarray:
    """平移到质心，并缩放使 x、y 方差之和为 2"""
    mean = points.mean(axis=0)
    spread = points.var(axis=0).sum()
    if spread <= 0:
        raise DegenerateConfiguration("对应点全部重合")
    s = np.sqrt(2.0 / spread)
    return np.array([
        [s, 0.0, -s * mean[0]],
        [0.0, s, -s * mean[1]],
        [0.0, 0.0, 1.0],
    ])


def _has_collinear_triple(points: np.ndarray) -> bool:
    n = len(points)
    scale = max(np.abs(points - points.mean(axis=0)).max(), 1e-300)
    p = points / scale
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a = p[j] - p[i]
                b = p[k] - p[i]
                if abs(a[0] * b[1] - a[1] * b[0]) < 1e-9:
                    return True
    return False


def estimate_plane_homography(world: np.ndarray, image: np.ndarray) -> PlaneHomography:
    """
    由 >= 4 组 (世界平面点 mm, 像素点) 对应估计单应（Hartley 归一化 DLT）

    Args:
        world: (N, 2) 参考平面坐标（毫米）
        image: (N, 2) 像素坐标

    Returns:
        h[2][2] = 1 的 PlaneHomography，rms 为重投影均方根误差（像素）

    Raises:
        DegenerateConfiguration: 点数不足、四点中三点共线或解不唯一
    """
    world = np.asarray(world, dtype=np.float64).reshape(-1, 2)
    image = np.asarray(image, dtype=np.float64).reshape(-1, 2)
    if len(world) != len(image):
        raise DegenerateConfiguration(f"对应点数量不一致: {len(world)} vs {len(image)}")
    if len(world) < 4:
        raise DegenerateConfiguration(f"至少需要 4 组对应点，当前: {len(world)}")
    if len(world) == 4 and _has_collinear_triple(world):
        raise DegenerateConfiguration("四个世界点中存在三点共线")

    t_world = _normalizing_transform(world)
    t_image = _normalizing_transform(image)
    xw = _homogenize(world) @ t_world.T
    xi = _homogenize(image) @ t_image.T

    n = len(world)
    A = np.zeros((2 * n, 9))
    u = xi[:, 0:1]
    v = xi[:, 1:2]
    A[0::2, 0:3] = xw
    A[0::2, 6:9] = -u * xw
    A[1::2, 3:6] = xw
    A[1::2, 6:9] = -v * xw

    _, s, vt = np.linalg.svd(A)
    if s[-2] <= RANK_TOL * s[0]:
        raise DegenerateConfiguration("对应点构型退化，单应解不唯一")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_image) @ h_norm @ t_world

    if abs(h[2, 2]) > MIN_DET:
        h = h / h[2, 2]
    else:
        logger.warning("估计得到的 h[2][2] 接近 0，改用 Frobenius 范数归一化")
        h = h / np.linalg.norm(h)

    residual = apply_homography(h, world) - image
    rms = float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))
    try:
        estimate = PlaneHomography(h, rms=rms)
    except DegeneratePlane as e:
        raise DegenerateConfiguration(f"估计得到奇异单应: {e}") from e
    logger.debug(f"DLT 单应估计完成: {n} 组对应点，RMS {rms:.4f} px")
    return estimate


def decompose_plane_homography(k: np.ndarray, hom: PlaneHomography) -> Tuple[PlaneHomography, np.ndarray, np.ndarray]:
    """
    将只确定到尺度的单应恢复为度量形式 K [r1 r2 T]

    Args:
        k: 3x3 内参
        hom: 任意尺度的平面单应

    Returns:
        (度量单应, rot, trans)，trans 的 Z 分量为正（平面在相机前方）
    """
    k = np.asarray(k, dtype=np.float64).reshape(3, 3)
    m = np.linalg.solve(k, hom.h)
    norms = np.linalg.norm(m[:, 0]) + np.linalg.norm(m[:, 1])
    if norms <= 0:
        raise DegeneratePlane("单应前两列为零")
    lam = 2.0 / norms
    if m[2, 2] * lam < 0:
        lam = -lam
    r1 = lam * m[:, 0]
    r2 = lam * m[:, 1]
    trans = lam * m[:, 2]
    approx = np.column_stack([r1, r2, np.cross(r1, r2)])
    # 投影到最近的旋转矩阵
    u, _, vt = np.linalg.svd(approx)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        u[:, -1] = -u[:, -1]
        rot = u @ vt
    metric = PlaneHomography(k @ np.column_stack([rot[:, 0], rot[:, 1], trans]))
    return metric, rot, trans
