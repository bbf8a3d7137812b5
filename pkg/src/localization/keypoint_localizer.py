"""
三维关键点绝对定位与体长测量

流程：
  1. 关键点投影 h_2d, c_2d, t_2d
  2. 中心点经参考平面单应求深度 Z_cc，得到 C'
  3. 将拟合模型平移到以 C' 为原点的 tmp 坐标系，得到 h', t'
  4. 头/尾视线与直线 h'C' / t'C' 最小二乘求交，得到 H', T'
  5. 长度 = |H'T'| × 脊线弧长 / 弦长
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from camera.camera_model import CameraModel, back_project
from camera.homography import PlaneHomography
from rendering.soft_renderer import project_keypoints
from utils.exceptions import NearParallel, PointAtInfinity, ZeroChord

logger = logging.getLogger(__name__)

PARALLEL_COND = 1e8
AT_INFINITY = 1e-12
MIN_CHORD = 1e-9


@dataclass(frozen=True, eq=False)
class RelativeKeypoints:
    """tmp 坐标系（相机坐标系平移到 C'）下的 h', c', t'（毫米）"""
    h: np.ndarray
    c: np.ndarray
    t: np.ndarray


@dataclass(frozen=True, eq=False)
class AbsoluteKeypoints:
    """相机坐标系下的 H', C', T'（毫米）"""
    h_abs: np.ndarray
    c_abs: np.ndarray
    t_abs: np.ndarray


@dataclass(frozen=True, eq=False)
class LengthRecord:
    """
    单帧长度测量

    status 为 'ok' 或跳过原因；跳过记录的数值字段为 NaN。
    """
    keypoints: Optional[AbsoluteKeypoints]
    chord_mm: float
    arc_ratio: float
    length_mm: float
    frame_id: str = ''
    track_id: str = ''
    status: str = 'ok'

    @property
    def ok(self) -> bool:
        return self.status == 'ok'

    @classmethod
    def skipped(cls, frame_id: str, track_id: str, status: str) -> 'LengthRecord':
        nan = float('nan')
        return cls(None, nan, nan, nan, frame_id, track_id, status)

    def with_ids(self, frame_id: str, track_id: str) -> 'LengthRecord':
        return LengthRecord(self.keypoints, self.chord_mm, self.arc_ratio, self.length_mm, frame_id, track_id, self.status)

    def to_row(self) -> Dict[str, Any]:
        """CSV 行：frame_id, track_id, Hx..Tz, chord_mm, arc_ratio, length_mm, status"""
        row: Dict[str, Any] = {'frame_id': self.frame_id, 'track_id': self.track_id}
        kp = self.keypoints
        for name, point in (('H', kp.h_abs if kp else None), ('C', kp.c_abs if kp else None), ('T', kp.t_abs if kp else None)):
            for axis, value in zip('xyz', point if point is not None else [float('nan')] * 3):
                row[f'{name}{axis}'] = float(value)
        row.update(chord_mm=self.chord_mm, arc_ratio=self.arc_ratio, length_mm=self.length_mm, status=self.status)
        return row


def center_depth(cam: CameraModel, hom: PlaneHomography, c2d: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    中心点深度

    w = H⁻¹ (U_c, V_c, 1)，Z_cc = 1 / w₃，C' = Z_cc · K⁻¹ (U_c, V_c, 1)

    Args:
        cam: 相机
        hom: 度量单应 K [r1 r2 T]
        c2d: 中心点像素坐标

    Returns:
        (Z_cc, C')

    Raises:
        PointAtInfinity: 视线与参考平面平行（或交于相机后方）
    """
    c2d = np.asarray(c2d, dtype=np.float64)
    w = np.linalg.solve(hom.h, np.array([c2d[0], c2d[1], 1.0]))
    scale = max(abs(w[0]), abs(w[1]), 1.0)
    if abs(w[2]) <= AT_INFINITY * scale:
        raise PointAtInfinity(f"中心点 {c2d.tolist()} 的视线与参考平面平行")
    z_cc = 1.0 / w[2]
    if z_cc <= 0:
        raise PointAtInfinity(f"中心点视线与参考平面交于相机后方 (Z = {z_cc:.4g} mm)")
    return float(z_cc), z_cc * back_project(cam, c2d)


def plane_coordinates(hom: PlaneHomography, c2d: np.ndarray) -> np.ndarray:
    """像素 -> 参考平面坐标 (X_w, Y_w) = (w₁/w₃, w₂/w₃)"""
    w = np.linalg.solve(hom.h, np.array([c2d[0], c2d[1], 1.0]))
    return w[:2] / w[2]


def to_tmp_frame(h: np.ndarray, c: np.ndarray, t: np.ndarray, c_abs: np.ndarray, mm_per_unit: float = 1000.0) -> RelativeKeypoints:
    """
    以 C' 为原点平移拟合模型：h' = (h - c)·s + C'，t' = (t - c)·s + C'，c' = C'

    Args:
        h, c, t: 拟合模型的关键点（模型单位）
        c_abs: 中心点绝对位置（毫米）
        mm_per_unit: 模型单位到毫米的比例
    """
    c_abs = np.asarray(c_abs, dtype=np.float64)
    h_rel = (np.asarray(h, dtype=np.float64) - c) * mm_per_unit + c_abs
    t_rel = (np.asarray(t, dtype=np.float64) - c) * mm_per_unit + c_abs
    return RelativeKeypoints(h_rel, c_abs.copy(), t_rel)


def intersect_ray_line(ray_dir: np.ndarray, line_a: np.ndarray, line_b: np.ndarray) -> np.ndarray:
    """
    过原点的视线 m·ray_dir 与过 line_a、line_b 的直线 a·line_a + (1-a)·line_b 的最小二乘交点

    Returns:
        两条直线最近点的中点（共面相交时即交点）

    Raises:
        NearParallel: 条件数 > 1e8
    """
    ray_dir = np.asarray(ray_dir, dtype=np.float64)
    line_a = np.asarray(line_a, dtype=np.float64)
    line_b = np.asarray(line_b, dtype=np.float64)
    # m·d - a·(A - B) = B
    system = np.column_stack([ray_dir, -(line_a - line_b)])
    cond = np.linalg.cond(system)
    if not np.isfinite(cond) or cond > PARALLEL_COND:
        raise NearParallel(f"视线与模型直线接近平行 (cond = {cond:.3g})")
    (m, a), *_ = np.linalg.lstsq(system, line_b, rcond=None)
    on_ray = m * ray_dir
    on_line = a * line_a + (1.0 - a) * line_b
    return 0.5 * (on_ray + on_line)


def spine_arc_ratio(mesh) -> Tuple[float, float]:
    """
    拟合网格脊线折线长度与头尾弦长

    Returns:
        (弧长, 弦长)，模型单位
    """
    spine = mesh.spine_points
    arc = float(np.sum(np.linalg.norm(np.diff(spine, axis=0), axis=1)))
    chord = float(np.linalg.norm(spine[-1] - spine[0]))
    return arc, chord


def measure_length(mesh, abs_kp: AbsoluteKeypoints, use_bending: bool = True) -> LengthRecord:
    """
    长度 = |H'T'| × 弧长 / 弦长

    Args:
        mesh: 拟合后的变形网格
        abs_kp: 绝对关键点
        use_bending: False 时弯曲比固定为 1（消融对照）

    Raises:
        ZeroChord: 头尾弦长为零
    """
    chord_mm = float(np.linalg.norm(abs_kp.h_abs - abs_kp.t_abs))
    if chord_mm <= MIN_CHORD:
        raise ZeroChord("绝对头尾点重合")
    arc_ratio = 1.0
    if use_bending:
        arc, chord = spine_arc_ratio(mesh)
        if chord <= MIN_CHORD:
            raise ZeroChord("拟合网格脊线头尾重合")
        # 三角不等式保证 arc >= chord，截断舍入误差
        arc_ratio = max(arc / chord, 1.0)
    return LengthRecord(abs_kp, chord_mm, arc_ratio, chord_mm * arc_ratio)


def localize_keypoints(cam: CameraModel, hom: PlaneHomography, h2d, c2d, t2d, h, c, t,
                       mm_per_unit: float = 1000.0) -> AbsoluteKeypoints:
    """
    由关键点投影与拟合模型关键点计算 H', C', T'
    """
    _, c_abs = center_depth(cam, hom, c2d)
    rel = to_tmp_frame(h, c, t, c_abs, mm_per_unit)
    h_abs = intersect_ray_line(back_project(cam, h2d), rel.h, rel.c)
    t_abs = intersect_ray_line(back_project(cam, t2d), rel.t, rel.c)
    return AbsoluteKeypoints(h_abs, c_abs, t_abs)


def localize_frame(fit, cam: CameraModel, hom: PlaneHomography, mm_per_unit: float = 1000.0,
                   use_bending: bool = True) -> LengthRecord:
    """
    单帧定位：投影 -> 反投影 -> 中心深度 -> tmp 坐标系 -> 求交 -> 测长

    Args:
        fit: FitResult（需带 mesh）
        cam: 相机
        hom: 度量参考平面单应
        mm_per_unit: 模型单位到毫米的比例
        use_bending: 是否使用弯曲比修正

    Returns:
        LengthRecord
    """
    mesh = fit.mesh
    h2d, c2d, t2d = project_keypoints(mesh, cam, mm_per_unit)
    abs_kp = localize_keypoints(
        cam, hom, h2d, c2d, t2d,
        mesh.keypoint('head'), mesh.keypoint('center'), mesh.keypoint('tail'),
        mm_per_unit,
    )
    record = measure_length(mesh, abs_kp, use_bending)
    logger.debug(f"定位完成: 弦长 {record.chord_mm:.2f} mm，弯曲比 {record.arc_ratio:.4f}，长度 {record.length_mm:.2f} mm")
    return record
