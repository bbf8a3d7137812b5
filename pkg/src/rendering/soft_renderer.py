"""
可微软剪影光栅化

每个面对每个像素给出覆盖概率 D_f(p) = sigmoid(s_f(p) · d²(p, Π(f)) / sigma)，
其中 d 为像素到投影三角形边界的二维距离，s_f 在三角形内为 +1、外为 -1；
剪影 I(p) = 1 - Π_f (1 - D_f(p))，在对数域累加。

sigma 以归一化图像坐标的平方为单位（长边映射到 [-1, 1]）。
模型坐标系与相机坐标系对齐，一个模型单位对应 model_unit_mm 毫米。
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from camera.camera_model import CameraModel, project
from utils.exceptions import DimensionMismatch, MeshBehindCamera

logger = logging.getLogger(__name__)

# 单个批次的 (面, 像素) 对上限
MAX_PAIRS_PER_CHUNK = 2_000_000
CULL_FACTOR = 3.0


class RenderConfig(BaseModel):
    """渲染参数"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    sigma: float = Field(default=1e-4, gt=0, description="边缘软化程度（归一化坐标平方）")
    gamma_clip: float = Field(default=1e-7, gt=0, lt=1, description="单面透明度下限")
    near_z: float = Field(default=1.0, gt=0, description="近裁剪深度（毫米）")
    eval_sigma: float = Field(default=1e-6, gt=0, description="硬 IoU 评估渲染使用的 sigma")
    model_unit_mm: float = Field(default=1000.0, gt=0, description="一个模型单位对应的毫米数")

    def sharp(self) -> 'RenderConfig':
        """评估用的锐利渲染配置"""
        return self.model_copy(update={'sigma': self.eval_sigma})


@dataclass(frozen=True, eq=False)
class SoftSilhouette:
    """(height, width) 覆盖率图像，取值 [0, 1]"""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise ValueError(f"剪影必须是二维图像，当前形状: {pixels.shape}")
        if pixels.size and (not np.all(np.isfinite(pixels)) or pixels.min() < 0.0 or pixels.max() > 1.0):
            raise ValueError("剪影取值必须位于 [0, 1]")
        object.__setattr__(self, 'pixels', pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    @property
    def area(self) -> float:
        return float(self.pixels.sum())

    @classmethod
    def empty(cls, width: int, height: int) -> 'SoftSilhouette':
        return cls(np.zeros((height, width)))


@dataclass
class _PairChunk:
    """一批未被剔除的 (面, 像素) 对及反向传播所需的中间量"""
    pix: np.ndarray
    va: np.ndarray
    vb: np.ndarray
    t: np.ndarray
    r: np.ndarray
    sign: np.ndarray
    x: np.ndarray
    active: np.ndarray


def _camera_points(vertices: np.ndarray, cam: CameraModel, cfg: RenderConfig) -> Tuple[np.ndarray, np.ndarray]:
    pc = np.asarray(vertices, dtype=np.float64) * cfg.model_unit_mm
    if len(pc) and pc[:, 2].min() <= cfg.near_z:
        raise MeshBehindCamera(f"网格顶点深度 {pc[:, 2].min():.4g} mm 不大于近裁剪面 {cfg.near_z} mm")
    uv = project(cam, pc) if len(pc) else np.zeros((0, 2))
    return pc, uv


def _pixel_sigma(cam: CameraModel, sigma: float) -> float:
    half = max(cam.width, cam.height) / 2.0
    return sigma * half * half


def _cull_radius(cam: CameraModel, sigma: float) -> float:
    return CULL_FACTOR * math.sqrt(sigma) * math.hypot(cam.width, cam.height)


def _face_windows(tri: np.ndarray, cam: CameraModel, radius: float):
    """每个面扩展 radius 后的像素包围盒 (x0, y0, nx, ny)"""
    lo = np.ceil(tri.min(axis=1) - radius)
    hi = np.floor(tri.max(axis=1) + radius)
    x0 = np.clip(lo[:, 0], 0, cam.width - 1).astype(np.int64)
    y0 = np.clip(lo[:, 1], 0, cam.height - 1).astype(np.int64)
    x1 = np.clip(hi[:, 0], 0, cam.width - 1).astype(np.int64)
    y1 = np.clip(hi[:, 1], 0, cam.height - 1).astype(np.int64)
    nx = np.where(hi[:, 0] < lo[:, 0], 0, x1 - x0 + 1)
    ny = np.where(hi[:, 1] < lo[:, 1], 0, y1 - y0 + 1)
    # 完全落在图像外
    outside = (hi[:, 0] < 0) | (lo[:, 0] > cam.width - 1) | (hi[:, 1] < 0) | (lo[:, 1] > cam.height - 1)
    nx = np.where(outside, 0, nx)
    ny = np.where(outside, 0, ny)
    return x0, y0, nx, ny


def _chunk_bounds(counts: np.ndarray) -> List[Tuple[int, int]]:
    bounds = []
    start = 0
    total = 0
    for fi, c in enumerate(counts.tolist()):
        if total and total + c > MAX_PAIRS_PER_CHUNK:
            bounds.append((start, fi))
            start, total = fi, 0
        total += c
    bounds.append((start, len(counts)))
    return bounds


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """点到线段的平方距离、最近点参数 t 与残差 r = p - closest"""
    ab = b - a
    ap = p - a
    denom = np.einsum('ij,ij->i', ab, ab)
    safe = np.where(denom > 0, denom, 1.0)
    t = np.where(denom > 0, np.clip(np.einsum('ij,ij->i', ap, ab) / safe, 0.0, 1.0), 0.0)
    r = ap - t[:, None] * ab
    return np.einsum('ij,ij->i', r, r), t, r


def _build_chunk(faces, tri, f, u, v, cam, radius, sigma_px, log_gamma) -> _PairChunk:
    p = np.stack([u, v], axis=1).astype(np.float64)
    d2s, ts, rs, crosses = [], [], [], []
    for e in range(3):
        a = tri[f, e]
        b = tri[f, (e + 1) % 3]
        d2, t, r = _segment_distance(p, a, b)
        d2s.append(d2)
        ts.append(t)
        rs.append(r)
        ab = b - a
        ap = p - a
        crosses.append(ab[:, 0] * ap[:, 1] - ab[:, 1] * ap[:, 0])
    d2_all = np.stack(d2s, axis=1)
    edge = np.argmin(d2_all, axis=1)
    idx = np.arange(len(f))
    d2 = d2_all[idx, edge]
    t = np.stack(ts, axis=1)[idx, edge]
    r = np.stack(rs, axis=1)[idx, edge]
    c = np.stack(crosses, axis=1)
    inside = np.all(c > 0, axis=1) | np.all(c < 0, axis=1)

    keep = inside | (d2 <= radius * radius)
    sign = np.where(inside, 1.0, -1.0)[keep]
    x = sign * d2[keep] / sigma_px
    # log(1 - D) = log sigmoid(-x)
    log_t = -np.logaddexp(0.0, x)
    active = log_t > log_gamma
    fk = f[keep]
    ek = edge[keep]
    return _PairChunk(
        pix=(v[keep] * cam.width + u[keep]),
        va=faces[fk, ek],
        vb=faces[fk, (ek + 1) % 3],
        t=t[keep],
        r=r[keep],
        sign=sign,
        x=x,
        active=active,
    )


def _rasterize(vertices: np.ndarray, faces: np.ndarray, cam: CameraModel, cfg: RenderConfig):
    """返回 (展平的对数透明度和, 对列表, 投影中间量)"""
    n_pix = cam.width * cam.height
    log_sum = np.zeros(n_pix)
    pc, uv = _camera_points(vertices, cam, cfg)
    chunks: List[_PairChunk] = []
    if not len(faces):
        return log_sum, chunks, pc

    sigma_px = _pixel_sigma(cam, cfg.sigma)
    radius = _cull_radius(cam, cfg.sigma)
    log_gamma = math.log(cfg.gamma_clip)
    tri = uv[faces]
    x0, y0, nx, ny = _face_windows(tri, cam, radius)
    counts = nx * ny

    for start, stop in _chunk_bounds(counts):
        c = counts[start:stop]
        total = int(c.sum())
        if total == 0:
            continue
        f = np.repeat(np.arange(start, stop), c)
        offsets = np.arange(total) - np.repeat(np.cumsum(c) - c, c)
        width = nx[f]
        u = x0[f] + offsets % width
        v = y0[f] + offsets // width
        chunk = _build_chunk(faces, tri, f, u, v, cam, radius, sigma_px, log_gamma)
        log_t = np.where(chunk.active, -np.logaddexp(0.0, chunk.x), log_gamma)
        # bincount 按数组顺序累加，每个像素内即按面索引顺序
        log_sum += np.bincount(chunk.pix, weights=log_t, minlength=n_pix)
        chunks.append(chunk)
    return log_sum, chunks, pc


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def render_silhouette_vjp(mesh, cam: CameraModel, cfg: RenderConfig) -> Tuple[SoftSilhouette, Callable[[np.ndarray], np.ndarray]]:
    """
    前向渲染并返回向量-雅可比积函数

    前向与反向共享同一组剔除结果。

    Args:
        mesh: DeformedMesh 或 TemplateMesh（顶点为模型单位）
        cam: 相机
        cfg: 渲染参数

    Returns:
        (剪影, vjp)，vjp(dL_dpixels) -> (N, 3) 顶点梯度
    """
    vertices = np.asarray(mesh.vertices, dtype=np.float64)
    faces = np.asarray(mesh.faces, dtype=np.int64)
    log_sum, chunks, pc = _rasterize(vertices, faces, cam, cfg)
    image = np.clip(-np.expm1(log_sum), 0.0, 1.0)
    silhouette = SoftSilhouette(image.reshape(cam.height, cam.width))
    sigma_px = _pixel_sigma(cam, cfg.sigma)
    n_vertices = len(vertices)

    def vjp(dL_dpixels: np.ndarray) -> np.ndarray:
        grad_pixels = np.asarray(dL_dpixels, dtype=np.float64)
        if grad_pixels.shape != (cam.height, cam.width):
            raise DimensionMismatch(f"像素梯度形状 {grad_pixels.shape} 与图像 {(cam.height, cam.width)} 不一致")
        g = grad_pixels.reshape(-1)
        transmit = 1.0 - image
        grad_uv = np.zeros((n_vertices, 2))
        for chunk in chunks:
            # dI/dx_f = (1 - I) · D_f，被截断的面梯度为 0
            dl_dx = g[chunk.pix] * transmit[chunk.pix] * _sigmoid(chunk.x) * chunk.active
            dl_dd2 = dl_dx * chunk.sign / sigma_px
            ga = -2.0 * (dl_dd2 * (1.0 - chunk.t))[:, None] * chunk.r
            gb = -2.0 * (dl_dd2 * chunk.t)[:, None] * chunk.r
            for axis in range(2):
                grad_uv[:, axis] += np.bincount(chunk.va, weights=ga[:, axis], minlength=n_vertices)
                grad_uv[:, axis] += np.bincount(chunk.vb, weights=gb[:, axis], minlength=n_vertices)
        return _projection_vjp(cam, pc, grad_uv) * cfg.model_unit_mm

    return silhouette, vjp


def _projection_vjp(cam: CameraModel, pc: np.ndarray, grad_uv: np.ndarray) -> np.ndarray:
    """像素坐标梯度 -> 相机坐标梯度"""
    if not len(pc):
        return np.zeros((0, 3))
    k = cam.k
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    gu, gv = grad_uv[:, 0], grad_uv[:, 1]
    out = np.zeros_like(pc)
    out[:, 0] = gu * k[0, 0] / z
    out[:, 1] = (gu * k[0, 1] + gv * k[1, 1]) / z
    out[:, 2] = -(gu * (k[0, 0] * x + k[0, 1] * y) + gv * k[1, 1] * y) / (z * z)
    return out


def render_silhouette(mesh, cam: CameraModel, cfg: RenderConfig) -> SoftSilhouette:
    """
    渲染软剪影

    Args:
        mesh: DeformedMesh（顶点为模型单位，相机对齐坐标系）
        cam: 相机（仅使用内参与图像尺寸）
        cfg: 渲染参数

    Returns:
        SoftSilhouette

    Raises:
        MeshBehindCamera: 存在深度不大于 near_z 的顶点
    """
    silhouette, _ = render_silhouette_vjp(mesh, cam, cfg)
    return silhouette


def render_backward(mesh, cam: CameraModel, cfg: RenderConfig, dL_dpixels: np.ndarray) -> np.ndarray:
    """
    像素梯度经聚合、sigmoid、点到三角形距离与透视投影回传到顶点

    Returns:
        (N, 3) dL/dV（模型单位）
    """
    _, vjp = render_silhouette_vjp(mesh, cam, cfg)
    return vjp(dL_dpixels)


def project_keypoints(mesh, cam: CameraModel, model_unit_mm: float = 1000.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    头/中心/尾关键点的像素投影 (h_2d, c_2d, t_2d)

    Raises:
        BehindCamera: 关键点深度 <= 0
    """
    points = np.stack([mesh.keypoint(name) for name in ('head', 'center', 'tail')]) * model_unit_mm
    uv = project(cam, points)
    return uv[0], uv[1], uv[2]


def hard_mask(silhouette: SoftSilhouette, level: float = 0.5) -> SoftSilhouette:
    """按阈值二值化（>= level 为前景）"""
    return SoftSilhouette((silhouette.pixels >= level).astype(np.float64))


def hard_iou(a: SoftSilhouette, b: SoftSilhouette, level: float = 0.5) -> float:
    """
    两幅剪影 0.5 水平集的交并比，两者都为空时返回 1
    """
    if a.shape != b.shape:
        raise DimensionMismatch(f"图像尺寸不一致: {a.shape} vs {b.shape}")
    ma = a.pixels >= level
    mb = b.pixels >= level
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 1.0
    return np.count_nonzero(ma & mb) / union
