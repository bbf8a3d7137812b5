"""
掩码与调试图像读写（8 位灰度 PNG、浮点 PFM、彩色叠加图）
"""
import logging
import os

import numpy as np
from PIL import Image

from rendering.soft_renderer import SoftSilhouette

logger = logging.getLogger(__name__)


def _ensure_parent(path: str):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def save_mask_png(image, path: str):
    """[0, 1] 图像 -> 8 位灰度 PNG"""
    pixels = image.pixels if isinstance(image, SoftSilhouette) else np.asarray(image, dtype=np.float64)
    data = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    _ensure_parent(path)
    Image.fromarray(data).save(path)


def load_mask_png(path: str) -> SoftSilhouette:
    """
    读取掩码图像（任意模式转灰度），取值缩放到 [0, 1]

    Raises:
        FileNotFoundError: 文件不存在
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"掩码文件不存在: {path}")
    with Image.open(path) as img:
        data = np.asarray(img.convert('L'), dtype=np.float64) / 255.0
    return SoftSilhouette(data)


def save_float_pfm(image, path: str):
    """无损浮点图像（单通道 PFM，小端，行自下而上）"""
    pixels = image.pixels if isinstance(image, SoftSilhouette) else np.asarray(image, dtype=np.float64)
    height, width = pixels.shape
    _ensure_parent(path)
    with open(path, 'wb') as f:
        f.write(b'Pf\n')
        f.write(f'{width} {height}\n'.encode('ascii'))
        f.write(b'-1.0\n')
        f.write(np.flipud(pixels).astype('<f4').tobytes())


def load_float_pfm(path: str) -> np.ndarray:
    with open(path, 'rb') as f:
        header = f.readline().strip()
        if header != b'Pf':
            raise ValueError(f"不是单通道 PFM 文件: {path}")
        width, height = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        dtype = '<f4' if scale < 0 else '>f4'
        data = np.frombuffer(f.read(), dtype=dtype, count=width * height)
    return np.flipud(data.reshape(height, width)).astype(np.float64)


def save_overlay_png(target, pred, path: str, level: float = 0.5):
    """
    目标与渲染结果 0.5 水平集叠加图

    红：仅目标，绿：仅渲染，黄：重合
    """
    t = (target.pixels if isinstance(target, SoftSilhouette) else np.asarray(target)) >= level
    p = (pred.pixels if isinstance(pred, SoftSilhouette) else np.asarray(pred)) >= level
    rgb = np.zeros(t.shape + (3,), dtype=np.uint8)
    rgb[t, 0] = 255
    rgb[p, 1] = 255
    _ensure_parent(path)
    Image.fromarray(rgb).save(path)
