"""
长度分布评估：直方图、偏差、RMSD、KL 散度、EMD
"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils.exceptions import AllOutOfRange, EdgeMismatch

logger = logging.getLogger(__name__)

KL_EPS = 1e-10


class HistogramConfig(BaseModel):
    """等宽分箱，默认 [500, 1000] mm、25 箱（每箱 20 mm）"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    low_mm: float = 500.0
    high_mm: float = 1000.0
    bins: int = Field(default=25, gt=0)

    @model_validator(mode='after')
    def _check_range(self):
        if self.high_mm <= self.low_mm:
            raise ValueError(f"high_mm ({self.high_mm}) 必须大于 low_mm ({self.low_mm})")
        return self

    def edges(self) -> np.ndarray:
        return np.linspace(self.low_mm, self.high_mm, self.bins + 1)


@dataclass(frozen=True, eq=False)
class LengthHistogram:
    """
    归一化长度直方图

    Attributes:
        bin_edges: 严格递增的分箱边界（毫米）
        mass: 每箱占比，和为 1
        count: 落在范围内的长度数
        dropped: 范围外被丢弃的长度数
    """
    bin_edges: np.ndarray
    mass: np.ndarray
    count: int = 0
    dropped: int = 0

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        mass = np.asarray(self.mass, dtype=np.float64)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("分箱边界必须严格递增且至少两个")
        if mass.shape != (len(edges) - 1,):
            raise ValueError(f"mass 长度 {mass.shape} 与分箱数 {len(edges) - 1} 不一致")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > 1e-9:
            raise ValueError("mass 必须非负且和为 1")
        object.__setattr__(self, 'bin_edges', edges)
        object.__setattr__(self, 'mass', mass)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def mean(self) -> float:
        return float(np.dot(self.mass, self.centers))


@dataclass(frozen=True)
class HistogramMetrics:
    bias_mm: float
    rmsd_fraction: float
    kl: float
    emd_mm: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def build_histogram(lengths: Iterable[float], edges: Sequence[float]) -> LengthHistogram:
    """
    按分箱统计长度占比

    区间左闭右开，最后一箱包含右端点；范围外的长度被丢弃并计数。

    Args:
        lengths: 长度（毫米）
        edges: 分箱边界

    Raises:
        AllOutOfRange: 没有长度落在范围内
    """
    values = np.asarray(list(lengths), dtype=np.float64)
    values = values[np.isfinite(values)]
    edges = np.asarray(edges, dtype=np.float64)
    counts, _ = np.histogram(values, bins=edges)
    in_range = int(counts.sum())
    dropped = len(values) - in_range
    if in_range == 0:
        raise AllOutOfRange(f"{len(values)} 个长度全部落在 [{edges[0]}, {edges[-1]}] 之外")
    if dropped:
        logger.info(f"直方图丢弃 {dropped} 个范围外长度")
    return LengthHistogram(edges, counts / in_range, in_range, dropped)


def _check_edges(pred: LengthHistogram, gt: LengthHistogram):
    if pred.bin_edges.shape != gt.bin_edges.shape or not np.array_equal(pred.bin_edges, gt.bin_edges):
        raise EdgeMismatch("预测与真值直方图的分箱边界不一致")


def emd(pred: LengthHistogram, gt: LengthHistogram) -> float:
    """一维 Wasserstein 距离：Σ |CDF_p - CDF_g| · 相邻箱中心间距"""
    _check_edges(pred, gt)
    cdf_diff = np.cumsum(pred.mass - gt.mass)[:-1]
    return float(np.sum(np.abs(cdf_diff) * np.diff(pred.centers)))


def kl_divergence(pred: LengthHistogram, gt: LengthHistogram, eps: float = KL_EPS) -> float:
    """KL(gt ‖ pred)，两侧加 eps 后重新归一化"""
    _check_edges(pred, gt)
    p = pred.mass + eps
    g = gt.mass + eps
    p = p / p.sum()
    g = g / g.sum()
    return float(np.sum(g * np.log(g / p)))


def histogram_metrics(pred: LengthHistogram, gt: LengthHistogram) -> HistogramMetrics:
    """
    Args:
        pred: 预测长度直方图
        gt: 真值长度直方图

    Returns:
        HistogramMetrics(bias_mm, rmsd_fraction, kl, emd_mm)

    Raises:
        EdgeMismatch: 分箱边界不一致
    """
    _check_edges(pred, gt)
    bias = pred.mean - gt.mean
    rmsd = float(np.sqrt(np.mean((pred.mass - gt.mass) ** 2)))
    return HistogramMetrics(bias, rmsd, kl_divergence(pred, gt), emd(pred, gt))


def plot_data(pred: LengthHistogram, gt: LengthHistogram) -> pd.DataFrame:
    """外部绘图用的表：bin_center, pred_mass, gt_mass"""
    _check_edges(pred, gt)
    return pd.DataFrame({'bin_center': pred.centers, 'pred_mass': pred.mass, 'gt_mass': gt.mass})


def average_track_lengths(records) -> Tuple[pd.DataFrame, List[str]]:
    """
    按个体（track）平均各帧长度，跳过状态非 ok 的帧

    Args:
        records: LengthRecord 列表，或带 track_id/length_mm/status 列的 DataFrame

    Returns:
        (每个 track 一行的表: track_id, length_mm, chord_mm, n_frames; 没有有效帧的 track 列表)
    """
    if isinstance(records, pd.DataFrame):
        frame = records.copy()
    else:
        frame = pd.DataFrame([r.to_row() for r in records])
    columns = ['track_id', 'length_mm', 'chord_mm', 'n_frames']
    if frame.empty:
        return pd.DataFrame(columns=columns), []

    frame['track_id'] = frame['track_id'].astype(str)
    if 'status' not in frame:
        frame['status'] = 'ok'
    if 'chord_mm' not in frame:
        frame['chord_mm'] = np.nan
    valid = frame[(frame['status'] == 'ok') & np.isfinite(frame['length_mm'].astype(float))]
    all_tracks = sorted(frame['track_id'].unique())
    grouped = valid.groupby('track_id', sort=True)
    summary = pd.DataFrame({
        'length_mm': grouped['length_mm'].mean(),
        'chord_mm': grouped['chord_mm'].mean(),
        'n_frames': grouped.size(),
    }).reset_index()
    summary = summary[columns]
    omitted = [t for t in all_tracks if t not in set(summary['track_id'])]
    if omitted:
        logger.warning(f"{len(omitted)} 个 track 没有有效帧，已省略: {omitted}")
    return summary, omitted
