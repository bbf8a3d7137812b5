"""
结果持久化模块
"""
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from utils.exceptions import SchemaMismatch

logger = logging.getLogger(__name__)

LENGTH_COLUMNS = [
    'frame_id', 'track_id',
    'Hx', 'Hy', 'Hz', 'Cx', 'Cy', 'Cz', 'Tx', 'Ty', 'Tz',
    'chord_mm', 'arc_ratio', 'length_mm', 'status',
]
TRACK_COLUMNS = ['track_id', 'length_mm', 'chord_mm', 'n_frames']


class ResultRecorder:
    """拟合与测长结果记录器"""

    def __init__(self, out_dir: str = "output"):
        """
        初始化结果记录器

        Args:
            out_dir: 输出目录
        """
        self.out_dir = out_dir
        self.lengths_file = os.path.join(out_dir, "lengths.csv")
        self.tracks_file = os.path.join(out_dir, "tracks.csv")
        self.summary_file = os.path.join(out_dir, "summary.json")

        os.makedirs(out_dir, exist_ok=True)
        logger.info(f"结果记录器初始化: {self.out_dir}")

    def path(self, *parts: str) -> str:
        full = os.path.join(self.out_dir, *parts)
        parent = os.path.dirname(full)
        if parent:
            os.makedirs(parent, exist_ok=True)
        return full

    def save_lengths(self, records: Iterable[Any]) -> str:
        """
        保存逐帧长度记录

        Args:
            records: LengthRecord 列表
        """
        rows = [r.to_row() for r in records]
        frame = pd.DataFrame(rows, columns=LENGTH_COLUMNS)
        return self._write_csv(frame, self.lengths_file, "长度记录")

    def save_tracks(self, tracks: pd.DataFrame) -> str:
        """保存逐个体平均长度"""
        return self._write_csv(tracks[TRACK_COLUMNS], self.tracks_file, "个体平均长度")

    def save_trace(self, name: str, trace: List[Any], iou_checks: Optional[Dict[int, float]] = None) -> str:
        """
        保存拟合轨迹 CSV（iter, 各损失项, hard_iou）

        Args:
            name: 文件名（不含扩展名）
            trace: LossReport 列表
            iou_checks: 迭代序号 -> 硬 IoU
        """
        iou_checks = iou_checks or {}
        rows = []
        for i, report in enumerate(trace):
            row = {'iter': i}
            row.update(report.to_dict())
            row['hard_iou'] = iou_checks.get(i, np.nan)
            rows.append(row)
        return self._write_csv(pd.DataFrame(rows), self.path(f"{name}.csv"), "拟合轨迹")

    def save_table(self, name: str, frame: pd.DataFrame, label: str = "表格") -> str:
        """保存任意表格到输出目录"""
        return self._write_csv(frame, self.path(name if name.endswith(".csv") else f"{name}.csv"), label)

    def save_json(self, name: str, data: Dict[str, Any]) -> str:
        path = self.path(name if name.endswith('.json') else f"{name}.json")
        try:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(data, f, indent=4, ensure_ascii=False)
        except OSError as e:
            logger.error(f"保存 {path} 失败: {e}")
            raise
        logger.debug(f"已保存: {path}")
        return path

    def save_summary(self, stats: Dict[str, Any]) -> str:
        """保存运行汇总（带时间戳）"""
        stats = dict(stats, last_updated=datetime.now().isoformat())
        return self.save_json(os.path.basename(self.summary_file), stats)

    def _write_csv(self, frame: pd.DataFrame, path: str, label: str) -> str:
        try:
            frame.to_csv(path, index=False)
        except OSError as e:
            logger.error(f"保存{label}失败: {path}: {e}")
            raise
        logger.info(f"{label}已保存: {path} ({len(frame)} 行)")
        return path


def load_length_table(path: str, required=('track_id', 'length_mm')) -> pd.DataFrame:
    """
    读取长度 CSV，只保留 status 为 ok（若有该列）且长度有限的行

    Raises:
        SchemaMismatch: 缺少必需列
    """
    try:
        frame = pd.read_csv(path, dtype={'track_id': str, 'frame_id': str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logger.error(f"读取长度文件失败: {path}: {e}")
        raise
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaMismatch(f"{path} 缺少列: {missing}")
    if 'status' in frame.columns:
        frame = frame[frame['status'] == 'ok']
    lengths = pd.to_numeric(frame['length_mm'], errors='coerce')
    return frame[np.isfinite(lengths)].assign(length_mm=lengths[np.isfinite(lengths)])
