"""
数据存储模块
"""
from .result_recorder import ResultRecorder, SchemaMismatch, load_length_table, LENGTH_COLUMNS, TRACK_COLUMNS
from .image_io import save_mask_png, load_mask_png, save_float_pfm, load_float_pfm, save_overlay_png

__all__ = [
    'ResultRecorder', 'SchemaMismatch', 'load_length_table', 'LENGTH_COLUMNS', 'TRACK_COLUMNS',
    'save_mask_png', 'load_mask_png', 'save_float_pfm', 'load_float_pfm', 'save_overlay_png',
]
