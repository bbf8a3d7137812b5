"""
三维定位与测长模块
"""
from .keypoint_localizer import (
    RelativeKeypoints, AbsoluteKeypoints, LengthRecord, center_depth, plane_coordinates, to_tmp_frame,
    intersect_ray_line, spine_arc_ratio, measure_length, localize_keypoints, localize_frame,
)

__all__ = [
    'RelativeKeypoints', 'AbsoluteKeypoints', 'LengthRecord', 'center_depth', 'plane_coordinates',
    'to_tmp_frame', 'intersect_ray_line', 'spine_arc_ratio', 'measure_length', 'localize_keypoints',
    'localize_frame',
]
