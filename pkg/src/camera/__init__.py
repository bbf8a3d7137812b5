"""
相机几何模块
"""
from .camera_model import (
    CameraModel, make_intrinsics, project, back_project, world_to_camera, camera_to_world,
    load_calibration, save_calibration,
)
from .homography import (
    PlaneHomography, apply_homography, compose_homography, estimate_plane_homography,
    decompose_plane_homography,
)

__all__ = [
    'CameraModel', 'make_intrinsics', 'project', 'back_project', 'world_to_camera', 'camera_to_world',
    'load_calibration', 'save_calibration',
    'PlaneHomography', 'apply_homography', 'compose_homography', 'estimate_plane_homography',
    'decompose_plane_homography',
]
