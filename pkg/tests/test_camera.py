"""
针孔相机、参考平面单应与 DLT 估计
"""
import json

import numpy as np
import pytest

from camera.camera_model import (
    CameraModel, back_project, camera_to_world, load_calibration, make_intrinsics, project, save_calibration,
    world_to_camera,
)
from camera.homography import (
    PlaneHomography, apply_homography, compose_homography, decompose_plane_homography, estimate_plane_homography,
)
from utils.exceptions import BehindCamera, DegenerateConfiguration, DegeneratePlane, SingularIntrinsics

GRID = np.array([[x, y] for x in (-300.0, 0.0, 250.0, 400.0) for y in (-200.0, 50.0, 300.0)])


def plane_points(cam: CameraModel, world_xy: np.ndarray) -> np.ndarray:
    world = np.column_stack([world_xy, np.zeros(len(world_xy))])
    return project(cam, world_to_camera(cam, world))


class TestCameraModel:
    def test_default_principal_point_is_image_center(self):
        cam = CameraModel(make_intrinsics(500.0, 640, 480), np.eye(3), np.zeros(3), 640, 480)
        np.testing.assert_allclose(cam.principal_point, [319.5, 239.5])

    def test_project_back_project(self, scene_camera, rng):
        points = rng.uniform([-500, -500, 1000], [500, 500, 8000], size=(20, 3))
        uv = project(scene_camera, points)
        rays = back_project(scene_camera, uv)
        np.testing.assert_array_equal(rays[:, 2], 1.0)
        np.testing.assert_allclose(rays * points[:, 2:3], points, rtol=1e-12, atol=1e-9)

    def test_optical_axis_hits_principal_point(self, scene_camera):
        uv = project(scene_camera, np.array([0.0, 0.0, 1234.0]))
        np.testing.assert_allclose(uv, scene_camera.principal_point)

    def test_behind_camera(self, scene_camera):
        with pytest.raises(BehindCamera):
            project(scene_camera, np.array([[0.0, 0.0, 10.0], [1.0, 2.0, 0.0]]))

    def test_world_camera_round_trip(self, scene_camera, rng):
        points = rng.normal(size=(10, 3)) * 300
        np.testing.assert_allclose(camera_to_world(scene_camera, world_to_camera(scene_camera, points)), points, atol=1e-9)

    def test_non_upper_triangular_intrinsics(self):
        k = make_intrinsics(500.0, 64, 64)
        k[1, 0] = 0.1
        with pytest.raises(ValueError):
            CameraModel(k, np.eye(3), np.zeros(3), 64, 64)

    def test_non_positive_focal(self):
        with pytest.raises(SingularIntrinsics):
            CameraModel(make_intrinsics(0.0, 64, 64), np.eye(3), np.zeros(3), 64, 64)

    def test_rotation_must_be_proper(self):
        with pytest.raises(ValueError):
            CameraModel(make_intrinsics(500.0, 64, 64), np.diag([1.0, 1.0, -1.0]), np.zeros(3), 64, 64)

    def test_calibration_file_round_trip(self, tmp_path, scene_camera):
        path = str(tmp_path / 'calib.json')
        save_calibration(scene_camera, path)
        loaded = load_calibration(path)
        np.testing.assert_array_equal(loaded.k, scene_camera.k)
        np.testing.assert_array_equal(loaded.rot, scene_camera.rot)
        np.testing.assert_array_equal(loaded.trans, scene_camera.trans)
        assert (loaded.width, loaded.height) == (scene_camera.width, scene_camera.height)

    def test_calibration_from_plane_correspondences(self, tmp_path, scene_camera):
        image = plane_points(scene_camera, GRID)
        data = {
            'k': scene_camera.k.reshape(-1).tolist(),
            'width': scene_camera.width,
            'height': scene_camera.height,
            'plane_correspondences': [{'world': w.tolist(), 'image': i.tolist()} for w, i in zip(GRID, image)],
        }
        path = tmp_path / 'calib.json'
        path.write_text(json.dumps(data), encoding='utf-8')
        cam = load_calibration(str(path))
        np.testing.assert_allclose(cam.rot, scene_camera.rot, atol=1e-8)
        np.testing.assert_allclose(cam.trans, scene_camera.trans, rtol=1e-8, atol=1e-6)


class TestPlaneHomography:
    def test_composed_homography_matches_projection(self, scene_camera):
        hom = compose_homography(scene_camera)
        np.testing.assert_allclose(apply_homography(hom, GRID), plane_points(scene_camera, GRID), atol=1e-9)

    def test_camera_center_on_plane_is_degenerate(self):
        cam = CameraModel(make_intrinsics(500.0, 64, 64), np.eye(3), np.zeros(3), 64, 64)
        with pytest.raises(DegeneratePlane):
            compose_homography(cam)

    def test_estimate_recovers_homography(self, scene_camera):
        truth = compose_homography(scene_camera).normalized()
        estimate = estimate_plane_homography(GRID, plane_points(scene_camera, GRID))
        np.testing.assert_allclose(estimate.h, truth, rtol=1e-7, atol=1e-9)
        assert estimate.h[2, 2] == pytest.approx(1.0)
        assert estimate.rms < 1e-8

    def test_estimate_exactly_four_points(self, scene_camera):
        corners = np.array([[-200.0, -200.0], [200.0, -200.0], [200.0, 200.0], [-200.0, 200.0]])
        estimate = estimate_plane_homography(corners, plane_points(scene_camera, corners))
        np.testing.assert_allclose(apply_homography(estimate, [[0.0, 0.0]]), plane_points(scene_camera, np.zeros((1, 2))), atol=1e-8)

    def test_too_few_points(self):
        with pytest.raises(DegenerateConfiguration):
            estimate_plane_homography(GRID[:3], GRID[:3])

    def test_four_points_with_collinear_triple(self):
        world = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DegenerateConfiguration):
            estimate_plane_homography(world, world * 10)

    def test_all_points_collinear(self):
        world = np.column_stack([np.arange(6.0), np.zeros(6)])
        with pytest.raises(DegenerateConfiguration):
            estimate_plane_homography(world, world)

    @pytest.mark.parametrize('scale', [1.0, -3.0, 1e-4])
    def test_decompose_recovers_metric_form(self, scene_camera, scale):
        truth = compose_homography(scene_camera)
        metric, rot, trans = decompose_plane_homography(scene_camera.k, PlaneHomography(scale * truth.h))
        np.testing.assert_allclose(rot, scene_camera.rot, atol=1e-10)
        np.testing.assert_allclose(trans, scene_camera.trans, rtol=1e-10)
        np.testing.assert_allclose(metric.h, truth.h, rtol=1e-9)
        assert trans[2] > 0
