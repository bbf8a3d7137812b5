"""
合成真值场景、轨迹、种群与场景目录写出
"""
import json
import math

import numpy as np
import pandas as pd
import pytest

from camera.camera_model import camera_to_world
from deformation.deform_params import DeformParams
from losses.silhouette_losses import distance_transform
from storage.image_io import load_mask_png
from synthesis.scene_generator import (
    PopulationSpec, SceneSpec, default_camera, generate_population, generate_scene, generate_track,
    random_bend_params, sample_lengths, write_scene,
)
from utils.exceptions import FishOutOfFrame


def bend(deg: float) -> DeformParams:
    return DeformParams.identity().replace(joint_rot=[[0.0, 0.0, math.radians(deg)], [0.0, 0.0, math.radians(deg)]])


def small_population(**overrides) -> PopulationSpec:
    fields = dict(n_fish=3, frames_per_track=2, length_mean_mm=600.0, length_std_mm=30.0, length_low_mm=500.0,
                  length_high_mm=700.0, max_bend_deg=20.0, position_spread_mm=80.0, jitter_position_mm=20.0,
                  focal=400.0, width=96, height=72, seed=5)
    fields.update(overrides)
    return PopulationSpec(**fields)


class TestScene:
    def test_oracle_length_and_ratio(self, fish, scene_camera):
        scene = generate_scene(SceneSpec(bend(15.0), 640.0, scene_camera), template=fish)
        assert scene.record.length_mm == pytest.approx(640.0, rel=1e-9)
        assert scene.record.arc_ratio > 1.0
        assert scene.mask.pixels.any()
        assert set(np.unique(scene.mask.pixels)) <= {0.0, 1.0}

    def test_straight_fish(self, fish, scene_camera):
        scene = generate_scene(SceneSpec(DeformParams.identity(), 640.0, scene_camera), template=fish)
        assert scene.record.arc_ratio == pytest.approx(1.0, abs=1e-12)
        assert scene.record.chord_mm == pytest.approx(640.0, rel=1e-9)

    def test_center_lies_on_reference_plane(self, fish, scene_camera):
        spec = SceneSpec(bend(10.0), 600.0, scene_camera, center_world=(50.0, -20.0), heading_deg=35.0)
        scene = generate_scene(spec, template=fish)
        world = camera_to_world(scene_camera, scene.record.keypoints.c_abs)
        np.testing.assert_allclose(world, [50.0, -20.0, 0.0], atol=1e-6)

    def test_deterministic(self, fish, scene_camera):
        spec = SceneSpec(bend(10.0), 600.0, scene_camera, noise=2, seed=7)
        a = generate_scene(spec, template=fish)
        b = generate_scene(spec, template=fish)
        np.testing.assert_array_equal(a.mask.pixels, b.mask.pixels)

    def test_noise_stays_near_boundary(self, fish, scene_camera):
        clean = generate_scene(SceneSpec(bend(10.0), 600.0, scene_camera), template=fish)
        noisy = generate_scene(SceneSpec(bend(10.0), 600.0, scene_camera, noise=2, seed=3), template=fish)
        changed = clean.mask.pixels != noisy.mask.pixels
        assert changed.any()
        sdf = distance_transform(clean.mask)
        assert np.all(np.abs(sdf[changed]) <= 2.0)

    def test_out_of_frame(self, fish, scene_camera):
        with pytest.raises(FishOutOfFrame):
            generate_scene(SceneSpec(DeformParams.identity(), 600.0, scene_camera, center_world=(3000.0, 0.0)),
                           template=fish)

    @pytest.mark.parametrize('kwargs', [{'true_length_mm': 0.0}, {'true_length_mm': 500.0, 'noise': -1}])
    def test_invalid_spec(self, scene_camera, kwargs):
        with pytest.raises(ValueError):
            SceneSpec(DeformParams.identity(), camera=scene_camera, **kwargs)


class TestTrack:
    def test_zero_jitter_repeats_frame(self, fish, scene_camera):
        frames = generate_track(SceneSpec(bend(5.0), 600.0, scene_camera), 3, template=fish)
        assert len(frames) == 3
        for scene in frames[1:]:
            np.testing.assert_array_equal(scene.mask.pixels, frames[0].mask.pixels)

    def test_jitter_keeps_length(self, fish, scene_camera):
        frames = generate_track(SceneSpec(bend(5.0), 600.0, scene_camera, seed=2), 3, jitter_bend_deg=8.0,
                                jitter_heading_deg=10.0, jitter_position_mm=30.0, template=fish)
        assert not np.array_equal(frames[0].mask.pixels, frames[1].mask.pixels)
        for scene in frames:
            assert scene.record.length_mm == pytest.approx(600.0, rel=1e-9)

    def test_needs_a_frame(self, fish, scene_camera):
        with pytest.raises(ValueError):
            generate_track(SceneSpec(bend(5.0), 600.0, scene_camera), 0, template=fish)

    def test_random_bend_within_limit(self, rng):
        for _ in range(20):
            params = random_bend_params(rng, 25.0)
            assert np.all(np.abs(params.joint_rot[:, 2]) <= math.radians(25.0))
            np.testing.assert_array_equal(params.joint_rot[:, :2], 0.0)


class TestPopulation:
    def test_sample_lengths_clipped(self, rng):
        spec = PopulationSpec(n_fish=2000, length_std_mm=200.0)
        lengths = sample_lengths(spec, rng)
        assert lengths.min() >= 500.0 and lengths.max() <= 1000.0
        assert abs(lengths.mean() - 750.0) < 15.0

    def test_invalid_length_range(self):
        with pytest.raises(ValueError):
            PopulationSpec(length_low_mm=900.0, length_high_mm=800.0)

    def test_camera_from_spec(self):
        cam = small_population().camera()
        reference = default_camera(focal=400.0, width=96, height=72)
        np.testing.assert_array_equal(cam.k, reference.k)
        np.testing.assert_array_equal(cam.rot, reference.rot)

    def test_generate_population(self, fish):
        ticks = []
        tracks = generate_population(small_population(), template=fish, progress=ticks.append)
        assert sorted(tracks) == ['fish_0000', 'fish_0001', 'fish_0002']
        assert ticks == [1, 1, 1]
        for scenes in tracks.values():
            assert len(scenes) == 2
            assert scenes[0].spec.true_length_mm == scenes[1].spec.true_length_mm

    def test_population_deterministic(self, fish):
        a = generate_population(small_population(), template=fish)
        b = generate_population(small_population(), template=fish)
        for track_id in a:
            for sa, sb in zip(a[track_id], b[track_id]):
                np.testing.assert_array_equal(sa.mask.pixels, sb.mask.pixels)


class TestWriteScene:
    def test_layout(self, tmp_path, fish):
        tracks = generate_population(small_population(n_fish=2), template=fish)
        manifest = write_scene(tracks, str(tmp_path))

        assert manifest['schema_version'] == 1
        assert len(manifest['frames']) == 4
        assert json.loads((tmp_path / 'manifest.json').read_text(encoding='utf-8')) == manifest
        assert (tmp_path / 'calib.json').exists()

        first = manifest['frames'][0]
        assert first['frame_id'] == '0000'
        mask = load_mask_png(str(tmp_path / first['mask']))
        np.testing.assert_array_equal(mask.pixels, tracks['fish_0000'][0].mask.pixels)

        gt = pd.read_csv(tmp_path / 'gt_lengths.csv')
        assert list(gt.columns) == ['track_id', 'length_mm']
        assert gt['length_mm'].tolist() == pytest.approx([manifest['tracks'][t] for t in gt['track_id']])

        oracle = pd.read_csv(tmp_path / 'oracle.csv', dtype={'frame_id': str})
        assert len(oracle) == 4
        assert {'h_u', 'c_v', 'params', 'length_mm'} <= set(oracle.columns)
        assert (oracle['status'] == 'ok').all()

    def test_nothing_to_write(self, tmp_path):
        with pytest.raises(ValueError):
            write_scene({}, str(tmp_path))
