"""
合成真值场景

每个场景：按真值参数弯曲模板，缩放使脊线弧长等于真实体长，
把中心关键点放在世界 Z=0 参考平面上，锐利渲染后二值化得到目标掩码。
"""
import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from camera.camera_model import CameraModel, make_intrinsics, project, save_calibration, world_to_camera
from deformation.deform_params import DeformParams
from deformation.rotation import axis_angle_to_matrix, matrix_to_axis_angle
from deformation.skinning import deform
from localization.keypoint_localizer import AbsoluteKeypoints, LengthRecord, spine_arc_ratio
from losses.silhouette_losses import distance_transform
from mesh.fish_template import make_fish_template
from mesh.template_mesh import DeformedMesh, TemplateMesh
from rendering.soft_renderer import RenderConfig, SoftSilhouette, hard_mask, project_keypoints, render_silhouette
from storage.image_io import save_mask_png
from utils.exceptions import FishOutOfFrame, MeshBehindCamera, BehindCamera

logger = logging.getLogger(__name__)

ORACLE_SIGMA = 1e-6
DEFAULT_TEMPLATE_SEGMENTS = 16


def default_template() -> TemplateMesh:
    return make_fish_template(DEFAULT_TEMPLATE_SEGMENTS)


def default_camera(focal: float = 600.0, width: int = 256, height: int = 192,
                   distance_mm: float = 5000.0, tilt_deg: float = 30.0) -> CameraModel:
    """
    默认合成相机：参考平面绕 x 轴倾斜 tilt_deg，世界原点位于光轴上 distance_mm 处
    """
    rot = axis_angle_to_matrix(np.array([math.radians(tilt_deg), 0.0, 0.0]))
    return CameraModel(make_intrinsics(focal, width, height), rot, np.array([0.0, 0.0, distance_mm]), width, height)


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """
    单个合成场景

    Attributes:
        true_params: 真值关节弯曲/缩放/蒙皮参数（根变换由场景放置决定）
        true_length_mm: 真实体长（脊线弧长）
        camera: 相机，其 rot/trans 即参考平面位姿
        noise: 边界噪声带宽（像素），0 表示无噪声
        seed: 随机种子
        center_world: 中心点在参考平面上的坐标（毫米）
        heading_deg: 鱼体在参考平面内的朝向
        noise_prob: 噪声带内像素翻转概率
    """
    true_params: DeformParams
    true_length_mm: float
    camera: CameraModel
    noise: int = 0
    seed: int = 0
    center_world: Tuple[float, float] = (0.0, 0.0)
    heading_deg: float = 0.0
    noise_prob: float = 0.3

    def __post_init__(self):
        if not self.true_length_mm > 0:
            raise ValueError(f"true_length_mm 必须为正，当前: {self.true_length_mm}")
        if self.noise < 0:
            raise ValueError(f"noise 必须非负，当前: {self.noise}")

    @property
    def plane_pose(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.camera.rot, self.camera.trans


@dataclass(frozen=True, eq=False)
class Scene:
    """
    生成的场景

    Attributes:
        mask: 二值目标掩码
        record: 真值 LengthRecord（相机坐标毫米）
        params: 完整真值参数（含根变换）
        mesh: 真值网格（模型单位，相机对齐坐标系）
        keypoints_2d: 头/中心/尾真值投影
    """
    spec: SceneSpec
    mask: SoftSilhouette
    record: LengthRecord
    params: DeformParams
    mesh: DeformedMesh
    keypoints_2d: Tuple[np.ndarray, np.ndarray, np.ndarray]


def _boundary_noise(mask: np.ndarray, band: int, prob: float, seed: int) -> np.ndarray:
    """翻转边界 band 像素以内的像素"""
    if band <= 0 or not mask.any() or mask.all():
        return mask
    sdf = distance_transform(mask)
    near = (sdf > -band) & (sdf <= band)
    rng = np.random.default_rng(seed)
    flip = near & (rng.random(mask.shape) < prob)
    return np.where(flip, 1.0 - mask, mask)


def place_params(template: TemplateMesh, spec: SceneSpec, model_unit_mm: float) -> DeformParams:
    """
    求根变换：尺度使脊线弧长为真实体长，中心关键点落在参考平面 center_world 处，
    模型 xy 平面与参考平面平行，并绕平面法向旋转 heading_deg
    """
    bent = spec.true_params.replace(root_rot=np.zeros(3), root_trans=np.zeros(3), root_log_scale=0.0)
    mesh0 = deform(template, bent)
    arc, _ = spine_arc_ratio(mesh0)
    scale = spec.true_length_mm / (arc * model_unit_mm)

    heading = axis_angle_to_matrix(np.array([0.0, 0.0, math.radians(spec.heading_deg)]))
    root = spec.camera.rot @ heading
    center_cam = world_to_camera(spec.camera, np.array([spec.center_world[0], spec.center_world[1], 0.0]))
    c = template.centroid
    p_c = mesh0.keypoint('center')
    # c + s R (p_c - c) + T0 = C / unit
    root_trans = center_cam / model_unit_mm - c - scale * root @ (p_c - c)
    return bent.replace(root_rot=matrix_to_axis_angle(root), root_trans=root_trans, root_log_scale=math.log(scale))


def oracle_record(mesh: DeformedMesh, model_unit_mm: float) -> LengthRecord:
    """真值网格上的关键点与长度（与测长使用相同的脊线定义）"""
    h = mesh.keypoint('head') * model_unit_mm
    c = mesh.keypoint('center') * model_unit_mm
    t = mesh.keypoint('tail') * model_unit_mm
    arc, chord = spine_arc_ratio(mesh)
    chord_mm = float(np.linalg.norm(h - t))
    ratio = max(arc / chord, 1.0)
    return LengthRecord(AbsoluteKeypoints(h, c, t), chord_mm, ratio, chord_mm * ratio)


def generate_scene(spec: SceneSpec, template: Optional[TemplateMesh] = None,
                   render_cfg: Optional[RenderConfig] = None) -> Scene:
    """
    生成单个真值场景

    Args:
        spec: 场景参数
        template: 模板，缺省为程序化鱼体
        render_cfg: 渲染参数（使用其 model_unit_mm 与 near_z）

    Returns:
        Scene

    Raises:
        FishOutOfFrame: 鱼体投影超出图像或位于相机后方
    """
    template = template or default_template()
    render_cfg = (render_cfg or RenderConfig()).model_copy(update={'sigma': ORACLE_SIGMA})
    unit = render_cfg.model_unit_mm
    cam = spec.camera

    params = place_params(template, spec, unit)
    mesh = deform(template, params)
    try:
        uv = project(cam, mesh.vertices * unit)
        silhouette = render_silhouette(mesh, cam, render_cfg)
    except (BehindCamera, MeshBehindCamera) as e:
        raise FishOutOfFrame(f"鱼体位于相机后方: {e}") from e
    if uv[:, 0].min() < -0.5 or uv[:, 1].min() < -0.5 or uv[:, 0].max() > cam.width - 0.5 or uv[:, 1].max() > cam.height - 0.5:
        raise FishOutOfFrame("鱼体投影超出图像范围")

    mask = hard_mask(silhouette).pixels
    if not mask.any():
        raise FishOutOfFrame("渲染掩码为空")
    mask = _boundary_noise(mask, spec.noise, spec.noise_prob, spec.seed)
    record = oracle_record(mesh, unit)
    keypoints_2d = project_keypoints(mesh, cam, unit)
    return Scene(spec, SoftSilhouette(mask), record, params, mesh, keypoints_2d)


def random_bend_params(rng: np.random.Generator, max_bend_deg: float) -> DeformParams:
    """两个关节在图像内（绕模板 z 轴）的随机弯曲"""
    bends = rng.uniform(-max_bend_deg, max_bend_deg, size=2)
    joint_rot = np.array([[0.0, 0.0, math.radians(bends[0])], [0.0, 0.0, math.radians(bends[1])]])
    return DeformParams.identity().replace(joint_rot=joint_rot)


def generate_track(spec: SceneSpec, n_frames: int, jitter_bend_deg: float = 0.0, jitter_heading_deg: float = 0.0,
                   jitter_position_mm: float = 0.0, template: Optional[TemplateMesh] = None,
                   render_cfg: Optional[RenderConfig] = None) -> List[Scene]:
    """
    一条个体轨迹：同一真实体长，逐帧扰动弯曲、朝向与位置

    Args:
        spec: 基础场景
        n_frames: 帧数（>= 1）
        jitter_*: 各扰动的幅度（均匀分布半宽），全为 0 时各帧相同

    Returns:
        Scene 列表
    """
    if n_frames < 1:
        raise ValueError(f"n_frames 必须 >= 1，当前: {n_frames}")
    template = template or default_template()
    rng = np.random.default_rng(spec.seed)
    base_rot = spec.true_params.joint_rot
    scenes = []
    for i in range(n_frames):
        d_bend = rng.uniform(-jitter_bend_deg, jitter_bend_deg, size=2)
        d_heading = rng.uniform(-jitter_heading_deg, jitter_heading_deg)
        d_pos = rng.uniform(-jitter_position_mm, jitter_position_mm, size=2)
        joint_rot = base_rot.copy()
        joint_rot[:, 2] += np.radians(d_bend)
        frame_spec = SceneSpec(
            true_params=spec.true_params.replace(joint_rot=joint_rot),
            true_length_mm=spec.true_length_mm,
            camera=spec.camera,
            noise=spec.noise,
            seed=spec.seed * 1000 + i,
            center_world=(spec.center_world[0] + d_pos[0], spec.center_world[1] + d_pos[1]),
            heading_deg=spec.heading_deg + d_heading,
            noise_prob=spec.noise_prob,
        )
        scenes.append(generate_scene(frame_spec, template, render_cfg))
    return scenes


class PopulationSpec(BaseModel):
    """合成种群参数"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    n_fish: int = Field(default=50, gt=0)
    frames_per_track: int = Field(default=3, gt=0)
    length_mean_mm: float = Field(default=750.0, gt=0)
    length_std_mm: float = Field(default=80.0, ge=0)
    length_low_mm: float = Field(default=500.0, gt=0)
    length_high_mm: float = Field(default=1000.0, gt=0)
    max_bend_deg: float = Field(default=30.0, ge=0)
    jitter_bend_deg: float = Field(default=5.0, ge=0)
    jitter_heading_deg: float = Field(default=10.0, ge=0)
    jitter_position_mm: float = Field(default=100.0, ge=0)
    position_spread_mm: float = Field(default=300.0, ge=0)
    noise_px: int = Field(default=0, ge=0)
    noise_prob: float = Field(default=0.3, ge=0, le=1)
    focal: float = Field(default=600.0, gt=0)
    width: int = Field(default=256, gt=0)
    height: int = Field(default=192, gt=0)
    distance_mm: float = Field(default=5000.0, gt=0)
    tilt_deg: float = 30.0
    seed: int = 0

    @model_validator(mode='after')
    def _check_range(self):
        if self.length_high_mm <= self.length_low_mm:
            raise ValueError("length_high_mm 必须大于 length_low_mm")
        return self

    def camera(self) -> CameraModel:
        return default_camera(self.focal, self.width, self.height, self.distance_mm, self.tilt_deg)


def sample_lengths(spec: PopulationSpec, rng: np.random.Generator) -> np.ndarray:
    """Normal(mean, std) 截断到 [low, high]"""
    return np.clip(rng.normal(spec.length_mean_mm, spec.length_std_mm, size=spec.n_fish),
                   spec.length_low_mm, spec.length_high_mm)


def generate_population(spec: PopulationSpec, template: Optional[TemplateMesh] = None,
                        render_cfg: Optional[RenderConfig] = None,
                        progress: Optional[Callable[[int], None]] = None) -> Dict[str, List[Scene]]:
    """
    合成一个种群：每条鱼一条轨迹

    出框的帧换一个位置/朝向重试，最多 20 次。

    Returns:
        track_id -> Scene 列表（按 track_id 排序）
    """
    template = template or default_template()
    cam = spec.camera()
    rng = np.random.default_rng(spec.seed)
    lengths = sample_lengths(spec, rng)
    tracks: Dict[str, List[Scene]] = {}
    for i, length in enumerate(lengths):
        track_id = f"fish_{i:04d}"
        for attempt in range(20):
            base = SceneSpec(
                true_params=random_bend_params(rng, spec.max_bend_deg),
                true_length_mm=float(length),
                camera=cam,
                noise=spec.noise_px,
                seed=spec.seed * 100003 + i * 101 + attempt,
                center_world=tuple(rng.uniform(-spec.position_spread_mm, spec.position_spread_mm, size=2)),
                heading_deg=float(rng.uniform(-180.0, 180.0)),
                noise_prob=spec.noise_prob,
            )
            try:
                tracks[track_id] = generate_track(
                    base, spec.frames_per_track, spec.jitter_bend_deg, spec.jitter_heading_deg,
                    spec.jitter_position_mm, template, render_cfg,
                )
                break
            except FishOutOfFrame as e:
                logger.debug(f"{track_id} 第 {attempt + 1} 次放置出框，重试: {e}")
        else:
            raise FishOutOfFrame(f"{track_id} 连续 20 次放置均出框，请减小 position_spread_mm 或体长")
        if progress is not None:
            progress(1)
    logger.info(f"种群合成完成: {len(tracks)} 条鱼，每条 {spec.frames_per_track} 帧")
    return tracks


def write_scene(tracks: Dict[str, List[Scene]], out_dir: str) -> Dict[str, object]:
    """
    写出场景目录

    布局: frames/NNNN_mask.png, calib.json, manifest.json, oracle.csv, gt_lengths.csv

    Args:
        tracks: track_id -> Scene 列表（所有帧共用一台相机）
        out_dir: 输出目录

    Returns:
        manifest 字典
    """
    os.makedirs(os.path.join(out_dir, 'frames'), exist_ok=True)
    frames = []
    oracle_rows = []
    gt_rows = []
    camera = None
    index = 0
    for track_id in sorted(tracks):
        scenes = tracks[track_id]
        if not scenes:
            continue
        gt_rows.append({'track_id': track_id, 'length_mm': scenes[0].spec.true_length_mm})
        for scene in scenes:
            camera = camera or scene.spec.camera
            frame_id = f"{index:04d}"
            rel_path = os.path.join('frames', f"{frame_id}_mask.png")
            save_mask_png(scene.mask, os.path.join(out_dir, rel_path))
            frames.append({
                'frame_id': frame_id,
                'mask': rel_path,
                'track_id': track_id,
                'true_length_mm': scene.spec.true_length_mm,
            })
            row = scene.record.with_ids(frame_id, track_id).to_row()
            for name, uv in zip(('h', 'c', 't'), scene.keypoints_2d):
                row[f'{name}_u'] = float(uv[0])
                row[f'{name}_v'] = float(uv[1])
            row['params'] = json.dumps(scene.params.to_vector().tolist())
            oracle_rows.append(row)
            index += 1

    if camera is None:
        raise ValueError("没有可写出的帧")
    save_calibration(camera, os.path.join(out_dir, 'calib.json'))
    manifest = {
        'schema_version': 1,
        'calibration': 'calib.json',
        'frames': frames,
        'tracks': {row['track_id']: row['length_mm'] for row in gt_rows},
    }
    with open(os.path.join(out_dir, 'manifest.json'), 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=4)
    pd.DataFrame(oracle_rows).to_csv(os.path.join(out_dir, 'oracle.csv'), index=False)
    pd.DataFrame(gt_rows, columns=['track_id', 'length_mm']).to_csv(os.path.join(out_dir, 'gt_lengths.csv'), index=False)
    logger.info(f"场景已写出: {out_dir} ({len(frames)} 帧, {len(gt_rows)} 条轨迹)")
    return manifest
