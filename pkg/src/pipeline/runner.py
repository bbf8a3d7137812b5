"""
批处理流程：单帧拟合、整段场景测长、评估、合成与调试渲染
"""
import asyncio
import json
import logging
import os
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from camera.camera_model import CameraModel, load_calibration
from camera.homography import PlaneHomography, compose_homography
from config.config_manager import PipelineConfig
from deformation.deform_params import DeformParams
from deformation.skinning import deform
from evaluation.histogram_metrics import (
    HistogramConfig, HistogramMetrics, average_track_lengths, build_histogram, histogram_metrics, plot_data,
)
from fitting.fitter import CheckpointFn, FitResult, fit_frame
from localization.keypoint_localizer import LengthRecord, localize_frame
from mesh.mesh_io import load_mesh
from mesh.template_mesh import TemplateMesh
from rendering.soft_renderer import RenderConfig, SoftSilhouette, render_silhouette
from storage.image_io import load_mask_png, save_float_pfm, save_mask_png, save_overlay_png
from storage.result_recorder import ResultRecorder, load_length_table
from synthesis.scene_generator import PopulationSpec, default_template, generate_population, write_scene
from utils.exceptions import ConfigError, DmrError, SchemaMismatch

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class FrameJob:
    """一帧待处理的掩码"""
    frame_id: str
    mask_path: str
    track_id: str = ''


@dataclass(frozen=True, eq=False)
class FrameContext:
    """所有帧共享的只读输入（需可 pickle 以送入进程池）"""
    template: TemplateMesh
    cam: CameraModel
    hom: PlaneHomography
    config: PipelineConfig
    out_dir: Optional[str] = None


@dataclass(frozen=True, eq=False)
class FrameOutcome:
    record: LengthRecord
    iou: float = float('nan')
    iterations: int = 0
    converged: bool = False


def load_template(config: PipelineConfig) -> TemplateMesh:
    """配置了模板路径时加载 .obj，否则使用程序化鱼体"""
    if config.paths.template:
        return load_mesh(config.paths.template, config.paths.annotations)
    logger.info("未配置模板路径，使用程序化鱼体模板")
    return default_template()


def load_scene_manifest(scene_dir: str) -> Tuple[List[FrameJob], Optional[str]]:
    """
    读取场景目录的 manifest.json

    Returns:
        (帧列表, 标定文件路径或 None)

    Raises:
        FileNotFoundError: 缺少 manifest
        ConfigError: manifest 格式错误
    """
    path = os.path.join(scene_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise FileNotFoundError(f"场景目录缺少 {MANIFEST_NAME}: {scene_dir}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
        jobs = [
            FrameJob(str(item['frame_id']), os.path.join(scene_dir, item['mask']), str(item.get('track_id', '')))
            for item in manifest['frames']
        ]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ConfigError(f"manifest 格式错误 {path}: {e}") from e
    calibration = manifest.get('calibration')
    return jobs, os.path.join(scene_dir, calibration) if calibration else None


def checkpoint_writer(recorder: ResultRecorder, name: str) -> CheckpointFn:
    """返回把迭代参数写到 checkpoints/<name>_<iter>.json 的回调"""
    def save(iteration: int, params: DeformParams) -> None:
        params.save(recorder.path('checkpoints', f"{name}_{iteration:05d}.json"))
    return save


def fit_single_frame(mask: SoftSilhouette, ctx: FrameContext, frame_id: str = '', track_id: str = '',
                     recorder: Optional[ResultRecorder] = None) -> Tuple[LengthRecord, FitResult]:
    """
    拟合一帧并测长

    Args:
        mask: 目标掩码
        ctx: 共享输入
        frame_id: 帧编号（用于输出文件名与记录）
        track_id: 个体编号
        recorder: 不为 None 时写出参数 JSON 与拟合轨迹 CSV

    Returns:
        (LengthRecord, FitResult)
    """
    cfg = ctx.config
    name = frame_id or 'frame'
    checkpoint = None
    if recorder is not None and cfg.fit.checkpoint_every:
        checkpoint = checkpoint_writer(recorder, name)
    fit = fit_frame(ctx.template, mask, ctx.cam, cfg.fit, render_cfg=cfg.render, weights=cfg.loss_weights,
                    checkpoint=checkpoint)
    record = localize_frame(fit, ctx.cam, ctx.hom, cfg.render.model_unit_mm, cfg.fit.use_bending)
    record = record.with_ids(frame_id, track_id)
    if recorder is not None:
        fit.params.save(recorder.path('params', f"{name}.json"))
        recorder.save_trace(os.path.join('traces', name), fit.trace, fit.iou_checks)
    logger.info(f"帧 {frame_id or '-'}: 长度 {record.length_mm:.1f} mm，硬 IoU {fit.iou:.4f}")
    return record, fit


def process_frame(job: FrameJob, ctx: FrameContext) -> FrameOutcome:
    """
    工作进程入口：单帧出错只影响本帧的状态

    Returns:
        FrameOutcome，失败时 record.status 为异常类型名
    """
    try:
        mask = load_mask_png(job.mask_path)
        recorder = ResultRecorder(ctx.out_dir) if ctx.out_dir else None
        record, fit = fit_single_frame(mask, ctx, job.frame_id, job.track_id, recorder)
        return FrameOutcome(record, fit.iou, fit.iterations_run, fit.converged)
    except (DmrError, OSError, ValueError) as e:
        # 读图失败（损坏/缺失）与计算失败都记为跳过
        logger.warning(f"帧 {job.frame_id} 跳过: {type(e).__name__}: {e}")
        return FrameOutcome(LengthRecord.skipped(job.frame_id, job.track_id, type(e).__name__))


def _make_executor(jobs: int) -> Executor:
    if jobs <= 1:
        return ThreadPoolExecutor(max_workers=1)
    return ProcessPoolExecutor(max_workers=jobs)


async def run_pipeline_async(ctx: FrameContext, frames: List[FrameJob], jobs: int = 1,
                             show_progress: bool = True) -> List[FrameOutcome]:
    """
    按帧并行拟合；结果按输入顺序返回

    Args:
        ctx: 共享输入
        frames: 帧列表
        jobs: 并行数，1 时在单个工作线程内顺序执行
    """
    loop = asyncio.get_running_loop()
    results: List[Optional[FrameOutcome]] = [None] * len(frames)

    async def run_one(index: int, job: FrameJob, executor: Executor):
        results[index] = await loop.run_in_executor(executor, process_frame, job, ctx)

    with _make_executor(jobs) as executor:
        tasks = [asyncio.ensure_future(run_one(i, job, executor)) for i, job in enumerate(frames)]
        with tqdm(total=len(tasks), desc="拟合", unit="帧", disable=not show_progress) as bar:
            for task in asyncio.as_completed(tasks):
                await task
                bar.update(1)
    return [r for r in results if r is not None]


def run_pipeline(config: PipelineConfig, scene_dir: Optional[str] = None, show_progress: bool = True) -> Dict[str, Any]:
    """
    整段场景测长：拟合全部帧 -> 定位 -> 按个体平均 -> 写出 lengths.csv / tracks.csv

    Args:
        config: 运行配置
        scene_dir: 场景目录，缺省取 config.paths.frames

    Returns:
        运行汇总（n_frames, n_ok, status_counts, ...）
    """
    scene_dir = scene_dir or config.paths.frames
    if not scene_dir:
        raise ConfigError("未指定场景目录（--frames 或 paths.frames）")
    frames, manifest_calib = load_scene_manifest(scene_dir)
    calib_path = config.paths.calibration or manifest_calib
    if not calib_path:
        raise ConfigError("未指定标定文件（paths.calibration 或 manifest.calibration）")
    cam = load_calibration(calib_path)
    template = load_template(config)
    out_dir = config.paths.output
    recorder = ResultRecorder(out_dir)
    ctx = FrameContext(template, cam, compose_homography(cam), config, out_dir)

    logger.info(f"开始处理 {len(frames)} 帧（jobs={config.jobs}）")
    outcomes = asyncio.run(run_pipeline_async(ctx, frames, config.jobs, show_progress))

    records = [o.record for o in outcomes]
    recorder.save_lengths(records)
    tracks, omitted = average_track_lengths(records)
    recorder.save_tracks(tracks)

    status_counts = pd.Series([r.status for r in records], dtype=str).value_counts().sort_index().to_dict()
    ious = [o.iou for o in outcomes if o.record.ok]
    summary = {
        'n_frames': len(records),
        'n_ok': sum(r.ok for r in records),
        'status_counts': {str(k): int(v) for k, v in status_counts.items()},
        'n_tracks': int(len(tracks)),
        'omitted_tracks': omitted,
        'mean_iou': float(np.mean(ious)) if ious else None,
        'use_bending': config.fit.use_bending,
        'seed': config.seed,
        'jobs': config.jobs,
    }
    recorder.save_summary(summary)
    logger.info(f"处理完成: {summary['n_ok']}/{summary['n_frames']} 帧成功，{summary['n_tracks']} 个个体")
    return summary


def _track_lengths(path: str) -> pd.DataFrame:
    table = load_length_table(path)
    # 逐帧表先按个体平均
    if 'frame_id' in table.columns:
        table, _ = average_track_lengths(table)
    return table


def run_eval(pred_path: str, gt_path: str, hist_cfg: HistogramConfig, out_dir: str) -> HistogramMetrics:
    """
    比较预测与真值长度分布，写出 metrics.json 与 plot_data.csv

    Raises:
        SchemaMismatch: CSV 缺少 track_id / length_mm 列
    """
    pred = _track_lengths(pred_path)
    gt = _track_lengths(gt_path)
    if pred.empty or gt.empty:
        raise SchemaMismatch(f"没有可用的长度行: pred {len(pred)}，gt {len(gt)}")
    edges = hist_cfg.edges()
    pred_hist = build_histogram(pred['length_mm'], edges)
    gt_hist = build_histogram(gt['length_mm'], edges)
    metrics = histogram_metrics(pred_hist, gt_hist)

    recorder = ResultRecorder(out_dir)
    recorder.save_json('metrics.json', dict(
        metrics.to_dict(),
        n_pred=pred_hist.count, n_gt=gt_hist.count,
        dropped_pred=pred_hist.dropped, dropped_gt=gt_hist.dropped,
    ))
    recorder.save_table("plot_data.csv", plot_data(pred_hist, gt_hist), "绘图数据")
    logger.info(f"评估: bias {metrics.bias_mm:.2f} mm，EMD {metrics.emd_mm:.2f} mm，"
                f"RMSD {metrics.rmsd_fraction:.4f}，KL {metrics.kl:.4f}")
    return metrics


def load_population_spec(path: str, seed: Optional[int] = None) -> PopulationSpec:
    """读取种群 JSON；seed 不为 None 时覆盖文件中的种子"""
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    if seed is not None:
        data['seed'] = seed
    return PopulationSpec.model_validate(data)


def run_synth(spec: PopulationSpec, out_dir: str, template: Optional[TemplateMesh] = None,
              render_cfg: Optional[RenderConfig] = None, show_progress: bool = True) -> Dict[str, Any]:
    """合成种群并写出场景目录"""
    with tqdm(total=spec.n_fish, desc="合成", unit="条", disable=not show_progress) as bar:
        tracks = generate_population(spec, template, render_cfg, progress=bar.update)
    return write_scene(tracks, out_dir)


def render_debug(params_path: str, calib_path: str, out_dir: str, template: Optional[TemplateMesh] = None,
                 render_cfg: Optional[RenderConfig] = None, name: str = 'render') -> SoftSilhouette:
    """
    按参数 JSON 渲染调试图像：8 位 PNG 与无损 PFM
    """
    params = DeformParams.load(params_path)
    cam = load_calibration(calib_path)
    template = template or default_template()
    silhouette = render_silhouette(deform(template, params), cam, render_cfg or RenderConfig())
    recorder = ResultRecorder(out_dir)
    save_mask_png(silhouette, recorder.path(f"{name}.png"))
    save_float_pfm(silhouette, recorder.path(f"{name}.pfm"))
    logger.info(f"调试渲染已写出: {out_dir}/{name}.png, {name}.pfm（覆盖面积 {silhouette.area:.1f} 像素）")
    return silhouette


def write_overlay(fit: FitResult, target: SoftSilhouette, cam: CameraModel, render_cfg: RenderConfig, path: str):
    """目标与锐利渲染结果的叠加图"""
    pred = render_silhouette(fit.mesh, cam, render_cfg.sharp())
    save_overlay_png(target, pred, path)
