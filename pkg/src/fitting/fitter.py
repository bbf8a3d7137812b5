"""
单帧分阶段 Adam 拟合
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from camera.camera_model import CameraModel
from deformation.deform_params import DeformParams, PARAM_DIM
from deformation.skinning import deform
from fitting.adam import AdamState, adam_step
from fitting.fit_config import FitConfig
from fitting.initialization import initial_guess
from fitting.objective import FrameObjective
from losses.total_loss import LossReport, LossWeights
from mesh.template_mesh import DeformedMesh, TemplateMesh
from rendering.soft_renderer import RenderConfig, SoftSilhouette, hard_iou, hard_mask, render_silhouette
from utils.exceptions import NonFiniteLoss, TargetEmpty

logger = logging.getLogger(__name__)

CheckpointFn = Callable[[int, DeformParams], None]


@dataclass(frozen=True, eq=False)
class FitResult:
    """
    单帧拟合结果

    Attributes:
        params: 损失最小的参数（不一定是最后一次迭代）
        final_loss: 对应的损失
        iou: 锐利渲染与目标的硬 IoU
        iterations_run: 实际执行的 Adam 步数
        converged: 达到目标 IoU 或最后阶段满足收敛阈值
        trace: 每次迭代的损失
        iou_checks: 迭代序号 -> 硬 IoU
        mesh: 最优参数下的变形网格
    """
    params: DeformParams
    final_loss: LossReport
    iou: float
    iterations_run: int
    converged: bool
    trace: List[LossReport] = field(default_factory=list)
    iou_checks: Dict[int, float] = field(default_factory=dict)
    mesh: Optional[DeformedMesh] = None


def sharp_iou(mesh, cam: CameraModel, render_cfg: RenderConfig, target: SoftSilhouette) -> float:
    """以 eval_sigma 渲染并取 0.5 水平集，与目标计算硬 IoU"""
    sharp = render_silhouette(mesh, cam, render_cfg.sharp())
    return hard_iou(hard_mask(sharp), hard_mask(target))


def _stalled(history: List[float], window: int, tol: float) -> bool:
    if len(history) <= window:
        return False
    old = history[-window - 1]
    new = history[-1]
    return (old - new) / max(abs(old), 1e-12) < tol


def fit_frame(
    template: TemplateMesh,
    target: SoftSilhouette,
    cam: CameraModel,
    cfg: FitConfig,
    init: Optional[DeformParams] = None,
    render_cfg: Optional[RenderConfig] = None,
    weights: Optional[LossWeights] = None,
    checkpoint: Optional[CheckpointFn] = None,
) -> FitResult:
    """
    将模板拟合到一幅目标剪影

    Args:
        template: 模板网格
        target: 目标剪影
        cam: 相机（模型坐标系与相机对齐）
        cfg: 拟合配置
        init: 初始参数，缺省时由粗搜索得到
        render_cfg: 渲染参数
        weights: 正则权重
        checkpoint: 每 cfg.checkpoint_every 次迭代回调一次 (iteration, params)

    Returns:
        FitResult

    Raises:
        TargetEmpty: 目标剪影为空
        NonFiniteLoss: 损失出现 NaN/Inf
    """
    render_cfg = render_cfg or RenderConfig()
    weights = weights or LossWeights()
    if not np.any(target.pixels >= 0.5):
        raise TargetEmpty("目标剪影没有 >= 0.5 的像素")

    objective = FrameObjective(template, target, cam, render_cfg, weights)
    if init is None:
        init = initial_guess(template, objective, cfg)

    lr = cfg.lr_vector()
    theta = init.to_vector()
    trace: List[LossReport] = []
    iou_checks: Dict[int, float] = {}
    best_theta = theta.copy()
    best_report: Optional[LossReport] = None
    iteration = 0
    converged = False
    reached_target = False

    for stage_index, stage in enumerate(cfg.stages):
        mask = stage.mask()
        state = AdamState.zeros(PARAM_DIM)
        history: List[float] = []
        logger.info(f"阶段 {stage_index + 1}/{len(cfg.stages)} 开始: 参数组 {list(stage.groups)}，最多 {stage.iters} 次迭代")

        for _ in range(stage.iters):
            params = DeformParams.from_vector(theta)
            evaluation = objective.evaluate(params)
            report = evaluation.report
            trace.append(report)

            if not (math.isfinite(report.total) and np.all(np.isfinite(evaluation.grad))):
                logger.error(f"第 {iteration} 次迭代损失非有限: {report}")
                raise NonFiniteLoss(f"第 {iteration} 次迭代出现非有限损失", trace)

            if best_report is None or report.total < best_report.total:
                best_report = report
                best_theta = theta.copy()

            if checkpoint is not None and cfg.checkpoint_every and iteration % cfg.checkpoint_every == 0:
                checkpoint(iteration, params)

            if iteration % cfg.eval_every == 0:
                iou = sharp_iou(evaluation.mesh, cam, render_cfg, target)
                iou_checks[iteration] = iou
                logger.debug(f"迭代 {iteration}: 硬 IoU {iou:.4f}")
                if iou >= cfg.target_iou:
                    # 结果仍取损失最小的参数
                    reached_target = True
                    break

            if iteration % 50 == 0:
                logger.info(f"迭代 {iteration}: 总损失 {report.total:.6f} (iou {report.iou:.4f}, boundary {report.boundary:.4f})")
            else:
                logger.debug(f"迭代 {iteration}: 总损失 {report.total:.6f}")

            history.append(report.total)
            if _stalled(history, cfg.convergence_window, cfg.convergence_tol):
                logger.info(f"阶段 {stage_index + 1} 在迭代 {iteration} 收敛")
                if stage_index == len(cfg.stages) - 1:
                    converged = True
                break

            theta, state = adam_step(theta, evaluation.grad, state, lr, mask, cfg.beta1, cfg.beta2, cfg.eps)
            iteration += 1

        if reached_target:
            converged = True
            logger.info(f"迭代 {iteration} 达到目标 IoU {cfg.target_iou}")
            break

    best_params = DeformParams.from_vector(best_theta)
    best_mesh = deform(template, best_params)
    final_iou = sharp_iou(best_mesh, cam, render_cfg, target)
    logger.info(f"拟合结束: {iteration} 步，最优损失 {best_report.total:.6f}，硬 IoU {final_iou:.4f}")
    return FitResult(
        params=best_params,
        final_loss=best_report,
        iou=final_iou,
        iterations_run=iteration,
        converged=converged,
        trace=trace,
        iou_checks=iou_checks,
        mesh=best_mesh,
    )
