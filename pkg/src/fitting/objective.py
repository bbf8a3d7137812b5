"""
单帧重建目标：变形 -> 渲染 -> 损失，及其对参数的解析梯度
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from deformation.deform_params import DeformParams
from deformation.skinning import deform, deform_jacobian
from losses.silhouette_losses import binarize, distance_transform
from losses.total_loss import LossReport, LossWeights, total_loss
from mesh.template_mesh import DeformedMesh, TemplateMesh
from rendering.soft_renderer import RenderConfig, SoftSilhouette, render_silhouette_vjp
from camera.camera_model import CameraModel


@dataclass(frozen=True, eq=False)
class Evaluation:
    report: LossReport
    mesh: DeformedMesh
    pred: SoftSilhouette
    grad: Optional[np.ndarray]


class FrameObjective:
    """
    固定目标剪影与相机的重建损失

    目标的有符号距离图在构造时计算一次。
    """

    def __init__(self, template: TemplateMesh, target: SoftSilhouette, cam: CameraModel,
                 render_cfg: RenderConfig, weights: LossWeights):
        self.template = template
        self.target = target
        self.cam = cam
        self.render_cfg = render_cfg
        self.weights = weights
        self.target_sdf = distance_transform(binarize(target))

    def evaluate(self, params: DeformParams, with_grad: bool = True) -> Evaluation:
        """
        Args:
            params: 变形参数
            with_grad: 是否计算 dL/dθ

        Returns:
            Evaluation，grad 为 (PARAM_DIM,) 或 None
        """
        mesh = deform(self.template, params)
        pred, vjp = render_silhouette_vjp(mesh, self.cam, self.render_cfg)
        report, grads = total_loss(pred, self.target, self.target_sdf, mesh, params, self.weights)
        if not with_grad:
            return Evaluation(report, mesh, pred, None)
        g_vertices = vjp(grads.pixels) + grads.vertices
        jac = deform_jacobian(self.template, params)
        g_theta = np.einsum('nak,na->k', jac, g_vertices) + grads.params
        return Evaluation(report, mesh, pred, g_theta)

    def loss_value(self, theta: np.ndarray) -> float:
        """参数向量 -> 总损失，供有限差分检查"""
        return self.evaluate(DeformParams.from_vector(theta), with_grad=False).report.total
