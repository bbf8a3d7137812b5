"""
拟合配置
"""
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from deformation.deform_params import PARAM_DIM, PARAM_GROUPS, PARAM_SLICES, group_mask


class StageConfig(BaseModel):
    """一个优化阶段：启用的参数组与迭代次数"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    groups: Tuple[str, ...]
    iters: int = Field(gt=0)

    @field_validator('groups')
    @classmethod
    def _known_groups(cls, groups):
        unknown = [g for g in groups if g not in PARAM_GROUPS]
        if unknown:
            raise ValueError(f"未知参数组: {unknown}，可选: {list(PARAM_GROUPS)}")
        if not groups:
            raise ValueError("阶段至少需要一个参数组")
        return tuple(groups)

    def mask(self) -> np.ndarray:
        return group_mask(self.groups)


ROOT_GROUPS = ('root_rot', 'root_trans', 'root_scale')


def default_stages() -> Tuple[StageConfig, ...]:
    """根位姿 -> 加关节旋转 -> 全部参数"""
    return (
        StageConfig(groups=ROOT_GROUPS, iters=150),
        StageConfig(groups=ROOT_GROUPS + ('joint_rot',), iters=150),
        StageConfig(groups=tuple(PARAM_GROUPS), iters=200),
    )


class FitConfig(BaseModel):
    """Adam 分阶段拟合参数"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    lr_rot: float = Field(default=0.02, gt=0)
    lr_trans: float = Field(default=0.02, gt=0)
    lr_scale: float = Field(default=0.01, gt=0)
    lr_skin: float = Field(default=0.01, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    max_iters: int = Field(default=500, gt=0)
    stages: Tuple[StageConfig, ...] = Field(default_factory=default_stages)
    convergence_tol: float = Field(default=1e-5, ge=0)
    convergence_window: int = Field(default=20, gt=0)
    target_iou: float = Field(default=0.999, gt=0, le=1)
    eval_every: int = Field(default=10, gt=0)
    init_bend_grid_deg: Tuple[float, ...] = (-30.0, 0.0, 30.0)
    init_random_candidates: int = Field(default=4, ge=0)
    checkpoint_every: int = Field(default=0, ge=0)
    use_bending: bool = True
    seed: int = 0

    @model_validator(mode='after')
    def _check_budget(self):
        total = sum(stage.iters for stage in self.stages)
        if not self.stages:
            raise ValueError("至少需要一个优化阶段")
        if total > self.max_iters:
            raise ValueError(f"各阶段迭代次数之和 {total} 超过 max_iters {self.max_iters}")
        return self

    def lr_vector(self) -> np.ndarray:
        """按参数字段展开的学习率向量"""
        lr = np.zeros(PARAM_DIM)
        lr[PARAM_SLICES['root_rot']] = self.lr_rot
        lr[PARAM_SLICES['joint_rot']] = self.lr_rot
        lr[PARAM_SLICES['root_trans']] = self.lr_trans
        lr[PARAM_SLICES['joint_trans']] = self.lr_trans
        lr[PARAM_SLICES['root_log_scale']] = self.lr_scale
        lr[PARAM_SLICES['joint_log_scale']] = self.lr_scale
        lr[PARAM_SLICES['skin_chol']] = self.lr_skin
        return lr
