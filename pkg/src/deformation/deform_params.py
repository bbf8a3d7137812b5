"""
变形参数（根变换 + 两个关节的旋转/平移/缩放 + 蒙皮精度因子）
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

NUM_JOINTS = 2
SKIN_EPS = 1e-6
DEFAULT_SKIN_SCALE = 6.0

# 下三角因子 A_j 的 6 个自由元素
TRIL_INDEX = ((0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2))

# 参数向量布局（顺序即序列化顺序）
PARAM_LAYOUT: Tuple[Tuple[str, Tuple[int, ...]], ...] = (
    ('root_rot', (3,)),
    ('root_trans', (3,)),
    ('root_log_scale', (1,)),
    ('joint_rot', (NUM_JOINTS, 3)),
    ('joint_trans', (NUM_JOINTS, 3)),
    ('joint_log_scale', (NUM_JOINTS,)),
    ('skin_chol', (NUM_JOINTS, 6)),
)


def _build_slices() -> Dict[str, slice]:
    slices = {}
    start = 0
    for name, shape in PARAM_LAYOUT:
        size = int(np.prod(shape))
        slices[name] = slice(start, start + size)
        start += size
    return slices


PARAM_SLICES = _build_slices()
PARAM_DIM = PARAM_SLICES['skin_chol'].stop

# 分阶段优化使用的参数组 -> 参数字段
PARAM_GROUPS: Dict[str, Tuple[str, ...]] = {
    'root_rot': ('root_rot',),
    'root_trans': ('root_trans',),
    'root_scale': ('root_log_scale',),
    'joint_rot': ('joint_rot',),
    'joint_trans': ('joint_trans',),
    'joint_scale': ('joint_log_scale',),
    'skin': ('skin_chol',),
}


def group_mask(groups: Iterable[str]) -> np.ndarray:
    """
    参数组 -> 参数向量布尔掩码

    Args:
        groups: 参数组名称，见 PARAM_GROUPS

    Returns:
        (PARAM_DIM,) 布尔数组
    """
    mask = np.zeros(PARAM_DIM, dtype=bool)
    for group in groups:
        if group not in PARAM_GROUPS:
            raise ValueError(f"未知参数组: {group}，可选: {list(PARAM_GROUPS)}")
        for name in PARAM_GROUPS[group]:
            mask[PARAM_SLICES[name]] = True
    return mask


@dataclass(frozen=True, eq=False)
class DeformParams:
    """
    单帧全部可学习变形参数

    缩放以对数形式存储，保证恒为正。
    """
    root_rot: np.ndarray
    root_trans: np.ndarray
    root_log_scale: float
    joint_rot: np.ndarray
    joint_trans: np.ndarray
    joint_log_scale: np.ndarray
    skin_chol: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'root_rot', np.array(self.root_rot, dtype=np.float64).reshape(3))
        object.__setattr__(self, 'root_trans', np.array(self.root_trans, dtype=np.float64).reshape(3))
        object.__setattr__(self, 'root_log_scale', float(self.root_log_scale))
        object.__setattr__(self, 'joint_rot', np.array(self.joint_rot, dtype=np.float64).reshape(NUM_JOINTS, 3))
        object.__setattr__(self, 'joint_trans', np.array(self.joint_trans, dtype=np.float64).reshape(NUM_JOINTS, 3))
        object.__setattr__(self, 'joint_log_scale', np.array(self.joint_log_scale, dtype=np.float64).reshape(NUM_JOINTS))
        chol = np.array(self.skin_chol, dtype=np.float64)
        if chol.shape == (NUM_JOINTS, 6):
            chol = _unpack_tril(chol)
        chol = np.tril(chol.reshape(NUM_JOINTS, 3, 3))
        object.__setattr__(self, 'skin_chol', chol)
        if not all(np.all(np.isfinite(a)) for a in (self.root_rot, self.root_trans, self.joint_rot,
                                                    self.joint_trans, self.joint_log_scale, chol)):
            raise ValueError("变形参数包含非有限值")

    # ---- 构造 ----
    @classmethod
    def identity(cls, skin_scale: float = DEFAULT_SKIN_SCALE) -> 'DeformParams':
        """零旋转/零平移/单位缩放，蒙皮因子 A_j = skin_scale * I"""
        return cls(
            root_rot=np.zeros(3),
            root_trans=np.zeros(3),
            root_log_scale=0.0,
            joint_rot=np.zeros((NUM_JOINTS, 3)),
            joint_trans=np.zeros((NUM_JOINTS, 3)),
            joint_log_scale=np.zeros(NUM_JOINTS),
            skin_chol=np.stack([skin_scale * np.eye(3)] * NUM_JOINTS),
        )

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> 'DeformParams':
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (PARAM_DIM,):
            raise ValueError(f"参数向量长度应为 {PARAM_DIM}，当前: {vec.shape}")
        fields = {name: vec[PARAM_SLICES[name]].reshape(shape) for name, shape in PARAM_LAYOUT}
        fields['root_log_scale'] = float(fields['root_log_scale'][0])
        return cls(**fields)

    def to_vector(self) -> np.ndarray:
        vec = np.zeros(PARAM_DIM)
        vec[PARAM_SLICES['root_rot']] = self.root_rot
        vec[PARAM_SLICES['root_trans']] = self.root_trans
        vec[PARAM_SLICES['root_log_scale']] = self.root_log_scale
        vec[PARAM_SLICES['joint_rot']] = self.joint_rot.reshape(-1)
        vec[PARAM_SLICES['joint_trans']] = self.joint_trans.reshape(-1)
        vec[PARAM_SLICES['joint_log_scale']] = self.joint_log_scale
        vec[PARAM_SLICES['skin_chol']] = _pack_tril(self.skin_chol).reshape(-1)
        return vec

    def replace(self, **changes) -> 'DeformParams':
        fields = {name: getattr(self, name) for name, _ in PARAM_LAYOUT}
        fields.update(changes)
        return DeformParams(**fields)

    # ---- 派生量 ----
    @property
    def root_scale(self) -> float:
        return float(np.exp(self.root_log_scale))

    @property
    def joint_scale(self) -> np.ndarray:
        return np.exp(self.joint_log_scale)

    def precision_matrices(self) -> np.ndarray:
        """Q_j = A_j^T A_j + eps I，(2, 3, 3) 对称正定"""
        A = self.skin_chol
        return np.einsum('jba,jbc->jac', A, A) + SKIN_EPS * np.eye(3)[None]

    # ---- 序列化 ----
    def to_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {'field_order': [name for name, _ in PARAM_LAYOUT]}
        vec = self.to_vector()
        for name, shape in PARAM_LAYOUT:
            values = vec[PARAM_SLICES[name]].reshape(shape)
            data[name] = float(values[0]) if name == 'root_log_scale' else values.tolist()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> 'DeformParams':
        missing = [name for name, _ in PARAM_LAYOUT if name not in data]
        if missing:
            raise ValueError(f"变形参数记录缺少字段: {missing}")
        vec = np.concatenate([np.asarray(data[name], dtype=np.float64).reshape(-1) for name, _ in PARAM_LAYOUT])
        return cls.from_vector(vec)

    def save(self, path: str):
        """保存为 JSON（浮点以 repr 精度写出，可逐位恢复）"""
        out_dir = os.path.dirname(path)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=4)
        logger.debug(f"变形参数已保存: {path}")

    @classmethod
    def load(cls, path: str) -> 'DeformParams':
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def _pack_tril(chol: np.ndarray) -> np.ndarray:
    return np.stack([[A[i, j] for i, j in TRIL_INDEX] for A in chol])


def _unpack_tril(packed: np.ndarray) -> np.ndarray:
    out = np.zeros((len(packed), 3, 3))
    for k, (i, j) in enumerate(TRIL_INDEX):
        out[:, i, j] = packed[:, k]
    return out


def param_names() -> List[str]:
    """参数向量每个分量的名称，用于日志与调试"""
    names = []
    for name, shape in PARAM_LAYOUT:
        for idx in np.ndindex(*shape):
            names.append(name + ''.join(f'[{i}]' for i in idx))
    return names
