"""
网格数据结构与拓扑工具
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Set, Tuple

import numpy as np
from scipy import sparse

from utils.exceptions import DegenerateFace, InvalidTopology, IsolatedVertex, MissingAnnotation

logger = logging.getLogger(__name__)

KEYPOINT_NAMES = ('head', 'center', 'tail')
DEGENERATE_AREA = 1e-12


@dataclass(frozen=True, eq=False)
class TemplateMesh:
    """
    静止姿态的鱼体模板网格

    Attributes:
        vertices: (N, 3) 顶点坐标，模板单位
        faces: (F, 3) 三角面顶点索引
        joints: (2, 3) 关节枢轴点
        keypoints: {'head', 'center', 'tail'} -> 顶点索引
        spine: 头 -> 关节1 -> 中心 -> 关节2 -> 尾 的顶点索引路径
    """
    vertices: np.ndarray
    faces: np.ndarray
    joints: np.ndarray
    keypoints: Dict[str, int]
    spine: Tuple[int, ...]
    name: str = field(default='template')

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        joints = np.ascontiguousarray(self.joints, dtype=np.float64)
        vertices.setflags(write=False)
        faces.setflags(write=False)
        joints.setflags(write=False)
        object.__setattr__(self, 'vertices', vertices)
        object.__setattr__(self, 'faces', faces)
        object.__setattr__(self, 'joints', joints)
        object.__setattr__(self, 'keypoints', {k: int(v) for k, v in self.keypoints.items()})
        object.__setattr__(self, 'spine', tuple(int(i) for i in self.spine))
        self._validate()

    def _validate(self):
        n = len(self.vertices)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise InvalidTopology(f"顶点数组形状应为 (N, 3)，当前: {self.vertices.shape}")
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= n:
                raise InvalidTopology(f"面索引越界: 顶点数 {n}，索引范围 [{self.faces.min()}, {self.faces.max()}]")
            f = self.faces
            repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if repeated.any():
                raise InvalidTopology(f"第 {int(np.argmax(repeated))} 个面存在重复顶点索引")
            edges, counts = np.unique(_directed_to_undirected(f), axis=0, return_counts=True)
            if (counts > 2).any():
                bad = edges[np.argmax(counts)]
                raise InvalidTopology(f"边 {tuple(bad)} 被超过两个面共享")

        if self.joints.shape != (2, 3):
            raise MissingAnnotation(f"模板必须恰好有 2 个关节，当前形状: {self.joints.shape}")
        missing = [k for k in KEYPOINT_NAMES if k not in self.keypoints]
        if missing:
            raise MissingAnnotation(f"缺少关键点: {missing}")
        kp = [self.keypoints[k] for k in KEYPOINT_NAMES]
        if len(set(kp)) != 3:
            raise MissingAnnotation(f"头/中心/尾关键点必须互不相同: {kp}")
        if any(i < 0 or i >= n for i in kp + list(self.spine)):
            raise InvalidTopology("关键点或脊线索引越界")
        if len(self.spine) != 5:
            raise MissingAnnotation(f"脊线路径应有 5 个顶点，当前: {len(self.spine)}")
        if (self.spine[0], self.spine[2], self.spine[4]) != (self.keypoints['head'], self.keypoints['center'], self.keypoints['tail']):
            raise MissingAnnotation("脊线路径必须为 头 -> 关节1 -> 中心 -> 关节2 -> 尾")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def centroid(self) -> np.ndarray:
        """顶点均值，根变换的旋转/缩放中心"""
        c = self.vertices.mean(axis=0) if len(self.vertices) else np.zeros(3)
        c.setflags(write=False)
        return c

    @cached_property
    def edges(self) -> np.ndarray:
        return mesh_edges(self.faces)

    @cached_property
    def face_pairs(self) -> np.ndarray:
        return face_adjacency(self.faces)

    @cached_property
    def neighbors(self) -> Dict[int, Set[int]]:
        return vertex_neighbors(self)

    @cached_property
    def laplacian(self) -> sparse.csr_matrix:
        """均匀权重拉普拉斯矩阵，所有变形网格共享"""
        return uniform_laplacian(self.neighbors, self.num_vertices)


@dataclass(frozen=True, eq=False)
class DeformedMesh:
    """
    变形后的网格，拓扑与模板共享（faces 即模板数组本身）
    """
    template: TemplateMesh
    vertices: np.ndarray
    joints: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64)
        if vertices.shape != self.template.vertices.shape:
            raise InvalidTopology(f"变形网格顶点数 {vertices.shape} 与模板 {self.template.vertices.shape} 不一致")
        object.__setattr__(self, 'vertices', vertices)
        object.__setattr__(self, 'joints', np.asarray(self.joints, dtype=np.float64))

    @classmethod
    def from_template(cls, template: TemplateMesh) -> 'DeformedMesh':
        """静止姿态（未变形）网格"""
        return cls(template, template.vertices.copy(), template.joints.copy())

    @property
    def faces(self) -> np.ndarray:
        return self.template.faces

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def keypoint(self, name: str) -> np.ndarray:
        return self.vertices[self.template.keypoints[name]]

    @property
    def spine_points(self) -> np.ndarray:
        return self.vertices[list(self.template.spine)]


def _directed_to_undirected(faces: np.ndarray) -> np.ndarray:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0)
    return np.sort(e, axis=1)


def mesh_edges(faces: np.ndarray) -> np.ndarray:
    """
    无向边列表

    Args:
        faces: (F, 3) 面索引

    Returns:
        (E, 2) 升序去重的边，每行 i < j
    """
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if not len(faces):
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(_directed_to_undirected(faces), axis=0)


def face_adjacency(faces: np.ndarray) -> np.ndarray:
    """
    共享一条边的面对

    Returns:
        (P, 2) 面索引对，按边的字典序排列
    """
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    owners: Dict[Tuple[int, int], List[int]] = defaultdict(list)
    for fi, (a, b, c) in enumerate(faces.tolist()):
        for u, v in ((a, b), (b, c), (c, a)):
            owners[(min(u, v), max(u, v))].append(fi)
    pairs = [tuple(fs) for _, fs in sorted(owners.items()) if len(fs) == 2]
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def face_normals(mesh) -> np.ndarray:
    """
    单位面法向（按顶点顺序右手定则）

    Args:
        mesh: TemplateMesh 或 DeformedMesh

    Returns:
        (F, 3) 单位法向

    Raises:
        DegenerateFace: 存在面积小于 1e-12 的面
    """
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    norm = np.linalg.norm(cross, axis=1)
    area = 0.5 * norm
    if len(area) and area.min() < DEGENERATE_AREA:
        bad = int(np.argmin(area))
        raise DegenerateFace(f"第 {bad} 个面退化，面积 {area[bad]:.3e}")
    return cross / norm[:, None]


def vertex_neighbors(mesh) -> Dict[int, Set[int]]:
    """
    顶点邻接表（由共享边推出，对称）

    Returns:
        顶点索引 -> 邻居集合，孤立顶点对应空集合
    """
    adjacency: Dict[int, Set[int]] = {i: set() for i in range(len(mesh.vertices))}
    for i, j in mesh_edges(mesh.faces).tolist():
        adjacency[i].add(j)
        adjacency[j].add(i)
    return adjacency


def uniform_laplacian(neighbors: Dict[int, Set[int]], num_vertices: int) -> sparse.csr_matrix:
    """
    均匀权重拉普拉斯 L = I - D⁻¹A

    Raises:
        IsolatedVertex: 存在没有邻居的顶点
    """
    rows, cols, vals = [], [], []
    for i in range(num_vertices):
        nbrs = sorted(neighbors.get(i, ()))
        if not nbrs:
            raise IsolatedVertex(f"顶点 {i} 没有邻居")
        w = 1.0 / len(nbrs)
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
        rows.extend([i] * len(nbrs))
        cols.extend(nbrs)
        vals.extend([-w] * len(nbrs))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(num_vertices, num_vertices))
