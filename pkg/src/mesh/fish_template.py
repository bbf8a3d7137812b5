"""
程序化鱼体模板

鱼体沿 x 轴从吻端 (x=0) 延伸到尾端 (x=1)，背线位于 y=0, z=0 直线上：
每个截面是中心在 (x, r(x), 0) 的椭圆，y 方向半轴 r(x)，z 方向半轴 thickness * r(x)。
脊线取背线上的顶点，因此直鱼的脊线严格共线。
"""
import logging
import math
from typing import Callable, List, Optional

import numpy as np

from mesh.template_mesh import TemplateMesh

logger = logging.getLogger(__name__)

JOINT_STATIONS = (1.0 / 3.0, 2.0 / 3.0)
CENTER_STATION = 0.5


def default_fish_profile(x: float) -> float:
    """默认体高轮廓（凹函数，两端为 0）"""
    return 0.14 * math.sin(math.pi * x) ** 0.75


def make_fish_template(
    n_segments: int,
    profile: Optional[Callable[[float], float]] = None,
    ring_size: int = 10,
    thickness: float = 0.35,
) -> TemplateMesh:
    """
    构造程序化鱼体模板

    Args:
        n_segments: 沿体长的均匀分段数（>= 4），关节与中心截面会额外插入
        profile: 体高轮廓函数 r(x)，x ∈ [0, 1]，要求在 (0, 1) 内为正
        ring_size: 每个截面环的顶点数（偶数，>= 4）
        thickness: z 方向半轴与 y 方向半轴之比

    Returns:
        闭合、包围盒长度为 1 的模板网格
    """
    if n_segments < 4:
        raise ValueError(f"n_segments 必须 >= 4，当前: {n_segments}")
    if ring_size < 4 or ring_size % 2:
        raise ValueError(f"ring_size 必须为 >= 4 的偶数，当前: {ring_size}")
    if thickness <= 0:
        raise ValueError(f"thickness 必须为正，当前: {thickness}")
    profile = profile or default_fish_profile

    uniform = [k / n_segments for k in range(1, n_segments)]
    stations: List[float] = sorted(set(round(s, 12) for s in uniform + [JOINT_STATIONS[0], CENTER_STATION, JOINT_STATIONS[1]]))
    stations = [s for s in stations if 0.0 < s < 1.0]

    theta = 2.0 * np.pi * np.arange(ring_size) / ring_size
    vertices = [np.zeros(3)]  # 吻端
    ring_start = []
    radii = []
    for x in stations:
        r = float(profile(x))
        if r <= 0:
            raise ValueError(f"轮廓在 x={x:.4f} 处必须为正，当前: {r}")
        radii.append(r)
        ring_start.append(len(vertices))
        ring = np.stack([
            np.full(ring_size, x),
            r * (1.0 - np.cos(theta)),
            thickness * r * np.sin(theta),
        ], axis=1)
        ring[0] = (x, 0.0, 0.0)  # 背线顶点精确落在轴上
        vertices.extend(ring)
    tail_index = len(vertices)
    vertices.append(np.array([1.0, 0.0, 0.0]))

    faces = []
    head_index = 0
    first = ring_start[0]
    for m in range(ring_size):
        faces.append((head_index, first + m, first + (m + 1) % ring_size))
    for k in range(len(stations) - 1):
        s0, s1 = ring_start[k], ring_start[k + 1]
        for m in range(ring_size):
            a, b = s0 + m, s0 + (m + 1) % ring_size
            d, c = s1 + m, s1 + (m + 1) % ring_size
            faces.append((a, c, b))
            faces.append((a, d, c))
    last = ring_start[-1]
    for m in range(ring_size):
        faces.append((last + m, tail_index, last + (m + 1) % ring_size))

    def station_vertex(x: float) -> int:
        return ring_start[stations.index(round(x, 12))]

    joints = np.array([[x, float(profile(x)), 0.0] for x in JOINT_STATIONS])
    keypoints = {'head': head_index, 'center': station_vertex(CENTER_STATION), 'tail': tail_index}
    spine = (
        head_index,
        station_vertex(JOINT_STATIONS[0]),
        keypoints['center'],
        station_vertex(JOINT_STATIONS[1]),
        tail_index,
    )

    mesh = TemplateMesh(
        vertices=np.array(vertices),
        faces=np.array(faces),
        joints=joints,
        keypoints=keypoints,
        spine=spine,
        name=f'fish_{n_segments}x{ring_size}',
    )
    logger.debug(f"程序化鱼体模板: {mesh.num_vertices} 顶点, {mesh.num_faces} 面")
    return mesh
