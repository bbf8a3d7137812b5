"""
网格文件读写

.obj 子集（v / f 记录，1 起始索引）加上 JSON 标注旁车文件（joints / keypoints / spine）。
"""
import json
import logging
import os
from typing import Optional

import numpy as np

from mesh.template_mesh import TemplateMesh, face_normals
from utils.exceptions import MalformedFile, MissingAnnotation, InvalidTopology

logger = logging.getLogger(__name__)

IGNORED_RECORDS = {'vn', 'vt', 'vp', 'o', 'g', 's', 'usemtl', 'mtllib', 'l'}


def annotation_path_for(mesh_path: str) -> str:
    """fish.obj -> fish.json"""
    root, _ = os.path.splitext(mesh_path)
    return root + '.json'


def _parse_face_index(token: str, vertex_count: int, line_no: int) -> int:
    head = token.split('/')[0]
    try:
        index = int(head)
    except ValueError:
        raise MalformedFile(f"第 {line_no} 行: 无法解析面索引 '{token}'")
    if index == 0:
        raise MalformedFile(f"第 {line_no} 行: obj 索引从 1 开始，不能为 0")
    # 负索引相对当前已读顶点数
    return index - 1 if index > 0 else vertex_count + index


def read_obj(path: str):
    """
    读取 .obj 的顶点与三角面

    多边形面按扇形三角化。

    Returns:
        (vertices (N,3), faces (F,3))
    """
    vertices = []
    faces = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, raw in enumerate(f, 1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag = parts[0]
            if tag == 'v':
                if len(parts) < 4:
                    raise MalformedFile(f"第 {line_no} 行: 顶点记录至少需要 3 个坐标")
                try:
                    vertices.append([float(c) for c in parts[1:4]])
                except ValueError:
                    raise MalformedFile(f"第 {line_no} 行: 无法解析顶点坐标 '{line}'")
            elif tag == 'f':
                if len(parts) < 4:
                    raise MalformedFile(f"第 {line_no} 行: 面记录至少需要 3 个索引")
                idx = [_parse_face_index(t, len(vertices), line_no) for t in parts[1:]]
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
            elif tag in IGNORED_RECORDS:
                continue
            else:
                raise MalformedFile(f"第 {line_no} 行: 不支持的记录类型 '{tag}'")
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def load_annotations(path: str) -> dict:
    """
    读取标注旁车文件

    Raises:
        MissingAnnotation: 文件不存在或缺少 joints/keypoints/spine
        MalformedFile: JSON 无法解析
    """
    if not os.path.exists(path):
        raise MissingAnnotation(f"标注文件不存在: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise MalformedFile(f"标注文件 JSON 解析失败 {path}: {e}")
    missing = [k for k in ('joints', 'keypoints', 'spine') if k not in data]
    if missing:
        raise MissingAnnotation(f"标注文件缺少字段 {missing}: {path}")
    return data


def load_mesh(path: str, annotation_path: Optional[str] = None) -> TemplateMesh:
    """
    加载模板网格

    Args:
        path: .obj 文件路径
        annotation_path: 标注 JSON 路径，默认与 .obj 同名

    Returns:
        校验过的 TemplateMesh

    Raises:
        MalformedFile / InvalidTopology / MissingAnnotation / DegenerateFace
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"网格文件不存在: {path}")
    vertices, faces = read_obj(path)
    if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
        raise InvalidTopology(f"面索引越界: 顶点数 {len(vertices)}, 最大索引 {faces.max() + 1}")
    ann = load_annotations(annotation_path or annotation_path_for(path))
    try:
        mesh = TemplateMesh(
            vertices=vertices,
            faces=faces,
            joints=np.asarray(ann['joints'], dtype=np.float64),
            keypoints=ann['keypoints'],
            spine=ann['spine'],
            name=os.path.splitext(os.path.basename(path))[0],
        )
    except (TypeError, ValueError) as e:
        raise MalformedFile(f"标注内容无效: {e}")
    # 退化面在加载时直接报错
    face_normals(mesh)
    logger.info(f"网格加载成功: {path} ({mesh.num_vertices} 顶点, {mesh.num_faces} 面)")
    return mesh


def save_mesh(mesh: TemplateMesh, path: str, annotation_path: Optional[str] = None):
    """
    保存模板网格为 .obj + 标注 JSON

    Args:
        mesh: 模板网格
        path: .obj 输出路径
        annotation_path: 标注输出路径，默认与 .obj 同名
    """
    out_dir = os.path.dirname(path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    try:
        with open(path, 'w', encoding='utf-8') as f:
            f.write(f"# {mesh.name}\n")
            for x, y, z in mesh.vertices.tolist():
                f.write(f"v {x:.12g} {y:.12g} {z:.12g}\n")
            for a, b, c in (mesh.faces + 1).tolist():
                f.write(f"f {a} {b} {c}\n")
        with open(annotation_path or annotation_path_for(path), 'w', encoding='utf-8') as f:
            json.dump({
                'joints': mesh.joints.tolist(),
                'keypoints': dict(mesh.keypoints),
                'spine': list(mesh.spine),
            }, f, indent=4)
        logger.info(f"网格保存成功: {path}")
    except OSError as e:
        logger.error(f"保存网格失败 {path}: {e}")
        raise
