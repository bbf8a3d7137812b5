"""
网格模块
"""
from .template_mesh import (
    TemplateMesh, DeformedMesh, face_normals, vertex_neighbors, mesh_edges, face_adjacency, uniform_laplacian,
)
from .fish_template import make_fish_template
from .mesh_io import load_mesh, save_mesh

__all__ = [
    'TemplateMesh', 'DeformedMesh', 'face_normals', 'vertex_neighbors', 'mesh_edges',
    'face_adjacency', 'uniform_laplacian', 'make_fish_template', 'load_mesh', 'save_mesh',
]
