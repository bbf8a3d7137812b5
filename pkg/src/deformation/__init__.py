"""
变形模块
"""
from .deform_params import DeformParams, PARAM_DIM, PARAM_LAYOUT, PARAM_GROUPS, group_mask
from .skinning import SkinWeights, skin_weights, deform, deform_jacobian, transform_points
from .rotation import axis_angle_to_matrix, matrix_to_axis_angle

__all__ = [
    'DeformParams', 'PARAM_DIM', 'PARAM_LAYOUT', 'PARAM_GROUPS', 'group_mask',
    'SkinWeights', 'skin_weights', 'deform', 'deform_jacobian', 'transform_points',
    'axis_angle_to_matrix', 'matrix_to_axis_angle',
]
