"""
合成真值场景模块
"""
from .scene_generator import (
    SceneSpec, Scene, PopulationSpec, default_camera, default_template, place_params, oracle_record,
    generate_scene, generate_track, generate_population, random_bend_params, sample_lengths, write_scene,
)

__all__ = [
    'SceneSpec', 'Scene', 'PopulationSpec', 'default_camera', 'default_template', 'place_params', 'oracle_record',
    'generate_scene', 'generate_track', 'generate_population', 'random_bend_params', 'sample_lengths', 'write_scene',
]
