"""
批处理流程模块
"""
from .runner import (
    FrameJob, FrameContext, FrameOutcome, load_template, load_scene_manifest, fit_single_frame, process_frame,
    run_pipeline, run_pipeline_async, run_eval, run_synth, load_population_spec, render_debug, write_overlay,
)

__all__ = [
    'FrameJob', 'FrameContext', 'FrameOutcome', 'load_template', 'load_scene_manifest', 'fit_single_frame',
    'process_frame', 'run_pipeline', 'run_pipeline_async', 'run_eval', 'run_synth', 'load_population_spec',
    'render_debug', 'write_overlay',
]
