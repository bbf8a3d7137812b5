"""
鱼体长度测量 - 主入口

子命令: fit / pipeline / synth / eval / render-debug
退出码: 0 成功，1 参数或输入错误，2 计算失败
"""
import json
import logging
import os
import sys
from typing import Optional

import click
from dotenv import load_dotenv
from pydantic import ValidationError

from camera.camera_model import load_calibration
from camera.homography import compose_homography
from config.config_manager import ConfigManager, PipelineConfig, path_errors, DEFAULT_CONFIG_PATH
from pipeline.runner import (
    FrameContext, fit_single_frame, load_population_spec, load_template, render_debug, run_eval, run_pipeline,
    run_synth, write_overlay,
)
from storage.image_io import load_mask_png
from storage.result_recorder import ResultRecorder
from utils.exceptions import ConfigError, DmrError, NonFiniteLoss, SchemaMismatch
from utils.logger import setup_logging, get_logger

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

logger = get_logger(__name__)


class InputError(Exception):
    """命令行输入错误（退出码 1）"""


def _setup(ctx: click.Context, dry_run: bool = False) -> PipelineConfig:
    """配置日志并加载、校验配置文件"""
    opts = ctx.obj
    setup_logging(
        log_file=None if dry_run else opts['log_file'],
        log_level=opts['log_level'],
    )
    config_path = opts['config_path']
    manager = ConfigManager(config_path)
    if not manager.load():
        if opts['config_explicit']:
            raise InputError(f"配置文件不存在或无法解析: {config_path}")
        logger.info("未找到配置文件，使用默认配置")
    is_valid, errors = manager.validate(check_paths=False)
    if not is_valid:
        manager.show_validation_errors(errors)
        raise InputError("配置验证失败")
    return manager.pipeline_config()


def _apply_overrides(config: PipelineConfig, **overrides) -> PipelineConfig:
    try:
        return config.with_overrides(**overrides)
    except ValidationError as e:
        raise InputError(f"命令行参数无效: {e}") from e


def _check_inputs(config: PipelineConfig, require_frames: bool = False):
    errors = path_errors(config.paths, require_frames)
    if errors:
        raise InputError("; ".join(errors))


@click.group()
@click.option('--config', 'config_path', default=None, help='配置文件路径（默认 $DMR_CONFIG 或 config/config.json）')
@click.option('--log-level', default=None, help='日志级别（默认 $DMR_LOG_LEVEL 或 INFO）')
@click.option('--log-file', default='logs/dmr.log', show_default=True, help='日志文件路径')
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], log_level: Optional[str], log_file: str):
    """单目视频鱼体长度测量"""
    ctx.ensure_object(dict)
    ctx.obj.update(
        config_path=config_path or os.getenv('DMR_CONFIG', DEFAULT_CONFIG_PATH),
        config_explicit=config_path is not None or 'DMR_CONFIG' in os.environ,
        log_level=log_level or os.getenv('DMR_LOG_LEVEL', 'INFO'),
        log_file=log_file,
    )


@cli.command('fit')
@click.argument('mask_path')
@click.option('--out', default=None, help='输出目录')
@click.option('--calib', default=None, help='标定文件（覆盖 paths.calibration）')
@click.option('--seed', type=int, default=None, help='随机种子')
@click.option('--no-bending', is_flag=True, help='弯曲比固定为 1')
@click.option('--dry-run', is_flag=True, help='只校验配置与输入，不写出任何文件')
@click.pass_context
def fit_command(ctx, mask_path, out, calib, seed, no_bending, dry_run):
    """拟合单帧掩码：写出参数 JSON、拟合轨迹 CSV、叠加图与汇总"""
    config = _apply_overrides(_setup(ctx, dry_run), output=out, seed=seed,
                              use_bending=False if no_bending else None)
    calib_path = calib or config.paths.calibration
    if not os.path.exists(mask_path):
        raise InputError(f"掩码文件不存在: {mask_path}")
    if not calib_path or not os.path.exists(calib_path):
        raise InputError(f"标定文件不存在: {calib_path}")
    _check_inputs(config)
    if dry_run:
        click.echo("配置与输入校验通过（dry-run）")
        return

    cam = load_calibration(calib_path)
    target = load_mask_png(mask_path)
    template = load_template(config)
    recorder = ResultRecorder(config.paths.output)
    frame_id = os.path.splitext(os.path.basename(mask_path))[0]
    fit_ctx = FrameContext(template, cam, compose_homography(cam), config, config.paths.output)
    try:
        record, fit = fit_single_frame(target, fit_ctx, frame_id, '', recorder)
    except NonFiniteLoss as e:
        recorder.save_trace(f"{frame_id}_aborted", e.trace or [])
        raise
    write_overlay(fit, target, cam, config.render, recorder.path(f"{frame_id}_overlay.png"))
    recorder.save_lengths([record])
    summary = dict(record.to_row(), hard_iou=fit.iou, iterations=fit.iterations_run,
                   converged=fit.converged, final_loss=fit.final_loss.total)
    recorder.save_summary(summary)
    click.echo(f"长度 {record.length_mm:.1f} mm（弦长 {record.chord_mm:.1f} mm，弯曲比 {record.arc_ratio:.4f}），"
               f"硬 IoU {fit.iou:.4f}")


@cli.command('pipeline')
@click.option('--frames', default=None, help='场景目录（含 manifest.json）')
@click.option('--out', default=None, help='输出目录')
@click.option('--jobs', type=int, default=None, help='并行进程数')
@click.option('--seed', type=int, default=None, help='随机种子')
@click.option('--no-bending', is_flag=True, help='弯曲比固定为 1')
@click.option('--dry-run', is_flag=True, help='只校验配置与输入，不写出任何文件')
@click.pass_context
def pipeline_command(ctx, frames, out, jobs, seed, no_bending, dry_run):
    """处理整个场景目录：逐帧拟合、测长、按个体平均"""
    config = _apply_overrides(_setup(ctx, dry_run), frames=frames, output=out, jobs=jobs, seed=seed,
                              use_bending=False if no_bending else None)
    _check_inputs(config, require_frames=True)
    if not os.path.exists(os.path.join(config.paths.frames, 'manifest.json')):
        raise InputError(f"场景目录缺少 manifest.json: {config.paths.frames}")
    if dry_run:
        click.echo("配置与输入校验通过（dry-run）")
        return

    summary = run_pipeline(config)
    click.echo(f"{summary['n_ok']}/{summary['n_frames']} 帧成功，{summary['n_tracks']} 个个体 -> {config.paths.output}")
    if summary['n_ok'] == 0:
        raise DmrError("没有任何帧处理成功")


@cli.command('synth')
@click.argument('spec_path')
@click.option('--out', default=None, help='场景输出目录')
@click.option('--seed', type=int, default=None, help='覆盖种群种子')
@click.option('--dry-run', is_flag=True, help='只校验种群参数，不写出任何文件')
@click.pass_context
def synth_command(ctx, spec_path, out, seed, dry_run):
    """按种群参数 JSON 合成场景目录"""
    config = _setup(ctx, dry_run)
    if not os.path.exists(spec_path):
        raise InputError(f"种群参数文件不存在: {spec_path}")
    try:
        spec = load_population_spec(spec_path, seed)
    except (ValidationError, json.JSONDecodeError) as e:
        raise InputError(f"种群参数无效: {e}") from e
    if dry_run:
        click.echo(f"种群参数校验通过（dry-run）: {spec.n_fish} 条鱼 × {spec.frames_per_track} 帧")
        return
    out_dir = out or config.paths.frames or 'scene'
    manifest = run_synth(spec, out_dir, load_template(config), config.render)
    click.echo(f"已写出 {len(manifest['frames'])} 帧、{len(manifest['tracks'])} 条轨迹 -> {out_dir}")


@cli.command('eval')
@click.argument('pred_path')
@click.argument('gt_path')
@click.option('--out', default=None, help='输出目录')
@click.pass_context
def eval_command(ctx, pred_path, gt_path, out):
    """比较预测与真值长度直方图（bias / EMD / RMSD / KL）"""
    config = _setup(ctx)
    for path in (pred_path, gt_path):
        if not os.path.exists(path):
            raise InputError(f"长度文件不存在: {path}")
    metrics = run_eval(pred_path, gt_path, config.histogram, out or config.paths.output)
    click.echo(json.dumps(metrics.to_dict(), indent=2))


@cli.command('render-debug')
@click.argument('params_path')
@click.option('--calib', default=None, help='标定文件（覆盖 paths.calibration）')
@click.option('--out', default=None, help='输出目录')
@click.option('--name', default='render', show_default=True, help='输出文件名前缀')
@click.pass_context
def render_debug_command(ctx, params_path, calib, out, name):
    """按参数 JSON 渲染 8 位 PNG 与浮点 PFM"""
    config = _setup(ctx)
    calib_path = calib or config.paths.calibration
    if not os.path.exists(params_path):
        raise InputError(f"参数文件不存在: {params_path}")
    if not calib_path or not os.path.exists(calib_path):
        raise InputError(f"标定文件不存在: {calib_path}")
    render_debug(params_path, calib_path, out or config.paths.output, load_template(config), config.render, name)


def main(argv=None) -> int:
    """命令行入口，返回退出码"""
    load_dotenv()
    try:
        cli.main(args=argv, prog_name='dmr', standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        click.echo("\n程序已退出", err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except (InputError, ConfigError, SchemaMismatch, OSError) as e:
        click.echo(f"错误: {e}", err=True)
        return EXIT_USAGE
    except DmrError as e:
        logging.getLogger(__name__).error(f"计算失败: {type(e).__name__}: {e}")
        click.echo(f"计算失败: {type(e).__name__}: {e}", err=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
