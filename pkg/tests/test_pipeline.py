"""
批处理流程与命令行入口
"""
import json
import os
import shutil
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from config.config_manager import PipelineConfig
from deformation.deform_params import DeformParams
from localization.keypoint_localizer import AbsoluteKeypoints, LengthRecord
from main import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from mesh.mesh_io import save_mesh
from pipeline.runner import load_scene_manifest, run_eval, run_pipeline
from rendering.soft_renderer import hard_iou, hard_mask
from storage.image_io import load_mask_png
from synthesis.scene_generator import PopulationSpec, generate_population, write_scene
from utils.exceptions import ConfigError, NearParallel

FAST_FIT = {
    'max_iters': 10,
    'stages': [{'groups': ['root_rot', 'root_trans', 'root_scale'], 'iters': 10}],
    'init_bend_grid_deg': [0.0],
    'init_random_candidates': 0,
    'eval_every': 5,
}

POPULATION = dict(n_fish=2, frames_per_track=2, length_mean_mm=600.0, length_std_mm=30.0, length_low_mm=500.0,
                  length_high_mm=700.0, max_bend_deg=15.0, position_spread_mm=60.0, jitter_position_mm=20.0,
                  focal=400.0, width=96, height=72, seed=11)


@pytest.fixture(scope='module')
def workspace(tmp_path_factory, fish):
    """小场景目录 + 指向小鱼体模板的配置文件"""
    root = tmp_path_factory.mktemp('pipeline')
    template_path = str(root / 'fish.obj')
    save_mesh(fish, template_path)
    scene_dir = str(root / 'scene')
    write_scene(generate_population(PopulationSpec(**POPULATION), template=fish), scene_dir)
    config = {'paths': {'template': template_path, 'frames': scene_dir, 'output': str(root / 'output')},
              'fit': FAST_FIT}
    config_path = root / 'config.json'
    config_path.write_text(json.dumps(config), encoding='utf-8')
    return SimpleNamespace(root=root, scene=scene_dir, config=str(config_path), template=template_path,
                           calib=os.path.join(scene_dir, 'calib.json'))


def cli(workspace, tmp_path, *args) -> int:
    return main(['--config', workspace.config, '--log-file', str(tmp_path / 'logs' / 'dmr.log'), *args])


def pipeline_config(workspace, out_dir, **overrides) -> PipelineConfig:
    with open(workspace.config, encoding='utf-8') as f:
        data = json.load(f)
    data['paths']['output'] = str(out_dir)
    data.update(overrides)
    return PipelineConfig.model_validate(data)


def fake_fit_single_frame(fail_frames):
    def fake(mask, ctx, frame_id='', track_id='', recorder=None):
        if frame_id in fail_frames:
            raise NearParallel("视线与模型直线接近平行")
        point = np.array([0.0, 0.0, 5000.0])
        record = LengthRecord(AbsoluteKeypoints(point, point, point), 600.0, 1.0, 600.0, frame_id, track_id)
        return record, SimpleNamespace(iou=0.9, iterations_run=3, converged=True)
    return fake


class TestManifest:
    def test_load(self, workspace):
        jobs, calib = load_scene_manifest(workspace.scene)
        assert [job.frame_id for job in jobs] == ['0000', '0001', '0002', '0003']
        assert jobs[0].track_id == 'fish_0000'
        assert os.path.exists(jobs[0].mask_path)
        assert calib == workspace.calib

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_scene_manifest(str(tmp_path))

    def test_malformed(self, tmp_path):
        (tmp_path / 'manifest.json').write_text(json.dumps({'frames': [{'mask': 'a.png'}]}), encoding='utf-8')
        with pytest.raises(ConfigError):
            load_scene_manifest(str(tmp_path))


class TestCrashIsolation:
    def test_failed_frame_recorded_and_others_kept(self, workspace, tmp_path, mocker):
        mocker.patch('pipeline.runner.fit_single_frame', side_effect=fake_fit_single_frame({'0001'}))
        summary = run_pipeline(pipeline_config(workspace, tmp_path / 'out'), show_progress=False)
        assert summary['n_frames'] == 4
        assert summary['n_ok'] == 3
        assert summary['status_counts'] == {'NearParallel': 1, 'ok': 3}
        lengths = pd.read_csv(tmp_path / 'out' / 'lengths.csv', dtype={'frame_id': str})
        # 输出顺序与 manifest 一致
        assert lengths['frame_id'].tolist() == ['0000', '0001', '0002', '0003']
        assert lengths.loc[1, 'status'] == 'NearParallel'
        tracks = pd.read_csv(tmp_path / 'out' / 'tracks.csv')
        assert tracks.set_index('track_id').loc['fish_0000', 'n_frames'] == 1

    def test_corrupted_mask(self, workspace, tmp_path, mocker):
        scene = tmp_path / 'scene'
        shutil.copytree(workspace.scene, scene)
        (scene / 'frames' / '0002_mask.png').write_bytes(b'not a png')
        mocker.patch('pipeline.runner.fit_single_frame', side_effect=fake_fit_single_frame(set()))
        config = pipeline_config(workspace, tmp_path / 'out')
        summary = run_pipeline(config, scene_dir=str(scene), show_progress=False)
        assert summary['n_ok'] == 3
        failed = [status for status in summary['status_counts'] if status != 'ok']
        assert failed == ['UnidentifiedImageError']

    def test_all_frames_failed_exit_code(self, workspace, tmp_path, mocker):
        mocker.patch('pipeline.runner.fit_single_frame',
                     side_effect=fake_fit_single_frame({'0000', '0001', '0002', '0003'}))
        assert cli(workspace, tmp_path, 'pipeline', '--out', str(tmp_path / 'out')) == EXIT_FAILURE


class TestCli:
    def test_missing_mask(self, workspace, tmp_path):
        code = cli(workspace, tmp_path, 'fit', str(tmp_path / 'nope.png'), '--calib', workspace.calib)
        assert code == EXIT_USAGE

    def test_missing_explicit_config(self, tmp_path):
        code = main(['--config', str(tmp_path / 'nope.json'), '--log-file', str(tmp_path / 'x.log'),
                     'eval', 'a.csv', 'b.csv'])
        assert code == EXIT_USAGE

    def test_invalid_jobs_override(self, workspace, tmp_path):
        assert cli(workspace, tmp_path, 'pipeline', '--jobs', '0', '--dry-run') == EXIT_USAGE

    def test_unknown_command(self, workspace, tmp_path):
        assert cli(workspace, tmp_path, 'measure') == EXIT_USAGE

    def test_dry_run_writes_nothing(self, workspace, tmp_path):
        out = tmp_path / 'out'
        assert cli(workspace, tmp_path, 'pipeline', '--out', str(out), '--dry-run') == EXIT_OK
        assert not out.exists()
        assert not (tmp_path / 'logs').exists()

    def test_eval_identical_files(self, workspace, tmp_path):
        gt = os.path.join(workspace.scene, 'gt_lengths.csv')
        assert cli(workspace, tmp_path, 'eval', gt, gt, '--out', str(tmp_path)) == EXIT_OK
        metrics = json.loads((tmp_path / 'metrics.json').read_text(encoding='utf-8'))
        assert metrics['bias_mm'] == 0.0
        assert metrics['emd_mm'] == 0.0
        assert metrics['rmsd_fraction'] == 0.0
        assert metrics['kl'] == pytest.approx(0.0, abs=1e-12)
        assert (tmp_path / 'plot_data.csv').exists()

    def test_eval_missing_column(self, workspace, tmp_path):
        bad = tmp_path / 'bad.csv'
        pd.DataFrame({'id': ['a'], 'size': [600.0]}).to_csv(bad, index=False)
        gt = os.path.join(workspace.scene, 'gt_lengths.csv')
        assert cli(workspace, tmp_path, 'eval', str(bad), gt) == EXIT_USAGE

    def test_synth(self, workspace, tmp_path):
        spec_path = tmp_path / 'population.json'
        spec_path.write_text(json.dumps(dict(POPULATION, n_fish=1)), encoding='utf-8')
        out = tmp_path / 'scene'
        assert cli(workspace, tmp_path, 'synth', str(spec_path), '--out', str(out), '--dry-run') == EXIT_OK
        assert not out.exists()
        assert cli(workspace, tmp_path, 'synth', str(spec_path), '--out', str(out)) == EXIT_OK
        manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
        assert len(manifest['frames']) == 2

    def test_synth_invalid_spec(self, workspace, tmp_path):
        spec_path = tmp_path / 'population.json'
        spec_path.write_text(json.dumps({'n_fish': 0}), encoding='utf-8')
        assert cli(workspace, tmp_path, 'synth', str(spec_path)) == EXIT_USAGE

    def test_render_debug_matches_scene(self, workspace, tmp_path):
        oracle = pd.read_csv(os.path.join(workspace.scene, 'oracle.csv'), dtype={'frame_id': str})
        params = DeformParams.from_vector(json.loads(oracle.loc[0, 'params']))
        params_path = tmp_path / 'params.json'
        params.save(str(params_path))
        code = cli(workspace, tmp_path, 'render-debug', str(params_path), '--calib', workspace.calib,
                   '--out', str(tmp_path / 'debug'))
        assert code == EXIT_OK
        assert (tmp_path / 'debug' / 'render.pfm').exists()
        rendered = load_mask_png(str(tmp_path / 'debug' / 'render.png'))
        target = load_mask_png(os.path.join(workspace.scene, 'frames', '0000_mask.png'))
        assert hard_iou(hard_mask(rendered), target) > 0.9

    def test_fit_writes_outputs(self, workspace, tmp_path):
        mask = os.path.join(workspace.scene, 'frames', '0000_mask.png')
        out = tmp_path / 'fit'
        assert cli(workspace, tmp_path, 'fit', mask, '--calib', workspace.calib, '--out', str(out)) == EXIT_OK
        assert (out / 'params' / '0000_mask.json').exists()
        assert (out / 'traces' / '0000_mask.csv').exists()
        assert (out / '0000_mask_overlay.png').exists()
        assert not (out / 'checkpoints').exists()
        summary = json.loads((out / 'summary.json').read_text(encoding='utf-8'))
        assert summary['frame_id'] == '0000_mask'
        assert 'hard_iou' in summary
        assert len(pd.read_csv(out / 'lengths.csv')) == 1

    def test_fit_writes_checkpoints(self, workspace, tmp_path):
        with open(workspace.config, encoding='utf-8') as f:
            data = json.load(f)
        data['fit'] = dict(data['fit'], checkpoint_every=5)
        config_path = tmp_path / 'config.json'
        config_path.write_text(json.dumps(data), encoding='utf-8')
        mask = os.path.join(workspace.scene, 'frames', '0000_mask.png')
        out = tmp_path / 'fit'
        code = main(['--config', str(config_path), '--log-file', str(tmp_path / 'logs' / 'dmr.log'),
                     'fit', mask, '--calib', workspace.calib, '--out', str(out)])
        assert code == EXIT_OK
        saved = sorted(os.listdir(out / 'checkpoints'))
        assert saved[0] == '0000_mask_00000.json'
        assert all(int(name[-10:-5]) % 5 == 0 for name in saved)
        params = DeformParams.load(str(out / 'checkpoints' / saved[0]))
        assert params.to_vector().shape == DeformParams.identity().to_vector().shape


class TestRunEval:
    def test_per_frame_predictions_averaged(self, tmp_path):
        pred = tmp_path / 'lengths.csv'
        pd.DataFrame({
            'frame_id': ['0', '1', '2'],
            'track_id': ['a', 'a', 'b'],
            'length_mm': [590.0, 610.0, 800.0],
            'status': ['ok', 'ok', 'ok'],
        }).to_csv(pred, index=False)
        gt = tmp_path / 'gt.csv'
        pd.DataFrame({'track_id': ['a', 'b'], 'length_mm': [600.0, 800.0]}).to_csv(gt, index=False)
        metrics = run_eval(str(pred), str(gt), PipelineConfig().histogram, str(tmp_path / 'eval'))
        assert metrics.emd_mm == 0.0
        plot = pd.read_csv(tmp_path / 'eval' / 'plot_data.csv')
        assert plot['pred_mass'].sum() == pytest.approx(1.0)


@pytest.mark.slow
class TestDeterminism:
    def test_same_seed_same_lengths(self, workspace, tmp_path):
        a = run_pipeline(pipeline_config(workspace, tmp_path / 'a'), show_progress=False)
        b = run_pipeline(pipeline_config(workspace, tmp_path / 'b', jobs=2), show_progress=False)
        assert a['n_ok'] == b['n_ok']
        la = pd.read_csv(tmp_path / 'a' / 'lengths.csv')
        lb = pd.read_csv(tmp_path / 'b' / 'lengths.csv')
        pd.testing.assert_frame_equal(la, lb)

    def test_repeated_run_is_bit_identical(self, workspace, tmp_path):
        for name in ('a', 'b'):
            run_pipeline(pipeline_config(workspace, tmp_path / name, jobs=2, seed=5), show_progress=False)
        for table in ('lengths.csv', 'tracks.csv'):
            assert (tmp_path / 'a' / table).read_bytes() == (tmp_path / 'b' / table).read_bytes()
        summaries = []
        for name in ('a', 'b'):
            summary = json.loads((tmp_path / name / 'summary.json').read_text(encoding='utf-8'))
            # 只有时间戳随运行变化
            summary.pop('last_updated')
            summaries.append(summary)
        assert summaries[0] == summaries[1]
        assert summaries[0]['seed'] == 5
