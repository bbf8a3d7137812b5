"""
共享测试夹具：小型程序化鱼体、合成相机、固定种子随机数
"""
import numpy as np
import pytest

from camera.camera_model import CameraModel, make_intrinsics
from deformation.deform_params import DeformParams
from mesh.fish_template import make_fish_template
from mesh.template_mesh import TemplateMesh
from synthesis.scene_generator import default_camera


def shifted(template: TemplateMesh, offset) -> TemplateMesh:
    """平移模板（顶点与关节一起），使恒等参数下网格位于相机前方"""
    offset = np.asarray(offset, dtype=np.float64)
    return TemplateMesh(
        vertices=template.vertices + offset,
        faces=template.faces,
        joints=template.joints + offset,
        keypoints=template.keypoints,
        spine=template.spine,
        name=template.name,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope='session')
def fish():
    """8 段、6 顶点环的小鱼体"""
    return make_fish_template(8, ring_size=6)


@pytest.fixture(scope='session')
def fish_ahead(fish):
    """鱼体居中并位于 z = 5 模型单位处（5000 mm）"""
    return shifted(fish, (-0.5, -0.1, 5.0))


@pytest.fixture(scope='session')
def front_camera():
    """正视相机：单位旋转、零平移，64x48"""
    return CameraModel(make_intrinsics(200.0, 64, 48), np.eye(3), np.zeros(3), 64, 48)


@pytest.fixture(scope='session')
def tiny_camera():
    """32x32 正视相机，用于梯度检验"""
    return CameraModel(make_intrinsics(100.0, 32, 32), np.eye(3), np.zeros(3), 32, 32)


@pytest.fixture(scope='session')
def scene_camera():
    """倾斜 30° 的合成场景相机，96x72"""
    return default_camera(focal=400.0, width=96, height=72)


def random_params(rng: np.random.Generator, scale: float = 0.2) -> DeformParams:
    """小幅随机变形参数（根变换为零）"""
    base = DeformParams.identity()
    return base.replace(
        joint_rot=rng.normal(0.0, scale, size=(2, 3)),
        joint_trans=rng.normal(0.0, 0.05 * scale, size=(2, 3)),
        joint_log_scale=rng.normal(0.0, 0.5 * scale, size=2),
        skin_chol=base.skin_chol + rng.normal(0.0, scale, size=(2, 3, 3)),
    )
