"""
统一异常定义

所有业务异常都继承 DmrError，批处理流程按帧捕获 DmrError 并记录状态。
"""


class DmrError(Exception):
    """本项目所有异常的基类"""


# ---- 网格 ----
class MeshError(DmrError):
    """网格相关错误"""


class MalformedFile(MeshError):
    """无法解析的网格/标注记录"""


class InvalidTopology(MeshError):
    """面索引越界、重复索引或非流形边"""


class MissingAnnotation(MeshError):
    """缺少关节、关键点或脊线标注"""


class DegenerateFace(MeshError):
    """面积过小的退化三角面"""


# ---- 相机 ----
class CameraError(DmrError):
    """相机几何相关错误"""


class BehindCamera(CameraError):
    """点位于相机后方（Z <= 0）"""


class SingularIntrinsics(CameraError):
    """内参矩阵不可逆"""


class DegeneratePlane(CameraError):
    """相机中心位于参考平面上，单应矩阵奇异"""


class DegenerateConfiguration(CameraError):
    """对应点不足或共线，无法估计单应矩阵"""


# ---- 渲染 ----
class RenderError(DmrError):
    """渲染相关错误"""


class MeshBehindCamera(RenderError):
    """存在顶点深度小于近裁剪面"""


# ---- 损失 ----
class LossError(DmrError):
    """损失计算相关错误"""


class EmptyUnion(LossError):
    """预测与目标剪影都为空"""


class DegenerateMask(LossError):
    """掩码缺少前景或背景像素"""


class DimensionMismatch(LossError):
    """图像尺寸不一致"""


class IsolatedVertex(LossError):
    """存在没有邻居的顶点"""


# ---- 拟合 ----
class FitError(DmrError):
    """拟合相关错误"""


class TargetEmpty(FitError):
    """目标剪影为空"""


class NonFiniteLoss(FitError):
    """损失出现 NaN/Inf，携带截至当前的迭代轨迹"""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


# ---- 定位 ----
class LocalizationError(DmrError):
    """三维定位相关错误"""


class PointAtInfinity(LocalizationError):
    """中心点射线与参考平面平行"""


class NearParallel(LocalizationError):
    """射线与模型直线接近平行，最小二乘病态"""


class ZeroChord(LocalizationError):
    """头尾弦长为零"""


# ---- 评估 ----
class EvaluationError(DmrError):
    """直方图评估相关错误"""


class AllOutOfRange(EvaluationError):
    """所有长度都落在直方图范围之外"""


class EdgeMismatch(EvaluationError):
    """两个直方图的分箱边界不一致"""


class SchemaMismatch(EvaluationError):
    """长度 CSV 缺少必需的列"""


# ---- 合成 ----
class SynthesisError(DmrError):
    """合成场景相关错误"""


class FishOutOfFrame(SynthesisError):
    """鱼体投影超出图像范围"""


# ---- 配置 ----
class ConfigError(DmrError):
    """配置无效"""
