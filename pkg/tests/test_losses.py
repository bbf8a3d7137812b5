"""
剪影损失、正则项与总损失
"""
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import random_params
from deformation.deform_params import DeformParams, PARAM_DIM
from deformation.skinning import deform
from losses import regularizers
from losses.regularizers import (
    laplacian_loss, normal_consistency_loss, scale_trans_reg, uniform_laplacian,
)
from losses.silhouette_losses import binarize, boundary_loss, distance_transform, soft_iou_loss
from losses.total_loss import LOSS_TERMS, LossWeights, total_loss
from mesh.template_mesh import vertex_neighbors
from utils.exceptions import DegenerateFace, DegenerateMask, DimensionMismatch, EmptyUnion, IsolatedVertex
from utils.finite_difference import central_difference, max_relative_error

BLOCK = np.zeros((5, 5))
BLOCK[1:4, 1:4] = 1.0


def bent_fish(fish, rng):
    return deform(fish, random_params(rng, scale=0.3))


class TestSoftIoU:
    def test_identical_binary_masks(self):
        loss, _ = soft_iou_loss(BLOCK, BLOCK)
        assert loss == pytest.approx(0.0)

    def test_disjoint_masks(self):
        other = np.zeros((5, 5))
        other[0, 0] = 1.0
        loss, _ = soft_iou_loss(BLOCK, other)
        assert loss == pytest.approx(1.0)

    def test_gradient_matches_finite_difference(self, rng):
        pred = rng.uniform(0.05, 0.95, size=(6, 7))
        target = (rng.uniform(size=(6, 7)) > 0.5).astype(float)
        _, analytic = soft_iou_loss(pred, target)
        numeric = central_difference(lambda p: soft_iou_loss(p, target)[0], pred, step=1e-6)
        assert max_relative_error(analytic, numeric, floor=1e-6) < 1e-6

    def test_empty_union(self):
        with pytest.raises(EmptyUnion):
            soft_iou_loss(np.zeros((3, 3)), np.zeros((3, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            soft_iou_loss(np.ones((3, 3)), np.ones((3, 4)))


class TestDistanceTransform:
    def test_signed_values(self):
        sdf = distance_transform(BLOCK)
        # 紧贴边界的内部像素为 0，中心为 -1
        assert sdf[1, 1] == 0.0
        assert sdf[1, 2] == 0.0
        assert sdf[2, 2] == -1.0
        # 外侧相邻像素为 1，角点为 √2
        assert sdf[0, 2] == 1.0
        assert sdf[0, 0] == pytest.approx(np.sqrt(2.0))

    def test_soft_mask_is_binarized(self):
        soft = BLOCK * 0.8 + 0.1
        np.testing.assert_array_equal(distance_transform(soft), distance_transform(BLOCK))
        np.testing.assert_array_equal(binarize(soft), BLOCK)

    @pytest.mark.parametrize('mask', [np.zeros((4, 4)), np.ones((4, 4))])
    def test_degenerate_mask(self, mask):
        with pytest.raises(DegenerateMask):
            distance_transform(mask)

    def test_exact_euclidean(self):
        mask = np.zeros((20, 20))
        mask[10, 10] = 1.0
        sdf = distance_transform(mask)
        assert sdf[13, 14] == pytest.approx(5.0)


class TestBoundaryLoss:
    def test_mean_of_weighted_sdf(self):
        sdf = distance_transform(BLOCK)
        loss, grad = boundary_loss(BLOCK, sdf)
        assert loss == pytest.approx(np.sum(BLOCK * sdf) / 25)
        np.testing.assert_allclose(grad, sdf / 25)

    def test_spill_outside_costs_more(self):
        sdf = distance_transform(BLOCK)
        spilled = BLOCK.copy()
        spilled[0, :] = 1.0
        assert boundary_loss(spilled, sdf)[0] > boundary_loss(BLOCK, sdf)[0]

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            boundary_loss(np.ones((5, 5)), np.ones((4, 5)))


class TestRegularizers:
    def test_scale_trans_zero_at_identity(self):
        loss_s, loss_t, grad_s, grad_t = scale_trans_reg(DeformParams.identity())
        assert loss_s == 0.0 and loss_t == 0.0
        np.testing.assert_array_equal(grad_s, 0.0)
        np.testing.assert_array_equal(grad_t, 0.0)

    def test_scale_trans_gradient(self, rng):
        params = random_params(rng, scale=0.5)
        _, _, grad_s, grad_t = scale_trans_reg(params)
        vec = params.to_vector()
        num_s = central_difference(lambda x: scale_trans_reg(DeformParams.from_vector(x))[0], vec, step=1e-6)
        num_t = central_difference(lambda x: scale_trans_reg(DeformParams.from_vector(x))[1], vec, step=1e-6)
        assert grad_s.shape == (PARAM_DIM,)
        assert max_relative_error(grad_s, num_s, floor=1e-6) < 1e-6
        assert max_relative_error(grad_t, num_t, floor=1e-6) < 1e-6

    def test_root_terms_not_regularized(self):
        params = DeformParams.identity().replace(root_log_scale=np.log(3.0), root_trans=[1.0, 2.0, 3.0])
        loss_s, loss_t, _, _ = scale_trans_reg(params)
        assert loss_s == 0.0 and loss_t == 0.0

    def test_normal_consistency_gradient(self, fish, rng):
        mesh = bent_fish(fish, rng)
        faces = mesh.faces
        loss, analytic = normal_consistency_loss(mesh)
        assert loss > 0
        numeric = central_difference(
            lambda x: normal_consistency_loss(SimpleNamespace(vertices=x.reshape(-1, 3), faces=faces))[0],
            mesh.vertices.reshape(-1), step=1e-7,
        ).reshape(-1, 3)
        assert max_relative_error(analytic, numeric, floor=1e-5) < 1e-5

    def test_normal_consistency_invariant_to_similarity(self, fish):
        base, _ = normal_consistency_loss(fish)
        params = DeformParams.identity().replace(root_rot=[0.3, -0.4, 0.2], root_log_scale=0.5, root_trans=[1.0, 0, 0])
        moved, _ = normal_consistency_loss(deform(fish, params))
        assert moved == pytest.approx(base, rel=1e-9)

    def test_degenerate_face(self):
        mesh = SimpleNamespace(vertices=np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]), faces=np.array([[0, 1, 2]]))
        with pytest.raises(DegenerateFace):
            normal_consistency_loss(mesh)

    def test_laplacian_gradient(self, fish, rng):
        mesh = bent_fish(fish, rng)
        neighbors = fish.neighbors
        _, analytic = laplacian_loss(mesh)
        numeric = central_difference(
            lambda x: laplacian_loss(SimpleNamespace(vertices=x.reshape(-1, 3), faces=mesh.faces), neighbors)[0],
            mesh.vertices.reshape(-1), step=1e-6,
        ).reshape(-1, 3)
        assert max_relative_error(analytic, numeric, floor=1e-6) < 1e-6

    def test_laplacian_rows_sum_to_zero(self, fish):
        lap = uniform_laplacian(fish.neighbors, fish.num_vertices)
        np.testing.assert_allclose(np.asarray(lap.sum(axis=1)).ravel(), 0.0, atol=1e-12)

    def test_deformed_mesh_reuses_template_laplacian(self, fish, rng, mocker):
        spy = mocker.spy(regularizers, 'uniform_laplacian')
        for _ in range(3):
            laplacian_loss(bent_fish(fish, rng))
        assert spy.call_count == 0
        mesh = bent_fish(fish, rng)
        expected = uniform_laplacian(fish.neighbors, fish.num_vertices) @ mesh.vertices
        assert laplacian_loss(mesh)[0] == pytest.approx(float(np.sum(expected ** 2)), rel=1e-12)

    def test_laplacian_translation_invariant(self, fish):
        base, _ = laplacian_loss(fish)
        moved = SimpleNamespace(vertices=fish.vertices + 7.0, faces=fish.faces)
        assert laplacian_loss(moved)[0] == pytest.approx(base, rel=1e-9)

    def test_isolated_vertex(self):
        vertices = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]])
        mesh = SimpleNamespace(vertices=vertices, faces=np.array([[0, 1, 2]]))
        with pytest.raises(IsolatedVertex):
            laplacian_loss(mesh, vertex_neighbors(mesh))


class TestTotalLoss:
    def test_report_sums_weighted_terms(self, fish, rng):
        mesh = bent_fish(fish, rng)
        params = random_params(rng)
        pred = rng.uniform(size=(5, 5))
        weights = LossWeights()
        report, grads = total_loss(pred, BLOCK, distance_transform(BLOCK), mesh, params, weights)
        expected = (report.iou + report.boundary + weights.lambda_s * report.scale_reg
                    + weights.lambda_t * report.trans_reg + weights.lambda_n * report.normal
                    + weights.lambda_l * report.laplacian)
        assert report.total == pytest.approx(expected)
        assert tuple(report.to_dict()) == LOSS_TERMS
        assert grads.pixels.shape == (5, 5)
        assert grads.vertices.shape == (fish.num_vertices, 3)
        assert grads.params.shape == (PARAM_DIM,)

    def test_zero_weight_terms_still_reported(self, fish, rng):
        mesh = bent_fish(fish, rng)
        params = DeformParams.identity()
        weights = LossWeights(lambda_n=0.0, lambda_l=0.0)
        report, grads = total_loss(BLOCK, BLOCK, distance_transform(BLOCK), mesh, params, weights)
        assert report.normal == pytest.approx(normal_consistency_loss(mesh)[0])
        assert report.laplacian == pytest.approx(laplacian_loss(mesh)[0])
        assert report.normal > 0 and report.laplacian > 0
        assert report.total == pytest.approx(report.iou + report.boundary)
        np.testing.assert_array_equal(grads.vertices, 0.0)

    def test_zero_weight_degenerate_mesh_reported_as_nan(self):
        mesh = SimpleNamespace(vertices=np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]), faces=np.array([[0, 1, 2]]))
        weights = LossWeights(lambda_n=0.0, lambda_l=0.0)
        report, grads = total_loss(BLOCK, BLOCK, distance_transform(BLOCK), mesh, DeformParams.identity(), weights)
        assert np.isnan(report.normal)
        assert np.isfinite(report.total)
        np.testing.assert_array_equal(grads.vertices, 0.0)

    def test_degenerate_mesh_raises_when_weighted(self):
        mesh = SimpleNamespace(vertices=np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]), faces=np.array([[0, 1, 2]]))
        with pytest.raises(DegenerateFace):
            total_loss(BLOCK, BLOCK, distance_transform(BLOCK), mesh, DeformParams.identity(), LossWeights())

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_s=-1.0)
