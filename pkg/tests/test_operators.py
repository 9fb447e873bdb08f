import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from gpdm.boundary import build_ghosts, estimate_boundary
from gpdm.errors import (DisconnectedPoint, IllConditionedDiffusion, InvalidArgument,
                         InvalidCoefficient)
from gpdm.operators import (OperatorSpec, assemble, assemble_augmented, assemble_l1,
                            assemble_l2, assemble_l3, export_matrix_market, kernel_pattern,
                            lift_tensor_field)
from gpdm.pointcloud import PointCloud


def circle(n=400):
    t = 2 * np.pi * np.arange(n) / n
    return t, np.column_stack([np.cos(t), np.sin(t)])


def tangent_diffusion(x):
    tang = np.column_stack([-x[:, 1], x[:, 0]])
    return 2.0 * np.einsum("mi,mj->mij", tang, tang)


def zero_drift(x):
    return np.zeros_like(x)


SPECS = {
    "l1": OperatorSpec("l1", 2e-4, 40),
    "l2": OperatorSpec("l2", 2e-4, 40, kappa=lambda x: 1.5 + x[:, 0]),
    "l3": OperatorSpec("l3", 2e-4, 40, drift=lambda x: 0.3 * x, diffusion=tangent_diffusion),
}


@pytest.mark.parametrize("kind", ["l1", "l2", "l3"])
def test_constants_are_annihilated_and_signs_hold(kind):
    _, pts = circle(300)
    mat = assemble(pts, 300, SPECS[kind], d=1)
    assert np.abs(mat @ np.ones(300)).max() < 1e-9 / mat.eps
    shifted = (sp.identity(300) + mat.eps * sp.diags(1.0 / mat.scale) @ mat.matrix).tocsr()
    off = shifted - sp.diags(shifted.diagonal())
    assert off.data.min() >= 0
    assert np.all(shifted.diagonal() > 0)
    assert np.allclose(np.asarray(mat.kernel.sum(axis=1)).ravel(), 1.0, atol=1e-14)


def test_circle_laplacian_error_is_first_order_in_eps():
    t, pts = circle()
    errors = []
    for eps in (4e-4, 2e-4, 1e-4):
        mat = assemble_l1(pts, 400, OperatorSpec("l1", eps, 60))
        errors.append(np.abs(mat @ np.cos(t) + np.cos(t)).max())
        assert errors[-1] < eps
    assert errors[2] < errors[1] < errors[0]


def test_l2_with_unit_kappa_is_l1():
    t, pts = circle(200)
    spec1 = OperatorSpec("l1", 5e-4, 30)
    spec2 = OperatorSpec("l2", 5e-4, 30, kappa=lambda x: np.ones(x.shape[0]))
    diff = assemble_l1(pts, 200, spec1).matrix - assemble_l2(pts, 200, spec2).matrix
    assert abs(diff).max() < 1e-10


def test_l3_isotropic_reduces_to_l1():
    t, pts = circle()
    for eps in (4e-4, 1e-4):
        l1 = assemble(pts, 400, OperatorSpec("l1", eps, 60))
        l3 = assemble_l3(pts, 400, OperatorSpec("l3", eps, 60, drift=zero_drift,
                                                diffusion=tangent_diffusion), d=1)
        assert np.abs(l3 @ np.cos(t) - l1 @ np.cos(t)).max() < 5 * eps


def test_l3_drift_is_first_order_term():
    # unit tangent drift on the circle: L u = u' + u'' = cos t - sin t for u = sin t
    t, pts = circle()
    spec = OperatorSpec("l3", 1e-4, 60, drift=lambda x: np.column_stack([-x[:, 1], x[:, 0]]),
                        diffusion=tangent_diffusion)
    mat = assemble(pts, 400, spec, d=1)
    assert np.abs(mat @ np.sin(t) - (np.cos(t) - np.sin(t))).max() < 10 * spec.eps


def test_wrong_kind_and_missing_callbacks():
    with pytest.raises(InvalidArgument):
        OperatorSpec("l4", 1.0, 3)
    with pytest.raises(InvalidArgument):
        OperatorSpec("l2", 1.0, 3)
    with pytest.raises(InvalidArgument):
        OperatorSpec("l3", 1.0, 3, drift=zero_drift)
    with pytest.raises(InvalidArgument):
        OperatorSpec("l1", 0.0, 3)
    _, pts = circle(20)
    with pytest.raises(InvalidArgument):
        assemble_l2(pts, 20, SPECS["l1"])
    with pytest.raises(InvalidArgument):
        assemble(pts, 20, OperatorSpec("l3", 1e-2, 5, drift=zero_drift, diffusion=tangent_diffusion))
    with pytest.raises(InvalidArgument):
        assemble(pts, 21, SPECS["l1"])


def test_coefficient_validation():
    _, pts = circle(50)
    with pytest.raises(InvalidCoefficient):
        assemble(pts, 50, OperatorSpec("l2", 1e-2, 5, kappa=lambda x: x[:, 0]))
    indefinite = lambda x: np.tile(np.diag([1.0, -1.0]), (x.shape[0], 1, 1))
    with pytest.raises(InvalidCoefficient):
        assemble(pts, 50, OperatorSpec("l3", 1e-2, 5, drift=zero_drift, diffusion=indefinite), d=2)
    skew = lambda x: np.tile([[1.0, 0.5], [0.0, 1.0]], (x.shape[0], 1, 1))
    with pytest.raises(InvalidCoefficient):
        assemble(pts, 50, OperatorSpec("l3", 1e-2, 5, drift=zero_drift, diffusion=skew), d=2)
    nearly_flat = lambda x: np.tile(np.diag([1.0, 1e-14]), (x.shape[0], 1, 1))
    with pytest.raises(IllConditionedDiffusion):
        assemble(pts, 50, OperatorSpec("l3", 1e-2, 5, drift=zero_drift, diffusion=nearly_flat), d=2)


def test_isolated_point_is_reported():
    pts = np.vstack([np.linspace(0, 1, 20)[:, None], [[50.0]]])
    with pytest.raises(DisconnectedPoint):
        assemble(pts, 21, OperatorSpec("l1", 1e-3, 3))


def test_pattern_is_symmetric_with_diagonal():
    pts = np.random.default_rng(0).normal(size=(60, 2))
    pattern = kernel_pattern(pts, 4)
    assert (pattern != pattern.T).nnz == 0
    assert np.all(pattern.diagonal() == 1)
    assert np.all(np.diff(pattern.indptr) >= 5)


def test_lift_tensor_field():
    jac = np.array([[[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]]])
    B, C = lift_tensor_field(jac, np.array([[1.0, 1.0]]), np.eye(2)[None])
    assert np.allclose(B, [[1.0, 2.0, 0.0]])
    assert np.allclose(C[0], np.diag([1.0, 4.0, 0.0]))


def segment_with_ghosts(n=21, K=3):
    cloud = PointCloud(np.linspace(0.0, 1.0, n), d=1, boundary_ids=[0, n - 1])
    ghosts = build_ghosts(cloud, estimate_boundary(cloud), K)
    return cloud, ghosts


def test_augmented_without_ghosts_is_plain_assembly():
    cloud, _ = segment_with_ghosts()
    spec = OperatorSpec("l1", 1e-3, 8)
    plain = assemble(cloud.points, cloud.n_points, spec)
    aug = assemble_augmented(cloud, None, spec)
    assert (plain.matrix != aug.matrix).nnz == 0


def test_augmented_kernel_rows_and_ghost_weights():
    cloud, ghosts = segment_with_ghosts()
    eps = 4e-3
    spec = OperatorSpec("l1", eps, ghosts.n_augmented - 1)
    mat = assemble_augmented(cloud, ghosts, spec)
    assert mat.matrix.shape == (cloud.n_points, ghosts.n_augmented)
    assert np.allclose(np.asarray(mat.kernel.sum(axis=1)).ravel(), 1.0, atol=1e-14)
    # full pattern: undo the density division and compare with closed-form kernel values
    pts = ghosts.augmented_points(cloud)[:, 0]
    q = np.exp(-(pts[:, None] - pts[None, :]) ** 2 / (4 * eps)).sum(axis=1)
    h = 0.05
    row = mat.kernel[0].toarray().ravel()
    layer = ghosts.layer_ids()[0]
    raw = row[layer] * q[layer]
    expected = np.exp(-((np.arange(1, 4) * h) ** 2 - h**2) / (4 * eps))
    assert np.allclose(raw / raw[0], expected, rtol=1e-12)
    with pytest.raises(InvalidArgument):
        assemble_augmented(PointCloud(np.arange(5.0), d=1, boundary_ids=[0]), ghosts, spec)


def test_matrix_market_round_trip(tmp_path):
    _, pts = circle(30)
    mat = assemble(pts, 30, OperatorSpec("l1", 1e-2, 5))
    path = tmp_path / "op.mtx"
    export_matrix_market(mat, path)
    back = scipy.io.mmread(str(path))
    assert abs(sp.csr_matrix(back) - mat.matrix).max() == 0.0
