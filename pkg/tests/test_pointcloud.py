import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpdm.errors import InvalidArgument, TuningFailed
from gpdm.pointcloud import (PointCloud, brute_force_index, build_index, default_eps_grid,
                             estimate_density, kernel_sum_curve, local_spacing, tune_bandwidth)


def test_cloud_rejects_duplicates_and_bad_ids():
    with pytest.raises(InvalidArgument):
        PointCloud(np.array([[0.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(InvalidArgument):
        PointCloud(np.eye(3), boundary_ids=[0, 3])
    with pytest.raises(InvalidArgument):
        PointCloud(np.eye(3), boundary_ids=[1, 1])
    with pytest.raises(InvalidArgument):
        PointCloud(np.array([[np.nan, 0.0]]))
    with pytest.raises(InvalidArgument):
        PointCloud(np.eye(3), d=4)


def test_cloud_is_read_only():
    cloud = PointCloud(np.eye(3), d=2, boundary_ids=[2])
    with pytest.raises(ValueError):
        cloud.points[0, 0] = 5.0
    assert cloud.interior_ids.tolist() == [0, 1]


def test_three_collinear_points():
    index = build_index(np.array([0.0, 1.0, 3.0]), 1)
    assert index.neighbors.ravel().tolist() == [1, 0, 1]
    assert index.distances.ravel().tolist() == [1.0, 1.0, 2.0]


def test_full_neighbourhood_is_permutation():
    pts = np.random.default_rng(1).normal(size=(30, 3))
    index = build_index(pts, 29)
    for i, row in enumerate(index.neighbors):
        assert sorted(row.tolist()) == [j for j in range(30) if j != i]


def test_k_too_large():
    with pytest.raises(InvalidArgument):
        build_index(np.eye(3), 3)
    with pytest.raises(InvalidArgument):
        build_index(np.eye(3), 0)


def test_semi_ellipse_index_matches_brute_force():
    t = np.linspace(0.0, np.pi, 400)
    pts = np.column_stack([np.cos(t), 3.0 * np.sin(t)])
    fast, slow = build_index(pts, 50), brute_force_index(pts, 50)
    assert np.array_equal(fast.neighbors, slow.neighbors)
    assert np.allclose(fast.distances, slow.distances, atol=1e-12, rtol=0)


def test_ties_resolve_to_lower_index():
    # integer lattice: every interior node has 4 neighbours at distance 1
    g = np.arange(6.0)
    pts = np.array([(x, y) for x in g for y in g])
    index = build_index(pts, 3)
    slow = brute_force_index(pts, 3)
    assert np.array_equal(index.neighbors, slow.neighbors)
    # node (1, 1) = 7 sees 1, 6, 8, 13 at distance 1; the three smallest ids win
    assert index.neighbors[7].tolist() == [1, 6, 8]


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 120), st.integers(1, 3), st.integers(0, 10_000))
def test_index_matches_brute_force_property(n, dim, seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, dim))
    # snapping to a coarse lattice creates many exact ties
    if seed % 2:
        pts = np.round(pts * 2.0) / 2.0
        pts = np.unique(pts, axis=0)
        if pts.shape[0] < 3:
            return
    k = min(7, pts.shape[0] - 1)
    fast, slow = build_index(pts, k), brute_force_index(pts, k)
    assert np.array_equal(fast.neighbors, slow.neighbors)
    recomputed = np.linalg.norm(pts[fast.neighbors] - pts[:, None, :], axis=2)
    assert np.allclose(recomputed, fast.distances, atol=1e-12, rtol=0)
    assert np.all(np.diff(fast.distances, axis=1) >= 0)


def test_default_grid_range():
    grid = default_eps_grid()
    assert grid[0] == 2.0**-30
    assert grid[-1] <= 10.0 < grid[-1] * 2**0.25
    assert np.allclose(np.diff(np.log2(grid)), 0.25)


def test_kernel_sum_monotone_and_saturates():
    pts = np.random.default_rng(0).uniform(size=(200, 2))
    index = build_index(pts, 15)
    curve = kernel_sum_curve(index, default_eps_grid())
    assert np.all(np.diff(curve) >= -1e-15)
    assert curve[-1] > 0.99
    assert kernel_sum_curve(index, [1e12])[0] == pytest.approx(1.0, abs=1e-12)


def test_tuned_eps_scales_like_inverse_square_in_1d():
    sizes = [100, 200, 400, 800, 1600]
    eps = []
    for n in sizes:
        pts = np.linspace(0.0, 1.0, n)
        eps.append(tune_bandwidth(build_index(pts, 20), d=1).eps_star)
    slope = np.polyfit(np.log(sizes), np.log(eps), 1)[0]
    assert -2.4 <= slope <= -1.6


def test_tuned_eps_random_torus_scales_with_k_over_n():
    from gpdm.manifolds import sample_semi_torus

    sizes, eps = [], []
    for n_side in (24, 32, 45, 64):
        cloud = sample_semi_torus(n_side, n_side, mode="random", seed=3)[0]
        k = int(np.ceil(np.sqrt(cloud.n_points)))
        eps.append(tune_bandwidth(build_index(cloud, k), d=2).eps_star)
        sizes.append(cloud.n_points)
    slope = np.polyfit(np.log(sizes), np.log(eps), 1)[0]
    assert -0.7 <= slope <= -0.3


def test_dimension_of_sphere():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(3000, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    report = tune_bandwidth(build_index(pts, 40))
    assert report.d_est == 2
    assert report.slope.size == report.eps_grid.size - 1
    assert report.eps_grid[0] <= report.eps_star <= report.eps_grid[-1]


def test_tuning_rejects_bad_grids():
    index = build_index(np.linspace(0, 1, 20), 5)
    with pytest.raises(InvalidArgument):
        tune_bandwidth(index, [1.0])
    with pytest.raises(InvalidArgument):
        tune_bandwidth(index, [1.0, 0.5])
    with pytest.raises(TuningFailed):
        tune_bandwidth(index, [1e6, 1e7, 1e8])


def test_density_single_point_and_circle():
    single = build_index(np.array([[0.0], [1e6]]), 1)
    q = estimate_density(single, 0.25, d=1)
    assert q[0] == pytest.approx(0.25**-0.5 / 2)
    t = 2 * np.pi * np.arange(300) / 300
    circle = build_index(np.column_stack([np.cos(t), np.sin(t)]), 20)
    q = estimate_density(circle, 1e-3, d=1)
    assert np.ptp(q) / q.mean() < 0.01
    with pytest.raises(InvalidArgument):
        estimate_density(circle, 0.0)


def test_density_tracks_nonuniform_sampling():
    # inverse-CDF samples of p(x) = (1 + x) / 1.5 on [0, 1]
    n = 4000
    u = (np.arange(n) + 0.5) / n
    x = -1.0 + np.sqrt(1.0 + 3.0 * u)
    # k wide enough that truncation does not clip the kernel
    index = build_index(x, 400)
    q = estimate_density(index, 1e-4, d=1)
    interior = (x > 0.1) & (x < 0.9)
    ratio = q[interior] / ((1.0 + x[interior]) / 1.5)
    assert np.ptp(ratio) / ratio.mean() < 0.1
    assert np.all(q > 0)


def test_local_spacing():
    pts = np.arange(10.0) * 0.3
    cloud = PointCloud(pts, d=1, boundary_ids=[0, 9])
    assert local_spacing(cloud, 0, P=2) == pytest.approx(0.45)
    assert local_spacing(cloud, 0, P=1) == pytest.approx(0.3)
    with pytest.raises(InvalidArgument):
        local_spacing(cloud, 0, P=10)
    with pytest.raises(InvalidArgument):
        local_spacing(cloud, 4, P=2)


def test_spacing_squared_halves_when_density_doubles():
    rng = np.random.default_rng(2)
    h2 = []
    for n in (4000, 8000):
        pts = rng.uniform(size=(n, 2))
        h = [local_spacing(PointCloud(np.vstack([[c, 0.5], pts]), d=2, boundary_ids=[0]), 0)
             for c in np.linspace(0.3, 0.7, 9)]
        h2.append(np.mean(h) ** 2)
    assert h2[1] / h2[0] == pytest.approx(0.5, rel=0.2)
