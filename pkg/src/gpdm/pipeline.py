"""End-to-end runs on fixtures: forward errors, boundary-value solves, rate fits."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .boundary import RANDOM, WELL_SAMPLED, build_ghosts, estimate_boundary
from .eigen import dm_eigs, gpdm_eigs, normalize_vector
from .errors import InvalidArgument
from .estimator import build_extrapolation, build_gpdm
from .operators import OperatorSpec, assemble, assemble_augmented
from .pde import discretize_bc, solve_dm_baseline, solve_robin_neumann, stencil_bc
from .pointcloud import build_index, tune_bandwidth


@dataclass
class GpdmSetup:
    """Everything built on the way to a ghost point estimator."""

    spec: OperatorSpec
    boundary: object
    ghosts: object
    Lh: object
    system: object
    operator: object
    manifold_points: np.ndarray


def fixture_spec(fixture, eps: float | None = None, k: int | None = None) -> OperatorSpec:
    """OperatorSpec for a fixture, tuning eps on the samples when not given."""
    k = fixture.k if k is None else int(k)
    if eps is None:
        eps = fixture.eps
    if eps is None:
        eps = tune_bandwidth(build_index(fixture.cloud, k), d=fixture.cloud.d).eps_star
    return OperatorSpec(fixture.kind, float(eps), k, kappa=fixture.kappa, drift=fixture.drift,
                        diffusion=fixture.diffusion)


def build_fixture_gpdm(fixture, spec: OperatorSpec, K: int = 6, mode: str | None = None,
                       shift: float | None = None, **boundary_kw) -> GpdmSetup:
    """Normals, ghosts, augmented estimator and ghost elimination for a fixture.

    The boundary-row equation uses the fixture's shift and its f at the
    boundary samples, so the returned operator already carries the affine
    offset for that data.
    """
    mode = fixture.meta.get("mode", WELL_SAMPLED) if mode is None else mode
    mode = {"well": WELL_SAMPLED, "random": RANDOM}.get(mode, mode)
    cloud = fixture.cloud
    boundary = estimate_boundary(cloud, mode, **boundary_kw)
    ghosts = build_ghosts(cloud, boundary, K)
    Lh = assemble_augmented(cloud, ghosts, spec)
    shift = fixture.a if shift is None else shift
    system = build_extrapolation(Lh, ghosts, boundary.ids, shift=np.full(boundary.n_boundary, shift))
    f_b = fixture.f(cloud.points[boundary.ids])
    op = build_gpdm(Lh, system, ghosts.n_manifold, f_b)
    manifold = ghosts.augmented_points(cloud)[: ghosts.n_manifold]
    return GpdmSetup(spec, boundary, ghosts, Lh, system, op, manifold)


def forward_error(fixture, method: str = "gpdm", eps: float | None = None, k: int | None = None,
                  K: int = 6, u=None, Lu=None) -> dict:
    """Sup-norm gap between the discrete and analytic operator applied to u.

    Args:
        fixture: the test problem.
        method: "gpdm" or "dm".
        eps, k: kernel parameters; fixture defaults when None.
        K: ghost layers.
        u, Lu: alternative test function and its operator action.

    Returns:
        dict with fe_inf, per-point errors, eps, N, wall_time.
    """
    t0 = time.perf_counter()
    u = fixture.u if u is None else u
    Lu = fixture.Lu if Lu is None else Lu
    spec = fixture_spec(fixture, eps, k)
    cloud = fixture.cloud
    N = cloud.n_points
    if method == "gpdm":
        setup = build_fixture_gpdm(fixture, spec, K, shift=0.0)
        op = setup.operator.with_boundary_data(Lu(cloud.points[setup.boundary.ids]))
        approx = op(u(setup.manifold_points))[:N]
    elif method == "dm":
        mat = assemble(cloud.points, N, spec, d=cloud.d)
        approx = mat @ u(cloud.points)
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    err = np.abs(approx - Lu(cloud.points))
    return {"method": method, "N": N, "eps": spec.eps, "k": spec.k, "fe_inf": float(err.max()),
            "errors": err, "approx": approx, "wall_time": time.perf_counter() - t0}


def solve_fixture(fixture, method: str = "gpdm", eps: float | None = None, k: int | None = None,
                  K: int = 6, mode: str | None = None, eliminate: bool = True, **boundary_kw):
    """Solve the fixture's boundary-value problem and compare with its solution.

    Returns:
        SolveReport; ie_inf is measured on the original samples only.
    """
    t0 = time.perf_counter()
    spec = fixture_spec(fixture, eps, k)
    cloud = fixture.cloud
    N = cloud.n_points
    if method == "gpdm":
        setup = build_fixture_gpdm(fixture, spec, K, mode, **boundary_kw)
        bd = setup.boundary
        inner = setup.ghosts.inner_ids
        bc = discretize_bc(fixture.beta1, fixture.beta2, bd.ids, inner, bd.spacing,
                           setup.ghosts.n_manifold)
        pts = setup.manifold_points
        truth = fixture.u(pts)
        report = solve_robin_neumann(setup.operator, fixture.f(pts), np.full(pts.shape[0], fixture.a),
                                     bc, fixture.g, truth=truth, eliminate=eliminate, n_report=N)
        report.K = K
    elif method == "dm":
        mat = assemble(cloud.points, N, spec, d=cloud.d)
        # the baseline sees the same estimated normals as the ghost method
        mode = fixture.meta.get("mode", WELL_SAMPLED) if mode is None else mode
        normals = estimate_boundary(cloud, {"well": WELL_SAMPLED}.get(mode, mode), **boundary_kw).normals
        bc = stencil_bc(cloud.points, cloud.boundary_ids, normals, fixture.beta1, fixture.beta2, N)
        report = solve_dm_baseline(mat.matrix, fixture.f(cloud.points), np.full(N, fixture.a), bc,
                                   fixture.g, spec.eps, truth=fixture.u(cloud.points))
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    report.wall_time = time.perf_counter() - t0
    return report


def fit_slope(sizes, values) -> float:
    """Least-squares slope of log(values) against log(sizes)."""
    sizes = np.asarray(sizes, dtype=float)
    values = np.asarray(values, dtype=float)
    if sizes.size < 2 or not (np.all(values > 0) and np.all(np.isfinite(values))):
        raise InvalidArgument("slope fit needs at least two positive values")
    return float(np.polyfit(np.log(sizes), np.log(values), 1)[0])


def eigs_fixture(fixture, method: str = "gpdm", n_modes: int = 10, eps: float | None = None,
                 k: int | None = None, K: int = 6):
    """Leading eigenpairs for a fixture with homogeneous boundary conditions.

    Fixtures carrying boundary_rows (the degenerate Legendre operator) keep
    their boundary unknowns and use those rows instead of a boundary condition.
    """
    spec = fixture_spec(fixture, eps, k)
    cloud = fixture.cloud
    if fixture.boundary_rows is not None:
        beta1 = beta2 = None
        rows = lambda n_columns: fixture.boundary_rows(cloud, n_columns)
    else:
        beta1, beta2, rows = fixture.beta1, fixture.beta2, None
    mode = fixture.meta.get("mode", WELL_SAMPLED)
    boundary = estimate_boundary(cloud, mode)
    if method == "gpdm":
        ghosts = build_ghosts(cloud, boundary, K)
        Lh = assemble_augmented(cloud, ghosts, spec)
        return gpdm_eigs(Lh, ghosts, boundary, n_modes, beta1, beta2, rows)
    if method == "dm":
        mat = assemble(cloud.points, cloud.n_points, spec, d=cloud.d)
        return dm_eigs(mat.matrix, cloud, boundary.normals, n_modes, beta1, beta2, rows, spec.eps)
    raise InvalidArgument(f"unknown method {method!r}")


def eigen_errors(fixture, report, n_compare: int):
    """Relative eigenvalue errors and infinity-norm eigenfunction errors.

    Eigenvalue errors are |lambda_hat - lambda| / max(|lambda|, 1). Exact
    eigenfunctions are sampled on the report's unknowns and normalised the
    same way as the computed vectors.
    """
    exact = fixture.eigenvalues[:n_compare]
    lam_err = np.abs(report.lambdas[:n_compare] - exact) / np.maximum(np.abs(exact), 1.0)
    pts = fixture.cloud.points
    ids = report.ids[report.ids < fixture.cloud.n_points]
    rows = np.flatnonzero(report.ids < fixture.cloud.n_points)
    fn_err = []
    for i in range(min(n_compare, len(fixture.eigenfunctions))):
        ref = normalize_vector(fixture.eigenfunctions[i](pts[ids]))
        fn_err.append(float(np.abs(report.psis[rows, i] - ref).max()))
    return lam_err, np.array(fn_err)
