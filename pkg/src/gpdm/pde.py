"""Boundary-value problems (-a + L) u = f with beta1 d_nu u + beta2 u = g.

Interior rows come from an estimator (ghost point or plain diffusion maps),
boundary rows from a discrete boundary operator. Boundary unknowns are
eliminated through the diagonal boundary block and the reduced system is
solved by sparse LU with one step of iterative refinement.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (InvalidArgument, InvalidBoundaryCondition, NonconvergentRegimeWarning,
                     SolverFailure, StencilFailure)
from .operators import OperatorSpec


@dataclass
class BvpSpec:
    """Problem data.

    Args:
        operator: estimator kind and kernel parameters.
        f: right-hand side callback on ambient points (also used at ghosts).
        g: (J,) boundary data or a callback on boundary points.
        beta1, beta2: (J,) boundary coefficients or callbacks.
        a: nonnegative shift, scalar or callback.
    """

    operator: OperatorSpec
    f: Callable
    g: Callable | np.ndarray
    beta1: Callable | np.ndarray
    beta2: Callable | np.ndarray
    a: Callable | float = 0.0

    def boundary_values(self, boundary_points: np.ndarray):
        """(beta1, beta2, g) evaluated at the boundary samples."""
        J = boundary_points.shape[0]
        out = []
        for item in (self.beta1, self.beta2, self.g):
            vals = item(boundary_points) if callable(item) else item
            out.append(np.broadcast_to(np.asarray(vals, dtype=float), (J,)).copy())
        beta1, beta2, g = out
        if np.any((beta1 == 0) & (beta2 == 0)):
            raise InvalidBoundaryCondition("beta1 and beta2 vanish at the same boundary point")
        return beta1, beta2, g

    def shift(self, points: np.ndarray) -> np.ndarray:
        vals = self.a(points) if callable(self.a) else self.a
        vals = np.broadcast_to(np.asarray(vals, dtype=float), (points.shape[0],)).copy()
        if np.any(vals < 0):
            raise InvalidArgument("the shift a must be nonnegative")
        return vals


@dataclass(frozen=True)
class BoundaryOperator:
    """J x N rows B with (B u)_j approximating beta1 d_nu u + beta2 u at boundary j.

    Attributes:
        rows: sparse (J, N) matrix.
        ids: manifold-side index of each boundary sample.
        beta1, beta2: the coefficients used.
        fallback: (J,) True where a one-sided difference replaced the
            two-neighbour stencil.
    """

    rows: sp.csr_matrix
    ids: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    fallback: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


@dataclass
class SolveReport:
    u_hat: np.ndarray
    residual_inf: float
    ie_inf: float | None
    eps_used: float
    N: int
    J: int
    K: int
    wall_time: float
    method: str = "gpdm"
    rhs_inf: float = 0.0
    margin: float | None = None

    def summary(self) -> dict:
        return {"method": self.method, "N": self.N, "J": self.J, "K": self.K,
                "eps": self.eps_used, "ie_inf": self.ie_inf,
                "residual_inf": self.residual_inf, "wall_time": self.wall_time}


def discretize_bc(beta1, beta2, boundary_ids, inner_ids, spacing, n_columns: int) -> BoundaryOperator:
    """beta1 (u_B - u_G0) / h + beta2 u_B for each boundary sample.

    Args:
        beta1, beta2: (J,) coefficients.
        boundary_ids: (J,) column of each boundary sample.
        inner_ids: (J,) column of its inner ghost.
        spacing: (J,) distance h between them.
        n_columns: number of manifold-side unknowns.
    """
    beta1 = np.asarray(beta1, dtype=float)
    beta2 = np.asarray(beta2, dtype=float)
    h = np.asarray(spacing, dtype=float)
    J = beta1.size
    if np.any((beta1 == 0) & (beta2 == 0)):
        raise InvalidBoundaryCondition("beta1 and beta2 vanish at the same boundary point")
    r = np.arange(J)
    diag = beta1 / h + beta2
    off = -beta1 / h
    keep = off != 0
    rows = sp.csr_matrix((np.concatenate([diag, off[keep]]),
                          (np.concatenate([r, r[keep]]),
                           np.concatenate([boundary_ids, np.asarray(inner_ids)[keep]]))),
                         shape=(J, n_columns))
    return BoundaryOperator(rows=rows, ids=np.asarray(boundary_ids), beta1=beta1, beta2=beta2,
                            fallback=np.zeros(J, dtype=bool))


def normal_derivative_stencil(points: np.ndarray, boundary_id: int, normal: np.ndarray,
                              candidates: np.ndarray, window: float = np.pi / 4,
                              allow_fallback: bool = True):
    """Two-neighbour one-sided stencil for the outward normal derivative.

    Picks the nearest candidate x_L inside the cone of half-angle window
    around -normal, then the nearest x_R in the cone lying on the other side
    of the normal line, and writes -normal as a combination of the two unit
    directions by least squares.

    Returns:
        (ids, weights, fallback) with d_nu u ~ sum(weights * u[ids]); ids
        includes the boundary sample itself. fallback is True when only one
        neighbour could be used, or when the cone was empty and the
        best-aligned neighbour gave a one-sided difference.

    Raises:
        StencilFailure: the cone is empty and allow_fallback is False, or no
            candidate lies on the inner side at all.
    """
    base = points[boundary_id]
    inward = -np.asarray(normal, dtype=float)
    offs = points[candidates] - base
    dist = np.linalg.norm(offs, axis=1)
    ok = dist > 0
    cand, offs, dist = candidates[ok], offs[ok], dist[ok]
    cosang = offs @ inward / dist
    inside = np.flatnonzero(cosang >= np.cos(window) - 1e-12)
    if inside.size == 0:
        if not allow_fallback or not np.any(cosang > 0):
            raise StencilFailure(f"no neighbour inside the inward cone at sample {boundary_id}")
        # one-sided difference along the inward projection of the best-aligned neighbour
        best = int(np.argmax(cosang))
        w = -1.0 / (offs[best] @ inward)
        return np.array([boundary_id, cand[best]]), np.array([-w, w]), True
    inside = inside[np.lexsort((cand[inside], dist[inside]))]
    left = inside[0]
    dirs = offs / dist[:, None]
    side = dirs - np.outer(dirs @ inward, inward)
    right = None
    if np.linalg.norm(side[left]) > 1e-8:
        for c in inside[1:]:
            if side[c] @ side[left] < 0:
                right = c
                break
    if right is None:
        # the nearest neighbour alone, projected on the inward direction
        coef = np.array([dirs[left] @ inward])
        used = [left]
        fallback = np.linalg.norm(side[left]) > 1e-8
    else:
        basis = np.column_stack([dirs[left], dirs[right]])
        coef = np.linalg.lstsq(basis, inward, rcond=None)[0]
        used = [left, right]
        fallback = False
    # d_{-nu} u ~ sum coef (u_c - u_B) / |x_c - x_B|; d_nu is its negative
    w = -coef / dist[used]
    ids = np.concatenate([[boundary_id], cand[used]])
    weights = np.concatenate([[-w.sum()], w])
    return ids, weights, fallback


def appendix_a_normal_derivative(points: np.ndarray, boundary_id: int, normal, u,
                                 candidates=None) -> float:
    """Outward normal derivative of sampled u from the two-neighbour stencil."""
    points = np.asarray(points, dtype=float)
    if candidates is None:
        candidates = np.delete(np.arange(points.shape[0]), boundary_id)
    ids, weights, _ = normal_derivative_stencil(points, boundary_id, normal, np.asarray(candidates))
    return float(weights @ np.asarray(u)[ids])


def stencil_bc(points: np.ndarray, boundary_ids, normals, beta1, beta2, n_columns: int,
               interior_ids=None, n_candidates: int = 40) -> BoundaryOperator:
    """Boundary rows using the two-neighbour normal-derivative stencil, no ghosts."""
    from scipy.spatial import cKDTree

    boundary_ids = np.asarray(boundary_ids)
    beta1 = np.asarray(beta1, dtype=float)
    beta2 = np.asarray(beta2, dtype=float)
    if interior_ids is None:
        mask = np.ones(points.shape[0], dtype=bool)
        mask[boundary_ids] = False
        interior_ids = np.flatnonzero(mask)
    interior_ids = np.asarray(interior_ids)
    tree = cKDTree(points[interior_ids])
    m = min(n_candidates, interior_ids.size)
    _, near = tree.query(points[boundary_ids], k=m)
    near = np.asarray(near).reshape(boundary_ids.size, m)
    rows, cols, vals = [], [], []
    fallback = np.zeros(boundary_ids.size, dtype=bool)
    for j, b in enumerate(boundary_ids):
        rows.append(j)
        cols.append(b)
        vals.append(beta2[j])
        if beta1[j] == 0:
            continue
        ids, weights, fallback[j] = normal_derivative_stencil(points, b, normals[j], interior_ids[near[j]])
        rows += [j] * ids.size
        cols += list(ids)
        vals += list(beta1[j] * weights)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(boundary_ids.size, n_columns))
    return BoundaryOperator(rows=mat, ids=boundary_ids, beta1=beta1, beta2=beta2, fallback=fallback)


def _lu_solve(matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    try:
        lu = spla.splu(matrix.tocsc())
    except RuntimeError as exc:
        raise SolverFailure(f"sparse LU failed: {exc}") from exc
    x = lu.solve(rhs)
    x = x + lu.solve(rhs - matrix @ x)
    if not np.all(np.isfinite(x)):
        raise SolverFailure("linear solve produced non-finite values")
    return x


def diagonal_dominance_margin(matrix: sp.spmatrix) -> float:
    """min_i |A_ii| - sum_{j != i} |A_ij|."""
    mat = sp.csr_matrix(matrix)
    diag = np.abs(mat.diagonal())
    off = np.asarray(abs(mat).sum(axis=1)).ravel() - diag
    return float((diag - off).min())


def full_system(L1part, offset, f_values, a_values, bc: BoundaryOperator):
    """The square system [(-a + L)[interior]; B] u = [f - offset; g] without g.

    Returns:
        (matrix, rhs_interior, interior_ids)
    """
    n = L1part.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[bc.ids] = False
    interior = np.flatnonzero(mask)
    shifted = (L1part - sp.diags(a_values)).tocsr()
    matrix = sp.vstack([shifted[interior], bc.rows]).tocsr()
    order = np.concatenate([interior, bc.ids])
    perm = np.empty(n, dtype=np.int64)
    perm[order] = np.arange(n)
    # rows follow `order`; reorder them back to point order
    matrix = matrix[perm]
    rhs_interior = (f_values - offset)[interior]
    return matrix, rhs_interior, interior


def solve_linear_bvp(L1part, offset, f_values, a_values, bc: BoundaryOperator, g,
                     eliminate: bool = True):
    """Solve interior rows (-a + L1part) u = f - offset with B u = g.

    Args:
        L1part: (N, N) estimator over the manifold-side points.
        offset: (N,) affine part of the estimator.
        f_values, a_values: (N,) right-hand side and shift at the same points.
        bc: boundary rows.
        g: (J,) boundary data.
        eliminate: solve the reduced interior system (default) or the full one.

    Returns:
        (u, residual_inf, rhs_inf, full matrix)
    """
    n = L1part.shape[0]
    g = np.asarray(g, dtype=float)
    system, rhs_i, interior = full_system(L1part, offset, f_values, a_values, bc)
    rhs = np.empty(n)
    rhs[interior] = rhs_i
    rhs[bc.ids] = g
    if eliminate:
        Bb = bc.rows[:, bc.ids].tocsc()
        if Bb.nnz != bc.ids.size or np.any(np.abs(Bb.diagonal()) == 0):
            raise InvalidBoundaryCondition("boundary block is not diagonal and nonsingular")
        inv_bb = 1.0 / Bb.diagonal()
        Bi = bc.rows[:, interior]
        shifted = (L1part - sp.diags(a_values)).tocsr()
        L_ii = shifted[interior][:, interior]
        L_ib = shifted[interior][:, bc.ids]
        reduced = (L_ii - L_ib @ sp.diags(inv_bb) @ Bi).tocsr()
        u = np.empty(n)
        u[interior] = _lu_solve(reduced, rhs_i - L_ib @ (inv_bb * g))
        u[bc.ids] = inv_bb * (g - Bi @ u[interior])
    else:
        u = _lu_solve(system, rhs)
    residual = float(np.abs(system @ u - rhs).max())
    return u, residual, float(np.abs(rhs).max()), system


def _report(u, residual, rhs_inf, truth, eps, J, K, t0, method, system=None,
            n_report=None) -> SolveReport:
    n_report = u.size if n_report is None else n_report
    ie = None
    if truth is not None:
        ie = float(np.abs(u[:n_report] - truth[:n_report]).max())
    margin = diagonal_dominance_margin(system) if system is not None else None
    return SolveReport(u_hat=u, residual_inf=residual, ie_inf=ie, eps_used=eps, N=n_report,
                       J=J, K=K, wall_time=time.perf_counter() - t0, method=method,
                       rhs_inf=rhs_inf, margin=margin)


def solve_dirichlet(op, f_values, g, boundary_ids, truth=None, n_report=None) -> SolveReport:
    """Dirichlet problem L u = f, u = g on the boundary, with a GpdmOperator."""
    t0 = time.perf_counter()
    J = len(boundary_ids)
    bc = BoundaryOperator(rows=sp.csr_matrix((np.ones(J), (np.arange(J), boundary_ids)),
                                             shape=(J, op.L1part.shape[0])),
                          ids=np.asarray(boundary_ids), beta1=np.zeros(J), beta2=np.ones(J))
    u, res, rhs_inf, system = solve_linear_bvp(op.L1part, op.offset, f_values,
                                               np.zeros(op.L1part.shape[0]), bc, g)
    return _report(u, res, rhs_inf, truth, op.eps, J, op.L2.shape[1] // max(J, 1), t0, "gpdm",
                   n_report=n_report)


def solve_robin_neumann(op, f_values, a_values, bc: BoundaryOperator, g, truth=None,
                        eliminate: bool = True, n_report=None) -> SolveReport:
    """Robin, Neumann or mixed problem with a GpdmOperator.

    Warns NonconvergentRegimeWarning when the full system loses strict
    diagonal dominance although the shift and beta2 are positive.
    """
    t0 = time.perf_counter()
    a_values = np.asarray(a_values, dtype=float)
    neumann = (bc.beta2 == 0) & (bc.beta1 != 0)
    if np.any(neumann) and not np.all(a_values > 0):
        raise InvalidArgument("Neumann boundary points need a strictly positive shift a")
    u, res, rhs_inf, system = solve_linear_bvp(op.L1part, op.offset, f_values, a_values, bc, g,
                                               eliminate=eliminate)
    J = bc.ids.size
    report = _report(u, res, rhs_inf, truth, op.eps, J, op.L2.shape[1] // max(J, 1), t0, "gpdm",
                     system=system, n_report=n_report)
    if a_values.min() > 0 and bc.beta2.min() > 0 and report.margin < 0:
        warnings.warn(f"system is not diagonally dominant (margin {report.margin:.3g})",
                      NonconvergentRegimeWarning, stacklevel=2)
    return report


def solve_dm_baseline(matrix, f_values, a_values, bc: BoundaryOperator, g, eps: float,
                      truth=None) -> SolveReport:
    """Plain diffusion-maps rows at interior samples with stencil boundary rows."""
    t0 = time.perf_counter()
    u, res, rhs_inf, system = solve_linear_bvp(sp.csr_matrix(matrix), np.zeros(matrix.shape[0]),
                                               f_values, np.asarray(a_values, dtype=float), bc, g)
    return _report(u, res, rhs_inf, truth, eps, bc.ids.size, 0, t0, "dm")
