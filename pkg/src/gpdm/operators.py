"""Diffusion-maps matrices for the Laplace-Beltrami, weighted and drift-diffusion operators.

All three estimators share one recipe: a Gaussian-type kernel on the
symmetrised k-NN pattern, division of each column by a kernel density
estimate (right normalisation), row normalisation, then (P - I) / eps,
optionally scaled per row. Only the first ``n_rows`` points become rows;
the remaining points (ghosts) only contribute columns and density.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import DisconnectedPoint, IllConditionedDiffusion, InvalidArgument, InvalidCoefficient
from .pointcloud import build_index

KINDS = ("l1", "l2", "l3")


@dataclass(frozen=True)
class OperatorSpec:
    """Which operator to estimate and with what kernel.

    Args:
        kind: "l1" (Laplace-Beltrami), "l2" (div(kappa grad)), "l3" (drift-diffusion).
        eps: kernel bandwidth.
        k: nearest neighbours per point.
        kappa: vectorised (M, n) -> (M,) conductivity, for "l2".
        drift: vectorised (M, n) -> (M, n) ambient drift, for "l3".
        diffusion: vectorised (M, n) -> (M, n, n) ambient diffusion tensor of
            rank d, for "l3".
    """

    kind: str
    eps: float
    k: int
    kappa: Callable | None = None
    drift: Callable | None = None
    diffusion: Callable | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"operator kind must be one of {KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise InvalidArgument(f"eps must be positive, got {self.eps}")
        if int(self.k) < 1:
            raise InvalidArgument("k must be at least 1")
        if self.kind == "l2" and self.kappa is None:
            raise InvalidArgument("l2 needs a kappa callback")
        if self.kind == "l3" and (self.drift is None or self.diffusion is None):
            raise InvalidArgument("l3 needs drift and diffusion callbacks")

    def with_eps(self, eps: float) -> "OperatorSpec":
        return OperatorSpec(self.kind, eps, self.k, self.kappa, self.drift, self.diffusion)


@dataclass(frozen=True)
class DmMatrix:
    """Sparse estimator matrix S (P - I) / eps with n_rows rows and n_cols columns.

    Attributes:
        matrix: the operator, csr.
        kernel: the row-stochastic part P, csr.
        scale: per-row factor S (kappa for l2, ones otherwise).
    """

    matrix: sp.csr_matrix
    kernel: sp.csr_matrix
    scale: np.ndarray
    eps: float
    kind: str

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    def __matmul__(self, u):
        return self.matrix @ u


def lift_tensor_field(jacobian: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Push intrinsic drift and diffusion to ambient coordinates.

    Args:
        jacobian: (M, n, d) derivative of the embedding.
        b: (M, d) intrinsic drift components.
        c: (M, d, d) intrinsic diffusion components.

    Returns:
        (B, C) with B = J b of shape (M, n) and C = J c J^T of shape (M, n, n).
    """
    B = np.einsum("mid,md->mi", jacobian, b)
    C = np.einsum("mia,mab,mjb->mij", jacobian, c, jacobian)
    return B, C


def _pseudo_inverse(C: np.ndarray, rank: int) -> np.ndarray:
    """Rank-limited pseudo-inverse of a stack of symmetric PSD matrices."""
    if not np.all(np.isfinite(C)):
        raise InvalidCoefficient("diffusion tensor has non-finite entries")
    size = np.abs(C).max(axis=(1, 2))
    if np.any(np.abs(C - np.swapaxes(C, 1, 2)).max(axis=(1, 2)) > 1e-10 * np.maximum(size, 1e-300)):
        raise InvalidCoefficient("diffusion tensor is not symmetric")
    w, v = np.linalg.eigh(C)
    top = w[:, -1]
    if np.any(top <= 0) or np.any(w[:, 0] < -1e-10 * top):
        raise InvalidCoefficient("diffusion tensor is not positive semi-definite")
    kept = w[:, -rank:]
    if np.any(kept[:, 0] * 1e12 < top):
        raise IllConditionedDiffusion("diffusion tensor is singular on the tangent space")
    vk = v[:, :, -rank:]
    return np.einsum("mia,ma,mja->mij", vk, 1.0 / kept, vk)


def kernel_pattern(points: np.ndarray, k: int) -> sp.csr_matrix:
    """Symmetrised k-NN adjacency with the diagonal, as a 0/1 csr matrix."""
    n_pts = points.shape[0]
    index = build_index(points, min(k, n_pts - 1)) if n_pts > 1 else None
    if index is None:
        return sp.identity(1, format="csr")
    rows = np.repeat(np.arange(n_pts), index.k)
    adj = sp.csr_matrix((np.ones(rows.size), (rows, index.neighbors.ravel())),
                        shape=(n_pts, n_pts))
    pattern = (adj + adj.T + sp.identity(n_pts, format="csr")).tocsr()
    pattern.data[:] = 1.0
    pattern.sort_indices()
    return pattern


def assemble(points: np.ndarray, n_rows: int, spec: OperatorSpec, d: int | None = None,
             pattern: sp.csr_matrix | None = None) -> DmMatrix:
    """Build the estimator with rows at the first n_rows points.

    Args:
        points: (M, n) all points, rows first, then column-only points.
        n_rows: number of evaluation points.
        spec: operator and kernel parameters.
        d: intrinsic dimension; needed by "l3" to rank-limit the diffusion.
        pattern: precomputed kernel_pattern(points, spec.k) to reuse.
    """
    points = np.asarray(points, dtype=float)
    points = points[:, None] if points.ndim == 1 else points
    n_pts = points.shape[0]
    if not 1 <= n_rows <= n_pts:
        raise InvalidArgument("n_rows out of range")
    eps = float(spec.eps)
    if pattern is None:
        pattern = kernel_pattern(points, spec.k)
    coo = pattern.tocoo()
    r_all, c_all = coo.row, coo.col
    sq = np.sum((points[r_all] - points[c_all]) ** 2, axis=1)
    sym = sp.csr_matrix((np.exp(-sq / (4.0 * eps)), (r_all, c_all)), shape=(n_pts, n_pts))
    q = np.asarray(sym.sum(axis=1)).ravel()

    sel = r_all < n_rows
    rows, cols = r_all[sel], c_all[sel]
    scale = np.ones(n_rows)
    if spec.kind == "l1":
        weight = np.exp(-sq[sel] / (4.0 * eps)) / q[cols]
    elif spec.kind == "l2":
        kappa = np.asarray(spec.kappa(points), dtype=float).reshape(n_pts)
        if not np.all(np.isfinite(kappa)) or np.any(kappa < 0):
            bad = int(np.flatnonzero(~(kappa >= 0))[0])
            raise InvalidCoefficient(f"kappa is negative or non-finite at point {bad}")
        weight = np.exp(-sq[sel] / (4.0 * eps)) * np.sqrt(kappa[cols]) / q[cols]
        scale = kappa[:n_rows].copy()
    else:
        if d is None:
            raise InvalidArgument("l3 assembly needs the intrinsic dimension d")
        base = points[:n_rows]
        drift = np.asarray(spec.drift(base), dtype=float).reshape(n_rows, -1)
        inv_c = _pseudo_inverse(np.asarray(spec.diffusion(base), dtype=float), d)
        shifted = base + eps * drift
        quad = np.empty(rows.size)
        for start in range(0, rows.size, 500_000):
            part = slice(start, start + 500_000)
            diff = shifted[rows[part]] - points[cols[part]]
            quad[part] = np.einsum("ei,eij,ej->e", diff, inv_c[rows[part]], diff)
        weight = np.exp(-quad / (2.0 * eps)) / q[cols]

    W = sp.csr_matrix((weight, (rows, cols)), shape=(n_rows, n_pts))
    total = np.asarray(W.sum(axis=1)).ravel()
    self_w = W.diagonal()
    lonely = np.flatnonzero(~(total - self_w > 0))
    if lonely.size:
        raise DisconnectedPoint(f"point {int(lonely[0])} has no kernel weight on its neighbours")
    P = sp.diags(1.0 / total) @ W
    P = P.tocsr()
    eye = sp.eye(n_rows, n_pts, format="csr")
    matrix = (sp.diags(scale / eps) @ (P - eye)).tocsr()
    matrix.sort_indices()
    return DmMatrix(matrix=matrix, kernel=P, scale=scale, eps=eps, kind=spec.kind)


def assemble_l1(points, n_rows: int, spec: OperatorSpec, **kw) -> DmMatrix:
    if spec.kind != "l1":
        raise InvalidArgument("assemble_l1 needs an l1 spec")
    return assemble(points, n_rows, spec, **kw)


def assemble_l2(points, n_rows: int, spec: OperatorSpec, **kw) -> DmMatrix:
    if spec.kind != "l2":
        raise InvalidArgument("assemble_l2 needs an l2 spec")
    return assemble(points, n_rows, spec, **kw)


def assemble_l3(points, n_rows: int, spec: OperatorSpec, d: int, **kw) -> DmMatrix:
    if spec.kind != "l3":
        raise InvalidArgument("assemble_l3 needs an l3 spec")
    return assemble(points, n_rows, spec, d=d, **kw)


def assemble_augmented(cloud, ghosts, spec: OperatorSpec) -> DmMatrix:
    """Estimator rows at the manifold-side points, columns over samples and ghosts."""
    if ghosts is None:
        return assemble(cloud.points, cloud.n_points, spec, d=cloud.d)
    if ghosts.n_samples != cloud.n_points:
        raise InvalidArgument("ghost set was built for a different cloud")
    return assemble(ghosts.augmented_points(cloud), ghosts.n_manifold, spec, d=cloud.d)


def export_matrix_market(matrix, path) -> None:
    """Write a DmMatrix or sparse matrix in MatrixMarket coordinate format."""
    mat = matrix.matrix if isinstance(matrix, DmMatrix) else matrix
    scipy.io.mmwrite(str(path), sp.coo_matrix(mat), precision=17)
