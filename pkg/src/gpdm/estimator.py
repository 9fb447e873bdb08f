"""Ghost-value extrapolation and the affine ghost point estimator.

Along each ghost ray the values are ordered as

    s_0 = u(inner ghost), s_1 = u(boundary), s_2 = u(G1), ..., s_{K+1} = u(GK).

The ghost values solve, per boundary point j, K equations: the estimator
row at the boundary sample must reproduce f there, and the third
differences s_m - 3 s_{m-1} + 3 s_{m-2} - s_{m-3} vanish for m = 3..K+1,
i.e. the ray profile is quadratic. Stacking them gives E uG = R uM + F fB.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import (ExtrapolationSingular, InvalidArgument, InvalidBoundaryCondition,
                     RankDeficientExtrapolationWarning)
from .operators import DmMatrix


@dataclass(frozen=True)
class ExtrapolationSystem:
    """E uG = R uM + F fB for the J*K exterior ghost values.

    Row j*K of each block is the boundary-row equation of boundary point j
    (scaled by eps / S_jj so that its coefficients are kernel weights); rows
    j*K + 1 .. j*K + K - 1 are the third-difference equations.

    Attributes:
        rcond: relative singular-value cutoff. Directions of E below it are
            dropped (minimum-norm ghost values) with a warning; None makes
            a numerically singular E an error instead.
    """

    E: sp.csr_matrix
    R: sp.csr_matrix
    F: sp.csr_matrix
    boundary_rows: np.ndarray
    K: int
    rcond: float | None = 1e-10

    @cached_property
    def inverse(self) -> np.ndarray:
        """Dense inverse of E, or its truncated pseudo-inverse."""
        return _invert(self.E.toarray(), self.K, self.rcond)

    @property
    def A(self) -> np.ndarray:
        """Dense (JK, N) map from manifold values to ghost values."""
        return np.asarray(self.R.T @ self.inverse.T).T

    def b(self, f_boundary) -> np.ndarray:
        return self.inverse @ (self.F @ np.asarray(f_boundary, dtype=float))

    def solve(self, u_manifold, f_boundary) -> np.ndarray:
        """Ghost values for given manifold values and boundary data."""
        rhs = self.R @ np.asarray(u_manifold, dtype=float) + self.F @ np.asarray(f_boundary, dtype=float)
        return self.inverse @ rhs

    def residual(self, u_manifold, u_ghost, f_boundary) -> np.ndarray:
        return self.E @ u_ghost - self.R @ u_manifold - self.F @ f_boundary

    def inverse_norm(self) -> float:
        """Infinity norm of E^-1 (of the pseudo-inverse when truncated)."""
        return float(np.abs(self.inverse).sum(axis=1).max())


def _invert(E: np.ndarray, K: int, rcond: float | None) -> np.ndarray:
    if not np.all(np.isfinite(E)):
        raise ExtrapolationSingular("ghost system has non-finite entries")
    size = E.shape[0]
    if size == 0:
        return np.zeros((0, 0))
    U, S, Vt = np.linalg.svd(E)
    floor = size * np.finfo(float).eps * S[0]
    if rcond is None:
        if S[-1] <= floor:
            weakest = int(np.argmax(np.abs(Vt[-1]))) // K
            raise ExtrapolationSingular(
                f"ghost system is singular (J={size // K}, K={K}); weakest direction on ray {weakest}")
        return (Vt.T / S) @ U.T
    keep = S > max(rcond * S[0], floor)
    dropped = int(size - keep.sum())
    if dropped:
        mass = (Vt[~keep] ** 2).sum(axis=0).reshape(-1, K).sum(axis=1)
        rays = np.flatnonzero(mass > 0.1).tolist()
        warnings.warn(f"ghost system is rank deficient; dropped {dropped} directions "
                      f"involving rays {rays}", RankDeficientExtrapolationWarning, stacklevel=3)
    return (Vt[keep].T / S[keep]) @ U[:, keep].T


@dataclass(frozen=True)
class GpdmOperator:
    """Affine map u -> L1part u + offset on the manifold-side points.

    Attributes:
        L1part: L^(1) + L^(2) A.
        offset: L^(2) b for the boundary data the operator was built with.
        offset_map: (N, J) matrix with offset = offset_map @ f_boundary.
        L1, L2: manifold and ghost column blocks of the augmented matrix.
        boundary_rows: row index of each boundary sample.
    """

    L1part: sp.csr_matrix
    offset: np.ndarray
    offset_map: sp.csr_matrix
    L1: sp.csr_matrix
    L2: sp.csr_matrix
    boundary_rows: np.ndarray
    eps: float

    def __call__(self, u) -> np.ndarray:
        return self.L1part @ u + self.offset

    def with_boundary_data(self, f_boundary) -> "GpdmOperator":
        offset = self.offset_map @ np.asarray(f_boundary, dtype=float)
        return GpdmOperator(self.L1part, offset, self.offset_map, self.L1, self.L2,
                            self.boundary_rows, self.eps)


def build_extrapolation(Lh: DmMatrix, ghosts, boundary_rows, shift=None,
                        rcond: float | None = 1e-10) -> ExtrapolationSystem:
    """Assemble the JK ghost equations from the augmented estimator.

    Args:
        Lh: estimator with ghosts.n_manifold rows over the augmented columns.
        ghosts: the GhostSet used to build Lh.
        boundary_rows: (J,) row of each boundary sample, aligned with ghosts.
        shift: (J,) zeroth-order coefficient a at the boundary samples; the
            boundary-row equation is then (-a + L) u = f. None means zero.
        rcond: singular-value cutoff passed to the ExtrapolationSystem.
    """
    n_man, K, J = ghosts.n_manifold, ghosts.K, ghosts.n_boundary
    boundary_rows = np.asarray(boundary_rows, dtype=np.int64)
    if Lh.n_rows != n_man or Lh.n_cols != ghosts.n_augmented:
        raise InvalidArgument("estimator shape does not match the ghost set")
    if boundary_rows.size != J:
        raise InvalidArgument("need one boundary row per ghost ray")
    mat = Lh.matrix
    row_factor = Lh.scale[boundary_rows]
    row_scale = Lh.eps / np.where(row_factor > 0, row_factor, 1.0)
    brows = sp.diags(row_scale) @ mat[boundary_rows]
    brows = brows.tocsr()
    first = np.arange(J) * K

    # boundary-row equations
    lift = sp.csr_matrix((np.ones(J), (first, np.arange(J))), shape=(J * K, J))
    E = lift @ brows[:, n_man:]
    R = -(lift @ brows[:, :n_man])
    if shift is not None:
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (J,))
        R = R + sp.csr_matrix((row_scale * shift, (first, boundary_rows)), shape=(J * K, n_man))
    F = sp.csr_matrix((row_scale, (first, np.arange(J))), shape=(J * K, J))

    # third differences along the ray; sequence index m -> unknown
    e_r, e_c, e_v, r_r, r_c, r_v = [], [], [], [], [], []
    stencil = (1.0, -3.0, 3.0, -1.0)
    for j in range(J):
        seq_manifold = {0: int(ghosts.inner_ids[j]), 1: int(boundary_rows[j])}
        for m in range(3, K + 2):
            row = j * K + (m - 2)
            for offset, w in enumerate(stencil):
                s = m - offset
                if s >= 2:
                    e_r.append(row)
                    e_c.append(j * K + (s - 2))
                    e_v.append(w)
                else:
                    r_r.append(row)
                    r_c.append(seq_manifold[s])
                    r_v.append(-w)
    E = E + sp.csr_matrix((e_v, (e_r, e_c)), shape=(J * K, J * K))
    R = R + sp.csr_matrix((r_v, (r_r, r_c)), shape=(J * K, n_man))
    return ExtrapolationSystem(E=E.tocsr(), R=R.tocsr(), F=F, boundary_rows=boundary_rows, K=K,
                                rcond=rcond)


def build_gpdm(Lh: DmMatrix, system: ExtrapolationSystem, n_manifold: int,
               f_boundary=None) -> GpdmOperator:
    """Eliminate the ghost unknowns from the augmented estimator.

    Args:
        Lh: augmented estimator.
        system: extrapolation equations built from Lh.
        n_manifold: number of manifold-side columns of Lh.
        f_boundary: (J,) right-hand side at the boundary samples; zeros if None.
    """
    mat = Lh.matrix
    L1 = mat[:, :n_manifold].tocsr()
    L2 = mat[:, n_manifold:].tocsr()
    J = system.F.shape[1]
    f_boundary = np.zeros(J) if f_boundary is None else np.asarray(f_boundary, dtype=float)
    touched = np.unique(L2.nonzero()[0])
    L1part = L1.copy()
    offset_map = sp.csr_matrix((mat.shape[0], J))
    if touched.size and L2.shape[1]:
        Z = L2[touched] @ system.inverse
        used = np.unique(system.R.nonzero()[1])
        ZR = Z @ system.R[:, used].toarray()
        rr, cc = np.nonzero(ZR)
        L1part = L1 + sp.csr_matrix((ZR[rr, cc], (touched[rr], used[cc])), shape=L1.shape)
        ZF = Z @ system.F.toarray()
        rr, cc = np.nonzero(ZF)
        offset_map = sp.csr_matrix((ZF[rr, cc], (touched[rr], cc)), shape=(mat.shape[0], J))
    L1part = L1part.tocsr()
    L1part.sort_indices()
    return GpdmOperator(L1part=L1part, offset=offset_map @ f_boundary, offset_map=offset_map,
                        L1=L1, L2=L2, boundary_rows=np.asarray(system.boundary_rows),
                        eps=Lh.eps)


def linear_extrapolation(ghosts, boundary_rows, beta1=None, beta2=None, spacing=None):
    """Homogeneous ghost values from vanishing second differences along each ray.

    Ghost k takes the value (k+1) u_B - k u_G0. With boundary coefficients the
    homogeneous condition beta1 (u_B - u_G0) / h + beta2 u_B = 0 also fixes
    u_B = rho u_G0, and the boundary values are eliminated too.

    Args:
        ghosts: the GhostSet.
        boundary_rows: (J,) manifold-side index of each boundary sample.
        beta1, beta2: (J,) boundary coefficients, or None to keep u_B.
        spacing: (J,) ray spacing h, needed with coefficients.

    Returns:
        (T, kept): sparse (n_augmented, len(kept)) matrix T with
        u_augmented = T @ u[kept], and the kept manifold-side indices.
    """
    n_man, K, J = ghosts.n_manifold, ghosts.K, ghosts.n_boundary
    boundary_rows = np.asarray(boundary_rows, dtype=np.int64)
    keep_boundary = beta1 is None and beta2 is None
    mask = np.ones(n_man, dtype=bool)
    if not keep_boundary:
        mask[boundary_rows] = False
    kept = np.flatnonzero(mask)
    position = np.full(n_man, -1)
    position[kept] = np.arange(kept.size)
    inner = np.asarray(ghosts.inner_ids, dtype=np.int64)
    if not keep_boundary and np.any(~mask[inner]):
        raise InvalidBoundaryCondition("an inner ghost coincides with a boundary sample")
    rows, cols, vals = list(kept), list(range(kept.size)), [1.0] * kept.size
    layers = ghosts.layer_ids()
    k = np.arange(1, K + 1)
    if keep_boundary:
        for j in range(J):
            rows += list(layers[j]) * 2
            cols += [position[boundary_rows[j]]] * K + [position[inner[j]]] * K
            vals += list(k + 1.0) + list(-k * 1.0)
    else:
        beta1 = np.broadcast_to(np.asarray(beta1, dtype=float), (J,))
        beta2 = np.broadcast_to(np.asarray(beta2, dtype=float), (J,))
        h = np.broadcast_to(np.asarray(spacing, dtype=float), (J,))
        denom = beta1 / h + beta2
        if np.any(np.abs(denom) < 1e-14 * (np.abs(beta1 / h) + np.abs(beta2) + 1e-300)):
            raise InvalidBoundaryCondition("boundary coefficients make u_B undetermined")
        if np.any((beta1 == 0) & (beta2 == 0)):
            raise InvalidBoundaryCondition("beta1 and beta2 both vanish")
        rho = (beta1 / h) / denom
        for j in range(J):
            rows += [boundary_rows[j]] + list(layers[j])
            cols += [position[inner[j]]] * (K + 1)
            vals += [rho[j]] + list((k + 1.0) * rho[j] - k)
    T = sp.csr_matrix((vals, (rows, cols)), shape=(ghosts.n_augmented, kept.size))
    return T, kept
