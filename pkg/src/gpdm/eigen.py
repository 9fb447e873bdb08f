"""Eigenpairs of the estimators with homogeneous boundary conditions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, SolverFailure
from .estimator import linear_extrapolation
from .pde import stencil_bc

DENSE_LIMIT = 4096


@dataclass
class EigReport:
    """Leading eigenpairs sorted by descending real part.

    Attributes:
        lambdas: (M,) real parts of the eigenvalues.
        psis: (n, M) eigenvectors on the unknowns `ids`, scaled to unit
            infinity norm with the first clearly nonzero entry positive.
        residuals: (M,) infinity norm of (Op - lambda) psi.
        ids: manifold-side index of each row of psis.
        imag: (M,) imaginary parts; complex_flags marks |imag| > 1e-6 |lambda|.
        converged: (M,) False for pairs an iterative solver did not return.
    """

    lambdas: np.ndarray
    psis: np.ndarray
    residuals: np.ndarray
    ids: np.ndarray
    imag: np.ndarray
    complex_flags: np.ndarray
    converged: np.ndarray
    method: str = "gpdm"
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"method": self.method, "lambdas": self.lambdas.tolist(),
                "residuals": self.residuals.tolist(), "imag": self.imag.tolist(),
                "complex": self.complex_flags.tolist(), "converged": self.converged.tolist(),
                **self.meta}


def normalize_vector(vec: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Scale to unit infinity norm, sign fixed by the first entry above tol."""
    vec = np.asarray(vec)
    top = np.abs(vec).max()
    if top == 0:
        return vec.astype(float)
    vec = vec / vec[np.argmax(np.abs(vec))]
    vec = np.real_if_close(vec, tol=1e6)
    first = np.flatnonzero(np.abs(vec) > tol)[0]
    return vec * np.sign(np.real(vec[first]))


def dense_or_sparse_eigs(matrix, n_modes: int, dense_limit: int = DENSE_LIMIT):
    """Eigenvalues with the largest real parts and their vectors.

    Dense LAPACK below dense_limit unknowns, shift-invert Arnoldi around 0
    above it.

    Returns:
        (values, vectors, converged)
    """
    size = matrix.shape[0]
    if n_modes == 0:
        return np.zeros(0, complex), np.zeros((size, 0), complex), np.zeros(0, bool)
    if n_modes > size:
        raise InvalidArgument(f"{n_modes} modes requested from a {size}-dimensional operator")
    if size <= dense_limit:
        dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
        values, vectors = scipy.linalg.eig(dense)
        order = np.lexsort((-values.imag, -values.real))[:n_modes]
        return values[order], vectors[:, order], np.ones(n_modes, dtype=bool)
    want = min(size - 2, max(2 * n_modes, n_modes + 10))
    try:
        values, vectors = spla.eigs(sp.csc_matrix(matrix), k=want, sigma=0.0, which="LM")
    except spla.ArpackNoConvergence as exc:
        values, vectors = exc.eigenvalues, exc.eigenvectors
    except RuntimeError as exc:
        raise SolverFailure(f"shift-invert eigensolve failed: {exc}") from exc
    order = np.lexsort((-values.imag, -values.real))[:n_modes]
    got = order.size
    converged = np.zeros(n_modes, dtype=bool)
    converged[:got] = True
    values = np.concatenate([values[order], np.full(n_modes - got, np.nan)])
    vectors = np.hstack([vectors[:, order], np.full((size, n_modes - got), np.nan)])
    return values, vectors, converged


def _report(matrix, ids, n_modes, method, meta=None) -> EigReport:
    values, vectors, converged = dense_or_sparse_eigs(matrix, n_modes)
    psis = np.zeros(vectors.shape)
    residuals = np.full(n_modes, np.nan)
    for i in range(n_modes):
        if not converged[i]:
            continue
        vec = normalize_vector(vectors[:, i])
        residuals[i] = float(np.abs(matrix @ vec - values[i] * vec).max())
        psis[:, i] = np.real(vec)
    lam = np.real(values)
    imag = np.imag(values)
    flags = np.abs(imag) > 1e-6 * np.maximum(np.abs(values), 1e-300)
    return EigReport(lambdas=lam, psis=psis, residuals=residuals, ids=np.asarray(ids),
                     imag=imag, complex_flags=flags, converged=converged, method=method,
                     meta=meta or {})


def gpdm_reduced_operator(Lh, ghosts, boundary, beta1=None, beta2=None, boundary_rows=None):
    """Square operator on the kept unknowns after homogeneous ghost extrapolation.

    Args:
        Lh: augmented estimator.
        ghosts, boundary: from build_ghosts / estimate_boundary.
        beta1, beta2: homogeneous boundary coefficients. None keeps the
            boundary unknowns, whose rows then come from boundary_rows.
        boundary_rows: callable (n_columns) -> (J, n_manifold) sparse rows that
            replace the estimator at the boundary samples when no
            coefficients are given.

    Returns:
        (matrix, kept)
    """
    if beta1 is None:
        T, kept = linear_extrapolation(ghosts, boundary.ids)
    else:
        T, kept = linear_extrapolation(ghosts, boundary.ids, beta1, beta2, boundary.spacing)
    reduced = (Lh.matrix[kept] @ T).tocsr()
    if beta1 is None and boundary_rows is not None:
        rows = sp.csr_matrix(boundary_rows(ghosts.n_manifold))[:, kept]
        reduced = _replace_rows(reduced, np.searchsorted(kept, boundary.ids), rows)
    return reduced, kept


def _replace_rows(matrix, positions, rows) -> sp.csr_matrix:
    keep = np.ones(matrix.shape[0], dtype=bool)
    keep[positions] = False
    mask = sp.diags(keep.astype(float))
    lift = sp.csr_matrix((np.ones(len(positions)), (positions, np.arange(len(positions)))),
                         shape=(matrix.shape[0], len(positions)))
    return (mask @ matrix + lift @ rows).tocsr()


def gpdm_eigs(Lh, ghosts, boundary, n_modes: int, beta1=None, beta2=None,
              boundary_rows=None) -> EigReport:
    """Leading eigenpairs of the ghost point estimator.

    Ghost values follow the homogeneous linear extrapolation, and boundary
    values follow the homogeneous condition beta1 d_nu u + beta2 u = 0.
    """
    reduced, kept = gpdm_reduced_operator(Lh, ghosts, boundary, beta1, beta2, boundary_rows)
    return _report(reduced, kept, n_modes, "gpdm", {"eps": Lh.eps, "K": ghosts.K})


def dm_eigs(matrix, cloud, normals, n_modes: int, beta1=None, beta2=None, boundary_rows=None,
            eps: float | None = None) -> EigReport:
    """Leading eigenpairs of the plain estimator with stencil boundary conditions.

    Boundary values are eliminated through u_B = -(B^B)^-1 B^I u_I, with B
    from the two-neighbour normal-derivative stencil. Without coefficients
    the boundary rows are replaced by boundary_rows instead.
    """
    mat = sp.csr_matrix(matrix)
    N = cloud.n_points
    ids = cloud.boundary_ids
    if beta1 is None:
        if boundary_rows is None:
            raise InvalidArgument("need boundary coefficients or replacement rows")
        reduced = _replace_rows(mat, ids, sp.csr_matrix(boundary_rows(N)))
        return _report(reduced, np.arange(N), n_modes, "dm", {"eps": eps})
    bc = stencil_bc(cloud.points, ids, normals, beta1, beta2, N)
    interior = cloud.interior_ids
    Bb = bc.rows[:, ids].toarray()
    if np.any(np.abs(np.diag(Bb)) == 0) or np.count_nonzero(Bb - np.diag(np.diag(Bb))):
        raise InvalidArgument("boundary block is not diagonal and nonsingular")
    C = -sp.diags(1.0 / np.diag(Bb)) @ bc.rows[:, interior]
    reduced = (mat[interior][:, interior] + mat[interior][:, ids] @ C).tocsr()
    return _report(reduced, interior, n_modes, "dm", {"eps": eps})


def _fourier_derivatives(n: int):
    """First and second spectral differentiation matrices on n periodic nodes (n even)."""
    h = 2.0 * np.pi / n
    k = np.arange(1, n)
    col1 = np.concatenate([[0.0], 0.5 * (-1.0) ** k / np.tan(k * h / 2.0)])
    D1 = scipy.linalg.toeplitz(col1, -col1)
    col2 = np.concatenate([[-np.pi**2 / (3.0 * h**2) - 1.0 / 6.0],
                           -0.5 * (-1.0) ** k / np.sin(k * h / 2.0) ** 2])
    D2 = scipy.linalg.toeplitz(col2)
    return D1, D2


def wavenumbers(bc_type: str, count: int) -> np.ndarray:
    """Admissible phi-wavenumbers: sin(m phi) on [0, pi]."""
    if bc_type == "dirichlet":
        return np.arange(1, count + 1, dtype=float)
    if bc_type == "mixed":
        return np.arange(count, dtype=float) + 0.5
    raise InvalidArgument(f"bc_type must be 'dirichlet' or 'mixed', got {bc_type!r}")


def theta_eigs(a: float, m: float, n_theta: int = 128) -> np.ndarray:
    """Eigenvalues of T'' - sin/(a+cos) T' - m^2/(a+cos)^2 T on the periodic circle, descending."""
    if n_theta % 2:
        raise InvalidArgument("n_theta must be even")
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    ring = a + np.cos(theta)
    D1, D2 = _fourier_derivatives(n_theta)
    op = D2 - (np.sin(theta) / ring)[:, None] * D1 - np.diag(m**2 / ring**2)
    # symmetric under the weight ring, so the spectrum is real
    w = np.sqrt(ring)
    sym = (w[:, None] * op) / w[None, :]
    sym = 0.5 * (sym + sym.T)
    return np.sort(np.linalg.eigvalsh(sym))[::-1]


def semitorus_reference_eigs(a: float = 2.0, bc_type: str = "dirichlet", count: int = 20,
                             n_theta: int = 128, n_wavenumbers: int | None = None):
    """Leading Laplace-Beltrami eigenvalues of the half torus by separation of variables.

    Returns:
        (lambdas, wavenumber of each) for the count eigenvalues closest to 0.
    """
    n_wavenumbers = count if n_wavenumbers is None else n_wavenumbers
    vals, ms = [], []
    for m in wavenumbers(bc_type, n_wavenumbers):
        ev = theta_eigs(a, m, n_theta)[:count]
        vals.append(ev)
        ms.append(np.full(ev.size, m))
    vals = np.concatenate(vals)
    ms = np.concatenate(ms)
    order = np.argsort(-vals, kind="stable")[:count]
    return vals[order], ms[order]
