"""Analytic test problems: samplers, coefficients, manufactured solutions.

Each fixture works on ambient coordinates. Points off the manifold (ghosts)
are mapped back to intrinsic angles by the obvious inverse formulas, so the
coefficients and solutions extend constantly along the ambient normal
direction and smoothly across the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sym

from .errors import InvalidArgument
from .pointcloud import PointCloud


@dataclass
class Fixture:
    """A sampled manifold with an operator, a known solution and boundary data.

    Attributes:
        name: fixture identifier.
        cloud: the samples, boundary ids included.
        kind: "l1", "l2" or "l3".
        u: exact solution on ambient points.
        f: right-hand side (-a u + L u) on ambient points.
        Lu: the operator applied to u, without the shift.
        kappa, drift, diffusion: coefficient callbacks as the kind requires.
        beta1, beta2, g: (J,) boundary data aligned with cloud.boundary_ids.
        a: zeroth-order shift of the problem (-a + L) u = f.
        normals: (J, n) exact outward normals.
        eps, k: suggested kernel parameters, eps None means auto-tune.
        eigenvalues: exact leading eigenvalues when known.
        eigenfunctions: callables of the exact eigenfunctions when known.
        meta: sampling parameters (mode, seed, grid sizes).
    """

    name: str
    cloud: PointCloud
    kind: str
    u: Callable
    f: Callable
    Lu: Callable
    beta1: np.ndarray
    beta2: np.ndarray
    g: np.ndarray
    a: float = 0.0
    kappa: Callable | None = None
    drift: Callable | None = None
    diffusion: Callable | None = None
    normals: np.ndarray | None = None
    eps: float | None = None
    k: int = 50
    eigenvalues: np.ndarray | None = None
    eigenfunctions: list | None = None
    boundary_rows: Callable | None = None
    meta: dict = field(default_factory=dict)


def _unwrap(angle: np.ndarray) -> np.ndarray:
    """Map atan2 output into [-pi/2, 3pi/2) so [0, pi] stays continuous."""
    return np.where(angle < -0.5 * np.pi, angle + 2.0 * np.pi, angle)


# ---------------------------------------------------------------- semi-ellipse

_th = sym.Symbol("theta", real=True)


@lru_cache(maxsize=None)
def _ellipse_functions(a: float):
    metric = sym.sin(_th) ** 2 + a**2 * sym.cos(_th) ** 2
    root = sym.sqrt(metric)
    kappa = sym.Rational(11, 10) + sym.sin(_th)
    u = sym.cos(sym.Rational(3, 2) * _th - sym.pi / 4)
    Lu = sym.diff(root * kappa / metric * sym.diff(u, _th), _th) / root
    du_arc = sym.diff(u, _th) / root
    return tuple(sym.lambdify(_th, e, "numpy") for e in (u, Lu, du_arc))


def ellipse_angle(x: np.ndarray, a: float = 3.0) -> np.ndarray:
    x = np.atleast_2d(x)
    return _unwrap(np.arctan2(x[:, 1] / a, x[:, 0]))


def semi_ellipse(N: int, a: float = 3.0, bc: str = "robin", k: int = 50) -> Fixture:
    """Upper half of the ellipse (cos t, a sin t) with equal-angle samples.

    The operator is div(kappa grad) with kappa = 1.1 + x2/a and the exact
    solution cos(3t/2 - pi/4). bc selects the boundary data: "robin" uses
    beta1 = 1, beta2 = 3/(2a), g = 0; "dirichlet" and "neumann" prescribe
    the values or outward derivatives of the same solution, the Neumann
    problem with shift a = 1.
    """
    if N < 4:
        raise InvalidArgument("semi-ellipse needs at least 4 samples")
    t = np.linspace(0.0, np.pi, N)
    pts = np.column_stack([np.cos(t), a * np.sin(t)])
    cloud = PointCloud(pts, d=1, boundary_ids=[0, N - 1])
    u_t, Lu_t, darc_t = _ellipse_functions(float(a))
    u = lambda x: u_t(ellipse_angle(x, a))
    Lu = lambda x: Lu_t(ellipse_angle(x, a))
    kappa = lambda x: 1.1 + np.atleast_2d(x)[:, 1] / a
    tb = np.array([0.0, np.pi])
    # outward direction is decreasing t at t = 0 and increasing t at t = pi
    dnu = np.array([-darc_t(0.0), darc_t(np.pi)])
    ub = u_t(tb)
    shift = 0.0
    if bc == "robin":
        beta1, beta2, g = np.ones(2), np.full(2, 1.5 / a), np.zeros(2)
    elif bc == "dirichlet":
        beta1, beta2, g = np.zeros(2), np.ones(2), ub
    elif bc == "neumann":
        beta1, beta2, g = np.ones(2), np.zeros(2), dnu
        shift = 1.0
    else:
        raise InvalidArgument(f"unknown boundary condition {bc!r}")
    f = lambda x: Lu(x) - shift * u(x)
    return Fixture(name="semi_ellipse", cloud=cloud, kind="l2", u=u, f=f, Lu=Lu,
                   kappa=kappa, beta1=beta1, beta2=beta2, g=g, a=shift,
                   normals=np.array([[0.0, -1.0], [0.0, -1.0]]), k=k,
                   meta={"N": N, "a": a, "bc": bc, "mode": "well_sampled"})


# ------------------------------------------------------------------ semi-torus

_ph = sym.Symbol("phi", real=True)


def torus_angles(x: np.ndarray, a: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """(theta, phi) of the nearest torus point, phi unwrapped around [0, pi]."""
    x = np.atleast_2d(x)
    r = np.hypot(x[:, 0], x[:, 1])
    return np.arctan2(x[:, 2], r - a), _unwrap(np.arctan2(x[:, 1], x[:, 0]))


def torus_embedding(theta, phi, a: float = 2.0) -> np.ndarray:
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    ring = a + np.cos(theta)
    return np.stack([ring * np.cos(phi), ring * np.sin(phi), np.sin(theta)], axis=-1)


def torus_jacobian(theta, phi, a: float = 2.0) -> np.ndarray:
    """(M, 3, 2) derivative of the embedding in (theta, phi)."""
    st, ct, sp_, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    d_theta = np.stack([-st * cp, -st * sp_, ct], axis=-1)
    d_phi = np.stack([-(a + ct) * sp_, (a + ct) * cp, np.zeros_like(ct)], axis=-1)
    return np.stack([d_theta, d_phi], axis=-1)


@lru_cache(maxsize=None)
def _torus_functions(problem: str, a: float):
    ring = a + sym.cos(_th)
    if problem == "l3":
        u = (sym.sin(2 * _ph) - 2 * sym.cos(2 * _ph) / ring) * sym.cos(_th)
        b1, b2 = 2 + sym.sin(_th), ring
        c11, c12, c22 = 3 + sym.cos(_ph), sym.Rational(1, 10), 2
        gamma_212 = -sym.sin(_th) / ring
        gamma_122 = sym.sin(_th) * ring
        Lu = (b1 * sym.diff(u, _th) + b2 * sym.diff(u, _ph)
              + c11 / 2 * sym.diff(u, _th, 2)
              + c12 * (sym.diff(u, _th, _ph) - gamma_212 * sym.diff(u, _ph))
              + c22 / 2 * (sym.diff(u, _ph, 2) - gamma_122 * sym.diff(u, _th)))
    elif problem == "l2":
        u = sym.sin(_ph) * sym.sin(_th)
        kappa = sym.Rational(11, 10) + sym.sin(_th) ** 2 * sym.cos(_ph) ** 2
        Lu = (sym.diff(kappa * ring * sym.diff(u, _th), _th)
              + sym.diff(kappa * ring / ring**2 * sym.diff(u, _ph), _ph)) / ring
    elif problem == "l1":
        u = sym.sin(_ph) * sym.sin(_th)
        Lu = (sym.diff(ring * sym.diff(u, _th), _th) + sym.diff(sym.diff(u, _ph) / ring, _ph)) / ring
    else:
        raise InvalidArgument(f"unknown torus problem {problem!r}")
    dphi_u = sym.diff(u, _ph) / ring
    return tuple(sym.lambdify((_th, _ph), e, "numpy") for e in (u, Lu, dphi_u))


def _torus_kappa(x, a=2.0):
    theta, phi = torus_angles(x, a)
    return 1.1 + np.sin(theta) ** 2 * np.cos(phi) ** 2


def _torus_drift(x, a=2.0):
    theta, phi = torus_angles(x, a)
    b = np.column_stack([2.0 + np.sin(theta), a + np.cos(theta)])
    return np.einsum("mid,md->mi", torus_jacobian(theta, phi, a), b)


def _torus_diffusion(x, a=2.0):
    theta, phi = torus_angles(x, a)
    c = np.empty((theta.size, 2, 2))
    c[:, 0, 0] = 3.0 + np.cos(phi)
    c[:, 0, 1] = c[:, 1, 0] = 0.1
    c[:, 1, 1] = 2.0
    jac = torus_jacobian(theta, phi, a)
    return np.einsum("mia,mab,mjb->mij", jac, c, jac)


def sample_semi_torus(n_theta: int, n_phi: int, a: float = 2.0, mode: str = "well_sampled",
                      seed: int = 0, n_boundary: int | None = None):
    """Samples of the half torus phi in [0, pi] and their intrinsic angles.

    Well-sampled mode uses the n_theta x n_phi grid with phi endpoints on the
    boundary. Random mode draws n_theta * n_phi points in total: n_boundary
    (default 2 * sqrt(N)) split evenly over the two boundary circles at
    uniform random theta, the rest uniform in (theta, phi).

    Returns:
        (cloud, theta, phi).
    """
    N = n_theta * n_phi
    if mode == "well_sampled":
        t = 2.0 * np.pi * np.arange(n_theta) / n_theta
        p = np.linspace(0.0, np.pi, n_phi)
        theta, phi = (arr.ravel() for arr in np.meshgrid(t, p, indexing="ij"))
        boundary = np.flatnonzero((phi == 0.0) | (phi == np.pi))
    elif mode == "random":
        rng = np.random.default_rng(seed)
        J = n_boundary if n_boundary is not None else 2 * int(round(np.sqrt(N)))
        J -= J % 2
        n_int = N - J
        theta_i = rng.uniform(0.0, 2.0 * np.pi, n_int)
        phi_i = rng.uniform(0.0, np.pi, n_int)
        theta_b = rng.uniform(0.0, 2.0 * np.pi, J)
        phi_b = np.repeat([0.0, np.pi], J // 2)
        theta = np.concatenate([theta_i, theta_b])
        phi = np.concatenate([phi_i, phi_b])
        boundary = np.arange(n_int, N)
    else:
        raise InvalidArgument(f"unknown sampling mode {mode!r}")
    cloud = PointCloud(torus_embedding(theta, phi, a), d=2, boundary_ids=boundary)
    return cloud, theta, phi


def semi_torus(n_theta: int, n_phi: int | None = None, problem: str = "l3", a: float = 2.0,
               mode: str = "well_sampled", seed: int = 0, k: int | None = None,
               eps: float | None = None) -> Fixture:
    """Half torus with mixed boundary data: Dirichlet at phi = 0, Robin (1, 1) at phi = pi.

    problem "l3" uses drift b = (2 + sin t, 2 + cos t) and diffusion
    c = [[3 + cos p, 0.1], [0.1, 2]] in intrinsic components; "l2" uses
    kappa = 1.1 + sin^2 t cos^2 p; "l1" is the Laplace-Beltrami operator.
    """
    n_phi = n_theta if n_phi is None else n_phi
    cloud, theta, phi = sample_semi_torus(n_theta, n_phi, a, mode, seed)
    u_tp, Lu_tp, dphi_tp = _torus_functions(problem, float(a))

    def u(x):
        t, p = torus_angles(x, a)
        return u_tp(t, p) + np.zeros_like(t)

    def Lu(x):
        t, p = torus_angles(x, a)
        return Lu_tp(t, p) + np.zeros_like(t)

    ids = cloud.boundary_ids
    tb, pb = theta[ids], phi[ids]
    at_pi = pb > 0.5 * np.pi
    beta1 = np.where(at_pi, 1.0, 0.0)
    beta2 = np.ones(ids.size)
    g = np.where(at_pi, dphi_tp(tb, pb) + u_tp(tb, pb), u_tp(tb, pb))
    normals = np.tile([0.0, -1.0, 0.0], (ids.size, 1))
    if k is None:
        k = 200 if problem == "l3" else (121 if mode == "well_sampled"
                                          else int(np.ceil(np.sqrt(cloud.n_points))))
    if eps is None and problem == "l3" and mode == "well_sampled":
        eps = {64: 3.2e-3, 128: 8e-4}.get(n_theta)
    return Fixture(name=f"semi_torus_{problem}", cloud=cloud, kind=problem, u=u, f=Lu, Lu=Lu,
                   kappa=(lambda x: _torus_kappa(x, a)) if problem == "l2" else None,
                   drift=(lambda x: _torus_drift(x, a)) if problem == "l3" else None,
                   diffusion=(lambda x: _torus_diffusion(x, a)) if problem == "l3" else None,
                   beta1=beta1, beta2=beta2, g=g, normals=normals, eps=eps, k=k,
                   meta={"n_theta": n_theta, "n_phi": n_phi, "a": a, "mode": mode,
                         "seed": seed, "theta": theta, "phi": phi})


def semi_torus_l3_problem(n_theta: int = 64, **kw) -> Fixture:
    return semi_torus(n_theta, problem="l3", **kw)


def semi_torus_l2_problem(n_theta: int = 64, **kw) -> Fixture:
    return semi_torus(n_theta, problem="l2", **kw)


# ------------------------------------------------------------- 1D eigen tests

def legendre_problem(N: int = 400, k: int = 50, eps: float = 1.5e-5) -> Fixture:
    """kappa = 1 - x^2 on [-1, 1]; eigenvalues -n(n+1), Legendre polynomials.

    The operator degenerates at x = +-1, where it reduces to -2x u'. Those
    two rows are replaced by one-sided differences of that first-order term
    (see legendre_boundary_rows). Off [-1, 1] the conductivity is continued
    by |1 - x^2| so that ghost columns keep a nonnegative weight.
    """
    if N < 4:
        raise InvalidArgument("Legendre fixture needs at least 4 samples")
    x = np.linspace(-1.0, 1.0, N)
    cloud = PointCloud(x[:, None], d=1, boundary_ids=[0, N - 1])
    polys = [np.polynomial.legendre.Legendre.basis(n) for n in range(20)]
    zero = lambda p: np.zeros(np.atleast_2d(p).shape[0])
    return Fixture(name="legendre", cloud=cloud, kind="l2", u=zero, f=zero, Lu=zero,
                   kappa=lambda p: np.abs(1.0 - np.atleast_2d(p)[:, 0] ** 2),
                   beta1=np.zeros(2), beta2=np.ones(2), g=np.zeros(2),
                   normals=np.array([[-1.0], [1.0]]), eps=eps, k=k,
                   eigenvalues=-np.array([n * (n + 1.0) for n in range(20)]),
                   eigenfunctions=[(lambda p, q=q: q(np.atleast_2d(p)[:, 0])) for q in polys],
                   boundary_rows=legendre_boundary_rows, meta={"N": N})


def legendre_boundary_rows(cloud: PointCloud, n_columns: int | None = None):
    """Rows of -2x u' at the two end samples, one-sided first differences."""
    import scipy.sparse as sp

    x = cloud.points[:, 0]
    n_columns = cloud.n_points if n_columns is None else n_columns
    rows, cols, vals = [], [], []
    for r, b in enumerate(cloud.boundary_ids):
        nbr = b + 1 if b == 0 else b - 1
        slope = -2.0 * x[b] / (x[b] - x[nbr])
        rows += [r, r]
        cols += [b, nbr]
        vals += [slope, -slope]
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(cloud.boundary_ids), n_columns))


def semi_circle(N: int, bc: str = "dirichlet", k: int = 50, eps: float | None = None) -> Fixture:
    """Unit upper half circle with equal-angle samples, Laplace-Beltrami eigenproblem.

    "dirichlet": eigenvalues -n^2, eigenfunctions sin(n t).
    "robin": -d_nu u + u = 0 at t = 0 and d_nu u + u = 0 at t = pi; the
    leading eigenvalue is 1 with eigenfunction exp(-t), then -m^2 with
    sin(m t) - m cos(m t) for m = 1, 2, ...
    """
    if N < 4:
        raise InvalidArgument("semi-circle needs at least 4 samples")
    t = np.linspace(0.0, np.pi, N)
    cloud = PointCloud(np.column_stack([np.cos(t), np.sin(t)]), d=1, boundary_ids=[0, N - 1])
    angle = lambda p: _unwrap(np.arctan2(np.atleast_2d(p)[:, 1], np.atleast_2d(p)[:, 0]))
    n = np.arange(1, 21)
    if bc == "dirichlet":
        beta1, beta2 = np.zeros(2), np.ones(2)
        lam = -(n**2).astype(float)
        funcs = [(lambda p, m=m: np.sin(m * angle(p))) for m in n]
    elif bc == "robin":
        beta1, beta2 = np.array([-1.0, 1.0]), np.ones(2)
        m = n[:-1].astype(float)
        lam = np.concatenate([[1.0], -(m**2)])
        funcs = [lambda p: np.exp(-angle(p))] + [
            (lambda p, w=w: np.sin(w * angle(p)) - w * np.cos(w * angle(p))) for w in m]
    else:
        raise InvalidArgument(f"unknown boundary condition {bc!r}")
    zero = lambda p: np.zeros(np.atleast_2d(p).shape[0])
    return Fixture(name="semi_circle", cloud=cloud, kind="l1", u=zero, f=zero, Lu=zero,
                   beta1=beta1, beta2=beta2, g=np.zeros(2),
                   normals=np.array([[0.0, -1.0], [0.0, -1.0]]), eps=eps, k=k,
                   eigenvalues=lam, eigenfunctions=funcs, meta={"N": N, "bc": bc})


FIXTURES = {
    "semi_ellipse": semi_ellipse,
    "semi_torus_l3": semi_torus_l3_problem,
    "semi_torus_l2": semi_torus_l2_problem,
    "semi_circle": semi_circle,
    "legendre": legendre_problem,
}
