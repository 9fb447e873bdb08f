import numpy as np
import pytest

from gpdm.errors import InvalidArgument
from gpdm.manifolds import (legendre_problem, semi_circle, semi_ellipse, semi_torus,
                            torus_embedding)

H = 1e-4


def d1(fun, x, h=1e-3):
    """Fourth-order central difference."""
    return (8 * (fun(x + h) - fun(x - h)) - (fun(x + 2 * h) - fun(x - 2 * h))) / (12 * h)


# --------------------------------------------------------------- semi-ellipse

def ellipse_point(t, a=3.0):
    return np.column_stack([np.cos(t), a * np.sin(t)])


def test_semi_ellipse_rhs_matches_finite_differences():
    a = 3.0
    fx = semi_ellipse(400, a)
    u = lambda t: fx.u(ellipse_point(t, a))
    kappa = lambda t: 1.1 + np.sin(t)
    # metric from the numerical speed of the embedding
    root = lambda t: np.linalg.norm(d1(lambda s: ellipse_point(s, a), t), axis=1)
    flux = lambda t: kappa(t) / root(t) * d1(u, t)
    t = np.linspace(0.05, np.pi - 0.05, 50)
    oracle = d1(flux, t) / root(t)
    assert np.abs(fx.Lu(ellipse_point(t, a)) - oracle).max() < 1e-5


def test_semi_ellipse_solution_satisfies_robin_condition():
    a = 3.0
    fx = semi_ellipse(100, a)
    u = lambda t: fx.u(ellipse_point(t, a))
    # outward arc-length derivative: -d/dt at t = 0, +d/dt at t = pi, speed a at both ends
    for sign, t0, r in ((-1.0, 0.0, 0), (1.0, np.pi, 1)):
        t = np.array([t0])
        bu = fx.beta1[r] * sign * d1(u, t) / a + fx.beta2[r] * u(t)
        assert abs(bu[0]) < 1e-7
    assert np.all(fx.g == 0.0)


def test_semi_ellipse_samples_and_conductivity():
    fx = semi_ellipse(5, 3.0)
    assert np.allclose(fx.cloud.points[2], [0.0, 3.0])
    assert fx.kappa(np.array([[0.0, 3.0]]))[0] == pytest.approx(2.1)
    assert fx.cloud.boundary_ids.tolist() == [0, 4]
    with pytest.raises(InvalidArgument):
        semi_ellipse(3)
    with pytest.raises(InvalidArgument):
        semi_ellipse(10, bc="periodic")


def test_semi_ellipse_dirichlet_and_neumann_data():
    a = 3.0
    u = semi_ellipse(10, a).u
    t = np.array([0.0, np.pi])
    dirichlet = semi_ellipse(10, a, bc="dirichlet")
    assert np.allclose(dirichlet.g, u(ellipse_point(t, a)))
    neumann = semi_ellipse(10, a, bc="neumann")
    ut = lambda s: u(ellipse_point(s, a))
    expected = np.array([-d1(ut, t[:1])[0], d1(ut, t[1:])[0]]) / a
    assert np.allclose(neumann.g, expected, atol=1e-7)
    x = neumann.cloud.points
    assert np.allclose(neumann.f(x), neumann.Lu(x) - neumann.u(x))


# ------------------------------------------------------------------ semi-torus

def torus_metric(theta, phi, a=2.0, h=H):
    """Metric tensor from finite differences of the embedding."""
    emb = lambda t, p: torus_embedding(t, p, a)
    dt = (emb(theta + h, phi) - emb(theta - h, phi)) / (2 * h)
    dp = (emb(theta, phi + h) - emb(theta, phi - h)) / (2 * h)
    jac = np.stack([dt, dp], axis=-1)
    return np.einsum("...ia,...ib->...ab", jac, jac)


def christoffel(theta, phi, a=2.0, h=1e-3):
    """Gamma^k_ij from finite differences of the metric."""
    g = torus_metric(theta, phi, a)
    dg = np.stack([(torus_metric(theta + h, phi, a) - torus_metric(theta - h, phi, a)) / (2 * h),
                   (torus_metric(theta, phi + h, a) - torus_metric(theta, phi - h, a)) / (2 * h)],
                  axis=-1)
    # dg[..., i, j, l] = d_l g_ij
    ginv = np.linalg.inv(g)
    low = 0.5 * (np.einsum("...lji->...lij", dg) + dg - np.einsum("...ijl->...lij", dg))
    # low[..., l, i, j] = (d_i g_lj + d_j g_li - d_l g_ij) / 2
    return np.einsum("...kl,...lij->...kij", ginv, low)


def intrinsic_derivatives(u, theta, phi, h=1e-3):
    ut = (u(theta + h, phi) - u(theta - h, phi)) / (2 * h)
    up = (u(theta, phi + h) - u(theta, phi - h)) / (2 * h)
    utt = (u(theta + h, phi) - 2 * u(theta, phi) + u(theta - h, phi)) / h**2
    upp = (u(theta, phi + h) - 2 * u(theta, phi) + u(theta, phi - h)) / h**2
    utp = (u(theta + h, phi + h) - u(theta + h, phi - h) - u(theta - h, phi + h)
           + u(theta - h, phi - h)) / (4 * h**2)
    grad = np.stack([ut, up], axis=-1)
    hess = np.stack([np.stack([utt, utp], -1), np.stack([utp, upp], -1)], -2)
    return grad, hess


def random_angles(n=20, seed=3):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 2 * np.pi, n), rng.uniform(0.1, np.pi - 0.1, n)


def on_torus(fun, a=2.0):
    return lambda t, p: fun(torus_embedding(t, p, a))


def test_semi_torus_l3_rhs_matches_covariant_oracle():
    fx = semi_torus(8, problem="l3")
    theta, phi = random_angles()
    u = on_torus(fx.u)
    grad, hess = intrinsic_derivatives(u, theta, phi)
    gam = christoffel(theta, phi)
    cov = hess - np.einsum("mkij,mk->mij", gam, grad)
    b = np.stack([2 + np.sin(theta), 2 + np.cos(theta)], -1)
    c = np.empty((theta.size, 2, 2))
    c[:, 0, 0] = 3 + np.cos(phi)
    c[:, 0, 1] = c[:, 1, 0] = 0.1
    c[:, 1, 1] = 2.0
    oracle = np.einsum("mi,mi->m", b, grad) + 0.5 * np.einsum("mij,mij->m", c, cov)
    assert np.abs(fx.Lu(torus_embedding(theta, phi)) - oracle).max() < 1e-5


def divergence_form_oracle(u, kappa, theta, phi, h=1e-3):
    def flux(t, p):
        g = torus_metric(t, p)
        root = np.sqrt(np.linalg.det(g))
        grad, _ = intrinsic_derivatives(u, t, p, h)
        return (root * kappa(t, p))[:, None] * np.einsum("mij,mj->mi", np.linalg.inv(g), grad)

    div = ((flux(theta + h, phi)[:, 0] - flux(theta - h, phi)[:, 0])
           + (flux(theta, phi + h)[:, 1] - flux(theta, phi - h)[:, 1])) / (2 * h)
    return div / np.sqrt(np.linalg.det(torus_metric(theta, phi)))


def test_semi_torus_l2_rhs_matches_divergence_oracle():
    fx = semi_torus(8, problem="l2")
    theta, phi = random_angles()
    u = on_torus(fx.u)
    kappa = on_torus(fx.kappa)
    oracle = divergence_form_oracle(u, kappa, theta, phi)
    assert np.abs(fx.Lu(torus_embedding(theta, phi)) - oracle).max() < 1e-5
    assert kappa(np.zeros(1), np.array([0.7]))[0] == pytest.approx(1.1)


def test_semi_torus_l1_rhs_matches_divergence_oracle():
    fx = semi_torus(8, problem="l1")
    theta, phi = random_angles(seed=4)
    oracle = divergence_form_oracle(on_torus(fx.u), lambda t, p: np.ones_like(t), theta, phi)
    assert np.abs(fx.Lu(torus_embedding(theta, phi)) - oracle).max() < 1e-5


@pytest.mark.parametrize("problem", ["l3", "l2"])
def test_semi_torus_boundary_data(problem):
    fx = semi_torus(16, problem=problem)
    theta, phi = fx.meta["theta"][fx.cloud.boundary_ids], fx.meta["phi"][fx.cloud.boundary_ids]
    at_pi = phi > 1.0
    u = on_torus(fx.u)
    assert np.allclose(fx.g[~at_pi], u(theta[~at_pi], phi[~at_pi]))
    assert np.all(fx.beta1[~at_pi] == 0) and np.all(fx.beta2 == 1)
    # outward unit derivative at phi = pi is d/dphi divided by the ring radius
    t, p = theta[at_pi], phi[at_pi]
    dnu = (u(t, p + H) - u(t, p - H)) / (2 * H) / (2 + np.cos(t))
    assert np.allclose(fx.g[at_pi], dnu + u(t, p), atol=1e-7)
    if problem == "l3":
        assert np.abs(fx.g[at_pi]).max() < 1e-7


def test_christoffel_value():
    gam = christoffel(np.array([np.pi / 2]), np.array([0.3]))
    assert gam[0, 1, 0, 1] == pytest.approx(-0.5, abs=1e-6)


def test_semi_torus_well_sampled_layout():
    fx = semi_torus(12, problem="l2")
    assert fx.cloud.n_points == 144
    assert fx.cloud.boundary_ids.size == 24
    assert np.allclose(fx.cloud.points[0], [3.0, 0.0, 0.0])
    assert fx.k == 121
    assert fx.meta["mode"] == "well_sampled"


def test_semi_torus_random_mode():
    fx = semi_torus(64, problem="l2", mode="random", seed=7)
    N = 64 * 64
    J = fx.cloud.boundary_ids.size
    assert J == 128 and abs(J - 2 * np.sqrt(N)) <= 2
    assert fx.meta["seed"] == 7
    phi = fx.meta["phi"]
    assert np.all(np.isin(phi[fx.cloud.boundary_ids], [0.0, np.pi]))
    assert np.sum(phi[fx.cloud.boundary_ids] == 0.0) == J // 2
    again = semi_torus(64, problem="l2", mode="random", seed=7)
    assert np.array_equal(fx.cloud.points, again.cloud.points)
    other = semi_torus(64, problem="l2", mode="random", seed=8)
    assert not np.array_equal(fx.cloud.points, other.cloud.points)
    with pytest.raises(InvalidArgument):
        semi_torus(8, mode="jittered")
    with pytest.raises(InvalidArgument):
        semi_torus(8, problem="l4")


def test_semi_torus_l3_diffusion_is_lifted_intrinsic_tensor():
    fx = semi_torus(8, problem="l3")
    theta, phi = random_angles(5)
    x = torus_embedding(theta, phi)
    C = fx.diffusion(x)
    # the pseudo-inverse of a finite-difference Jacobian maps back to intrinsic components
    eh = 1e-6
    dt = (torus_embedding(theta + eh, phi) - torus_embedding(theta - eh, phi)) / (2 * eh)
    dp = (torus_embedding(theta, phi + eh) - torus_embedding(theta, phi - eh)) / (2 * eh)
    pinv = np.linalg.pinv(np.stack([dt, dp], axis=-1))
    c = np.einsum("mai,mij,mbj->mab", pinv, C, pinv)
    assert np.allclose(c[:, 0, 0], 3 + np.cos(phi), atol=1e-6)
    assert np.allclose(c[:, 0, 1], 0.1, atol=1e-6)
    assert np.allclose(c[:, 1, 1], 2.0, atol=1e-6)
    b = np.einsum("mai,mi->ma", pinv, fx.drift(x))
    assert np.allclose(b, np.column_stack([2 + np.sin(theta), 2 + np.cos(theta)]), atol=1e-6)


# -------------------------------------------------------------- eigen fixtures

def test_eigen_fixture_truths():
    leg = legendre_problem(50)
    assert leg.eigenvalues[:4].tolist() == [0.0, -2.0, -6.0, -12.0]
    assert leg.eigenfunctions[2](np.array([[0.5]]))[0] == pytest.approx(-0.125)
    circ = semi_circle(20, "robin")
    assert circ.eigenvalues[:3].tolist() == [1.0, -1.0, -4.0]
    pts = np.array([[np.cos(0.4), np.sin(0.4)]])
    assert circ.eigenfunctions[0](pts)[0] == pytest.approx(np.exp(-0.4))
    assert semi_circle(20).eigenvalues[:3].tolist() == [-1.0, -4.0, -9.0]
    for build in (semi_circle, legendre_problem):
        with pytest.raises(InvalidArgument):
            build(3)


def test_robin_eigenfunctions_satisfy_boundary_condition():
    circ = semi_circle(20, "robin")
    for fun in circ.eigenfunctions[:4]:
        v = lambda t: fun(np.column_stack([np.cos(t), np.sin(t)]))
        # outward derivative is -d/dt at t = 0 and +d/dt at t = pi
        left = circ.beta1[0] * -d1(v, np.array([0.0])) + circ.beta2[0] * v(np.array([0.0]))
        right = circ.beta1[1] * d1(v, np.array([np.pi])) + circ.beta2[1] * v(np.array([np.pi]))
        assert abs(left[0]) < 1e-6 and abs(right[0]) < 1e-6
