"""Mixed boundary-value problem on a randomly sampled half torus.

Normals are estimated from the samples (no ordering available), ghost
points are placed along them and the L2 problem div(kappa grad u) = f is
solved with Dirichlet data on one boundary circle and Robin data on the
other. Also prints the normal error against the exact normals.

Run: python3 demos/torus_random_solve.py [n_theta] [seed]
"""
import sys
import warnings

import numpy as np

from gpdm.manifolds import semi_torus
from gpdm.pipeline import build_fixture_gpdm, fixture_spec, solve_fixture


def main(n_theta=64, seed=0):
    fx = semi_torus(n_theta, problem="l2", mode="random", seed=seed)
    spec = fixture_spec(fx)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        setup = build_fixture_gpdm(fx, spec, 6)
        gpdm = solve_fixture(fx, "gpdm", eps=spec.eps)
        dm = solve_fixture(fx, "dm", eps=spec.eps)
    normal_err = np.linalg.norm(setup.boundary.normals - fx.normals, axis=1)
    print(f"N={fx.cloud.n_points} boundary samples={setup.boundary.n_boundary} "
          f"k={spec.k} eps={spec.eps:.3e}")
    print(f"normal error: mean {normal_err.mean():.3f} max {normal_err.max():.3f}")
    print(f"inverse error: gpdm {gpdm.ie_inf:.3f}  dm {dm.ie_inf:.3f}")


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:3]]
    main(*args)
