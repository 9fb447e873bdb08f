"""Laplace-Beltrami eigenvalues on the half circle.

With Dirichlet data the exact values are -n^2. With the Robin condition
d_nu u + u = 0 the leading eigenvalue is +1; the plain diffusion maps
estimate of it does not improve as N grows.

Run: python3 demos/semicircle_spectra.py
"""
import numpy as np

from gpdm.manifolds import semi_circle
from gpdm.pipeline import eigen_errors, eigs_fixture


def main():
    fx = semi_circle(400, "dirichlet")
    report = eigs_fixture(fx, "gpdm", 10)
    print("Dirichlet, N=400")
    print("  estimate:", np.round(report.lambdas, 3))
    print("  exact:   ", fx.eigenvalues[:10])
    print("Robin, leading eigenvalue (exact 1)")
    for N in (200, 400, 800):
        fx = semi_circle(N, "robin")
        g = eigs_fixture(fx, "gpdm", 3)
        d = eigs_fixture(fx, "dm", 3)
        print(f"  N={N:4d} gpdm {g.lambdas[0]:+.4f} (err {eigen_errors(fx, g, 1)[0][0]:.4f})"
              f"  dm {d.lambdas[0]:+.4f} (err {eigen_errors(fx, d, 1)[0][0]:.4f})")


if __name__ == "__main__":
    main()
