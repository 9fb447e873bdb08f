"""Forward and inverse errors on the semi-ellipse, with and without ghost points.

Plain diffusion maps lose consistency in a band next to the boundary, so the
forward error stops decreasing with N. Ghost points restore it, and the Robin
solve then converges at first order.

Run: python3 demos/ellipse_boundary_error.py
"""
from gpdm.manifolds import semi_ellipse
from gpdm.pipeline import fit_slope, fixture_spec, forward_error, solve_fixture

SIZES = [100, 200, 400, 800, 1600]


def main():
    rows = []
    for N in SIZES:
        fx = semi_ellipse(N, bc="robin")
        eps = fixture_spec(fx).eps
        rows.append((N, eps,
                     forward_error(fx, "gpdm", eps=eps)["fe_inf"],
                     forward_error(fx, "dm", eps=eps)["fe_inf"],
                     solve_fixture(fx, "gpdm", eps=eps).ie_inf,
                     solve_fixture(fx, "dm", eps=eps).ie_inf))
    print(f"{'N':>5} {'eps':>9} {'FE gpdm':>9} {'FE dm':>9} {'IE gpdm':>9} {'IE dm':>9}")
    for row in rows:
        print(f"{row[0]:>5} {row[1]:9.2e} " + " ".join(f"{v:9.2e}" for v in row[2:]))
    for col, name in ((2, "FE gpdm"), (3, "FE dm"), (4, "IE gpdm"), (5, "IE dm")):
        print(f"slope {name}: {fit_slope(SIZES, [r[col] for r in rows]):+.2f}")


if __name__ == "__main__":
    main()
