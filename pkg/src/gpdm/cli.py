"""Command-line driver: bandwidth tuning, forward errors, solves, spectra, rate tables.

Every subcommand reads its parameters from flags, optionally layered over a
JSON config (flags win), and writes CSV tables plus a JSON summary to --out.
Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import errors, io, manifolds, pipeline
from .boundary import RANDOM, WELL_SAMPLED, build_ghosts, estimate_boundary
from .estimator import build_extrapolation, build_gpdm
from .operators import OperatorSpec, assemble, assemble_augmented
from .pde import discretize_bc, solve_dm_baseline, solve_robin_neumann, stencil_bc
from .pointcloud import build_index, default_eps_grid, tune_bandwidth

DEFAULTS = {
    "cloud": None, "boundary": None, "fixture": None, "method": "gpdm", "operator": None,
    "eps": "auto", "k": None, "ghost_layers": 6, "mode": None, "bc": None, "sweep": None,
    "seed": 0, "out": "out", "N": None, "modes": 10, "metric": "ie", "eps_grid": None,
    "test_function": "fixture", "rhs": 1.0, "g": 0.0, "d": None,
}

USAGE_ERRORS = (errors.InvalidArgument, errors.InvalidBoundaryCondition,
                errors.InvalidCoefficient)


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--cloud", help="CSV of sample coordinates, one point per row")
    p.add_argument("--boundary", help='JSON {"boundary_ids": [...], "d": 2}')
    p.add_argument("--fixture", choices=sorted(manifolds.FIXTURES))
    p.add_argument("--N", type=int, help="sample count for fixtures (total points on the torus)")
    p.add_argument("--method", choices=["dm", "gpdm"])
    p.add_argument("--operator", choices=["l1", "l2", "l3"])
    p.add_argument("--eps", help="bandwidth or 'auto'")
    p.add_argument("--k", type=int, help="nearest neighbours")
    p.add_argument("--ghost-layers", dest="ghost_layers", type=int)
    p.add_argument("--mode", choices=["well", "random"])
    p.add_argument("--bc", choices=["dirichlet", "neumann", "robin", "mixed"])
    p.add_argument("--sweep", help="comma-separated sample counts")
    p.add_argument("--seed", type=int)
    p.add_argument("--d", type=int, help="intrinsic dimension for file clouds")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpdm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("tune", help="bandwidth sweep and the selected eps")
    _add_common(p)
    p.add_argument("--eps-grid", dest="eps_grid",
                   help="'lo:hi:count' log-spaced or comma-separated bandwidths")
    p = sub.add_parser("forward-error", help="|L_hat u - L u| on a fixture")
    _add_common(p)
    p.add_argument("--test-function", dest="test_function", choices=["fixture", "constant"])
    p = sub.add_parser("solve", help="boundary-value problem on a fixture or a file cloud")
    _add_common(p)
    p.add_argument("--rhs", type=float, help="constant right-hand side for file clouds")
    p.add_argument("--g", type=float, help="constant boundary data for file clouds")
    p = sub.add_parser("eigs", help="leading eigenpairs with homogeneous boundary conditions")
    _add_common(p)
    p.add_argument("--modes", type=int)
    p = sub.add_parser("convergence", help="error against N with a fitted log-log slope")
    _add_common(p)
    p.add_argument("--metric", choices=["fe", "ie"])
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge DEFAULTS, the JSON config and explicit flags, in that order."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        unknown = set(loaded) - set(DEFAULTS) - {"command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for key, value in vars(args).items():
        if value is not None and key != "config":
            cfg[key] = value
    cfg["command"] = args.command
    return cfg


def _eps(cfg):
    value = cfg["eps"]
    if value is None or str(value).lower() == "auto":
        return None
    try:
        eps = float(value)
    except ValueError as exc:
        raise UsageError(f"--eps must be a number or 'auto', got {value!r}") from exc
    if not eps > 0:
        raise UsageError("--eps must be positive")
    return eps


def _sweep(cfg) -> list[int]:
    raw = cfg["sweep"]
    if raw is None:
        raise UsageError("--sweep is required")
    values = raw if isinstance(raw, list) else [v for v in str(raw).split(",") if v.strip()]
    try:
        sizes = [int(v) for v in values]
    except ValueError as exc:
        raise UsageError(f"bad --sweep {raw!r}") from exc
    if len(sizes) < 2 or min(sizes) < 4:
        raise UsageError("--sweep needs at least two sizes of 4 or more points")
    return sizes


def _mode(cfg, fixture=None):
    mode = cfg["mode"]
    if mode is None:
        return fixture.meta.get("mode", WELL_SAMPLED) if fixture is not None else WELL_SAMPLED
    return WELL_SAMPLED if mode == "well" else RANDOM


def make_fixture(cfg, N=None):
    """Fixture from the config; N overrides cfg['N']."""
    name = cfg["fixture"]
    N = cfg["N"] if N is None else N
    k = cfg["k"]
    bc = cfg["bc"]
    if name == "semi_ellipse":
        return manifolds.semi_ellipse(N or 400, bc=bc or "robin", k=k or 50)
    if name in ("semi_torus_l3", "semi_torus_l2"):
        n_theta = int(round(np.sqrt(N))) if N else 64
        if bc not in (None, "mixed"):
            raise UsageError("the semi-torus fixtures carry mixed boundary data only")
        mode = "random" if cfg["mode"] == "random" else "well_sampled"
        problem = name.rsplit("_", 1)[1]
        return manifolds.semi_torus(n_theta, problem=problem, mode=mode, seed=cfg["seed"], k=k)
    if name == "semi_circle":
        return manifolds.semi_circle(N or 400, bc=bc or "dirichlet", k=k or 50)
    if name == "legendre":
        return manifolds.legendre_problem(N or 400, k=k or 50)
    raise UsageError("a --fixture or a --cloud is required")


def _file_cloud(cfg):
    if cfg["cloud"] is None:
        raise UsageError("a --fixture or a --cloud is required")
    try:
        return io.read_cloud(cfg["cloud"], cfg["boundary"], d=cfg["d"])
    except OSError as exc:
        raise UsageError(str(exc)) from exc


def _parse_grid(raw):
    if raw is None:
        return default_eps_grid()
    text = str(raw).strip()
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            grid = np.geomspace(float(lo), float(hi), int(count))
        else:
            grid = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise UsageError(f"bad --eps-grid {raw!r}") from exc
    if grid.size < 2:
        raise UsageError("--eps-grid needs at least two values")
    return grid


def cmd_tune(cfg, out: Path) -> dict:
    if cfg["fixture"]:
        fx = make_fixture(cfg)
        cloud, k = fx.cloud, cfg["k"] or fx.k
    else:
        cloud = _file_cloud(cfg)
        k = cfg["k"] or min(50, cloud.n_points - 1)
    grid = _parse_grid(cfg["eps_grid"])
    report = tune_bandwidth(build_index(cloud, k), grid, d=cloud.d)
    slope = np.append(report.slope, np.nan)
    io.write_table(out / "bandwidth.csv", ["eps", "log_S", "slope"],
                   zip(report.eps_grid, report.logS, slope))
    return {"eps_star": report.eps_star, "d_est": report.d_est, "k": k, "N": cloud.n_points}


def _forward_error_one(cfg, N=None) -> dict:
    fx = make_fixture(cfg, N)
    u = Lu = None
    if cfg["test_function"] == "constant":
        u = lambda x: np.ones(np.atleast_2d(x).shape[0])
        Lu = lambda x: np.zeros(np.atleast_2d(x).shape[0])
    return pipeline.forward_error(fx, cfg["method"], _eps(cfg), cfg["k"], cfg["ghost_layers"], u, Lu)


def cmd_forward_error(cfg, out: Path) -> dict:
    if not cfg["fixture"]:
        raise UsageError("forward-error needs a --fixture with a known operator action")
    if cfg["sweep"] is not None:
        sizes = _sweep(cfg)
        runs = [_forward_error_one(cfg, N) for N in sizes]
        io.write_table(out / "forward_error_sweep.csv", ["N", "eps", "fe_inf"],
                       [(r["N"], r["eps"], r["fe_inf"]) for r in runs])
        return {"sizes": sizes, "fe_inf": [r["fe_inf"] for r in runs],
                "eps": [r["eps"] for r in runs],
                "slope": pipeline.fit_slope(sizes, [r["fe_inf"] for r in runs])}
    run = _forward_error_one(cfg)
    fx = make_fixture(cfg)
    pts = fx.cloud.points
    exact = fx.Lu(pts) if cfg["test_function"] == "fixture" else np.zeros(pts.shape[0])
    io.write_table(out / "forward_error.csv",
                   ["id", *[f"x{i}" for i in range(pts.shape[1])], "approx", "exact", "abs_error"],
                   [[i, *p, a, e, err] for i, (p, a, e, err)
                    in enumerate(zip(pts, run["approx"], exact, run["errors"]))])
    return {key: run[key] for key in ("method", "N", "eps", "k", "fe_inf")}


def _solve_file_cloud(cfg, out: Path):
    cloud = _file_cloud(cfg)
    kind = cfg["operator"] or "l1"
    if kind != "l1":
        raise UsageError("file clouds carry no coefficients; use --operator l1")
    if cloud.boundary_ids.size == 0:
        raise UsageError("the boundary JSON must list boundary_ids")
    k = cfg["k"] or min(50, cloud.n_points - 1)
    eps = _eps(cfg)
    if eps is None:
        eps = tune_bandwidth(build_index(cloud, k), d=cloud.d).eps_star
    spec = OperatorSpec("l1", eps, k)
    J = cloud.boundary_ids.size
    bc = cfg["bc"] or "dirichlet"
    beta1, beta2 = {"dirichlet": (0.0, 1.0), "neumann": (1.0, 0.0), "robin": (1.0, 1.0)}.get(bc, (None, None))
    if beta1 is None:
        raise UsageError("file clouds support dirichlet, neumann or robin")
    shift = 1.0 if bc == "neumann" else 0.0
    beta1, beta2 = np.full(J, beta1), np.full(J, beta2)
    g = np.full(J, float(cfg["g"]))
    mode = _mode(cfg)
    boundary = estimate_boundary(cloud, mode)
    if cfg["method"] == "gpdm":
        ghosts = build_ghosts(cloud, boundary, cfg["ghost_layers"])
        Lh = assemble_augmented(cloud, ghosts, spec)
        system = build_extrapolation(Lh, ghosts, boundary.ids, shift=np.full(J, shift))
        op = build_gpdm(Lh, system, ghosts.n_manifold, np.full(J, float(cfg["rhs"])))
        bc_rows = discretize_bc(beta1, beta2, boundary.ids, ghosts.inner_ids, boundary.spacing,
                                ghosts.n_manifold)
        n_man = ghosts.n_manifold
        report = solve_robin_neumann(op, np.full(n_man, float(cfg["rhs"])), np.full(n_man, shift),
                                     bc_rows, g, n_report=cloud.n_points)
    else:
        mat = assemble(cloud.points, cloud.n_points, spec, d=cloud.d)
        bc_rows = stencil_bc(cloud.points, cloud.boundary_ids, boundary.normals, beta1, beta2,
                             cloud.n_points)
        report = solve_dm_baseline(mat.matrix, np.full(cloud.n_points, float(cfg["rhs"])),
                                   np.full(cloud.n_points, shift), bc_rows, g, eps)
    io.write_solution(out / "solution.csv", cloud.points, report.u_hat[:cloud.n_points])
    return report


def cmd_solve(cfg, out: Path) -> dict:
    if not cfg["fixture"]:
        report = _solve_file_cloud(cfg, out)
    else:
        fx = make_fixture(cfg)
        report = pipeline.solve_fixture(fx, cfg["method"], _eps(cfg), cfg["k"], cfg["ghost_layers"],
                                        mode=_mode(cfg, fx))
        n = fx.cloud.n_points
        io.write_solution(out / "solution.csv", fx.cloud.points, report.u_hat[:n],
                          fx.u(fx.cloud.points))
    return report.summary()


def cmd_eigs(cfg, out: Path) -> dict:
    if not cfg["fixture"]:
        raise UsageError("eigs needs a --fixture")
    fx = make_fixture(cfg)
    modes = int(cfg["modes"])
    if modes < 0:
        raise UsageError("--modes must be nonnegative")
    report = pipeline.eigs_fixture(fx, cfg["method"], modes, _eps(cfg), cfg["k"], cfg["ghost_layers"])
    exact = np.full(modes, np.nan)
    if fx.eigenvalues is not None:
        m = min(modes, fx.eigenvalues.size)
        exact[:m] = fx.eigenvalues[:m]
    rel = np.abs(report.lambdas - exact) / np.maximum(np.abs(exact), 1.0)
    io.write_table(out / "eigenvalues.csv",
                   ["index", "lambda", "imag", "residual", "exact", "rel_error"],
                   [[i + 1, *row] for i, row in
                    enumerate(zip(report.lambdas, report.imag, report.residuals, exact, rel))])
    io.write_table(out / "eigenfunctions.csv", ["id", *[f"psi_{i + 1}" for i in range(modes)]],
                   [[int(i), *row] for i, row in zip(report.ids, report.psis)])
    summary = report.summary()
    summary["exact"] = exact.tolist()
    summary["rel_error"] = rel.tolist()
    return summary


def cmd_convergence(cfg, out: Path) -> dict:
    if not cfg["fixture"]:
        raise UsageError("convergence needs a --fixture")
    sizes = _sweep(cfg)
    values, eps_used = [], []
    for N in sizes:
        if cfg["metric"] == "fe":
            run = _forward_error_one(cfg, N)
            values.append(run["fe_inf"])
            eps_used.append(run["eps"])
        else:
            fx = make_fixture(cfg, N)
            report = pipeline.solve_fixture(fx, cfg["method"], _eps(cfg), cfg["k"],
                                            cfg["ghost_layers"], mode=_mode(cfg, fx))
            values.append(report.ie_inf)
            eps_used.append(report.eps_used)
    io.write_table(out / "convergence.csv", ["N", "eps", cfg["metric"]], zip(sizes, eps_used, values))
    return {"metric": cfg["metric"], "method": cfg["method"], "sizes": sizes, "values": values,
            "eps": eps_used, "slope": pipeline.fit_slope(sizes, values)}


COMMANDS = {"tune": cmd_tune, "forward-error": cmd_forward_error, "solve": cmd_solve,
            "eigs": cmd_eigs, "convergence": cmd_convergence}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
    except UsageError as exc:
        print(f"gpdm: error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg["out"])
    summary_path = out / f"{cfg['command'].replace('-', '_')}.json"
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            summary = COMMANDS[cfg["command"]](cfg, out)
    except (UsageError, *USAGE_ERRORS) as exc:
        print(f"gpdm: error: {exc}", file=sys.stderr)
        return 2
    except errors.GpdmError as exc:
        io.write_json(summary_path, {"status": "failed", "error": type(exc).__name__,
                                     "message": str(exc)})
        print(f"gpdm: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    summary = {"status": "ok", **summary,
               "warnings": sorted({f"{w.category.__name__}: {w.message}" for w in caught})}
    io.write_json(summary_path, summary)
    print(json.dumps(io.to_jsonable({k: v for k, v in summary.items()
                                     if not isinstance(v, (list, dict))}), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
