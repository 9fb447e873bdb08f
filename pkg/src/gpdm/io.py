"""File formats: point clouds as CSV plus a boundary JSON, results as CSV and JSON.

Numbers are written with 17 significant digits so repeated runs with the
same inputs produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .pointcloud import PointCloud

FLOAT_FORMAT = "%.17g"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return FLOAT_FORMAT % float(value)


def read_points(path) -> np.ndarray:
    """(M, n) array from a comma-separated file, with or without a header row."""
    path = Path(path)
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    except ValueError:
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#", skiprows=1)
    if data.size == 0:
        raise InvalidArgument(f"{path} contains no points")
    return data


def read_boundary(path) -> dict:
    """{"boundary_ids": [...], "d": int} from JSON."""
    with open(path) as fh:
        meta = json.load(fh)
    if "boundary_ids" not in meta:
        raise InvalidArgument(f"{path} has no boundary_ids")
    return meta


def read_cloud(points_path, boundary_path=None, d: int | None = None) -> PointCloud:
    """PointCloud from a CSV of coordinates and an optional boundary JSON."""
    points = read_points(points_path)
    ids = []
    if boundary_path is not None:
        meta = read_boundary(boundary_path)
        ids = meta["boundary_ids"]
        d = meta.get("d", d)
    return PointCloud(points, d=d, boundary_ids=ids)


def write_cloud(cloud: PointCloud, points_path, boundary_path=None) -> None:
    points_path = Path(points_path)
    points_path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(points_path, cloud.points, delimiter=",", fmt=FLOAT_FORMAT)
    if boundary_path is not None:
        write_json(boundary_path, {"boundary_ids": cloud.boundary_ids.tolist(), "d": cloud.d})


def to_jsonable(obj):
    """Convert numpy scalars and arrays (recursively) to plain Python."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(path, header, rows) -> None:
    """CSV with a header line; floats in the fixed 17-digit format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_solution(path, points, u_hat, truth=None) -> None:
    """Per-point table: id, coordinates, estimate, truth and |error| when known."""
    points = np.atleast_2d(points)
    coords = [f"x{i}" for i in range(points.shape[1])]
    header = ["id", *coords, "u_hat"]
    if truth is not None:
        header += ["truth", "abs_error"]
    rows = []
    for i, (p, u) in enumerate(zip(points, u_hat)):
        row = [i, *p, u]
        if truth is not None:
            row += [truth[i], abs(u - truth[i])]
        rows.append(row)
    write_table(path, header, rows)


def write_ghosts(path, cloud: PointCloud, ghosts) -> None:
    """Augmented cloud with a tag per row: manifold, interior (appended G0) or ghost:k."""
    pts = ghosts.augmented_points(cloud)
    tags = ["manifold"] * cloud.n_points
    if ghosts.appended_inner:
        tags += ["interior"] * ghosts.n_boundary
    tags += [f"ghost:{k}" for _ in range(ghosts.n_boundary) for k in range(1, ghosts.K + 1)]
    header = ["id", *[f"x{i}" for i in range(pts.shape[1])], "tag"]
    write_table(path, header, [[i, *p, t] for i, (p, t) in enumerate(zip(pts, tags))])
