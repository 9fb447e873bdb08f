"""Point clouds, exact nearest-neighbour tables, density and bandwidth tuning."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgument, TuningFailed


def default_eps_grid() -> np.ndarray:
    """Log-uniform bandwidth candidates from 2**-30 up to 10.

    The range reaches well below 2**-14 so that grids with a few hundred
    points per unit length still have their transition inside the sweep.
    """
    return np.exp2(np.arange(-30.0, np.log2(10.0) + 1e-9, 0.25))


@dataclass(frozen=True)
class PointCloud:
    """Samples of a manifold with boundary in ambient coordinates.

    Args:
        points: (N, n) ambient coordinates.
        d: intrinsic dimension, or None when unknown.
        boundary_ids: indices of the samples lying on the boundary.
    """

    points: np.ndarray
    d: int | None = None
    boundary_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InvalidArgument("points must be a non-empty (N, n) array")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgument("points contain non-finite values")
        n_pts, n_amb = pts.shape
        if self.d is not None and not (1 <= int(self.d) <= n_amb):
            raise InvalidArgument(f"intrinsic dimension {self.d} outside [1, {n_amb}]")
        ids = np.asarray(self.boundary_ids, dtype=int).ravel()
        if ids.size and (ids.min() < 0 or ids.max() >= n_pts):
            raise InvalidArgument("boundary id out of range")
        if np.unique(ids).size != ids.size:
            raise InvalidArgument("boundary ids are not distinct")
        if n_pts > 1:
            close = cKDTree(pts).query_pairs(1e-12)
            if close:
                i, j = sorted(close)[0]
                raise InvalidArgument(f"duplicate points {i} and {j}")
        pts.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "boundary_ids", ids)
        object.__setattr__(self, "d", None if self.d is None else int(self.d))

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def interior_ids(self) -> np.ndarray:
        mask = np.ones(self.n_points, dtype=bool)
        mask[self.boundary_ids] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class NeighborIndex:
    """k nearest neighbours of every point, self excluded, ties to lower index."""

    k: int
    neighbors: np.ndarray
    distances: np.ndarray
    points: np.ndarray

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class BandwidthReport:
    eps_grid: np.ndarray
    logS: np.ndarray
    slope: np.ndarray
    eps_star: float
    d_est: int


def _as_points(cloud_or_points) -> np.ndarray:
    if isinstance(cloud_or_points, PointCloud):
        return cloud_or_points.points
    pts = np.asarray(cloud_or_points, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def _rank_candidates(pts: np.ndarray, rows: np.ndarray, cand: np.ndarray):
    """Sort candidate columns of each row by (distance, index), self last."""
    dist = np.linalg.norm(pts[cand] - pts[rows][:, None, :], axis=2)
    dist = np.where(cand == rows[:, None], np.inf, dist)
    # lexsort uses the last key as primary
    order = np.lexsort((cand, dist), axis=1)
    return np.take_along_axis(cand, order, 1), np.take_along_axis(dist, order, 1)


def build_index(cloud, k: int) -> NeighborIndex:
    """Exact k-nearest-neighbour table.

    Candidates come from a kd-tree with a safety margin; distances are then
    recomputed directly and re-ranked so that equal distances resolve to the
    smaller index, whatever order the tree returned them in.

    Args:
        cloud: a PointCloud or an (N, n) array.
        k: neighbours per point, 1 <= k < N.
    """
    pts = _as_points(cloud)
    n_pts = pts.shape[0]
    k = int(k)
    if not 1 <= k < n_pts:
        raise InvalidArgument(f"k={k} must satisfy 1 <= k < N={n_pts}")
    tree = cKDTree(pts)
    margin = 4
    todo = np.arange(n_pts)
    neighbors = np.empty((n_pts, k), dtype=np.int64)
    distances = np.empty((n_pts, k))
    while todo.size:
        m = min(n_pts, k + 1 + margin)
        _, cand = tree.query(pts[todo], k=m)
        cand = np.asarray(cand).reshape(todo.size, m)
        cand, dist = _rank_candidates(pts, todo, cand)
        if m == n_pts:
            done = np.ones(todo.size, dtype=bool)
        else:
            # the candidate list is exhaustive for row i only if the k-th
            # distance is strictly below the largest distance the tree returned
            finite = np.where(np.isinf(dist), -np.inf, dist)
            done = dist[:, k - 1] < finite.max(axis=1) - 1e-12
        neighbors[todo[done]] = cand[done, :k]
        distances[todo[done]] = dist[done, :k]
        todo = todo[~done]
        margin *= 4
    neighbors.setflags(write=False)
    distances.setflags(write=False)
    return NeighborIndex(k=k, neighbors=neighbors, distances=distances, points=pts)


def brute_force_index(cloud, k: int) -> NeighborIndex:
    """All-pairs reference for build_index; O(N^2) memory."""
    pts = _as_points(cloud)
    n_pts = pts.shape[0]
    if not 1 <= k < n_pts:
        raise InvalidArgument(f"k={k} must satisfy 1 <= k < N={n_pts}")
    cand = np.tile(np.arange(n_pts), (n_pts, 1))
    nb, dist = _rank_candidates(pts, np.arange(n_pts), cand)
    return NeighborIndex(k=k, neighbors=nb[:, :k], distances=dist[:, :k], points=pts)


def kernel_sum_curve(index: NeighborIndex, eps_grid) -> np.ndarray:
    """Mean Gaussian kernel weight over each point and its neighbours.

    The point itself is counted, so the curve runs from 1/(k+1) at tiny
    bandwidth up to 1 at large bandwidth.
    """
    eps_grid = np.asarray(eps_grid, dtype=float)
    sq = index.distances.ravel() ** 2
    n_pts = index.n_points
    total = np.array([n_pts + np.exp(-sq / (4.0 * e)).sum() for e in eps_grid])
    return total / (n_pts * (index.k + 1))


def tune_bandwidth(index: NeighborIndex, eps_grid=None, d: int | None = None,
                   rule: str = "auto") -> BandwidthReport:
    """Pick the kernel bandwidth from the log-log slope of the kernel sum.

    Args:
        index: neighbour table of the cloud.
        eps_grid: strictly increasing positive candidates; defaults to
            default_eps_grid().
        d: intrinsic dimension if known.
        rule: "max" takes the steepest cell, "half_dim" the cell whose slope
            is closest to d/2, "auto" uses "half_dim" when d is given.

    Returns:
        BandwidthReport; slope[i] is the slope between grid points i and i+1
        and eps_star is the left end of the chosen cell.
    """
    grid = default_eps_grid() if eps_grid is None else np.asarray(eps_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise InvalidArgument("eps_grid needs at least two values")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise InvalidArgument("eps_grid must be positive and strictly increasing")
    log_s = np.log(kernel_sum_curve(index, grid))
    slope = np.diff(log_s) / np.diff(np.log(grid))
    if np.all(slope <= 0.05):
        raise TuningFailed("kernel sum is flat over the whole bandwidth grid")
    if rule == "auto":
        rule = "half_dim" if d is not None else "max"
    if rule == "max":
        cell = int(np.argmax(slope))
    elif rule == "half_dim":
        if d is None:
            raise InvalidArgument("rule 'half_dim' needs the intrinsic dimension")
        # only cells up to the steepest one: the descending flank also
        # crosses d/2 once neighbour truncation flattens the curve
        top = int(np.argmax(slope))
        cell = int(np.argmin(np.abs(slope[: top + 1] - 0.5 * d)))
    else:
        raise InvalidArgument(f"unknown tuning rule {rule!r}")
    return BandwidthReport(eps_grid=grid, logS=log_s, slope=slope,
                           eps_star=float(grid[cell]),
                           d_est=int(np.rint(2.0 * slope.max())))


def estimate_density(index: NeighborIndex, eps: float, d: int = 1) -> np.ndarray:
    """Kernel density estimate on the k-NN pattern plus self.

    q(x_j) = eps^(-d/2) / N * sum_i exp(-|x_i - x_j|^2 / (4 eps)).
    """
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    n_pts = index.n_points
    row = 1.0 + np.exp(-index.distances**2 / (4.0 * eps)).sum(axis=1)
    return row * eps ** (-0.5 * d) / n_pts


def local_spacing(cloud, boundary_id: int, P: int = 10, index: NeighborIndex | None = None) -> float:
    """Mean distance from a boundary sample to its P nearest neighbours."""
    pts = _as_points(cloud)
    if not 1 <= P < pts.shape[0]:
        raise InvalidArgument(f"P={P} must satisfy 1 <= P < N")
    if isinstance(cloud, PointCloud) and boundary_id not in set(cloud.boundary_ids.tolist()):
        raise InvalidArgument(f"{boundary_id} is not a boundary id")
    if index is not None and index.k >= P:
        return float(index.distances[boundary_id, :P].mean())
    dist = np.linalg.norm(pts - pts[boundary_id], axis=1)
    dist[boundary_id] = np.inf
    order = np.lexsort((np.arange(dist.size), dist))
    return float(dist[order[:P]].mean())
