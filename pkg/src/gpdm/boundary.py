"""Outward normals at boundary samples and the ghost layers built from them."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (CollarOverlapWarning, DegenerateGeometry, InvalidArgument,
                     OrientationAmbiguous)
from .pointcloud import PointCloud, build_index, tune_bandwidth

WELL_SAMPLED = "well_sampled"
RANDOM = "random"


@dataclass(frozen=True)
class BoundaryData:
    """Normals and ghost spacing at each boundary sample.

    Args:
        ids: boundary sample indices, in the order ghosts are laid out.
        normals: (J, n) outward unit normals.
        spacing: (J,) ghost spacing h_j.
        mode: WELL_SAMPLED or RANDOM.
        inner_ids: (J,) index of the existing sample reused as the inner
            ghost in well-sampled mode, -1 in random mode.
    """

    ids: np.ndarray
    normals: np.ndarray
    spacing: np.ndarray
    mode: str
    inner_ids: np.ndarray

    @property
    def n_boundary(self) -> int:
        return self.ids.size


@dataclass(frozen=True)
class GhostSet:
    """Inner ghost x_B - h nu and exterior layers x_B + k h nu, k = 1..K.

    Columns of the augmented cloud are ordered as: the original samples,
    then (random mode only) the J appended inner ghosts, then the J*K
    exterior ghosts with the layer index running fastest.
    """

    interior: np.ndarray
    layers: np.ndarray
    K: int
    n_samples: int
    inner_ids: np.ndarray
    appended_inner: bool

    @property
    def n_boundary(self) -> int:
        return self.layers.shape[0]

    @property
    def n_manifold(self) -> int:
        """Size of the manifold-side set (samples plus appended inner ghosts)."""
        return self.n_samples + (self.n_boundary if self.appended_inner else 0)

    @property
    def n_augmented(self) -> int:
        return self.n_manifold + self.n_boundary * self.K

    def augmented_id(self, j, k):
        """Column of ghost layer k (1-based) of boundary point j (0-based)."""
        return self.n_manifold + np.asarray(j) * self.K + (np.asarray(k) - 1)

    def layer_ids(self) -> np.ndarray:
        """(J, K) table of augmented columns."""
        return self.augmented_id(np.arange(self.n_boundary)[:, None],
                                 np.arange(1, self.K + 1)[None, :])

    def augmented_points(self, cloud: PointCloud) -> np.ndarray:
        parts = [cloud.points]
        if self.appended_inner:
            parts.append(self.interior)
        parts.append(self.layers.reshape(-1, cloud.ambient_dim))
        return np.vstack(parts)


def _nearest_excluding(points: np.ndarray, center: np.ndarray, excluded) -> int:
    dist = np.linalg.norm(points - center, axis=1)
    dist[list(excluded)] = np.inf
    order = np.lexsort((np.arange(dist.size), dist))
    return int(order[0])


def secant_normal(cloud: PointCloud, boundary_id: int) -> tuple[np.ndarray, int]:
    """Unit vector from the nearest non-boundary sample to the boundary sample.

    Returns:
        (normal, neighbour id); the neighbour is the sample reused as the
        inner ghost in well-sampled mode.
    """
    excluded = set(cloud.boundary_ids.tolist()) | {int(boundary_id)}
    if len(excluded) >= cloud.n_points:
        raise DegenerateGeometry("no interior sample to form a secant")
    nbr = _nearest_excluding(cloud.points, cloud.points[boundary_id], excluded)
    diff = cloud.points[boundary_id] - cloud.points[nbr]
    length = np.linalg.norm(diff)
    if length < 1e-12:
        raise DegenerateGeometry(f"neighbour {nbr} coincides with boundary sample {boundary_id}")
    return diff / length, nbr


def svd_tangent_basis(points: np.ndarray, center: np.ndarray, K_n: int, n_vectors: int,
                      eps: float | None = None) -> np.ndarray:
    """Leading left singular vectors of kernel-weighted neighbour offsets.

    Args:
        points: (M, n) candidate samples; the center itself may be among them.
        center: (n,) base point.
        K_n: neighbours used, must exceed n_vectors.
        n_vectors: tangent directions returned.
        eps: kernel bandwidth; tuned on the local subset when None.

    Returns:
        (n, n_vectors) matrix with orthonormal columns.
    """
    if K_n <= n_vectors:
        raise InvalidArgument(f"K_n={K_n} must exceed the number of directions {n_vectors}")
    offsets = points - center
    dist = np.linalg.norm(offsets, axis=1)
    nonself = np.flatnonzero(dist > 1e-14)
    if nonself.size < K_n:
        raise InvalidArgument(f"only {nonself.size} samples available, K_n={K_n}")
    order = nonself[np.lexsort((nonself, dist[nonself]))][:K_n]
    local = offsets[order]
    sq = dist[order] ** 2
    if eps is None:
        subset = np.vstack([np.zeros((1, points.shape[1])), local])
        eps = tune_bandwidth(build_index(subset, K_n), d=n_vectors).eps_star
        # sparse neighbourhoods can tune to a bandwidth that sees a single
        # offset; keep n_vectors + 1 of them within a factor e of the nearest
        eps = max(eps, 0.25 * (sq[n_vectors] - sq[0]))
    # weights relative to the nearest offset cannot all underflow
    weight = np.exp(-(sq - sq[0]) / (4.0 * eps))
    cols = (weight / np.linalg.norm(weight))[:, None] * local
    u, s, _ = np.linalg.svd(cols.T, full_matrices=False)
    if s[n_vectors - 1] < 1e-12 * s[0]:
        raise DegenerateGeometry("local offsets do not span the tangent space")
    return u[:, :n_vectors]


def normal_from_projection(t1, t2, t_boundary) -> np.ndarray:
    """Remove the boundary-tangent components from t1 (or t2) and normalise.

    t_boundary may be a single vector or an (n, m) matrix of orthonormal
    columns. Falls back to t2 when t1 is within 0.1 of the boundary tangent
    space.
    """
    tb = np.asarray(t_boundary, dtype=float)
    tb = tb[:, None] if tb.ndim == 1 else tb
    for t in (t1, t2):
        if t is None:
            continue
        t = np.asarray(t, dtype=float)
        resid = t - tb @ (tb.T @ t)
        size = np.linalg.norm(resid)
        if size >= 0.1:
            return resid / size
    raise DegenerateGeometry("tangent directions are parallel to the boundary")


def orient_normal(normal, points: np.ndarray, boundary_id: int, k: int = 10) -> np.ndarray:
    """Flip the normal so that it points away from the centroid of the k nearest samples."""
    if k < 3:
        raise InvalidArgument("orientation needs at least 3 neighbours")
    normal = np.asarray(normal, dtype=float)
    center = points[boundary_id]
    dist = np.linalg.norm(points - center, axis=1)
    dist[boundary_id] = np.inf
    nearest = np.lexsort((np.arange(dist.size), dist))[:k]
    lean = np.dot(normal, points[nearest].mean(axis=0) - center)
    if abs(lean) < 1e-10:
        raise OrientationAmbiguous(f"normal at sample {boundary_id} is tangent to the neighbour mass")
    return -normal if lean > 0 else normal


def estimate_boundary(cloud: PointCloud, mode: str = WELL_SAMPLED, P: int = 10,
                      K_surface: int = 20, K_curve: int = 10,
                      eps_surface: float | None = None,
                      eps_curve: float | None = None) -> BoundaryData:
    """Normals and spacings for every boundary sample.

    Well-sampled mode uses the secant to the nearest interior sample and sets
    h to its length. Random mode combines kernel-weighted SVD tangents of the
    manifold and of the boundary curve, and sets h to the mean distance to the
    P nearest samples.

    Args:
        cloud: samples with boundary_ids and d set.
        mode: WELL_SAMPLED or RANDOM.
        P: neighbours for the spacing and orientation in random mode.
        K_surface, K_curve: neighbour counts for the two SVD fits.
        eps_surface, eps_curve: fixed SVD bandwidths; tuned locally when None.
    """
    ids = cloud.boundary_ids
    if ids.size == 0:
        raise InvalidArgument("cloud has no boundary samples")
    n_amb = cloud.ambient_dim
    normals = np.empty((ids.size, n_amb))
    spacing = np.empty(ids.size)
    inner = np.full(ids.size, -1, dtype=np.int64)
    if mode == WELL_SAMPLED:
        for j, b in enumerate(ids):
            normals[j], inner[j] = secant_normal(cloud, b)
            spacing[j] = np.linalg.norm(cloud.points[b] - cloud.points[inner[j]])
    elif mode == RANDOM:
        d = cloud.d
        if d is None:
            raise InvalidArgument("random mode needs the intrinsic dimension")
        bpts = cloud.points[ids]
        tree = cKDTree(cloud.points)
        dist, _ = tree.query(bpts, k=P + 1)
        for j, b in enumerate(ids):
            center = cloud.points[b]
            basis = svd_tangent_basis(cloud.points, center, K_surface, d, eps_surface)
            if d == 1:
                nu = basis[:, 0]
            else:
                kc = min(K_curve, ids.size - 1)
                tb = svd_tangent_basis(bpts, center, kc, d - 1, eps_curve)
                # the leading singular vector at a boundary sample tends to run along
                # the boundary; start from the in-plane direction least aligned with it
                coords = np.linalg.svd(basis.T @ tb, full_matrices=True)[0]
                t1 = basis @ coords[:, -1]
                t2 = basis @ coords[:, 0]
                nu = normal_from_projection(t1, t2, tb)
            normals[j] = orient_normal(nu, cloud.points, b, P)
            spacing[j] = dist[j, 1:].mean()
    else:
        raise InvalidArgument(f"unknown boundary mode {mode!r}")
    return BoundaryData(ids=np.array(ids), normals=normals, spacing=spacing,
                        mode=mode, inner_ids=inner)


def build_ghosts(cloud: PointCloud, boundary: BoundaryData, K: int = 6) -> GhostSet:
    """Lay ghost points along each normal ray.

    Args:
        cloud: the samples.
        boundary: normals and spacings.
        K: number of exterior layers, 1 <= K <= 10.
    """
    if not 1 <= K <= 10:
        raise InvalidArgument(f"ghost layer count {K} outside [1, 10]")
    base = cloud.points[boundary.ids]
    step = boundary.spacing[:, None] * boundary.normals
    interior = base - step
    layers = base[:, None, :] + np.arange(1, K + 1)[None, :, None] * step[:, None, :]
    appended = boundary.mode != WELL_SAMPLED
    if appended:
        inner_ids = cloud.n_points + np.arange(boundary.n_boundary)
    else:
        inner_ids = boundary.inner_ids.copy()
        # reuse the sample itself so the inner ghost is bit-identical to it
        interior = cloud.points[inner_ids].copy()
    ghosts = GhostSet(interior=interior, layers=layers, K=K, n_samples=cloud.n_points,
                      inner_ids=inner_ids, appended_inner=appended)
    _check_collar(ghosts, boundary.spacing)
    return ghosts


def _check_collar(ghosts: GhostSet, spacing: np.ndarray) -> None:
    J, K, n = ghosts.layers.shape
    if J < 2:
        return
    flat = ghosts.layers.reshape(-1, n)
    owner = np.repeat(np.arange(J), K)
    radius = 0.25 * float(spacing.min())
    pairs = cKDTree(flat).query_pairs(radius, output_type="ndarray")
    if pairs.size and np.any(owner[pairs[:, 0]] != owner[pairs[:, 1]]):
        warnings.warn("ghost rays of different boundary samples nearly intersect",
                      CollarOverlapWarning, stacklevel=3)
