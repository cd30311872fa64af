"""Weyl-chamber images of the gradient map, convex hulls, convexity
audits, shifted-distance diagnostics, and density/connectedness scans of
the semistable set.

Convexity is audited, not proved: the surrogate is the decay of the
worst midpoint deficit (distance from midpoints of sampled image pairs
to the sampled image set) as the sample grows.  Hull construction drops
the trace-zero redundancy by an affine change to gap coordinates, and
handles lower-dimensional inputs by reporting the detected dimension
instead of failing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, cKDTree
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidInputError
from .grassmann import Point, act
from .groups import CompatibleGroupSpec, chamber_project
from .moment_maps import mu_p
from .seeding import rng_for


def chamber_image(x: Point, spec: CompatibleGroupSpec) -> np.ndarray:
    """Sorted spectrum of mu_p(x): the unique point of the orbit
    K mu_p(x) in the closed positive chamber."""
    return chamber_project(mu_p(x, spec))


# -- convex hull -------------------------------------------------------------


@dataclass(frozen=True)
class HullResult:
    vertices: np.ndarray          # vertex coordinates, canonical order
    vertex_indices: np.ndarray    # indices into the deduplicated input
    hull_dim: int
    diameter: float
    _origin: np.ndarray = field(repr=False, default=None)
    _basis: np.ndarray = field(repr=False, default=None)
    _equations: Optional[np.ndarray] = field(repr=False, default=None)

    def contains(self, point: np.ndarray, tol: float = 1e-9) -> bool:
        """Membership in the hull within tolerance (including points on
        the affine span boundary)."""
        p = np.asarray(point, dtype=float)
        rel = p - self._origin
        coords = self._basis @ rel if self._basis.size else np.zeros(0)
        recon = self._basis.T @ coords if self._basis.size else np.zeros_like(rel)
        if np.linalg.norm(rel - recon) > tol * max(1.0, self.diameter):
            return False
        if self.hull_dim == 0:
            return np.linalg.norm(rel) <= tol * max(1.0, np.linalg.norm(self._origin) + 1.0)
        if self.hull_dim == 1:
            spans = [float((self._basis @ (v - self._origin))[0]) for v in self.vertices]
            val = float(coords[0])
            return min(spans) - tol <= val <= max(spans) + tol
        scale = max(1.0, self.diameter)
        return bool(np.all(self._equations[:, :-1] @ coords + self._equations[:, -1]
                           <= tol * scale))


def build_hull(points: Sequence[np.ndarray]) -> HullResult:
    """Convex hull of a point cloud in the trace-zero chamber space.

    Deterministic under input permutation (points are canonically sorted
    before insertion); degenerate clouds report hull_dim below the
    ambient dimension rather than failing.
    """
    pts = np.array([np.asarray(p, dtype=float) for p in points])
    if pts.ndim != 2 or len(pts) == 0:
        raise InvalidInputError("build_hull needs at least one point")
    pts = pts[np.lexsort(pts.T[::-1])]
    keep = [0]
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > 1e-12:
            keep.append(i)
    pts = pts[keep]

    origin = pts[0].copy()
    rel = pts - origin
    if len(pts) == 1:
        return HullResult(pts[:1], np.array([0]), 0, 0.0, origin,
                          np.zeros((0, pts.shape[1])), None)
    u, s, vh = np.linalg.svd(rel, full_matrices=False)
    scale = s[0] if s.size else 1.0
    rank = int(np.sum(s > 1e-9 * max(scale, 1.0)))
    basis = vh[:rank]
    coords = rel @ basis.T
    if rank == 0:
        return HullResult(pts[:1], np.array([0]), 0, 0.0, origin,
                          np.zeros((0, pts.shape[1])), None)
    if rank == 1:
        imin = int(np.argmin(coords[:, 0]))
        imax = int(np.argmax(coords[:, 0]))
        idx = np.unique([imin, imax])
        verts = pts[idx]
        diam = float(np.linalg.norm(verts[-1] - verts[0]))
        return HullResult(verts, idx, 1, diam, origin, basis, None)
    hull = ConvexHull(coords)
    idx = np.sort(hull.vertices)
    verts = pts[idx]
    diam = 0.0
    for i in range(len(verts)):
        for j in range(i + 1, len(verts)):
            diam = max(diam, float(np.linalg.norm(verts[i] - verts[j])))
    return HullResult(verts, idx, rank, diam, origin, basis, hull.equations)


# -- chamber reports ---------------------------------------------------------


@dataclass
class ChamberReport:
    points: np.ndarray
    hull_vertices: np.ndarray
    hull_dim: int
    max_midpoint_deficit: float
    hausdorff_points_to_hull: float
    hull_diameter: float
    n_samples: int
    seed: int
    deficits_by_size: list[tuple[int, float]] = field(default_factory=list)
    stratum_labels: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "seed": self.seed,
            "hull_dim": self.hull_dim,
            "hull_diameter": self.hull_diameter,
            "max_midpoint_deficit": self.max_midpoint_deficit,
            "hausdorff_points_to_hull": self.hausdorff_points_to_hull,
            "deficits_by_size": [[int(n), float(d)] for n, d in self.deficits_by_size],
            "hull_vertices": self.hull_vertices.tolist(),
            "n_hull_vertices": int(len(self.hull_vertices)),
        }


def _midpoint_deficit(images: np.ndarray, n_pairs: int, rng: np.random.Generator) -> float:
    """Max over random image pairs of the distance from the pair midpoint
    to the nearest sampled image: the literal convexity surrogate."""
    tree = cKDTree(images)
    worst = 0.0
    m = len(images)
    for _ in range(n_pairs):
        i, j = rng.integers(0, m, size=2)
        mid = 0.5 * (images[i] + images[j])
        d, _ = tree.query(mid)
        worst = max(worst, float(d))
    return worst


def chamber_cloud(scenario, n_samples: int, seed: int) -> np.ndarray:
    """Chamber images of scenario samples (one sorted spectrum per row)."""
    from .grassmann import sample_scenario

    xs = sample_scenario(scenario, n_samples, seed)
    return np.array([chamber_image(x, scenario.group) for x in xs])


def convexity_audit(scenario, n_samples: int, n_pairs: int = 200, seed: int = 0,
                    images: Optional[np.ndarray] = None) -> ChamberReport:
    """Sample the scenario submanifold, build the hull of the chamber
    images, and measure the midpoint deficit at half and full sample
    size to exhibit the convexity trend."""
    if images is None:
        images = chamber_cloud(scenario, n_samples, seed)
    for row in images:
        if np.any(np.diff(row) > 1e-10):
            raise InvalidInputError("chamber image is not sorted non-increasing")
        if abs(row.sum()) > 1e-8:
            raise InvalidInputError("chamber image does not sum to zero")
    hull = build_hull(images)
    rng = rng_for(seed, 0xDEF)
    half = max(1, len(images) // 2)
    deficit_half = _midpoint_deficit(images[:half], n_pairs, rng)
    deficit_full = _midpoint_deficit(images, n_pairs, rng_for(seed, 0xDEF))
    hausdorff = 0.0
    for row in images:
        if not hull.contains(row, tol=1e-9):
            # distance outside the hull: project crudely via vertex distances
            hausdorff = max(hausdorff, min(float(np.linalg.norm(row - v))
                                           for v in hull.vertices))
    return ChamberReport(
        points=images,
        hull_vertices=hull.vertices,
        hull_dim=hull.hull_dim,
        max_midpoint_deficit=deficit_full,
        hausdorff_points_to_hull=hausdorff,
        hull_diameter=hull.diameter,
        n_samples=len(images),
        seed=seed,
        deficits_by_size=[(half, deficit_half), (len(images), deficit_full)],
    )


# -- shifted distance ----------------------------------------------------------


def shifted_distance(x: Point, beta: np.ndarray, spec: CompatibleGroupSpec) -> float:
    """min over xi in K beta of ||mu_p(x) - xi||.

    By the rearrangement identity for symmetric matrices this is the
    Euclidean distance between the sorted spectra, realized here as
    ||chamber_image(x) - beta||; beta must be given in the closed chamber
    (sorted non-increasing, summing to zero).
    """
    b = np.asarray(beta, dtype=float)
    if np.any(np.diff(b) > 1e-12):
        raise InvalidInputError("beta must be sorted non-increasing (chamber point)")
    if abs(b.sum()) > 1e-8:
        raise InvalidInputError("beta must sum to zero")
    return float(np.linalg.norm(chamber_image(x, spec) - b))


def shifted_distance_bruteforce(x: Point, beta: np.ndarray, spec: CompatibleGroupSpec,
                                n_starts: int = 10000, seed: int = 0,
                                polish_iters: int = 3) -> float:
    """Independent oracle for the shifted distance: minimize
    ||mu_p(x) - k diag(beta) k^{-1}|| over Haar starts in K followed by
    coordinate Givens-angle descent.  Never uses the rearrangement
    identity."""
    rng = rng_for(seed, 0xB0)
    mp = mu_p(x, spec).entries
    bdiag = np.diag(np.asarray(beta, dtype=float)).astype(complex)
    n = spec.n

    def value(k: np.ndarray) -> float:
        return float(np.linalg.norm(mp - k @ bdiag @ k.conj().T))

    candidates = [(value(np.eye(n, dtype=complex)), np.eye(n, dtype=complex))]
    for _ in range(n_starts):
        k = spec.haar_k(rng).matrix
        candidates.append((value(k), k))
    candidates.sort(key=lambda c: c[0])

    # skew-symmetric chart around each leading start, polished by BFGS
    from scipy.linalg import expm
    from scipy.optimize import minimize

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def chart(theta, k0):
        s = np.zeros((n, n))
        for (i, j), a in zip(pairs, theta):
            s[i, j] = a
            s[j, i] = -a
        return expm(s).astype(complex) @ k0

    best = candidates[0][0]
    for v0, k0 in candidates[:max(polish_iters, 5)]:
        res = minimize(lambda th: value(chart(th, k0)), np.zeros(len(pairs)),
                       method="BFGS", options={"gtol": 1e-12, "maxiter": 400})
        best = min(best, float(res.fun))
    return best


# -- density and connectivity -----------------------------------------------------


@dataclass
class DensityReport:
    n_samples: int
    semistable_fraction: float
    knn_graph_connected: bool
    k_neighbors: int
    largest_component_fraction: float
    pilot_full_group_fraction: Optional[float] = None
    hypothesis_certified: Optional[bool] = None

    def __post_init__(self):
        assert 0.0 <= self.semistable_fraction <= 1.0
        if self.knn_graph_connected:
            assert self.largest_component_fraction == 1.0

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "semistable_fraction": self.semistable_fraction,
            "knn_graph_connected": self.knn_graph_connected,
            "k_neighbors": self.k_neighbors,
            "largest_component_fraction": self.largest_component_fraction,
            "pilot_full_group_fraction": self.pilot_full_group_fraction,
            "hypothesis_certified": self.hypothesis_certified,
        }


def _knn_components(projections: list[np.ndarray], k_neighbors: int) -> tuple[int, float]:
    m = len(projections)
    if m == 0:
        return 0, 0.0
    if m == 1:
        return 1, 1.0
    flat = np.array([p.ravel().view(float) for p in projections])
    tree = cKDTree(flat)
    k_eff = min(k_neighbors + 1, m)
    _, nbrs = tree.query(flat, k=k_eff)
    rows, cols = [], []
    for i in range(m):
        for j in np.atleast_1d(nbrs[i])[1:]:
            rows.append(i)
            cols.append(int(j))
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
    n_comp, labels = connected_components(graph, directed=False)
    largest = float(np.max(np.bincount(labels))) / m
    return int(n_comp), largest


def density_connectivity_scan(scenario, n_samples: int, k_neighbors: int = 10,
                              seed: int = 0, n_directions: int = 8,
                              pilot: int = 50) -> DensityReport:
    """Haar-sample the ambient manifold, classify each sample for G, and
    report the semistable fraction plus the connectivity of the
    k-nearest-neighbor graph (chordal metric) on the semistable samples.

    A pilot batch is classified for the full complex group: density of
    the semistable set is only guaranteed when the full-group semistable
    set is nonempty, so that hypothesis is reported, never assumed.
    """
    from .grassmann import ProductPoint, sample_ambient
    from .groups import sl_complex
    from .stability import classify

    xs = sample_ambient(scenario, n_samples, seed)
    semistable: list[np.ndarray] = []
    n_semi = 0
    for i, x in enumerate(xs):
        v = classify(x, scenario.group, n_directions=n_directions, seed=seed + 1000 + i,
                     point_id=i)
        if v.is_semistable():
            n_semi += 1
            if isinstance(x, ProductPoint):
                semistable.append(np.concatenate([
                    x.first.projection.ravel(), x.second.projection.ravel()
                ]))
            else:
                semistable.append(x.projection.ravel())
    fraction = n_semi / n_samples

    full_spec = sl_complex(scenario.group.n, scenario.group.ambient_n)
    pilot_n = min(pilot, n_samples)
    pilot_semi = 0
    for i, x in enumerate(xs[:pilot_n]):
        v = classify(x, full_spec, n_directions=n_directions, seed=seed + 5000 + i)
        if v.is_semistable():
            pilot_semi += 1
    pilot_fraction = pilot_semi / max(1, pilot_n)

    n_comp, largest = _knn_components(semistable, k_neighbors)
    return DensityReport(
        n_samples=n_samples,
        semistable_fraction=fraction,
        knn_graph_connected=(n_comp == 1 and n_semi > 0),
        k_neighbors=k_neighbors,
        largest_component_fraction=largest,
        pilot_full_group_fraction=pilot_fraction,
        hypothesis_certified=pilot_fraction > 0.5,
    )
