"""Bounded domains with compact boundary, exposed through exact signed distances.

Sign convention: positive inside the domain, negative outside, zero on
the boundary.  All distance oracles are 1-Lipschitz and exact (not
sampled), which lets callers certify interval bounds over whole cubes
from finitely many evaluations.

Built-in domains: axis-aligned squares/rectangles/boxes, disks, and
Koch-snowflake prefractal polygons.  Domains are centered at (1/3, ...)
by default so the boundary sits in general position relative to the
dyadic grid anchored at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError

if TYPE_CHECKING:
    from .whitney import DyadicCube, WhitneyDecomposition

__all__ = [
    "Domain",
    "make_domain",
    "koch_snowflake_vertices",
    "r_omega",
    "distance_interval_on_cube",
    "KOCH_DIMENSION",
]

KOCH_DIMENSION = math.log(4.0) / math.log(3.0)

#: default domain center; 1/3 is far from every dyadic rational at the
#: scales we refine to, which keeps boundaries off grid lines
DEFAULT_CENTER = 1.0 / 3.0


def as_points(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce a point or point batch to shape (n, dim); flag single points."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ValueError(f"expected a point of dimension {dim}, got shape {arr.shape}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"expected points of shape (n, {dim}), got {arr.shape}")
    return arr, False


class _BoxField:
    """Axis-aligned box |x_i - c_i| <= h_i, any dimension."""

    def __init__(self, center: np.ndarray, half_widths: np.ndarray):
        self.center = np.asarray(center, dtype=float)
        self.half = np.asarray(half_widths, dtype=float)
        self.dim = self.center.shape[0]

    def signed(self, pts: np.ndarray) -> np.ndarray:
        q = np.abs(pts - self.center) - self.half
        mq = np.max(q, axis=1)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        return np.where(mq > 0.0, -outside, -mq)

    def unsigned(self, pts: np.ndarray) -> np.ndarray:
        return np.abs(self.signed(pts))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.all(np.abs(pts - self.center) <= self.half, axis=1)

    # cheap certified lower bound == exact value for analytic fields
    dist_lower = unsigned

    def boundary_projection(self, pts: np.ndarray) -> np.ndarray:
        q = pts - self.center
        out = np.clip(q, -self.half, self.half)
        inside = np.all(np.abs(q) < self.half, axis=1)
        if np.any(inside):
            qi = out[inside]
            margin = self.half - np.abs(qi)
            j = np.argmin(margin, axis=1)
            rows = np.arange(qi.shape[0])
            qi[rows, j] = np.where(qi[rows, j] >= 0.0, self.half[j], -self.half[j])
            out[inside] = qi
        return self.center + out

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.half, self.center + self.half

    def prepare_fast(self) -> None:  # closed form is already fast
        pass


class _DiskField:
    """Disk/ball of radius R."""

    def __init__(self, center: np.ndarray, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.dim = self.center.shape[0]

    def signed(self, pts: np.ndarray) -> np.ndarray:
        return self.radius - np.linalg.norm(pts - self.center, axis=1)

    def unsigned(self, pts: np.ndarray) -> np.ndarray:
        return np.abs(self.signed(pts))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - self.center, axis=1) <= self.radius

    dist_lower = unsigned

    def boundary_projection(self, pts: np.ndarray) -> np.ndarray:
        q = pts - self.center
        r = np.linalg.norm(q, axis=1)
        unit = np.zeros_like(q)
        ok = r > 0.0
        unit[ok] = q[ok] / r[ok, None]
        unit[~ok, 0] = 1.0  # center maps to an arbitrary fixed boundary point
        return self.center + self.radius * unit

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.radius, self.center + self.radius

    def prepare_fast(self) -> None:
        pass


class _PolygonField:
    """Simple closed polygon with exact point-to-edge distances.

    Nearest-edge queries go through a KD-tree over edge midpoints with a
    certified escalation loop: a candidate minimum m is provably global
    once m <= (k-th midpoint distance) - (longest edge)/2.  The optional
    uniform grid caches an exact center distance per cell, giving a
    certified Lipschitz lower bound in O(1) per query for the sampler
    hot path, plus exact candidate edge lists for cells near the
    boundary.
    """

    _CHUNK = 1 << 16

    def __init__(self, vertices: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("polygon vertices must have shape (n, 2)")
        self.dim = 2
        self._a = self.vertices
        self._b = np.roll(self.vertices, -1, axis=0)
        self._ab = self._b - self._a
        self._ab2 = np.einsum("ij,ij->i", self._ab, self._ab)
        self._mid = 0.5 * (self._a + self._b)
        self._edge_len_max = float(np.sqrt(self._ab2.max()))
        self._tree = cKDTree(self._mid)
        from matplotlib.path import Path  # deferred: pulls in matplotlib

        self._path = Path(self.vertices, closed=False)
        self._grid: dict[str, Any] | None = None

    # -- exact queries ----------------------------------------------------

    def _seg_dist(self, pts: np.ndarray, edge_idx: np.ndarray) -> np.ndarray:
        """Exact distances from pts[i] to segments edge_idx[i, :]."""
        a = self._a[edge_idx]
        ab = self._ab[edge_idx]
        ab2 = self._ab2[edge_idx]
        ap = pts[:, None, :] - a
        tt = np.clip(np.einsum("nkd,nkd->nk", ap, ab) / ab2, 0.0, 1.0)
        diff = ap - tt[..., None] * ab
        return np.sqrt(np.einsum("nkd,nkd->nk", diff, diff))

    def _seg_nearest(self, pts: np.ndarray, edge_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = self._a[edge_idx]
        ab = self._ab[edge_idx]
        ab2 = self._ab2[edge_idx]
        ap = pts[:, None, :] - a
        tt = np.clip(np.einsum("nkd,nkd->nk", ap, ab) / ab2, 0.0, 1.0)
        closest = a + tt[..., None] * ab
        diff = pts[:, None, :] - closest
        dist = np.sqrt(np.einsum("nkd,nkd->nk", diff, diff))
        j = np.argmin(dist, axis=1)
        rows = np.arange(pts.shape[0])
        return dist[rows, j], closest[rows, j]

    def _unsigned_tree(self, pts: np.ndarray, want_points: bool = False):
        n = pts.shape[0]
        n_edges = self._a.shape[0]
        out = np.empty(n)
        out_pts = np.empty((n, 2)) if want_points else None
        pending = np.arange(n)
        k = min(8, n_edges)
        while pending.size:
            dmid, idx = self._tree.query(pts[pending], k=k)
            if k == 1:
                dmid = dmid[:, None]
                idx = idx[:, None]
            if want_points:
                dmin, cpts = self._seg_nearest(pts[pending], idx)
            else:
                dmin = self._seg_dist(pts[pending], idx).min(axis=1)
                cpts = None
            certified = (dmin <= dmid[:, -1] - 0.5 * self._edge_len_max) | (k >= n_edges)
            done = pending[certified]
            out[done] = dmin[certified]
            if want_points:
                out_pts[done] = cpts[certified]
            pending = pending[~certified]
            k = min(4 * k, n_edges)
        return (out, out_pts) if want_points else out

    def unsigned(self, pts: np.ndarray) -> np.ndarray:
        if self._grid is not None:
            return self._unsigned_grid(pts)
        return self._unsigned_tree(pts)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        out = np.empty(pts.shape[0], dtype=bool)
        for i in range(0, pts.shape[0], self._CHUNK):
            out[i : i + self._CHUNK] = self._path.contains_points(pts[i : i + self._CHUNK])
        return out

    def signed(self, pts: np.ndarray) -> np.ndarray:
        u = self.unsigned(pts)
        return np.where(self.contains(pts), u, -u)

    def boundary_projection(self, pts: np.ndarray) -> np.ndarray:
        return self._unsigned_tree(pts, want_points=True)[1]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    # -- grid acceleration -------------------------------------------------

    def prepare_fast(self, cell_factor: float = 2.0, candidate_factor: float = 8.0) -> None:
        """Build the uniform acceleration grid (idempotent)."""
        if self._grid is not None:
            return
        h = cell_factor * self._edge_len_max
        lo, hi = self.bounds()
        lo = lo - 4.0 * h
        hi = hi + 4.0 * h
        ncell = np.maximum(np.ceil((hi - lo) / h).astype(int), 1)
        xs = lo[0] + h * (np.arange(ncell[0]) + 0.5)
        ys = lo[1] + h * (np.arange(ncell[1]) + 0.5)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        centers = np.column_stack([gx.ravel(), gy.ravel()])
        center_dist = self._unsigned_tree(centers)
        half_diag = h * math.sqrt(2.0) / 2.0

        # exact candidate lists only where the sampler needs exactness
        near = center_dist <= candidate_factor * self._edge_len_max + half_diag
        near_idx = np.flatnonzero(near)
        radius = center_dist[near_idx] + 2.0 * half_diag + 0.5 * self._edge_len_max
        lists = self._tree.query_ball_point(centers[near_idx], radius)
        counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=len(lists))
        if len(lists):
            cand = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists])
        else:
            cand = np.empty(0, np.int64)
        start = np.zeros(centers.shape[0], dtype=np.int64)
        count = np.zeros(centers.shape[0], dtype=np.int64)
        start[near_idx] = np.concatenate([[0], np.cumsum(counts)[:-1]]) if counts.size else 0
        count[near_idx] = counts
        self._grid = {
            "lo": lo,
            "h": h,
            "ncell": ncell,
            "center_dist": center_dist,
            "half_diag": half_diag,
            "cand": cand,
            "cand_start": start,
            "cand_count": count,
        }

    def _cell_of(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self._grid
        ij = np.floor((pts - g["lo"]) / g["h"]).astype(np.int64)
        ok = np.all((ij >= 0) & (ij < g["ncell"]), axis=1)
        flat = np.where(ok, ij[:, 0] * g["ncell"][1] + ij[:, 1], 0)
        return flat, ok

    def dist_lower(self, pts: np.ndarray) -> np.ndarray:
        """Certified lower bound on the boundary distance, O(1) per point."""
        if self._grid is None:
            return self.unsigned(pts)
        g = self._grid
        flat, ok = self._cell_of(pts)
        lower = np.maximum(g["center_dist"][flat] - g["half_diag"], 0.0)
        return np.where(ok, lower, 0.0)

    def _unsigned_grid(self, pts: np.ndarray) -> np.ndarray:
        """Exact distances, using per-cell candidate lists where present."""
        g = self._grid
        flat, ok = self._cell_of(pts)
        counts = np.where(ok, g["cand_count"][flat], 0)
        out = np.empty(pts.shape[0])
        have = np.flatnonzero(counts > 0)
        rest = np.flatnonzero(counts == 0)
        if have.size:
            c = counts[have]
            starts = g["cand_start"][flat[have]]
            total = int(c.sum())
            run0 = np.concatenate([[0], np.cumsum(c)[:-1]])
            within = np.arange(total) - np.repeat(run0, c)
            edge_ids = g["cand"][np.repeat(starts, c) + within]
            pt_ids = np.repeat(have, c)
            a = self._a[edge_ids]
            ab = self._ab[edge_ids]
            ap = pts[pt_ids] - a
            tt = np.clip(np.einsum("nd,nd->n", ap, ab) / self._ab2[edge_ids], 0.0, 1.0)
            diff = ap - tt[:, None] * ab
            dist = np.sqrt(np.einsum("nd,nd->n", diff, diff))
            out[have] = np.minimum.reduceat(dist, run0)
        if rest.size:
            out[rest] = self._unsigned_tree(pts[rest])
        return out


def koch_snowflake_vertices(generation: int, side: float = 1.0,
                            center: tuple[float, float] = (DEFAULT_CENTER, DEFAULT_CENTER)) -> np.ndarray:
    """Vertices of the Koch snowflake prefractal, 3 * 4^g edges, CCW.

    Starts from an equilateral triangle (apex up) and replaces the middle
    third of every edge with an outward bump each generation.
    """
    if generation < 0:
        raise ConfigurationError("koch_snowflake generation must be >= 0")
    if side <= 0.0:
        raise ConfigurationError("koch_snowflake side must be positive")
    circum = side / math.sqrt(3.0)
    ang = np.pi / 2.0 + 2.0 * np.pi * np.arange(3) / 3.0
    pts = circum * np.column_stack([np.cos(ang), np.sin(ang)])
    rot = np.array([[0.5, math.sqrt(3.0) / 2.0], [-math.sqrt(3.0) / 2.0, 0.5]])  # -60 deg
    for _ in range(generation):
        a = pts
        b = np.roll(pts, -1, axis=0)
        s1 = a + (b - a) / 3.0
        s2 = a + 2.0 * (b - a) / 3.0
        tip = s1 + (s2 - s1) @ rot.T
        pts = np.stack([a, s1, tip, s2], axis=1).reshape(-1, 2)
    return pts + np.asarray(center, dtype=float)


@dataclass
class Domain:
    """A bounded domain presented through an exact signed distance oracle."""

    name: str
    dimension: int
    bounding_box: tuple[np.ndarray, np.ndarray]
    known_boundary_dimension: float | None
    spec: dict[str, Any] = field(repr=False)
    _field: Any = field(repr=False)

    def signed_distance(self, points) -> np.ndarray | float:
        pts, single = as_points(points, self.dimension)
        s = self._field.signed(pts)
        return float(s[0]) if single else s

    def unsigned_distance(self, points) -> np.ndarray | float:
        pts, single = as_points(points, self.dimension)
        u = self._field.unsigned(pts)
        return float(u[0]) if single else u

    def contains(self, points) -> np.ndarray | bool:
        pts, single = as_points(points, self.dimension)
        c = self._field.contains(pts)
        return bool(c[0]) if single else c

    def boundary_projection(self, points) -> np.ndarray:
        pts, single = as_points(points, self.dimension)
        p = self._field.boundary_projection(pts)
        return p[0] if single else p

    def distance_lower_bound(self, points) -> np.ndarray | float:
        """Certified lower bound on dist(., boundary); exact near the boundary."""
        pts, single = as_points(points, self.dimension)
        u = self._field.dist_lower(pts)
        return float(u[0]) if single else u

    def prepare_fast_queries(self) -> None:
        """Build acceleration structures for bulk sampling (idempotent)."""
        self._field.prepare_fast()


def _center_of(spec: Mapping[str, Any], dim: int) -> np.ndarray:
    c = spec.get("center")
    if c is None:
        return np.full(dim, DEFAULT_CENTER)
    c = np.asarray(c, dtype=float)
    if c.shape != (dim,):
        raise ConfigurationError(f"center must have {dim} coordinates")
    return c


def make_domain(spec: Mapping[str, Any]) -> Domain:
    """Build a domain from a tagged record, e.g. {"type": "disk", "radius": 1.0}.

    Supported types: square(side), rectangle(a, b), disk(radius),
    box3d(a, b, c), koch_snowflake(generation, side).
    """
    if not isinstance(spec, Mapping) or "type" not in spec:
        raise ConfigurationError("domain spec must be a mapping with a 'type' key")
    kind = spec["type"]

    def positive(key: str) -> float:
        v = spec.get(key)
        if v is None or not np.isfinite(v) or v <= 0:
            raise ConfigurationError(f"{kind}: parameter {key!r} must be a positive number")
        return float(v)

    if kind == "square":
        a = positive("side")
        center = _center_of(spec, 2)
        fld = _BoxField(center, np.array([a / 2.0, a / 2.0]))
        name = f"square(side={a:g})"
        known = 1.0
        dim = 2
    elif kind == "rectangle":
        a, b = positive("a"), positive("b")
        center = _center_of(spec, 2)
        fld = _BoxField(center, np.array([a / 2.0, b / 2.0]))
        name = f"rectangle({a:g}x{b:g})"
        known = 1.0
        dim = 2
    elif kind == "disk":
        r = positive("radius")
        center = _center_of(spec, 2)
        fld = _DiskField(center, r)
        name = f"disk(radius={r:g})"
        known = 1.0
        dim = 2
    elif kind == "box3d":
        a, b, c = positive("a"), positive("b"), positive("c")
        center = _center_of(spec, 3)
        fld = _BoxField(center, np.array([a, b, c]) / 2.0)
        name = f"box3d({a:g}x{b:g}x{c:g})"
        known = 2.0
        dim = 3
    elif kind == "koch_snowflake":
        gen = spec.get("generation")
        if gen is None or int(gen) != gen or gen < 0:
            raise ConfigurationError("koch_snowflake: generation must be an integer >= 0")
        a = positive("side")
        center = _center_of(spec, 2)
        fld = _PolygonField(koch_snowflake_vertices(int(gen), side=a, center=tuple(center)))
        name = f"koch_snowflake(g={int(gen)}, side={a:g})"
        known = KOCH_DIMENSION if gen > 0 else 1.0
        dim = 2
    else:
        raise ConfigurationError(f"unknown domain type {kind!r}")

    lo, hi = fld.bounds()
    return Domain(
        name=name,
        dimension=dim,
        bounding_box=(lo, hi),
        known_boundary_dimension=known,
        spec=dict(spec),
        _field=fld,
    )


def distance_interval_on_cube(domain: Domain, cube: "DyadicCube") -> tuple[float, float]:
    """Certified bounds (lo, hi) for dist(., boundary) over a closed cube.

    lo <= min over the cube, hi >= max over the cube.  Bounds come from
    the 1-Lipschitz property at the center (radius = half diagonal) and
    the corners (radius = full diagonal).
    """
    pts = np.vstack([cube.center[None, :], cube.corners])
    radii = np.concatenate([[cube.half_diagonal], np.full(len(pts) - 1, 2.0 * cube.half_diagonal)])
    s = domain.signed_distance(pts)
    lo_signed = float(np.max(s - radii))
    hi_signed = float(np.min(s + radii))
    if lo_signed >= 0.0:
        return lo_signed, hi_signed
    if hi_signed <= 0.0:
        return -hi_signed, -lo_signed
    return 0.0, max(hi_signed, -lo_signed)


def r_omega(domain: Domain, decomposition: "WhitneyDecomposition",
            tol: float = 1e-9, max_rounds: int = 80) -> float:
    """min(1, sup over the domain of the boundary distance).

    Branch-and-bound refinement of the inradius, seeded by the Whitney
    cubes: each box contributes an achieved value (its center distance)
    and a certified cap (center distance + half diagonal).  Boxes whose
    cap cannot beat the best achieved value are pruned; the rest are
    split until the bracket is tighter than ``tol`` or the cap of 1 is
    certified.
    """
    centers, halves = [], []
    for gen, idx in decomposition.by_generation.items():
        side = 2.0**gen
        centers.append((idx + 0.5) * side)
        halves.append(np.full(idx.shape[0], side / 2.0))
    if not centers:
        raise ValueError("decomposition has no cubes")
    ctr = np.vstack(centers)
    half = np.concatenate(halves)
    root_d = math.sqrt(domain.dimension)

    s = domain.signed_distance(ctr)
    best = float(np.max(s))
    upper = float(np.max(s + half * root_d))
    for _ in range(max_rounds):
        if best >= 1.0 or upper - best <= tol:
            break
        keep = s + half * root_d > best
        ctr, half, s = ctr[keep], half[keep], s[keep]
        # split each surviving box into 2^d children
        d = domain.dimension
        offs = (np.stack(np.meshgrid(*([[-0.5, 0.5]] * d), indexing="ij"), axis=-1).reshape(-1, d))
        ctr = (ctr[:, None, :] + offs[None, :, :] * half[:, None, None]).reshape(-1, d)
        half = np.repeat(half / 2.0, offs.shape[0])
        s = domain.signed_distance(ctr)
        best = max(best, float(np.max(s)))
        upper = max(best, float(np.max(s + half * root_d)))
    if best >= 1.0:
        return 1.0
    return min(1.0, 0.5 * (best + upper))
