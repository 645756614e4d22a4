"""Whitney decomposition of a bounded domain into dyadic cubes.

A cube of generation k has side 2^k and occupies
prod_i [index_i * 2^k, (index_i + 1) * 2^k] on the grid anchored at the
origin; sides and corners are exact binary floats, so cube geometry is
reproducible bit for bit.  Emitted cubes satisfy the classical two-sided
distance bounds sqrt(d) * side <= dist(Q, boundary) <= 4 sqrt(d) * side,
certified from finitely many signed-distance evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, TextIO

import numpy as np

from .errors import DecompositionError
from .geometry import Domain

__all__ = [
    "DyadicCube",
    "WhitneyDecomposition",
    "HypothesisReport",
    "decompose",
    "layer",
    "layer_counts",
    "check_self_similarity_hypothesis",
    "write_cube_csv",
]


@dataclass(frozen=True)
class DyadicCube:
    """Closed dyadic cube: generation k (side 2^k) and integer index."""

    generation: int
    index: tuple[int, ...]

    @property
    def side(self) -> float:
        return 2.0**self.generation

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.index, dtype=float) + 0.5) * self.side

    @property
    def corners(self) -> np.ndarray:
        d = len(self.index)
        offs = np.stack(np.meshgrid(*([[0.0, 1.0]] * d), indexing="ij"), axis=-1).reshape(-1, d)
        return (np.asarray(self.index, dtype=float) + offs) * self.side

    @property
    def half_diagonal(self) -> float:
        return math.sqrt(len(self.index)) * self.side / 2.0

    def interval(self, axis: int) -> tuple[float, float]:
        return self.index[axis] * self.side, (self.index[axis] + 1) * self.side


@dataclass
class WhitneyDecomposition:
    """Whitney cubes grouped by generation, with certified distance intervals.

    ``by_generation[k]`` is an integer index array of shape (n_k, d);
    ``dist_lo`` / ``dist_hi`` hold the matching certified bounds on
    dist(., boundary) over each cube.
    """

    domain_name: str
    dimension: int
    min_generation: int
    by_generation: dict[int, np.ndarray]
    dist_lo: dict[int, np.ndarray]
    dist_hi: dict[int, np.ndarray]
    _r_omega: float | None = field(default=None, repr=False)

    @property
    def generations(self) -> list[int]:
        return sorted(self.by_generation)

    @property
    def n_cubes(self) -> int:
        return sum(len(v) for v in self.by_generation.values())

    def cubes(self, generation: int | None = None) -> Iterator[DyadicCube]:
        gens = self.generations if generation is None else [generation]
        for k in gens:
            for row in self.by_generation.get(k, ()):
                yield DyadicCube(k, tuple(int(i) for i in row))

    def centers(self, generation: int) -> np.ndarray:
        return (self.by_generation[generation] + 0.5) * 2.0**generation


def _corner_offsets(d: int) -> np.ndarray:
    return np.stack(np.meshgrid(*([[0.0, 1.0]] * d), indexing="ij"), axis=-1).reshape(-1, d)


def _certified_bounds(domain: Domain, idx: np.ndarray, k: int,
                      inside_certain: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signed Lipschitz bounds (lo, hi) over each cube of generation k.

    lo <= min s, hi >= max s over the closed cube.  Cubes whose parent was
    certified inside skip the sign test and use the cheaper unsigned oracle.
    """
    side = 2.0**k
    d = idx.shape[1]
    half_diag = math.sqrt(d) * side / 2.0
    centers = (idx + 0.5) * side
    corners = (idx[:, None, :] + _corner_offsets(d)[None, :, :]) * side
    n = idx.shape[0]
    pts = np.concatenate([centers[:, None, :], corners], axis=1).reshape(-1, d)

    s = np.empty(pts.shape[0])
    flat_certain = np.repeat(inside_certain, 1 + 2**d)
    if np.any(flat_certain):
        s[flat_certain] = domain.unsigned_distance(pts[flat_certain])
    if np.any(~flat_certain):
        s[~flat_certain] = domain.signed_distance(pts[~flat_certain])
    s = s.reshape(n, 1 + 2**d)

    radii = np.concatenate([[half_diag], np.full(2**d, 2.0 * half_diag)])
    lo = np.max(s - radii, axis=1)
    hi = np.min(s + radii, axis=1)
    return lo, hi


def decompose(domain: Domain, min_generation: int) -> WhitneyDecomposition:
    """Top-down Whitney refinement of ``domain`` down to ``min_generation``.

    Starting from dyadic cubes covering the bounding box, a cube is
    accepted once its certified distance lower bound reaches
    sqrt(d) * side (which also certifies it lies inside), discarded when
    certified outside, and split otherwise.  Cubes still unresolved at
    ``min_generation`` are dropped; they form the uncovered sliver of
    width O(2^min_generation) along the boundary.
    """
    d = domain.dimension
    lo_bb, hi_bb = domain.bounding_box
    extent = float(np.max(hi_bb - lo_bb))
    k0 = int(math.ceil(math.log2(extent))) if extent > 0 else 0
    if min_generation > k0:
        raise DecompositionError(
            f"min_generation={min_generation} is coarser than the bounding box scale {k0}")

    ranges = [
        np.arange(int(math.floor(lo_bb[i] / 2.0**k0)), int(math.floor(hi_bb[i] / 2.0**k0)) + 1)
        for i in range(d)
    ]
    frontier = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, d).astype(np.int64)
    inside_certain = np.zeros(frontier.shape[0], dtype=bool)

    accepted: dict[int, np.ndarray] = {}
    acc_lo: dict[int, np.ndarray] = {}
    acc_hi: dict[int, np.ndarray] = {}

    for k in range(k0, min_generation - 1, -1):
        if frontier.size == 0:
            break
        side = 2.0**k
        threshold = math.sqrt(d) * side
        lo, hi = _certified_bounds(domain, frontier, k, inside_certain)
        accept = lo >= threshold
        outside = hi <= 0.0
        split = ~accept & ~outside
        if np.any(accept):
            order = np.lexsort(frontier[accept].T[::-1])
            accepted[k] = frontier[accept][order]
            acc_lo[k] = lo[accept][order]
            acc_hi[k] = hi[accept][order]
        if k == min_generation:
            break
        if np.any(split):
            parents = frontier[split]
            certain = lo[split] > 0.0
            offs = _corner_offsets(d).astype(np.int64)
            frontier = (parents[:, None, :] * 2 + offs[None, :, :]).reshape(-1, d)
            inside_certain = np.repeat(certain, 2**d)
        else:
            frontier = np.empty((0, d), dtype=np.int64)
            inside_certain = np.empty(0, dtype=bool)

    if not accepted:
        raise DecompositionError(
            f"no Whitney cube accepted down to generation {min_generation}; "
            "the cutoff is too coarse for this domain")
    return WhitneyDecomposition(
        domain_name=domain.name,
        dimension=d,
        min_generation=min_generation,
        by_generation=accepted,
        dist_lo=acc_lo,
        dist_hi=acc_hi,
    )


def _r_omega_cached(domain: Domain, decomposition: WhitneyDecomposition) -> float:
    if decomposition._r_omega is None:
        from .geometry import r_omega

        decomposition._r_omega = r_omega(domain, decomposition)
    return decomposition._r_omega


def layer(decomposition: WhitneyDecomposition, domain: Domain, r: float) -> list[DyadicCube]:
    """Whitney cubes whose certified distance interval brackets r.

    These are the cubes meeting the level set {dist(., boundary) = r}
    up to certification slack.  Requires
    2^(min_generation+2) <= r <= R_Omega (below that the truncated
    decomposition no longer covers the level set).
    """
    cubes, _, _ = layer_with_bounds(decomposition, domain, r)
    return cubes


def layer_with_bounds(decomposition: WhitneyDecomposition, domain: Domain,
                      r: float) -> tuple[list[DyadicCube], np.ndarray, np.ndarray]:
    r_om = _r_omega_cached(domain, decomposition)
    # cubes meeting the r-level set have sides >= r/(8 sqrt(d)); below
    # 4 * 2^min_generation the truncated decomposition no longer covers them
    r_min = 2.0 ** (decomposition.min_generation + 2)
    if not (r_min <= r <= r_om):
        raise ValueError(f"layer radius r={r:g} outside [{r_min:g}, {r_om:g}]")
    out: list[DyadicCube] = []
    idx_arrays = []
    gen_arrays = []
    for k in decomposition.generations:
        lo = decomposition.dist_lo[k]
        hi = decomposition.dist_hi[k]
        hit = (lo <= r) & (r <= hi)
        if np.any(hit):
            rows = decomposition.by_generation[k][hit]
            idx_arrays.append(rows)
            gen_arrays.append(np.full(rows.shape[0], k, dtype=np.int64))
            out.extend(DyadicCube(k, tuple(int(i) for i in row)) for row in rows)
    if not out:
        raise ValueError(f"layer at r={r:g} is empty")
    centers = np.concatenate(
        [(rows + 0.5) * 2.0**g[0] for rows, g in zip(idx_arrays, gen_arrays)], axis=0)
    gens = np.concatenate(gen_arrays)
    return out, centers, gens


def layer_counts(decomposition: WhitneyDecomposition) -> dict[int, int]:
    """Number of Whitney cubes per generation."""
    return {k: int(len(v)) for k, v in decomposition.by_generation.items()}


@dataclass(frozen=True)
class HypothesisReport:
    """Desk-scale check of layer-count scaling #S_{2^k} ~ 2^{-k d}."""

    fitted_dimension: float
    spread: float
    holds: bool
    counts: dict[int, int]
    spread_tolerance: float = 10.0

    def to_dict(self) -> dict:
        return {
            "fitted_dimension": self.fitted_dimension,
            "spread": self.spread,
            "holds": self.holds,
            "spread_tolerance": self.spread_tolerance,
            "counts": {str(k): v for k, v in self.counts.items()},
        }


def check_self_similarity_hypothesis(decomposition: WhitneyDecomposition,
                                     domain: Domain) -> HypothesisReport:
    """Fit layer counts at dyadic radii against a pure power law.

    The hypothesis holds at desk scale when the compensated counts
    #S_{2^k} * 2^{k * d_fit} vary by at most a factor 10 across the
    usable generations.
    """
    r_om = _r_omega_cached(domain, decomposition)
    ks = [k for k in decomposition.generations
          if 2.0 ** (decomposition.min_generation + 2) <= 2.0**k <= r_om]
    if len(ks) < 4:
        raise ValueError(f"need >= 4 usable generations, have {len(ks)}")
    counts = {}
    for k in ks:
        cubes, _, _ = layer_with_bounds(decomposition, domain, 2.0**k)
        counts[k] = len(cubes)
    karr = np.array(sorted(counts), dtype=float)
    carr = np.array([counts[int(k)] for k in karr], dtype=float)
    # the layer nearest the inradius sees the whole domain rather than
    # boundary scaling; keep it out of the fit when enough radii remain
    fit_sel = slice(0, -1) if karr.size >= 5 else slice(None)
    slope, _ = np.polyfit(karr[fit_sel], np.log2(carr[fit_sel]), 1)
    d_fit = float(-slope)
    compensated = carr * (2.0 ** (karr * d_fit))
    spread = float(compensated.max() / compensated.min())
    return HypothesisReport(
        fitted_dimension=d_fit,
        spread=spread,
        holds=spread <= 10.0,
        counts={int(k): int(counts[int(k)]) for k in karr},
    )


def write_cube_csv(decomposition: WhitneyDecomposition, domain: Domain, fh: TextIO,
                   header_lines: list[str] | None = None) -> None:
    """Dump cubes as CSV: generation, index_0..index_{d-1}, dist_lo, dist_hi."""
    d = decomposition.dimension
    for line in header_lines or []:
        fh.write(f"# {line}\n")
    cols = ["generation"] + [f"index_{i}" for i in range(d)] + ["dist_lo", "dist_hi"]
    fh.write(",".join(cols) + "\n")
    for k in decomposition.generations:
        idx = decomposition.by_generation[k]
        lo = decomposition.dist_lo[k]
        hi = decomposition.dist_hi[k]
        for row, l, h in zip(idx, lo, hi):
            fh.write(f"{k}," + ",".join(str(int(i)) for i in row) + f",{l!r},{h!r}\n")
