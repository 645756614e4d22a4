"""Brownian flight sampler: adaptive Euler stepping with bridge correction.

A flight picks a Whitney cube of the epsilon layer uniformly at random,
starts at its center, and advances by Gaussian increments whose variance
shrinks quadratically with the boundary distance.  Killing happens when
the endpoint leaves the domain, when the half-space Brownian-bridge
correction fires (an excursion crossed the boundary inside the step),
or when the path comes within the absorption threshold.

Randomness is counter-based: flight i of a campaign with master seed s
consumes only the Philox stream keyed by (s, i), so results are
independent of batching, worker count, and scheduling.

The hot loop uses a certified *lower bound* on the boundary distance
(exact near the boundary).  Kills are decided exactly: whenever the
cheap bound leaves a kill possible, the exact distance is computed for
just those flights, so the sampled law does not depend on the
acceleration grid.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import ConfigurationError
from .geometry import Domain
from .whitney import DyadicCube, WhitneyDecomposition, layer_with_bounds

__all__ = [
    "StepPolicy",
    "FlightRecord",
    "DeltaRegReport",
    "sample_flight",
    "run_campaign",
    "run_paths_from",
    "estimate_delta_regularity",
    "beta_s",
    "delta_beta_s",
    "write_records_jsonl",
    "read_records_jsonl",
]

_BLOCK = 256  # per-flight RNG refill block; part of the stream layout
_SHELL_MIN = -60
_SHELL_MAX = 8


@dataclass(frozen=True)
class StepPolicy:
    """Step-control knobs; ``None`` fields resolve to scale-aware defaults.

    dt = min(dt_max, (c_step * d)^2) with d the current boundary
    distance; dt_max defaults to R^2/100, the absorption threshold to
    epsilon/100, and the censoring horizon to 4 R^2, R being the capped
    inradius of the domain.
    """

    c_step: float = 0.1
    dt_max: float | None = None
    delta_abs: float | None = None
    t_max: float | None = None
    bridge_correction: bool = True
    #: step-control distance is floored at approach_factor * delta_abs;
    #: the bridge kill is exact for a flat boundary at any step size, so
    #: this bounds worst-case step counts without changing the law at
    #: resolvable scales
    approach_factor: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.c_step < 1.0):
            raise ConfigurationError("c_step must be in (0, 1)")
        if self.approach_factor < 1.0:
            raise ConfigurationError("approach_factor must be >= 1")
        for name in ("dt_max", "delta_abs", "t_max"):
            v = getattr(self, name)
            if v is not None and v <= 0.0:
                raise ConfigurationError(f"{name} must be positive when given")

    def resolve(self, epsilon: float, r_omega_value: float) -> "StepPolicy":
        return replace(
            self,
            dt_max=self.dt_max if self.dt_max is not None else r_omega_value**2 / 100.0,
            delta_abs=self.delta_abs if self.delta_abs is not None else epsilon / 100.0,
            t_max=self.t_max if self.t_max is not None else 4.0 * r_omega_value**2,
        )


@dataclass
class FlightRecord:
    """One simulated flight."""

    flight_id: int
    start_cube: DyadicCube | None
    start: np.ndarray
    tau: float
    exit_point: np.ndarray
    displacement: float
    censored: bool
    shell_occupation: dict[int, float]

    def to_json_dict(self) -> dict:
        return {
            "flight_id": self.flight_id,
            "start_cube": None if self.start_cube is None else {
                "generation": self.start_cube.generation,
                "index": list(self.start_cube.index),
            },
            "start": [float(v) for v in self.start],
            "tau": self.tau,
            "exit_point": [float(v) for v in self.exit_point],
            "displacement": self.displacement,
            "censored": self.censored,
            "shell_occupation": {str(k): v for k, v in sorted(self.shell_occupation.items())},
        }

    @staticmethod
    def from_json_dict(obj: dict) -> "FlightRecord":
        sc = obj.get("start_cube")
        return FlightRecord(
            flight_id=int(obj["flight_id"]),
            start_cube=None if sc is None else DyadicCube(int(sc["generation"]), tuple(int(i) for i in sc["index"])),
            start=np.asarray(obj["start"], dtype=float),
            tau=float(obj["tau"]),
            exit_point=np.asarray(obj["exit_point"], dtype=float),
            displacement=float(obj["displacement"]),
            censored=bool(obj["censored"]),
            shell_occupation={int(k): float(v) for k, v in obj["shell_occupation"].items()},
        )


def beta_s(record: FlightRecord, s: float) -> float:
    """Occupation time of the boundary sausage of width s (dyadic shells)."""
    return sum(t for k, t in record.shell_occupation.items() if 2.0**k <= s)


def delta_beta_s(record: FlightRecord, s: float) -> float:
    """beta_s - beta_{s/2}: time spent in the shell between s/2 and s."""
    return beta_s(record, s) - beta_s(record, s / 2.0)


def _stream(master_seed: int, flight_id: int) -> np.random.Generator:
    key = np.array([np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF), np.uint64(flight_id)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class _Field:
    """Adapter giving the kernel a uniform view of a domain's oracles."""

    def __init__(self, domain: Domain):
        domain.prepare_fast_queries()
        self._f = domain._field
        self.dim = domain.dimension
        grid = getattr(self._f, "_grid", None)
        self.lower_is_exact = grid is None

    def lower(self, pts: np.ndarray) -> np.ndarray:
        return self._f.dist_lower(pts)

    def exact(self, pts: np.ndarray) -> np.ndarray:
        return self._f.unsigned(pts)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return self._f.contains(pts)

    def project(self, pts: np.ndarray) -> np.ndarray:
        return self._f.boundary_projection(pts)


def _simulate(domain: Domain, starts: np.ndarray, policy: StepPolicy,
              master_seed: int, flight_ids: np.ndarray,
              draw_start_index: int | None = None):
    """Advance a batch of flights to absorption or censoring.

    Returns (tau, exit_points, censored, shells) where shells maps each
    flight to its dyadic-shell occupation times.  All per-flight
    computations are elementwise, so results are invariant under
    batch composition.
    """
    fld = _Field(domain)
    n, d = starts.shape
    c = policy.c_step
    dt_max = policy.dt_max
    delta_abs = policy.delta_abs
    t_max = policy.t_max
    assert dt_max is not None and delta_abs is not None and t_max is not None

    gens = []
    for fid in flight_ids:
        g = _stream(master_seed, int(fid))
        if draw_start_index is not None:
            g.integers(0, draw_start_index)  # start-cube draw; value consumed upstream
        gens.append(g)

    pos = starts.astype(float).copy()
    dist = fld.exact(pos)
    if np.any(dist <= 0.0):
        raise ValueError("all start points must lie strictly inside the domain")

    tau = np.zeros(n)
    censored = np.zeros(n, dtype=bool)
    final = pos.copy()
    alive = np.ones(n, dtype=bool)
    n_shell = _SHELL_MAX - _SHELL_MIN + 1
    shells = np.zeros((n, n_shell))
    nbuf = np.empty((n, _BLOCK, d))
    ubuf = np.empty((n, _BLOCK))
    steps = np.zeros(n, dtype=np.int64)

    while True:
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        ptr = steps[act] % _BLOCK
        for i in act[ptr == 0]:
            nbuf[i] = gens[i].standard_normal((_BLOCK, d))
            ubuf[i] = gens[i].random(_BLOCK)

        dcur = dist[act]
        d_step = np.maximum(dcur, policy.approach_factor * delta_abs)
        dt = np.minimum(dt_max, (c * d_step) ** 2)
        rem = t_max - tau[act]
        censor_now = dt >= rem

        move = nbuf[act, ptr, :] * np.sqrt(dt)[:, None]
        newp = pos[act] + move
        assert np.all(np.isfinite(newp)), "non-finite flight state"
        mlen = np.sqrt(np.einsum("nd,nd->n", move, move))
        u = ubuf[act, ptr]

        d2 = fld.lower(newp)
        with np.errstate(over="ignore", divide="ignore"):
            p_up = np.exp(-2.0 * dcur * d2 / dt)
        maybe_cross = mlen >= dcur
        if not fld.lower_is_exact:
            need = (~censor_now) & ((u < p_up) | (d2 < delta_abs) | maybe_cross)
            if np.any(need):
                d2 = d2.copy()
                d2[need] = fld.exact(newp[need])
                with np.errstate(over="ignore", divide="ignore"):
                    p_up = np.exp(-2.0 * dcur * d2 / dt)

        inside = ~maybe_cross
        if np.any(maybe_cross):
            mc = np.flatnonzero(maybe_cross)
            inside[mc] = fld.contains(newp[mc])

        crossed = ~inside & ~censor_now
        fired = inside & ~censor_now & policy.bridge_correction & (u < p_up)
        absorbed = inside & ~censor_now & ~fired & (d2 < delta_abs)
        cont = inside & ~censor_now & ~fired & ~absorbed

        # terminal-step time conventions: linear interpolation to the
        # crossing for hard exits, half a step for bridge kills
        dtau = np.where(
            censor_now, rem,
            np.where(crossed, dt * dcur / (dcur + np.abs(d2)),
                     np.where(fired, 0.5 * dt, dt)))
        tau[act] += dtau
        kbin = np.floor(np.log2(dcur)).astype(np.int64) + 1
        kbin = np.minimum(np.maximum(kbin, _SHELL_MIN), _SHELL_MAX)
        shells[act, kbin - _SHELL_MIN] += dtau

        ended = crossed | fired | absorbed
        if np.any(ended):
            idx = act[ended]
            final[idx] = newp[ended]
            alive[idx] = False
        if np.any(censor_now):
            idx = act[censor_now]
            tau[idx] = t_max
            censored[idx] = True
            alive[idx] = False
        if np.any(cont):
            idx = act[cont]
            pos[idx] = newp[cont]
            dist[idx] = d2[cont]
        steps[act] += 1

    exit_pts = final.copy()
    non_cens = np.flatnonzero(~censored)
    if non_cens.size:
        exit_pts[non_cens] = fld.project(final[non_cens])
    return tau, exit_pts, censored, shells


def _records_from_arrays(flight_ids, start_cubes, starts, tau, exit_pts, censored, shells):
    records = []
    for j, fid in enumerate(flight_ids):
        occ = {
            int(k + _SHELL_MIN): float(v)
            for k, v in enumerate(shells[j])
            if v > 0.0
        }
        disp = float(np.linalg.norm(exit_pts[j] - starts[j]))
        records.append(FlightRecord(
            flight_id=int(fid),
            start_cube=start_cubes[j],
            start=starts[j].copy(),
            tau=float(tau[j]),
            exit_point=exit_pts[j].copy(),
            displacement=disp,
            censored=bool(censored[j]),
            shell_occupation=occ,
        ))
    return records


def _epsilon_layer(domain: Domain, decomposition: WhitneyDecomposition, epsilon: float):
    from .geometry import r_omega as _r_omega

    r_om = _r_omega(domain, decomposition)
    lo_eps = 2.0 ** (decomposition.min_generation + 3)
    if not (lo_eps <= epsilon < r_om):
        raise ConfigurationError(
            f"epsilon={epsilon:g} must lie in [{lo_eps:g}, {r_om:g}) for this decomposition")
    cubes, centers, gens = layer_with_bounds(decomposition, domain, epsilon)
    return cubes, centers, gens, r_om


def _run_block(domain: Domain, centers: np.ndarray, cube_meta,
               policy: StepPolicy, master_seed: int, first_id: int, count: int,
               batch: int = 8192):
    records = []
    n_layer = centers.shape[0]
    for b0 in range(first_id, first_id + count, batch):
        ids = np.arange(b0, min(b0 + batch, first_id + count), dtype=np.int64)
        picks = np.array([
            int(_stream(master_seed, int(fid)).integers(0, n_layer)) for fid in ids
        ])
        starts = centers[picks]
        tau, exit_pts, cens, shells = _simulate(
            domain, starts, policy, master_seed, ids, draw_start_index=n_layer)
        start_cubes = [cube_meta[p] for p in picks]
        records.extend(_records_from_arrays(ids, start_cubes, starts, tau, exit_pts, cens, shells))
    return records


_WORKER_CTX: dict = {}


def _worker_init(domain, centers, cube_meta, policy, master_seed):
    _WORKER_CTX["args"] = (domain, centers, cube_meta, policy, master_seed)


def _worker_run(task):
    first_id, count = task
    domain, centers, cube_meta, policy, master_seed = _WORKER_CTX["args"]
    return _run_block(domain, centers, cube_meta, policy, master_seed, first_id, count)


def sample_flight(domain: Domain, decomposition: WhitneyDecomposition, epsilon: float,
                  policy: StepPolicy, seed: int, flight_id: int) -> FlightRecord:
    """Simulate one flight; a pure function of (seed, flight_id)."""
    cubes, centers, _, r_om = _epsilon_layer(domain, decomposition, epsilon)
    resolved = policy.resolve(epsilon, r_om)
    return _run_block(domain, centers, cubes, resolved, seed, flight_id, 1)[0]


def run_campaign(domain: Domain, decomposition: WhitneyDecomposition, epsilon: float,
                 policy: StepPolicy, n_flights: int, master_seed: int,
                 workers: int = 1) -> list[FlightRecord]:
    """Simulate an ensemble of flights, reproducible across worker counts."""
    if n_flights < 1:
        raise ConfigurationError("n_flights must be >= 1")
    cubes, centers, _, r_om = _epsilon_layer(domain, decomposition, epsilon)
    resolved = policy.resolve(epsilon, r_om)
    domain.prepare_fast_queries()  # build acceleration once; workers inherit it
    if workers <= 1:
        return _run_block(domain, centers, cubes, resolved, master_seed, 0, n_flights)

    chunk = max(1, math.ceil(n_flights / (workers * 4)))
    tasks = [(i, min(chunk, n_flights - i)) for i in range(0, n_flights, chunk)]
    records: list[FlightRecord] = []
    with ProcessPoolExecutor(
        max_workers=workers,
        initializer=_worker_init,
        initargs=(domain, centers, cubes, resolved, master_seed),
    ) as pool:
        for part in pool.map(_worker_run, tasks):
            records.extend(part)
    records.sort(key=lambda r: r.flight_id)
    return records


def run_paths_from(domain: Domain, start, n_paths: int, policy: StepPolicy,
                   master_seed: int, r_omega_value: float | None = None,
                   epsilon_scale: float | None = None) -> list[FlightRecord]:
    """Paths from a fixed start point (validation probes against exact laws).

    ``policy`` fields left as ``None`` resolve against ``r_omega_value``
    (default: the start's own boundary distance capped at 1) and
    ``epsilon_scale`` (default: the start's boundary distance).
    """
    if n_paths < 1:
        raise ConfigurationError("n_paths must be >= 1")
    start = np.asarray(start, dtype=float)
    d0 = float(domain.signed_distance(start))
    if d0 <= 0.0:
        raise ValueError("start point must lie strictly inside the domain")
    r_om = r_omega_value if r_omega_value is not None else min(1.0, d0)
    eps = epsilon_scale if epsilon_scale is not None else d0
    resolved = policy.resolve(eps, r_om)
    ids = np.arange(n_paths, dtype=np.int64)
    starts = np.tile(start, (n_paths, 1))
    tau, exit_pts, cens, shells = _simulate(domain, starts, resolved, master_seed, ids)
    return _records_from_arrays(ids, [None] * n_paths, starts, tau, exit_pts, cens, shells)


@dataclass(frozen=True)
class DeltaRegReport:
    """Monte Carlo estimate of the boundary-hitting lower bound L.

    For each probe x, paths start at x and are killed on leaving
    B(x, 2 d_x) intersected with the domain; ``fractions`` holds the
    per-point probability of ending on the domain boundary rather than
    the sphere, and ``l_hat`` is the minimum over probes.
    """

    points: np.ndarray
    distances: np.ndarray
    fractions: np.ndarray
    stderrs: np.ndarray
    n_paths: int

    @property
    def l_hat(self) -> float:
        return float(np.min(self.fractions))

    def to_dict(self) -> dict:
        return {
            "l_hat": self.l_hat,
            "n_paths": self.n_paths,
            "points": self.points.tolist(),
            "distances": self.distances.tolist(),
            "fractions": self.fractions.tolist(),
            "stderrs": self.stderrs.tolist(),
        }


def estimate_delta_regularity(domain: Domain, points: Sequence, n_paths: int,
                              policy: StepPolicy, seed: int,
                              batch: int = 25000) -> DeltaRegReport:
    """Estimate the uniform boundary-hitting probability from near points.

    Paths from all probe points run in shared batches; path j of point m
    consumes the Philox stream keyed by (seed, m * n_paths + j), so the
    result does not depend on batching.  Per-point scale defaults:
    absorption at d_x/1000, horizon 100 (2 d_x)^2 (timed-out paths count
    as sphere exits, lowering the estimate, never inflating it).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != domain.dimension:
        raise ValueError("points must have shape (m, dimension)")
    d_x = domain.signed_distance(pts)
    if np.any(d_x <= 0.0):
        raise ValueError("every probe point must lie strictly inside the domain")
    if np.any(d_x >= 1.0):
        raise ValueError("probe points must satisfy dist < R_Omega <= 1")

    fld = _Field(domain)
    c = policy.c_step
    m_pts = pts.shape[0]
    hits = np.zeros(m_pts, dtype=np.int64)
    total = m_pts * n_paths
    dim = domain.dimension

    for b0 in range(0, total, batch):
        ids = np.arange(b0, min(b0 + batch, total), dtype=np.int64)
        owner = ids // n_paths
        n = ids.size
        x0 = pts[owner]
        dx = np.asarray(d_x)[owner]
        rad = 2.0 * dx
        delta_abs = np.full(n, policy.delta_abs) if policy.delta_abs is not None else dx * 1e-3
        dt_max = np.full(n, policy.dt_max) if policy.dt_max is not None else rad**2 / 100.0
        t_cap = np.full(n, policy.t_max) if policy.t_max is not None else 100.0 * rad**2

        gens = [_stream(seed, int(i)) for i in ids]
        pos = x0.copy()
        dist_b = dx.copy()
        dist_s = rad.copy()
        tau = np.zeros(n)
        alive = np.ones(n, dtype=bool)
        hit_boundary = np.zeros(n, dtype=bool)
        nbuf = np.empty((n, _BLOCK, dim))
        ubuf = np.empty((n, _BLOCK, 2))
        steps = np.zeros(n, dtype=np.int64)
        while True:
            act = np.flatnonzero(alive)
            if act.size == 0:
                break
            ptr = steps[act] % _BLOCK
            for i in act[ptr == 0]:
                nbuf[i] = gens[i].standard_normal((_BLOCK, dim))
                ubuf[i] = gens[i].random((_BLOCK, 2))
            db = dist_b[act]
            ds = dist_s[act]
            gap = np.maximum(np.minimum(db, ds), policy.approach_factor * delta_abs[act])
            dt = np.minimum(dt_max[act], (c * gap) ** 2)
            over = tau[act] + dt >= t_cap[act]  # stuck paths count as sphere exits
            move = nbuf[act, ptr, :] * np.sqrt(dt)[:, None]
            newp = pos[act] + move
            mlen = np.sqrt(np.einsum("nd,nd->n", move, move))
            u_b = ubuf[act, ptr, 0]
            u_s = ubuf[act, ptr, 1]

            b2 = fld.lower(newp)
            if not fld.lower_is_exact:
                with np.errstate(over="ignore", divide="ignore"):
                    pb_up = np.exp(-2.0 * db * b2 / dt)
                need = (u_b < pb_up) | (b2 < delta_abs[act]) | (mlen >= db)
                if np.any(need):
                    b2 = b2.copy()
                    b2[need] = fld.exact(newp[need])
            s2 = rad[act] - np.sqrt(np.einsum("nd,nd->n", newp - x0[act], newp - x0[act]))

            inside_b = mlen < db
            mc = np.flatnonzero(~inside_b)
            if mc.size:
                inside_b[mc] = fld.contains(newp[mc])
            with np.errstate(over="ignore", divide="ignore"):
                p_b = np.exp(-2.0 * db * np.maximum(b2, 0.0) / dt)
                p_s = np.exp(-2.0 * ds * np.maximum(s2, 0.0) / dt)

            cross_b = ~inside_b
            cross_s = inside_b & (s2 <= 0.0)
            both = cross_b & (s2 <= 0.0)
            if np.any(both):
                # resolve by the earlier linear crossing fraction
                fb = db[both] / (db[both] + np.abs(b2[both]))
                fs = ds[both] / (ds[both] + np.abs(s2[both]))
                b_first = fb <= fs
                cross_s[np.flatnonzero(both)[b_first]] = False
                cross_b[np.flatnonzero(both)[~b_first]] = False
            fire_b = inside_b & ~cross_s & (u_b < p_b)
            fire_s = inside_b & ~cross_s & ~fire_b & (u_s < p_s)
            absorb = inside_b & ~cross_s & ~fire_b & ~fire_s & (b2 < delta_abs[act])
            ended_b = (cross_b | fire_b | absorb) & ~over
            ended_s = (cross_s | fire_s | over) & ~ended_b
            cont = ~ended_b & ~ended_s

            tau[act] += dt
            hit_boundary[act[ended_b]] = True
            alive[act[ended_b | ended_s]] = False
            ai = act[cont]
            pos[ai] = newp[cont]
            dist_b[ai] = b2[cont]
            dist_s[ai] = s2[cont]
            steps[act] += 1
        np.add.at(hits, owner[hit_boundary], 1)

    p_hat = hits / n_paths
    stderrs = np.sqrt(np.maximum(p_hat * (1.0 - p_hat), 1.0 / n_paths) / n_paths)
    return DeltaRegReport(points=pts, distances=np.asarray(d_x), fractions=p_hat,
                          stderrs=stderrs, n_paths=n_paths)


def write_records_jsonl(fh: TextIO, records: Iterable[FlightRecord],
                        header: dict | None = None) -> None:
    """Persist records as JSON lines, preceded by one header line."""
    hdr = {"format_version": 1, "kind": "flight_records"}
    if header:
        hdr.update(header)
    fh.write(json.dumps(hdr, sort_keys=True) + "\n")
    for rec in records:
        fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")


def read_records_jsonl(fh: TextIO) -> tuple[dict, list[FlightRecord]]:
    header = json.loads(fh.readline())
    records = [FlightRecord.from_json_dict(json.loads(line)) for line in fh if line.strip()]
    return header, records
