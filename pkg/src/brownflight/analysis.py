"""Survival curves, tail-exponent fits, and the scaling-law verification report.

The flight-duration tail is fitted as survival ~ C * (eps/sqrt(t))^alpha
on a log grid, i.e. alpha = -2 * d log S / d log t; the hitting-distance
tail as P(disp > r) ~ C * (eps/r)^beta.  Confidence intervals come from
bootstrap resampling over flights (grid values of one curve are
dependent, flights are not).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitWindowError
from .flight import FlightRecord
from .geometry import Domain
from .whitney import WhitneyDecomposition, layer_with_bounds

__all__ = [
    "SurvivalCurve",
    "ExponentFit",
    "DimensionEstimate",
    "VerificationReport",
    "empirical_survival",
    "fit_exponent",
    "fit_length_exponent",
    "whitney_dimension",
    "nested_windows",
    "sausage_upper_bound",
    "theorem_report",
]

BOOTSTRAP_RESAMPLES = 200


@dataclass
class SurvivalCurve:
    """Empirical tail P(tau > t) on a log-spaced grid.

    Censored flights count as tau > t for every grid point below the
    censoring horizon; the grid is truncated there.
    """

    grid: np.ndarray
    survival: np.ndarray
    n_samples: int
    epsilon: float
    taus: np.ndarray = field(repr=False)
    censored: np.ndarray = field(repr=False)
    t_max: float | None = None

    def stderr(self) -> np.ndarray:
        s = self.survival
        return np.sqrt(np.maximum(s * (1.0 - s), 0.0) / self.n_samples)


@dataclass(frozen=True)
class ExponentFit:
    """Power-law tail exponent with bootstrap confidence interval."""

    exponent: float
    intercept: float
    window: tuple[float, float]
    ci_90: tuple[float, float]
    r_squared: float
    n_resamples: int = BOOTSTRAP_RESAMPLES

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "window": list(self.window),
            "ci_90": list(self.ci_90),
            "r_squared": self.r_squared,
            "n_resamples": self.n_resamples,
        }


@dataclass(frozen=True)
class DimensionEstimate:
    """Box-scaling dimension from per-generation Whitney counts."""

    value: float
    generations_used: list[int]
    ratios: dict[int, float]
    stderr: float

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "generations_used": self.generations_used,
            "ratios": {str(k): v for k, v in self.ratios.items()},
            "stderr": self.stderr,
        }


def empirical_survival(records: list[FlightRecord], grid: np.ndarray | None = None,
                       n_points: int = 48, epsilon: float | None = None) -> SurvivalCurve:
    """Build the empirical survival curve of flight durations.

    Needs at least 100 non-censored records.  Without an explicit grid,
    a log grid spanning the observed durations (clipped below the
    censoring horizon) is used.
    """
    if not records:
        raise ValueError("no records")
    taus = np.array([r.tau for r in records])
    cens = np.array([r.censored for r in records])
    if int((~cens).sum()) < 100:
        raise ValueError(f"need >= 100 non-censored records, have {int((~cens).sum())}")
    t_max = float(taus[cens].min()) if np.any(cens) else None
    if epsilon is None:
        epsilon = 0.0
    if grid is None:
        t_lo = float(np.quantile(taus, 0.01))
        t_hi = float(taus.max())
        if t_max is not None:
            t_hi = min(t_hi, t_max)
        grid = np.geomspace(max(t_lo, 1e-300), t_hi, n_points)
    grid = np.asarray(grid, dtype=float)
    if t_max is not None:
        grid = grid[grid < t_max]
    order = np.sort(taus)
    survival = 1.0 - np.searchsorted(order, grid, side="right") / taus.size
    return SurvivalCurve(
        grid=grid,
        survival=survival,
        n_samples=taus.size,
        epsilon=float(epsilon),
        taus=taus,
        censored=cens,
        t_max=t_max,
    )


def _tail_on_grid(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    order = np.sort(values)
    return 1.0 - np.searchsorted(order, grid, side="right") / values.size


def _gls_slope(x: np.ndarray, y: np.ndarray, tail: np.ndarray) -> float:
    """Generalized least-squares slope of y = log(tail) against x.

    Empirical tail values at nearby grid points share samples, so their
    errors are strongly correlated; the increments y_{i+1} - y_i are
    independent with variance proportional to 1/tail_{i+1} - 1/tail_i,
    which whitens the regression.
    """
    dy = np.diff(y)
    dx = np.diff(x)
    var = 1.0 / tail[1:] - 1.0 / tail[:-1]
    ok = var > 0.0
    if not np.any(ok):
        return 0.0  # flat curve: no deaths inside the window
    w = dx[ok] / var[ok]
    return float(np.sum(w * dy[ok]) / np.sum(w * dx[ok]))


def _fit_loglog(grid: np.ndarray, tail: np.ndarray, window: tuple[float, float],
                what: str) -> tuple[np.ndarray, float, float, float]:
    t_lo, t_hi = window
    mask = (grid >= t_lo) & (grid <= t_hi)
    if mask.sum() < 3:
        raise FitWindowError(
            f"window ({t_lo:g}, {t_hi:g}) holds fewer than 3 grid points of the {what} curve")
    if np.any(tail[mask] <= 0.0):
        bad = grid[mask][tail[mask] <= 0.0]
        raise FitWindowError(
            f"{what} tail hits zero inside the fit window; shrink the window below {bad.min():g}",
            diagnostic={"zero_points": bad.tolist(), "window": [t_lo, t_hi]})
    x = np.log(grid[mask])
    y = np.log(tail[mask])
    slope = _gls_slope(x, y, tail[mask])
    intercept = float(np.mean(y - slope * x))
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return mask, slope, intercept, r2


def _bootstrap_exponent(values: np.ndarray, grid: np.ndarray, mask: np.ndarray,
                        slope_to_exponent: float, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    grid_w = grid[mask]
    lx = np.log(grid_w)
    est = []
    for _ in range(BOOTSTRAP_RESAMPLES):
        sample = values[rng.integers(0, values.size, values.size)]
        tail = _tail_on_grid(sample, grid_w)
        ok = tail > 0.0
        if ok.sum() < 3:
            continue
        slope = _gls_slope(lx[ok], np.log(tail[ok]), tail[ok])
        est.append(slope_to_exponent * slope)
    if not est:
        return math.nan, math.nan
    lo, hi = np.percentile(est, [5.0, 95.0])
    return float(lo), float(hi)


def fit_exponent(curve: SurvivalCurve, window: tuple[float, float],
                 seed: int = 0) -> ExponentFit:
    """Fit survival ~ C (eps/sqrt(t))^alpha over ``window``; alpha = -2 slope.

    The line on (log t, log survival) is fitted by generalized least
    squares (see _gls_slope); the confidence interval resamples flights,
    not grid points, since grid values of one curve are dependent.
    """
    if curve.epsilon > 0.0 and window[0] < 10.0 * curve.epsilon**2:
        raise FitWindowError(
            f"window starts below 10 epsilon^2 = {10*curve.epsilon**2:g}; "
            "durations there are dominated by the start offset")
    mask, slope, intercept, r2 = _fit_loglog(curve.grid, curve.survival, window, "survival")
    ci = _bootstrap_exponent(curve.taus, curve.grid, mask, -2.0, seed)
    return ExponentFit(
        exponent=-2.0 * slope,
        intercept=intercept,
        window=(float(window[0]), float(window[1])),
        ci_90=ci,
        r_squared=r2,
    )


def fit_length_exponent(records: list[FlightRecord], epsilon: float,
                        window_r: tuple[float, float], n_points: int = 40,
                        seed: int = 0) -> ExponentFit:
    """Fit P(displacement > r) ~ C (eps/r)^beta over ``window_r``.

    Censored flights carry no hitting point and are excluded.
    """
    disp = np.array([r.displacement for r in records if not r.censored])
    if disp.size < 100:
        raise ValueError("need >= 100 non-censored records")
    grid = np.geomspace(window_r[0], window_r[1], n_points)
    tail = _tail_on_grid(disp, grid)
    mask, slope, intercept, r2 = _fit_loglog(grid, tail, window_r, "displacement")
    ci = _bootstrap_exponent(disp, grid, mask, -1.0, seed)
    return ExponentFit(
        exponent=-1.0 * slope,
        intercept=intercept,
        window=(float(window_r[0]), float(window_r[1])),
        ci_90=ci,
        r_squared=r2,
    )


def whitney_dimension(counts: dict[int, int]) -> DimensionEstimate:
    """Scaling dimension from log2 of per-generation cube counts.

    Generations are reindexed as j = -k (so j grows as cubes shrink).
    Raw pair slopes log2(W_{j+1}/W_j) converge like d + O(2^-j): corner
    and edge cubes contribute subleading geometric terms that bias any
    plain mid-range fit at reachable depths.  The two-point Richardson
    extrapolation 2 s_{j+1} - s_j cancels the leading correction, so the
    estimate averages the last two extrapolated slopes; raw per-pair
    slopes are kept as diagnostics.
    """
    usable = {k: c for k, c in counts.items() if c > 0}
    if len(usable) < 4:
        raise ValueError(f"need >= 4 generations with positive counts, have {len(usable)}")
    ks = sorted(usable, reverse=True)  # coarse -> fine
    j = -np.array(ks, dtype=float)
    logw = np.log2([usable[k] for k in ks])
    dj = np.diff(j)
    s = np.diff(logw) / dj
    r = 2.0 * s[1:] - s[:-1]
    tail = r[-2:]
    value = float(np.mean(tail))
    stderr = float(np.abs(tail[-1] - tail[0]) / 2.0) if tail.size > 1 else math.inf
    ratios = {int(jj): float(sv) for jj, sv in zip(j[:-1] + dj, s)}
    return DimensionEstimate(
        value=value,
        generations_used=[int(v) for v in (j[:-1] + dj)[-3:]],
        ratios=ratios,
        stderr=stderr,
    )


def nested_windows(epsilon: float, r_omega_value: float) -> list[tuple[float, float]]:
    """Three nested fit windows inside [10 eps^2, R^2/10], widest first.

    All windows share the geometric center eps * R; spans in decades are
    D, (D+1)/2 and 1, where D is the span of the full window.  Raises
    when even the full window is narrower than one decade.
    """
    t_lo = 10.0 * epsilon**2
    t_hi = r_omega_value**2 / 10.0
    if t_hi <= t_lo:
        raise FitWindowError("epsilon too large: the default fit window is empty")
    decades = math.log10(t_hi / t_lo)
    if decades < 1.0:
        raise FitWindowError(
            f"default fit window spans only {decades:.2f} decades; decrease epsilon")
    center = math.sqrt(t_lo * t_hi)
    spans = [decades, (decades + 1.0) / 2.0, 1.0]
    return [
        (center / 10.0 ** (s / 2.0), center * 10.0 ** (s / 2.0))
        for s in spans
    ]


def sausage_upper_bound(domain: Domain, decomposition: WhitneyDecomposition,
                        epsilon: float, grid: np.ndarray,
                        r_omega_value: float) -> np.ndarray:
    """Layer-count upper-bound profile for the survival tail.

    For each t evaluates sup over N of
    2^(-N d) + sum_{k=0..N} (#S_{sqrt(t)/2^k} / #S_eps)
                           * (2^-k sqrt(t) / eps)^(d-2),
    with layer radii clipped to the resolved range of the decomposition.
    Used as a diagnostic when the clean power-law hypothesis fails.
    """
    d = domain.dimension
    r_min = 2.0 ** (decomposition.min_generation + 2)  # resolved layer range

    def count_at(r: float) -> int:
        r = min(max(r, r_min), r_omega_value)
        cubes, _, _ = layer_with_bounds(decomposition, domain, r)
        return len(cubes)

    n_eps = count_at(epsilon)
    out = np.empty(grid.size)
    for i, t in enumerate(grid):
        rt = math.sqrt(t)
        n_max = max(0, int(math.floor(math.log2(max(rt / r_min, 1.0)))))
        best = 0.0
        total = 0.0
        for k in range(n_max + 1):
            r = rt / 2.0**k
            total += (count_at(r) / n_eps) * (r / epsilon) ** (d - 2)
            best = max(best, 2.0 ** (-(k) * d) + total)
        out[i] = best
    return out


@dataclass
class VerificationReport:
    """Comparison of measured tail exponents against the scaling target."""

    domain_name: str
    dimension: int
    epsilon: float
    n_flights: int
    n_censored: int
    measured_dimension: dict
    known_dimension: float | None
    target_alpha: float
    tolerance_alpha: float
    alpha_fits: list[dict]
    alpha_used: dict
    alpha_pass: bool
    target_beta: float | None = None
    tolerance_beta: float | None = None
    beta_fit: dict | None = None
    beta_pass: bool | None = None
    hypothesis: dict | None = None
    diagnostic: dict | None = None

    @property
    def passed(self) -> bool:
        ok = self.alpha_pass
        if self.beta_pass is not None:
            ok = ok and self.beta_pass
        return ok

    def to_dict(self) -> dict:
        return {
            "domain": self.domain_name,
            "dimension": self.dimension,
            "epsilon": self.epsilon,
            "n_flights": self.n_flights,
            "n_censored": self.n_censored,
            "measured_dimension": self.measured_dimension,
            "known_dimension": self.known_dimension,
            "target_alpha": self.target_alpha,
            "tolerance_alpha": self.tolerance_alpha,
            "alpha_fits": self.alpha_fits,
            "alpha_used": self.alpha_used,
            "alpha_pass": self.alpha_pass,
            "target_beta": self.target_beta,
            "tolerance_beta": self.tolerance_beta,
            "beta_fit": self.beta_fit,
            "beta_pass": self.beta_pass,
            "hypothesis": self.hypothesis,
            "diagnostic": self.diagnostic,
            "passed": self.passed,
        }

    def to_text(self) -> str:
        lines = [
            f"domain: {self.domain_name} (d={self.dimension})",
            f"epsilon: {self.epsilon:g}   flights: {self.n_flights} "
            f"({self.n_censored} censored)",
            f"boundary dimension: measured {self.measured_dimension['value']:.4f}"
            + (f", known {self.known_dimension:.5f}" if self.known_dimension else ""),
            f"duration tail: target alpha = {self.target_alpha:.5f} "
            f"(tolerance {self.tolerance_alpha:g})",
        ]
        for i, f in enumerate(self.alpha_fits):
            tag = " <- used" if f == self.alpha_used else ""
            lines.append(
                f"  window {i}: ({f['window'][0]:.3e}, {f['window'][1]:.3e})  "
                f"alpha = {f['exponent']:.4f}  ci90 = [{f['ci_90'][0]:.4f}, {f['ci_90'][1]:.4f}]"
                f"  r2 = {f['r_squared']:.4f}{tag}")
        lines.append(f"duration tail check: {'PASS' if self.alpha_pass else 'FAIL'}")
        if self.beta_fit is not None:
            lines.append(
                f"length tail: target beta = {self.target_beta:.5f} "
                f"(tolerance {self.tolerance_beta:g})  beta = {self.beta_fit['exponent']:.4f}"
                f"  -> {'PASS' if self.beta_pass else 'FAIL'}")
        if self.hypothesis is not None:
            lines.append(
                f"layer-count power law: fitted d = {self.hypothesis['fitted_dimension']:.4f}, "
                f"spread = {self.hypothesis['spread']:.2f} "
                f"({'holds' if self.hypothesis['holds'] else 'fails'} at desk scale)")
        if self.diagnostic is not None:
            lines.append("layer-count upper-bound diagnostic included (see report.json)")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def theorem_report(domain: Domain, curve: SurvivalCurve, fits: list[ExponentFit],
                   dimension_estimate: DimensionEstimate,
                   decomposition: WhitneyDecomposition | None = None,
                   r_omega_value: float | None = None,
                   beta_fit: ExponentFit | None = None,
                   hypothesis=None,
                   tolerance_alpha: float | None = None,
                   tolerance_beta: float | None = None,
                   target_dimension: float | None = None) -> VerificationReport:
    """Assemble the scaling-law verification report.

    The target exponent is d_M + 2 - d with d_M the known boundary
    dimension when available (else the measured one, or an explicit
    ``target_dimension`` override).  The acceptance verdict uses the
    middle of the three nested windows.  When the layer-count power law
    fails (or a decomposition is supplied), the report carries the
    layer-count upper-bound profile alongside the empirical curve.
    """
    d = domain.dimension
    known = domain.known_boundary_dimension
    d_m = target_dimension if target_dimension is not None else (
        known if known is not None else dimension_estimate.value)
    target_alpha = d_m + 2.0 - d
    smooth = known is not None and abs(known - (d - 1)) < 1e-9
    tol_a = tolerance_alpha if tolerance_alpha is not None else (0.15 if smooth else 0.2)
    used = fits[1] if len(fits) >= 2 else fits[0]
    alpha_pass = abs(used.exponent - target_alpha) <= tol_a

    target_beta = d_m - (d - 2.0)
    tol_b = tolerance_beta if tolerance_beta is not None else (0.15 if smooth else 0.2)
    beta_pass = None
    if beta_fit is not None:
        beta_pass = abs(beta_fit.exponent - target_beta) <= tol_b

    diagnostic = None
    if decomposition is not None and r_omega_value is not None:
        # always attached; mandatory whenever the layer-count power law failed
        bound = sausage_upper_bound(domain, decomposition, curve.epsilon,
                                    curve.grid, r_omega_value)
        diagnostic = {
            "t": curve.grid.tolist(),
            "upper_bound_profile": bound.tolist(),
            "empirical_survival": curve.survival.tolist(),
        }

    return VerificationReport(
        domain_name=domain.name,
        dimension=d,
        epsilon=curve.epsilon,
        n_flights=curve.n_samples,
        n_censored=int(curve.censored.sum()),
        measured_dimension=dimension_estimate.to_dict(),
        known_dimension=known,
        target_alpha=target_alpha,
        tolerance_alpha=tol_a,
        alpha_fits=[f.to_dict() for f in fits],
        alpha_used=used.to_dict(),
        alpha_pass=alpha_pass,
        target_beta=target_beta,
        tolerance_beta=tol_b,
        beta_fit=None if beta_fit is None else beta_fit.to_dict(),
        beta_pass=beta_pass,
        hypothesis=None if hypothesis is None else hypothesis.to_dict(),
        diagnostic=diagnostic,
    )
