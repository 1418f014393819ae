"""Explicit bound shapes and empirical two-sided certification.

The shapes are evaluated exactly as written; the multiplicative and Gaussian
constants are fitted from data, since only their existence is known.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import OUTSIDE, DomainSpec, as_points
from .levy_sampling import ProcessParams, free_density


@dataclass(frozen=True)
class EnvelopeParams:
    C_gauss: float
    C_mult: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.C_gauss) and self.C_gauss > 0):
            raise ValueError("C_gauss must be finite and positive")
        if not (math.isfinite(self.C_mult) and self.C_mult >= 1):
            raise ValueError("C_mult must be finite and >= 1")


def _pairs(dom: DomainSpec, x, y):
    px, sx = as_points(x, dom.dimension)
    py, sy = as_points(y, dom.dimension)
    px, py = np.broadcast_arrays(px, py)
    cx = dom.component_index(px)
    cy = dom.component_index(py)
    bad = (cx == OUTSIDE) | (cy == OUTSIDE)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"point pair ({px[i].tolist()}, {py[i].tolist()}) is not in the domain")
    return px, py, cx, cy, sx and sy


def jump_term(params: ProcessParams, t: float, r) -> np.ndarray:
    """(a^alpha t / r^{d+alpha}) ^ t^{-d/2}, equal to t^{-d/2} at r = 0 when a > 0."""
    r = np.asarray(r, dtype=float)
    cap = t ** (-params.d / 2)
    w = params.weight
    if w == 0:
        return np.zeros_like(r)
    with np.errstate(divide="ignore", over="ignore"):
        raw = np.where(r > 0, w * t / r ** (params.d + params.alpha), np.inf)
    return np.minimum(raw, cap)


def h_envelope(dom: DomainSpec, params: ProcessParams, C: float, t: float, x, y,
               cross_gaussian: bool = False):
    """The boundary-weighted envelope h^a_C(t, x, y).

    ``cross_gaussian=True`` keeps the Gaussian term for pairs in different
    components; it exists only as a negative control for certification.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if not C > 0:
        raise ValueError("C must be positive")
    px, py, cx, cy, single = _pairs(dom, x, y)
    d = dom.dimension
    r = np.linalg.norm(px - py, axis=1)
    bx = np.minimum(1.0, dom.distance(px) / math.sqrt(t))
    by = np.minimum(1.0, dom.distance(py) / math.sqrt(t))
    gauss = t ** (-d / 2) * np.exp(-C * r ** 2 / t)
    if not cross_gaussian:
        gauss = np.where(cx == cy, gauss, 0.0)
    out = bx * by * (gauss + jump_term(params, t, r))
    return float(out[0]) if single else out


def free_envelope(params: ProcessParams, side: str, env: EnvelopeParams, t: float, r,
                  form: str = "full"):
    """Two-sided free-space shapes with constants C_mult (outer) and C_gauss (exponent).

    ``form="full"`` is the all-time, all-a shape with the on-diagonal cap
    t^{-d/2} ^ (a^alpha t)^{-d/alpha}; ``form="finite"`` is the bounded
    (a, t) version with cap t^{-d/2}.  The lower side uses exponent
    C_gauss * r^2 / t, the upper side r^2 / (C_gauss t).
    """
    if side not in ("lower", "upper"):
        raise ValueError("side must be 'lower' or 'upper'")
    if form not in ("full", "finite"):
        raise ValueError("form must be 'full' or 'finite'")
    if not t > 0:
        raise ValueError("t must be positive")
    r = np.asarray(r, dtype=float)
    d, alpha = params.d, params.alpha
    c = env.C_gauss if side == "lower" else 1 / env.C_gauss
    gauss = t ** (-d / 2) * np.exp(-c * r ** 2 / t)
    if form == "finite":
        val = gauss + jump_term(params, t, r)
    else:
        if params.weight == 0:
            val = np.minimum(t ** (-d / 2), gauss)
        else:
            stable_cap = (params.weight * t) ** (-d / alpha)
            with np.errstate(divide="ignore", over="ignore"):
                jump = np.minimum(stable_cap, np.where(r > 0, params.weight * t / r ** (d + alpha), np.inf))
            val = np.minimum(min(t ** (-d / 2), stable_cap), gauss + jump)
    val = val / env.C_mult if side == "lower" else val * env.C_mult
    return float(val) if np.ndim(r) == 0 else val


TINY = 1e-250


@dataclass
class FreeFit:
    env: EnvelopeParams
    lower_mult: float
    upper_mult: float
    form: str

    margin: float = 1.0

    @property
    def spread(self) -> float:
        """Width of the sandwich: tightest upper envelope over tightest lower one.

        Invariant to rescaling the shapes, unlike C_mult which is clipped at 1.
        """
        return self.lower_mult * self.upper_mult * self.margin ** 2


def _free_ratios(cases, C_gauss, form):
    lo, hi = [], []
    unit = EnvelopeParams(C_gauss, 1.0)
    with np.errstate(divide="ignore"):
        for params, t, r, p in cases:
            lo.append(free_envelope(params, "lower", unit, t, r, form) / p)
            hi.append(p / free_envelope(params, "upper", unit, t, r, form))
    return float(np.max(np.concatenate(lo))), float(np.max(np.concatenate(hi)))


def fit_free_envelope(calibration: Iterable[tuple[ProcessParams, float, np.ndarray]], form: str = "full",
                      c_grid: Sequence[float] = tuple(np.geomspace(1.0, 16.0, 33)),
                      margin: float = 1.0) -> FreeFit:
    """Fit (C_gauss, C_mult) so the free density sits between the envelopes on the grid.

    For each candidate C_gauss the worst lower and upper ratios are computed;
    the candidate with the smallest product (the sandwich width) is kept.
    ``margin`` inflates both multipliers for out-of-sample use.
    """
    cases = []
    for p, t, r in calibration:
        r = np.asarray(r, float)
        val = free_density(p, t, r)
        keep = val > TINY          # drop points whose density underflows
        cases.append((p, t, r[keep], val[keep]))
    best = None
    for c in c_grid:
        lo, hi = _free_ratios(cases, c, form)
        if best is None or lo * hi < best[1] * best[2]:
            best = (c, lo, hi)
    c, lo, hi = best
    return FreeFit(EnvelopeParams(float(c), max(lo * margin, hi * margin, 1.0)), lo, hi, form, margin)


def calibration_grid(alpha: float, d: int, n_weight: int = 41, n_r: int = 81) -> list:
    """Calibration cases at t = 1 covering the scale-invariant pair (a_t, r / sqrt(t)).

    Both the density and the shapes are scale covariant, so ratios depend on
    a * t^{(2 - alpha) / (2 alpha)} and r / sqrt(t) only; a dense grid in
    those two variables (plus a = 0) covers every (a, t) out of sample.
    """
    r = np.geomspace(1e-3, 1e2, n_r)
    weights = np.concatenate([[0.0], np.geomspace(1e-3, 1e2, n_weight)])
    return [(ProcessParams(alpha, float(a), d), 1.0, r) for a in weights]


def g_form(dom: DomainSpec, params: ProcessParams, x, y):
    """Two-sided Green-function shape g^a_D(x, y) for d = 1, 2 and d >= 3."""
    px, py, cx, cy, single = _pairs(dom, x, y)
    r = np.linalg.norm(px - py, axis=1)
    if np.any(r == 0):
        raise ValueError("g_form is singular at x = y")
    if not dom.bounded:
        raise ValueError("g_form needs a bounded domain")
    dd = dom.distance(px) * dom.distance(py)
    d = dom.dimension
    if d == 1:
        g = np.minimum(np.sqrt(dd), dd / r)
    elif d == 2:
        g = np.log1p(dd / r ** 2)
    else:
        g = np.minimum(1.0, dd / r ** 2) / r ** (d - 2)
    g = np.where(cx == cy, g, params.weight * g)
    return float(g[0]) if single else g


def dominance_constant(c0: float, d: int) -> float:
    """c1 with e^{-c0 u} <= c1 u^{-(d/2+1)} for all u > 0 (sharp)."""
    k = d / 2 + 1
    return (k / (c0 * math.e)) ** k


def dominance_holds(c0: float, d: int, alpha: float, r0: float, t, r) -> np.ndarray:
    """Check t^{-d/2} e^{-c0 r^2/t} <= c1 r0^{alpha-2} t r^{-d-alpha} for r >= r0."""
    t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
    if np.any(r < r0):
        raise ValueError("dominance inequality needs r >= r0")
    c1 = dominance_constant(c0, d)
    lhs = t ** (-d / 2) * np.exp(-c0 * r ** 2 / t)
    rhs = c1 * r0 ** (alpha - 2) * t / r ** (d + alpha)
    return lhs <= rhs * (1 + 1e-12)


# ---------------------------------------------------------------------------
# two-sided certification of Dirichlet kernel estimates

@dataclass(frozen=True)
class FitPolicy:
    max_rel_se: float = 0.10
    c_bound: float = 50.0
    # lower uses kappa * C_ref, upper C_ref / kappa; C_ref = 1/4 is the Brownian exponent
    kappa_grid: tuple = (1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)
    c_ref: float = 0.25
    parsimony: float = 1.05
    required_coverage: float = 1.0


@dataclass
class RatioReport:
    grid: dict
    min_ratio: float
    max_ratio: float
    constant: float
    per_a: dict
    uniform_in_a: bool
    coverage: float
    n_used: int
    n_excluded: int
    lower: EnvelopeParams
    upper: EnvelopeParams
    points: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = asdict(self)
        out["lower"] = asdict(self.lower)
        out["upper"] = asdict(self.upper)
        return out


class CoverageError(ValueError):
    pass


def _estimate_h(dom, est, C, cross_gaussian):
    params = ProcessParams(est.alpha, est.a, dom.dimension)
    return float(np.atleast_1d(h_envelope(dom, params, C, est.t, est.x, est.y, cross_gaussian))[0])


def certify_two_sided(estimates: Sequence, dom: DomainSpec, policy: FitPolicy = FitPolicy(),
                      cross_gaussian: bool = False) -> RatioReport:
    """Fit the Gaussian constants and report the spread of p_hat / h over the grid.

    Estimates with relative standard error above ``policy.max_rel_se`` (or a
    zero value) are excluded and counted.  Raises CoverageError when the used
    fraction falls below ``policy.required_coverage``.  The reported constant
    is C = max(max_ratio, 1 / min_ratio), so every used ratio lies in [1/C, C].
    """
    if not estimates:
        raise CoverageError("no estimates to certify")
    used = [e for e in estimates if e.value > 0 and e.std_error <= policy.max_rel_se * e.value]
    coverage = len(used) / len(estimates)
    if not used or coverage < policy.required_coverage:
        raise CoverageError(f"only {len(used)} of {len(estimates)} estimates meet the "
                            f"{policy.max_rel_se:.0%} relative-error threshold")
    vals = np.array([e.value for e in used])
    best = []
    for kappa in policy.kappa_grid:
        c_lo, c_hi = kappa * policy.c_ref, policy.c_ref / kappa
        h_lo = np.array([_estimate_h(dom, e, c_lo, cross_gaussian) for e in used])
        h_hi = np.array([_estimate_h(dom, e, c_hi, cross_gaussian) for e in used])
        r_lo, r_hi = vals / h_lo, vals / h_hi
        const = max(r_hi.max(), 1 / r_lo.min())
        best.append((const, kappa, c_lo, c_hi, r_lo, r_hi))
    c_min = min(b[0] for b in best)
    const, kappa, c_lo, c_hi, r_lo, r_hi = next(b for b in best if b[0] <= policy.parsimony * c_min)
    per_a = {}
    for a in sorted({e.a for e in used}):
        m = np.array([e.a == a for e in used])
        per_a[str(a)] = {"min_ratio": float(r_lo[m].min()), "max_ratio": float(r_hi[m].max())}
    points = [{"a": e.a, "t": e.t, "x": np.atleast_1d(e.x).tolist(), "y": np.atleast_1d(e.y).tolist(),
               "value": e.value, "std_error": e.std_error, "ratio_lower": float(rl), "ratio_upper": float(rh)}
              for e, rl, rh in zip(used, r_lo, r_hi)]
    grid = {"a": sorted({e.a for e in estimates}), "t": sorted({e.t for e in estimates}),
            "n_points": len(estimates), "kappa": kappa}
    return RatioReport(grid, float(r_lo.min()), float(r_hi.max()), float(const), per_a,
                       bool(const <= policy.c_bound), coverage, len(used), len(estimates) - len(used),
                       EnvelopeParams(c_lo, max(1.0, 1 / r_lo.min())),
                       EnvelopeParams(c_hi, max(1.0, r_hi.max())), points)
