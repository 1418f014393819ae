"""Statistical checks of the exact identities: Levy system, scaling, subordination bound."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache, partial
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, interpolate, special

from .geometry import OUTSIDE, BallUnion, DomainSpec, IntervalUnion, as_points
from .kernel_estimation import estimate_kernel_grid, subordinate_killed_kernel
from .killed_sim import SimScheme, default_scheme, simulate_block, survival_probability
from .levy_sampling import ProcessParams, RngStream, fractional_constant
from .parallel import as_stream, map_blocks

Z_PASS = 4.0


@dataclass
class IdentityReport:
    name: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    z: float
    passed: bool
    bias_bound: float = 0.0
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag}  {self.name:<28} lhs={self.lhs:.6g}±{self.lhs_se:.2g}  "
                f"rhs={self.rhs:.6g}±{self.rhs_se:.2g}  z={self.z:+.2f}")


def _equality_report(name, lhs, lhs_se, rhs, rhs_se, diff_se=None, bias=0.0, details=None):
    se = math.hypot(lhs_se, rhs_se) if diff_se is None else diff_se
    gap = lhs - rhs
    if se == 0:
        z = 0.0 if gap == 0 else math.copysign(math.inf, gap)
    else:
        z = gap / se
    passed = abs(gap) <= Z_PASS * se + bias
    return IdentityReport(name, float(lhs), float(lhs_se), float(rhs), float(rhs_se), float(z), bool(passed),
                          float(bias), details or {})


# ---------------------------------------------------------------------------
# Levy system

def jump_rate_into(params: ProcessParams, target: DomainSpec, pts: np.ndarray) -> np.ndarray:
    """int_B J^a(x, z) dz for each row x of pts, with x outside the closure of B.

    Closed form for intervals; for discs a cached radial table (the rate only
    depends on the distance to the centre) built from an exact angular integral.
    """
    w = params.weight * fractional_constant(params.d, params.alpha)
    alpha = params.alpha
    if params.a == 0:
        return np.zeros(len(pts))
    if isinstance(target, IntervalUnion):
        x = pts[:, 0]
        total = np.zeros(len(x))
        for lo, hi in target.intervals:
            near = np.where(x < lo, lo - x, x - hi)
            far = np.where(x < lo, hi - x, x - lo)
            if np.any(near <= 0):
                raise ValueError("jump source lies inside the target set")
            total += (near ** (-alpha) - far ** (-alpha)) / alpha
        return w * total
    if isinstance(target, BallUnion) and target.dimension == 2:
        total = np.zeros(len(pts))
        for ctr, rad in target.balls:
            u = np.linalg.norm(pts - np.asarray(ctr), axis=1) / rad - 1.0
            if np.any(u <= 0):
                raise ValueError("jump source lies inside the target set")
            total += rad ** (-alpha) * _unit_disc_rate(alpha, u)
        return w * total
    raise ValueError("target must be an interval union or a disc union in d = 2")


def _unit_disc_rate_direct(alpha: float, u: float) -> float:
    # angular integral in closed form: int_0^{2pi} (A - B cos th)^{-p} = 2 pi A^{-p} 2F1(p/2, (p+1)/2; 1; B^2/A^2)
    s = 1.0 + u
    p = 1.0 + alpha / 2

    def radial(r):
        A = s * s + r * r
        return r * 2 * math.pi * A ** (-p) * special.hyp2f1(p / 2, (p + 1) / 2, 1.0, (2 * s * r / A) ** 2)
    # the integrand peaks in a layer of width u at r = 1
    cuts = [0.0] + [1.0 - k * u for k in (100.0, 10.0) if k * u < 1.0] + [1.0]
    return sum(integrate.quad(radial, lo, hi, epsabs=0, epsrel=1e-9, limit=200)[0]
               for lo, hi in zip(cuts[:-1], cuts[1:]))


_U_LO, _U_HI = 1e-4, 1e4


@lru_cache(maxsize=16)
def _unit_disc_table(alpha: float) -> interpolate.CubicSpline:
    u = np.geomspace(_U_LO, _U_HI, 400)
    f = np.array([_unit_disc_rate_direct(alpha, v) for v in u])
    return interpolate.CubicSpline(np.log(u), np.log(f))


def _unit_disc_rate(alpha: float, u: np.ndarray) -> np.ndarray:
    """int over the unit disc of |x - z|^{-2-alpha} dz at |x| = 1 + u."""
    u = np.asarray(u, dtype=float)
    inside = (u >= _U_LO) & (u <= _U_HI)
    out = np.empty_like(u)
    out[inside] = np.exp(_unit_disc_table(alpha)(np.log(u[inside])))
    for i in np.flatnonzero(~inside):
        out[i] = _unit_disc_rate_direct(alpha, float(u[i]))
    return out


def _levy_block(dom, params, x0, t, scheme, target, comp0, size, gen):
    lhs = np.zeros(size)
    rhs = np.zeros(size)

    def hook(idx, z, inc, end, live):
        home = dom.component_index(z) == comp0
        if not home.any():
            return
        rhs[idx[home]] += inc.dt * jump_rate_into(params, target, z[home])
        jumped = (np.linalg.norm(inc.jump_part, axis=1) > np.linalg.norm(inc.gaussian_part, axis=1))
        hit = home & live & jumped & (target.component_index(end) != OUTSIDE)
        lhs[idx[hit]] += 1

    simulate_block(dom, params, x0, t, scheme, size, gen, step_hook=hook)
    return lhs.sum(), (lhs ** 2).sum(), rhs.sum(), (rhs ** 2).sum(), ((lhs - rhs) ** 2).sum(), size


def _set_gap(dom: DomainSpec, comp0: int, target: DomainSpec) -> float:
    home = dom.component(comp0)
    if isinstance(home, IntervalUnion) and isinstance(target, IntervalUnion):
        (lo, hi), = home.intervals
        return min(max(b_lo - hi, lo - b_hi) for b_lo, b_hi in target.intervals)
    if isinstance(home, BallUnion) and isinstance(target, BallUnion):
        (c0, r0), = home.balls
        return min(float(np.linalg.norm(np.subtract(c, c0))) - r - r0 for c, r in target.balls)
    raise ValueError("unsupported home/target combination")


def check_levy_system(dom: DomainSpec, params: ProcessParams, x0, t: float, target: DomainSpec,
                      scheme: Optional[SimScheme] = None, n_paths: int = 100_000, rng=0,
                      workers: int = 1) -> IdentityReport:
    """Jumps from D(x0) into B before t ^ tau_D against the compensator integral.

    Both sides come from the same paths; the z-score uses the per-path
    difference, so shared path variance cancels.
    """
    scheme = scheme or default_scheme(dom)
    pts, _ = as_points(x0, dom.dimension)
    comp0 = int(dom.component_index(pts)[0])
    if comp0 == OUTSIDE:
        raise ValueError(f"x0={pts[0].tolist()} is not in the domain")
    gap = _set_gap(dom, comp0, target)
    if gap <= 0:
        raise ValueError("target set overlaps the starting component")
    need = 10 * math.sqrt(2 * scheme.dt)
    if gap < need:
        raise ValueError(f"target is {gap:.3g} from the starting component; need >= {need:.3g} at dt={scheme.dt}")
    fn = partial(_levy_block, dom, params, pts[0], t, scheme, target, comp0)
    parts = np.array(map_blocks(fn, n_paths, as_stream(rng), scheme.block_size, workers))
    s_l, q_l, s_r, q_r, q_d, n = parts.sum(axis=0)
    lhs, rhs = s_l / n, s_r / n
    var_l = max(q_l / n - lhs ** 2, 0.0)
    var_r = max(q_r / n - rhs ** 2, 0.0)
    var_d = max(q_d / n - (lhs - rhs) ** 2, 0.0)
    se_l, se_r, se_d = (math.sqrt(v / max(n - 1, 1)) for v in (var_l, var_r, var_d))
    return _equality_report("levy_system", lhs, se_l, rhs, se_r, diff_se=se_d,
                            details={"alpha": params.alpha, "a": params.a, "t": t, "dt": scheme.dt,
                                     "x0": pts[0].tolist(), "target": target.to_config(),
                                     "n_paths": int(n)})


# ---------------------------------------------------------------------------
# scaling

def check_scaling(dom: DomainSpec, params: ProcessParams, lam: float, t: float, x, y=None,
                  scheme: Optional[SimScheme] = None, n_paths: int = 100_000, rng=0,
                  workers: int = 1) -> IdentityReport:
    """lambda^d p on lambda D at (t, lambda x, lambda y) with weight a lambda^{(alpha-2)/alpha}
    against p on D at (t / lambda^2, x, y) with weight a.

    Without ``y`` the survival probabilities are compared instead.  The two
    runs use equal step counts (dt scales by lambda^2); they draw from
    independent streams except at lambda = 1, where they share one.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    scheme = scheme or default_scheme(dom)
    stream = as_stream(rng)
    s_small = stream.child(stream.stream_id * 2 + 1) if lam != 1 else stream
    big_dom = dom.scaled(lam)
    big_params = params.scaled(lam)
    big_scheme = SimScheme(scheme.dt * lam ** 2, scheme.bridge_correction, scheme.max_steps, scheme.coupled,
                           scheme.block_size)
    px, _ = as_points(x, dom.dimension)
    xs = px[0] if dom.dimension > 1 else float(px[0, 0])
    xb = lam * px[0] if dom.dimension > 1 else lam * float(px[0, 0])
    details = {"lambda": lam, "t": t, "alpha": params.alpha, "a": params.a, "n_paths": n_paths}
    if y is None:
        l, l_se = survival_probability(big_dom, big_params, xb, t, big_scheme, n_paths, stream, workers)
        r, r_se = survival_probability(dom, params, xs, t / lam ** 2, scheme, n_paths, s_small, workers)
        return _equality_report("scaling_survival", l, l_se, r, r_se, details=details)
    py, _ = as_points(y, dom.dimension)
    ys = py[0] if dom.dimension > 1 else float(py[0, 0])
    yb = lam * py[0] if dom.dimension > 1 else lam * float(py[0, 0])
    delta = t / 100
    big = estimate_kernel_grid(big_dom, big_params, xb, [yb], [t], big_scheme, n_paths, stream,
                               deltas=[delta], workers=workers)[0][0]
    small = estimate_kernel_grid(dom, params, xs, [ys], [t / lam ** 2], scheme, n_paths, s_small,
                                 deltas=[delta / lam ** 2], workers=workers)[0][0]
    f = lam ** dom.dimension
    return _equality_report("scaling_kernel", f * big.value, f * big.std_error, small.value, small.std_error,
                            details=details)


# ---------------------------------------------------------------------------
# subordination comparison

def check_subordination_bound(dom: DomainSpec, params: ProcessParams, grid: Sequence[tuple],
                              scheme: Optional[SimScheme] = None, n_paths: int = 100_000, rng=0,
                              workers: int = 1) -> list[IdentityReport]:
    """One-sided test p_hat + 4 s.e. >= q at every (t, x, y) in ``grid``.

    Points sharing x reuse one set of paths.  ``details["gap"]`` holds
    p_hat - q so the largest gap can be located.
    """
    if dom.component_count != 1:
        raise ValueError("subordination comparison needs a connected domain")
    scheme = scheme or default_scheme(dom)
    stream = as_stream(rng)
    key = (lambda p: tuple(np.atleast_1d(p).tolist()))
    by_x: dict = {}
    for t, x, y in grid:
        by_x.setdefault(key(x), []).append((float(t), key(y)))
    p_hat = {}
    for k, (xk, items) in enumerate(sorted(by_x.items())):
        times = sorted({t for t, _ in items})
        ys = sorted({y for _, y in items})
        ys_arg = [list(v) for v in ys] if dom.dimension > 1 else [v[0] for v in ys]
        xs_arg = list(xk) if dom.dimension > 1 else xk[0]
        est = estimate_kernel_grid(dom, params, xs_arg, ys_arg, times, scheme, n_paths,
                                   stream.child(stream.stream_id * 1000 + k), workers=workers)
        for i, t in enumerate(times):
            for j, yv in enumerate(ys):
                p_hat[(t, xk, yv)] = est[i][j]
    out = []
    for t, x, y in grid:
        e = p_hat[(float(t), key(x), key(y))]
        q = subordinate_killed_kernel(dom, params, float(t), x, y)
        se = e.std_error
        passed = e.value + Z_PASS * se >= q.value
        z = (e.value - q.value) / se if se > 0 else (0.0 if e.value == q.value else math.inf)
        out.append(IdentityReport("subordination_bound", e.value, se, q.value, q.std_error, float(z),
                                  bool(passed), e.bias_bound,
                                  {"t": float(t), "x": list(key(x)), "y": list(key(y)),
                                   "gap": e.value - q.value, "a": params.a, "alpha": params.alpha}))
    return out


def largest_gap(reports: Sequence[IdentityReport]) -> IdentityReport:
    return max(reports, key=lambda r: r.details.get("gap", -math.inf))
