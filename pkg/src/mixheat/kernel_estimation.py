"""Monte Carlo Dirichlet heat kernels, subordinate killed kernels and Green functions.

The Dirichlet kernel estimator splits the time interval at t - delta:

    p_D(t, x, y) ~ E_x[ p(delta, |X_{t-delta} - y|) ; tau_D > t - delta ]

with the free density p in place of the killed one over the last window.
The only bias is killing during that window, bounded by
P_x(tau > t - delta) * sup_{s <= delta} p(s, delta_D(y)).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .geometry import OUTSIDE, BallUnion, DomainSpec, IntervalUnion, as_points
from .killed_sim import SimScheme, default_scheme, simulate_block
from .levy_sampling import (FreeDensityTable, ProcessParams, free_density, mix_over_clock,
                            sample_stable_subordinator)
from .parallel import as_stream, map_blocks


@dataclass
class KernelEstimate:
    value: float
    std_error: float
    t: float
    x: np.ndarray
    y: np.ndarray
    a: float
    alpha: float
    n_paths: int
    scheme: Optional[SimScheme]
    delta: float
    bias_bound: float = 0.0
    method: str = "mc"
    seed: Optional[int] = None

    @property
    def rel_error(self) -> float:
        return self.std_error / self.value if self.value > 0 else math.inf


@dataclass
class GreenEstimate:
    value: float
    std_error: float
    x: np.ndarray
    y: np.ndarray
    a: float
    alpha: float
    T_max: float
    tail_estimate: float
    method: str = "spectral"


def _check_points(dom: DomainSpec, pts, name: str) -> np.ndarray:
    arr, _ = as_points(pts, dom.dimension)
    comp = dom.component_index(arr)
    if np.any(comp == OUTSIDE):
        bad = arr[comp == OUTSIDE][0].tolist()
        raise ValueError(f"{name} point {bad} is not in the domain")
    return arr


def _last_step_bias(params: ProcessParams, delta: float, dist_y: np.ndarray) -> np.ndarray:
    s = delta * np.geomspace(1e-3, 1.0, 24)
    vals = np.array([free_density(params, float(si), dist_y) for si in s])
    return vals.max(axis=0)


def _kernel_block(dom, params, x0, scheme, cps, tables, ys, size, gen):
    batch = simulate_block(dom, params, x0, max(cps), scheme, size, gen, checkpoints=cps)
    sums, sqs, alive = [], [], []
    for c, table in zip(cps, tables):
        pos = batch.snapshots[c]
        live = np.isfinite(pos[:, 0])
        z = pos[live]
        r = np.linalg.norm(z[:, None, :] - ys[None, :, :], axis=2)
        w = table(r)
        sums.append(w.sum(axis=0))
        sqs.append((w ** 2).sum(axis=0))
        alive.append(live.sum())
    return np.array(sums), np.array(sqs), np.array(alive), size


def estimate_kernel_grid(dom: DomainSpec, params: ProcessParams, x, ys, times: Sequence[float],
                         scheme: Optional[SimScheme] = None, n_paths: int = 100_000, rng=0,
                         delta_fraction: float = 0.01, deltas: Optional[Sequence[float]] = None,
                         workers: int = 1) -> list[list[KernelEstimate]]:
    """Kernel estimates at every (t, y) from one set of paths started at x.

    Returns ``out[i][j]`` for times[i], ys[j].  delta defaults to t/100.
    """
    x0 = _check_points(dom, x, "x")
    if x0.shape[0] != 1:
        raise ValueError("x must be a single point")
    ys = _check_points(dom, ys, "y")
    times = [float(t) for t in times]
    if deltas is None:
        deltas = [delta_fraction * t for t in times]
    for t, dl in zip(times, deltas):
        if not 0 < dl <= t / 10:
            raise ValueError(f"delta={dl} must lie in (0, t/10] for t={t}")
    scheme = scheme or default_scheme(dom)
    stream = as_stream(rng)
    cps = tuple(t - dl for t, dl in zip(times, deltas))
    diam = dom.diameter()
    tables = []
    for dl in deltas:
        r_max = diam if math.isfinite(diam) else 60 * math.sqrt(dl)
        tables.append(FreeDensityTable(params, dl, r_max))
    fn = partial(_kernel_block, dom, params, x0[0], scheme, cps, tables, ys)
    parts = map_blocks(fn, n_paths, stream, scheme.block_size, workers)
    sums = sum(p[0] for p in parts)
    sqs = sum(p[1] for p in parts)
    alive = sum(p[2] for p in parts)
    n = n_paths
    dist_y = dom.distance(ys)
    out = []
    for i, (t, dl) in enumerate(zip(times, deltas)):
        mean = sums[i] / n
        var = np.maximum(sqs[i] / n - mean ** 2, 0.0) * n / max(n - 1, 1)
        se = np.sqrt(var / n)
        bias = (alive[i] / n) * _last_step_bias(params, dl, dist_y)
        row = []
        for j in range(len(ys)):
            row.append(KernelEstimate(float(mean[j]), float(se[j]), t, x0[0].copy(), ys[j].copy(),
                                      params.a, params.alpha, n, scheme, dl, float(bias[j]), "mc",
                                      stream.seed))
        out.append(row)
    return out


def estimate_dirichlet_kernel(dom: DomainSpec, params: ProcessParams, t: float, x, y,
                              delta: Optional[float] = None, scheme: Optional[SimScheme] = None,
                              n_paths: int = 100_000, rng=0, workers: int = 1) -> KernelEstimate:
    """Last-step-conditioned Monte Carlo estimate of p^a_D(t, x, y)."""
    delta = t / 100 if delta is None else delta
    return estimate_kernel_grid(dom, params, x, [y] if dom.dimension > 1 else [float(np.ravel(y)[0])],
                                [t], scheme, n_paths, rng, deltas=[delta], workers=workers)[0][0]


# ---------------------------------------------------------------------------
# Brownian (generator Delta) Dirichlet kernels on single components

def interval_kernel(lo: float, hi: float, tau, x, y) -> np.ndarray:
    """Sine series for the killed Brownian kernel on (lo, hi); broadcasts over tau."""
    tau = np.asarray(tau, dtype=float)
    L = hi - lo
    kmax = int(math.ceil(L / math.pi * math.sqrt(45.0 / float(np.min(tau))))) + 2
    kmax = min(kmax, 200_000)
    k = np.arange(1, kmax + 1)
    mode = np.sin(k * math.pi * (x - lo) / L) * np.sin(k * math.pi * (y - lo) / L)
    decay = np.exp(-np.multiply.outer(tau, (k * math.pi / L) ** 2))
    return (2.0 / L) * (decay @ mode)


class _BallModes:
    """Dirichlet eigenpairs of the disc of radius R with Bessel zero j <= j_max (ground mode always kept)."""

    def __init__(self, radius: float, j_max: float):
        self.radius = radius
        j_max = max(j_max, special.jn_zeros(0, 1)[0])
        orders, zeros = [], []
        n = 0
        while True:
            nz = max(1, int((j_max - n) / math.pi) + 2)
            z = special.jn_zeros(n, nz)
            z = z[z <= j_max]
            if z.size == 0:
                break
            orders.append(np.full(z.size, n))
            zeros.append(z)
            n += 1
        self.n = np.concatenate(orders)
        self.j = np.concatenate(zeros)
        self.norm = (np.where(self.n == 0, 1.0, 2.0)
                     / (math.pi * radius ** 2 * special.jv(self.n + 1, self.j) ** 2))


@lru_cache(maxsize=32)
def _ball_modes(radius: float, j_max: float) -> _BallModes:
    return _BallModes(radius, j_max)


def ball_kernel(center, radius: float, tau, x, y) -> np.ndarray:
    """Bessel series for the killed Brownian kernel on a disc; broadcasts over tau."""
    tau = np.asarray(tau, dtype=float)
    c = np.asarray(center, float)
    x = np.asarray(x, float) - c
    y = np.asarray(y, float) - c
    rx, ry = np.hypot(*x), np.hypot(*y)
    dtheta = math.atan2(x[1], x[0]) - math.atan2(y[1], y[0])
    j_max = radius * math.sqrt(45.0 / float(np.min(tau)))
    modes = _ball_modes(float(radius), float(math.ceil(j_max)))
    n, j = modes.n, modes.j
    spatial = (modes.norm * special.jv(n, j * rx / radius) * special.jv(n, j * ry / radius)
               * np.cos(n * dtheta))
    decay = np.exp(-np.multiply.outer(tau, (j / radius) ** 2))
    return decay @ spatial


def brownian_killed_kernel(dom: DomainSpec, tau, x, y) -> np.ndarray:
    """p_U(tau, x, y) for Brownian motion with generator Delta on a single-component U."""
    if dom.component_count != 1:
        raise ValueError("killed Brownian series needs a single component")
    if isinstance(dom, IntervalUnion):
        lo, hi = dom.intervals[0]
        return interval_kernel(lo, hi, tau, float(np.ravel(x)[0]), float(np.ravel(y)[0]))
    if isinstance(dom, BallUnion) and dom.dimension == 2:
        (center, radius), = dom.balls
        return ball_kernel(center, radius, tau, x, y)
    raise ValueError(f"no Brownian series available for {type(dom).__name__} in d={dom.dimension}")


def subordinate_killed_kernel(dom: DomainSpec, params: ProcessParams, t: float, x, y,
                              method: str = "quadrature", n_mix: int = 100_000, rng=0,
                              quadrature_nodes: int = 32) -> KernelEstimate:
    """q^a_U(t, x, y) = E[p_U(t + a^2 S_t, x, y)], killed Brownian motion run on the mixed clock.

    ``method="quadrature"`` integrates against the density of S_1 (std_error
    holds the truncation bound); ``method="mc"`` averages over n_mix clock draws.
    """
    px = _check_points(dom, x, "x")[0]
    py = _check_points(dom, y, "y")[0]
    xs = px if dom.dimension > 1 else px[0]
    ys = py if dom.dimension > 1 else py[0]
    kern = partial(brownian_killed_kernel, dom, x=xs, y=ys)
    c = params.a ** 2 * t ** (1 / params.rho)
    if c == 0:
        val = float(kern(np.array([t]))[0])
        return KernelEstimate(val, 0.0, t, px, py, params.a, params.alpha, 0, None, 0.0, 0.0, "exact")
    if method == "quadrature":
        lo, hi = dom.bounding_box()
        scale = float(np.max(hi - lo)) ** 2
        val, bound = mix_over_clock(params.rho, t, c, lambda tau: kern(tau), scale, quadrature_nodes)
        return KernelEstimate(float(val), float(bound), t, px, py, params.a, params.alpha, 0, None, 0.0,
                              0.0, "quadrature")
    if method == "mc":
        gen = as_stream(rng).generator()
        tau = t + params.a ** 2 * sample_stable_subordinator(params.rho, t, gen, n_mix)
        vals = kern(tau)
        return KernelEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_mix)), t, px, py,
                              params.a, params.alpha, n_mix, None, 0.0, 0.0, "mc")
    raise ValueError("method must be 'quadrature' or 'mc'")


# ---------------------------------------------------------------------------
# Green functions

def _ground_energy_lower(dom: DomainSpec) -> float:
    """A lower bound for lambda_1 of the mixed operator: the Brownian one on the largest component."""
    if isinstance(dom, IntervalUnion):
        L = max(hi - lo for lo, hi in dom.intervals)
        return (math.pi / L) ** 2
    if isinstance(dom, BallUnion) and dom.dimension == 2:
        R = max(r for _, r in dom.balls)
        return (special.jn_zeros(0, 1)[0] / R) ** 2
    raise ValueError("no ground-energy bound for this shape")


def estimate_green(dom: DomainSpec, params: ProcessParams, x, y, method: str = "auto",
                   h: float = 1 / 256, T_max: float = 2.0, n_times: int = 40,
                   scheme: Optional[SimScheme] = None, n_paths: int = 100_000, rng=0,
                   workers: int = 1) -> GreenEstimate:
    """G^a_D(x, y) by the spectral model (d = 1) or a time integral of MC kernels.

    The MC route integrates p_hat over a geometric time grid on (0, T_max] with
    the trapezoid rule (p = 0 at t = 0 for x != y) and reports
    p_hat(T_max) / lambda_lower as the tail beyond T_max.
    """
    if not dom.bounded:
        raise ValueError("Green function needs a bounded domain")
    px = _check_points(dom, x, "x")[0]
    py = _check_points(dom, y, "y")[0]
    if np.allclose(px, py):
        raise ValueError("Green function is singular at x = y")
    if method == "auto":
        method = "spectral" if dom.dimension == 1 else "mc"
    if method == "spectral":
        from .spectral1d import assemble, green_function
        g = green_function(assemble(dom, params, h), px[0], py[0])
        g2 = green_function(assemble(dom, params, 2 * h), px[0], py[0])
        return GreenEstimate(g, abs(g - g2), px, py, params.a, params.alpha, math.inf, 0.0, "spectral")
    if method != "mc":
        raise ValueError("method must be 'auto', 'spectral' or 'mc'")
    scheme = scheme or default_scheme(dom)
    t_min = max(10 * scheme.dt, T_max * 1e-4)
    times = np.geomspace(t_min, T_max, n_times)
    grid = estimate_kernel_grid(dom, params, px if dom.dimension > 1 else px[0],
                                [py] if dom.dimension > 1 else [py[0]], times, scheme, n_paths, rng,
                                workers=workers)
    vals = np.array([row[0].value for row in grid])
    ses = np.array([row[0].std_error for row in grid])
    tt = np.concatenate([[0.0], times])
    vv = np.concatenate([[0.0], vals])
    w = np.zeros_like(tt)
    w[:-1] += np.diff(tt) / 2
    w[1:] += np.diff(tt) / 2
    value = float(w @ vv)
    # estimates share paths, so errors add linearly rather than in quadrature
    se = float(w[1:] @ ses)
    tail = float(vals[-1] / _ground_energy_lower(dom))
    return GreenEstimate(value, se, px, py, params.a, params.alpha, float(T_max), tail, "mc")


# ---------------------------------------------------------------------------
# CSV output

def kernel_rows(estimates: Sequence[KernelEstimate]) -> tuple[list[str], list[list]]:
    d = len(np.atleast_1d(estimates[0].x))
    header = (["d", "alpha", "a", "t"] + [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)]
              + ["value", "std_error", "n_paths", "dt", "delta", "scheme", "seed"])
    rows = []
    for e in estimates:
        s = e.scheme
        scheme = "none" if s is None else ("bridge" if s.bridge_correction else "endpoint")
        rows.append([d, e.alpha, e.a, e.t, *np.atleast_1d(e.x).tolist(), *np.atleast_1d(e.y).tolist(),
                     repr(e.value), repr(e.std_error), e.n_paths, "" if s is None else s.dt, e.delta,
                     scheme, "" if e.seed is None else e.seed])
    return header, rows


def kernel_csv(estimates: Sequence[KernelEstimate]) -> str:
    buf = io.StringIO()
    header, rows = kernel_rows(estimates)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
