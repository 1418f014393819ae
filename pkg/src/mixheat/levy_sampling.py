"""Samplers and exact densities for X^a = Brownian motion + a * symmetric alpha-stable.

The Brownian part has generator Delta (variance 2t per coordinate).  The stable
part is realized by subordination: a*Y_t has the law of W(a^2 S_t) where S is an
(alpha/2)-stable subordinator with E exp(-u S_t) = exp(-t u^{alpha/2}) and W is an
independent Brownian motion with generator Delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gamma, gammaln


class QuadratureError(RuntimeError):
    pass


def fractional_constant(d: int, alpha: float) -> float:
    """Normalizing constant A(d, alpha) of the fractional Laplacian's singular integral."""
    return (alpha * 2 ** (alpha - 1) * math.pi ** (-d / 2)
            * gamma((d + alpha) / 2) / gamma(1 - alpha / 2))


@dataclass(frozen=True)
class ProcessParams:
    alpha: float
    a: float
    d: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not self.a >= 0 or not math.isfinite(self.a):
            raise ValueError(f"a must be >= 0, got {self.a}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")

    @property
    def rho(self) -> float:
        return self.alpha / 2

    @property
    def weight(self) -> float:
        """a^alpha, the coefficient in front of the fractional Laplacian."""
        return self.a ** self.alpha

    def a_t(self, t: float) -> float:
        """Weight seen at unit time after rescaling space by t^{-1/2}."""
        return self.a * t ** ((2 - self.alpha) / (2 * self.alpha))

    def scaled(self, lam: float) -> "ProcessParams":
        """Weight for lam * X_{t / lam^2}."""
        return ProcessParams(self.alpha, self.a * lam ** ((self.alpha - 2) / self.alpha), self.d)

    def with_a(self, a: float) -> "ProcessParams":
        return ProcessParams(self.alpha, a, self.d)


def jump_kernel(params: ProcessParams, r):
    """Levy density J^a as a function of |x - y|."""
    r = np.asarray(r, dtype=float)
    return params.weight * fractional_constant(params.d, params.alpha) * r ** (-(params.d + params.alpha))


@dataclass(frozen=True)
class RngStream:
    """Reproducible stream: blocks of a stream are independent numpy generators."""

    seed: int
    stream_id: int = 0

    def generator(self, block: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id), int(block)))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def sample_stable_subordinator(rho: float, t: float, rng, size=None):
    """Draw S_t for the rho-stable subordinator (Laplace exponent u^rho).

    Uses the Chambers-Mallows-Stuck form for the totally skewed law and the
    self-similarity S_t = t^{1/rho} S_1.
    """
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if not t > 0:
        raise ValueError("t must be positive")
    rng = _as_generator(rng)
    u = rng.uniform(-math.pi / 2, math.pi / 2, size)
    e = rng.standard_exponential(size)
    v = u + math.pi / 2
    s1 = (np.sin(rho * v) / np.cos(u) ** (1 / rho)
          * (np.cos(u - rho * v) / e) ** ((1 - rho) / rho))
    return t ** (1 / rho) * s1


@dataclass(frozen=True)
class IncrementSample:
    dt: float
    dS: np.ndarray
    gaussian_part: np.ndarray
    jump_part: np.ndarray

    @property
    def displacement(self) -> np.ndarray:
        return self.gaussian_part + self.jump_part


def sample_increment(params: ProcessParams, dt: float, rng, size: int | None = None) -> IncrementSample:
    """One time step of X^a, split into its Brownian and stable parts.

    With ``size=None`` the parts have shape (d,); otherwise (size, d).
    Draw order is fixed (Gaussian, subordinator, jump direction) so that
    runs with equal seeds are reproducible.
    """
    rng = _as_generator(rng)
    shape = (params.d,) if size is None else (size, params.d)
    gauss = math.sqrt(2 * dt) * rng.standard_normal(shape)
    if params.a == 0:
        ds = np.zeros(() if size is None else size)
        return IncrementSample(dt, ds, gauss, np.zeros(shape))
    ds = params.a ** 2 * sample_stable_subordinator(params.rho, dt, rng, size)
    scale = np.sqrt(2 * ds)
    jump = (scale if size is None else scale[:, None]) * rng.standard_normal(shape)
    return IncrementSample(dt, ds, gauss, jump)


# ---------------------------------------------------------------------------
# density of S_1 and mixtures over the clock t + c S_1

def _log_kanter(rho, u):
    return ((np.log(np.sin(rho * u)) - np.log(np.sin(u))) / (1 - rho)
            + np.log(np.sin((1 - rho) * u)) - np.log(np.sin(rho * u)))


@lru_cache(maxsize=16)
def _kanter_rule(rho: float, panels: int = 100, q: int = 16):
    # u = pi - exp(-w) maps the endpoint pile-up near u = pi to a uniform scale in w
    x, w = np.polynomial.legendre.leggauss(q)
    edges = -math.log(math.pi) + 0.5 * np.arange(panels + 1)
    mid = (edges[:-1] + edges[1:]) / 2
    ww = (mid[:, None] + 0.25 * x[None, :]).ravel()
    wt = np.tile(0.25 * w, panels) * np.exp(-ww)
    return _log_kanter(rho, math.pi - np.exp(-ww)), wt


def _density_integral(rho, s):
    beta = (1 - rho) / rho
    log_a, wt = _kanter_rule(rho)
    z = np.exp(log_a[None, :] - np.log(s)[:, None] / beta)
    return (z * np.exp(-z)) @ wt / (math.pi * beta * s)


def _density_series(rho, s, kmax=400):
    k = np.arange(1, kmax + 1)
    coef = (-1.0) ** (k + 1) * np.exp(gammaln(k * rho + 1) - gammaln(k + 1)) * np.sin(k * math.pi * rho)
    x = s[:, None] ** (-rho)
    return (coef[None, :] * x ** k[None, :]).sum(axis=1) / (math.pi * s)


def positive_stable_density(rho: float, s):
    """Density of S_1 with E exp(-u S_1) = exp(-u^rho)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.zeros_like(s)
    pos = s > 0
    switch = 2.0 ** (1 / rho)      # series terms shrink at least like 2^-k beyond this
    big = pos & (s >= switch)
    small = pos & ~big
    if small.any():
        out[small] = _density_integral(rho, s[small])
    if big.any():
        out[big] = _density_series(rho, s[big])
    return out


def stable_tail(rho: float, s: float, kmax: int = 400) -> float:
    """P(S_1 > s) for s >= 2^{1/rho}, from the large-s series integrated termwise.

    The leading term is s^-rho / Gamma(1 - rho).
    """
    if s < 2.0 ** (1 / rho):
        raise ValueError("stable_tail series needs s >= 2^(1/rho)")
    k = np.arange(1, kmax + 1)
    coef = (-1.0) ** (k + 1) * np.exp(gammaln(k * rho) - gammaln(k + 1)) * np.sin(k * math.pi * rho)
    return float((coef * float(s) ** (-rho * k)).sum() / math.pi)


@lru_cache(maxsize=64)
def _clock_rule(rho: float, q: int, v_hi: float):
    """Composite Gauss-Legendre nodes in v = log s with density-weighted weights."""
    beta = (1 - rho) / rho
    a0 = rho ** (1 / (1 - rho)) * (1 - rho) / rho
    v_lo = beta * math.log(a0 / 40.0)           # P(S_1 < e^v_lo) < e^-40
    width = 0.5
    panels = int(math.ceil((v_hi - v_lo) / width))
    x, w = np.polynomial.legendre.leggauss(q)
    edges = v_lo + width * np.arange(panels + 1)
    mid = (edges[:-1] + edges[1:]) / 2
    v = (mid[:, None] + width / 2 * x[None, :]).ravel()
    s = np.exp(v)
    wt = np.tile(width / 2 * w, panels) * positive_stable_density(rho, s) * s
    if not np.all(np.isfinite(wt)):
        raise QuadratureError(f"non-finite quadrature weight for rho={rho}")
    s_hi = math.exp(edges[-1])
    mass = wt.sum() + stable_tail(rho, s_hi)
    if abs(mass - 1) > 1e-8:
        raise QuadratureError(f"clock density does not integrate to 1 (got {mass!r}) for rho={rho}")
    return s, wt, s_hi


def mix_over_clock(rho: float, t: float, c: float, fn, scale: float, quadrature_nodes: int = 32):
    """Quadrature for E[fn(t + c S_1)] with fn evaluated on an array of clock values.

    ``scale`` is the clock value beyond which fn is essentially decayed; the
    window extends 30 log-units past scale / c.  Returns (value, tail_bound)
    where the tail bound uses sup |fn| over the truncated clock range.
    """
    if quadrature_nodes < 16:
        raise ValueError("quadrature_nodes must be >= 16")
    if not c > 0:
        raise ValueError("clock scale c must be positive")
    # beyond s = e^{60/rho} the clock tail mass is below e^-60, whatever c is
    v_hi = min(math.log(max(scale, t) / c) + 30.0, 60.0 / rho)
    v_hi = 5.0 * math.ceil(v_hi / 5.0)          # quantize for caching
    s, wt, s_hi = _clock_rule(float(rho), int(quadrature_nodes), float(v_hi))
    vals = fn(t + c * s)
    value = np.tensordot(wt, vals, axes=(0, 0))
    tail_sup = np.max(np.abs(fn(t + c * s_hi * np.array([1.0, 10.0, 100.0]))), axis=0)
    return value, tail_sup * stable_tail(rho, s_hi)


def _gauss_kernel(tau, r, d):
    return (4 * math.pi * tau) ** (-d / 2) * np.exp(-(r ** 2) / (4 * tau))


def free_density_with_bound(params: ProcessParams, t: float, r, quadrature_nodes: int = 32):
    """(p^a(t, r), truncation bound) via the subordination mixture."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if not t > 0:
        raise ValueError("t must be positive")
    d = params.d
    c = params.a ** 2 * t ** (1 / params.rho)
    if c == 0:      # a = 0, or a so small that the clock scale underflows
        val = _gauss_kernel(t, r_arr, d)
        bound = np.zeros_like(val)
    else:
        scale = max(float(np.max(r_arr)) ** 2, t)
        val, bound = mix_over_clock(params.rho, t, c,
                                    lambda tau: _gauss_kernel(tau[:, None], r_arr[None, :], d),
                                    scale, quadrature_nodes)
    if not np.all(np.isfinite(val)):
        raise QuadratureError("non-finite free density value")
    if np.ndim(r) == 0:
        return float(val[0]), float(np.atleast_1d(bound)[0])
    return val, bound


def free_density(params: ProcessParams, t: float, r, quadrature_nodes: int = 32):
    """Transition density p^a(t, x, y) as a function of r = |x - y|."""
    return free_density_with_bound(params, t, r, quadrature_nodes)[0]


def free_density_mc(params: ProcessParams, t: float, r, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo over the clock: (mean, standard error) of the mixture."""
    rng = _as_generator(rng)
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if params.a == 0:
        tau = np.full(n, float(t))
    else:
        tau = t + params.a ** 2 * sample_stable_subordinator(params.rho, t, rng, n)
    g = _gauss_kernel(tau[:, None], r_arr[None, :], params.d)
    return g.mean(axis=0), g.std(axis=0, ddof=1) / math.sqrt(n)


class FreeDensityTable:
    """Spline of log p^a(t, r) on [0, r_max] for fast last-step weights.

    For a = 0 the closed form is used directly.
    """

    def __init__(self, params: ProcessParams, t: float, r_max: float, quadrature_nodes: int = 32):
        self.params = params
        self.t = t
        self.r_max = float(r_max)
        if params.a > 0:
            n = int(np.clip(math.ceil(40 * r_max / math.sqrt(t)), 512, 20000))
            rg = np.linspace(0.0, self.r_max, n)
            vals = free_density(params, t, rg, quadrature_nodes)
            self._spline = CubicSpline(rg, np.log(vals))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        flat = np.atleast_1d(r)
        if self.params.a == 0:
            return _gauss_kernel(self.t, r, self.params.d)
        out = np.exp(self._spline(np.minimum(flat, self.r_max)))
        far = flat > self.r_max
        if np.any(far):
            out[far] = free_density(self.params, self.t, flat[far])
        return out.reshape(r.shape)
