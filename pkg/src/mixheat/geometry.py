"""Catalog of C^{1,1} open sets with closed-form distance and component queries.

Every shape works on point arrays of shape ``(n, d)``; the module-level
functions also accept a single point (a float in d=1 or a length-d sequence)
and then return a scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

OUTSIDE = -1


class DimensionError(ValueError):
    pass


def as_points(x, d: int) -> tuple[np.ndarray, bool]:
    """Coerce ``x`` to an ``(n, d)`` float array; the flag says it was one point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if d != 1:
            raise DimensionError(f"scalar point given for a {d}-dimensional domain")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if d == 1 and arr.shape[0] != 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != d:
            raise DimensionError(f"point has {arr.shape[0]} coordinates, domain has d={d}")
        return arr.reshape(1, d), True
    if arr.ndim == 2 and arr.shape[1] == d:
        return arr, False
    raise DimensionError(f"cannot read points of shape {arr.shape} in dimension {d}")


@dataclass(frozen=True)
class DomainSpec:
    """Base class; concrete shapes below."""

    @property
    def dimension(self) -> int:
        raise NotImplementedError

    @property
    def component_count(self) -> int:
        raise NotImplementedError

    @property
    def bounded(self) -> bool:
        return True

    def distance(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def component_index(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def regularity_radii(self) -> tuple[float, float, float]:
        raise NotImplementedError

    def scaled(self, lam: float) -> "DomainSpec":
        raise NotImplementedError

    def component(self, k: int) -> "DomainSpec":
        """The k-th connected component as a domain of its own."""
        if k != 0:
            raise IndexError(k)
        return self

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return self.component_index(pts) != OUTSIDE

    def diameter(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))


@dataclass(frozen=True)
class IntervalUnion(DomainSpec):
    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        if not ivs:
            raise ValueError("need at least one interval")
        for a, b in ivs:
            if not b > a:
                raise ValueError(f"empty interval ({a}, {b})")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if not a1 > b0:
                raise ValueError("intervals must be pairwise disjoint with a positive gap")
        object.__setattr__(self, "intervals", ivs)
        object.__setattr__(self, "_lo", np.array([a for a, _ in ivs]))
        object.__setattr__(self, "_hi", np.array([b for _, b in ivs]))

    @property
    def dimension(self) -> int:
        return 1

    @property
    def component_count(self) -> int:
        return len(self.intervals)

    def component_index(self, pts):
        x = pts[:, 0]
        k = np.searchsorted(self._lo, x, side="right") - 1
        kc = np.clip(k, 0, None)
        inside = (k >= 0) & (x > self._lo[kc]) & (x < self._hi[kc])
        return np.where(inside, kc, OUTSIDE)

    def distance(self, pts):
        x = pts[:, 0]
        k = self.component_index(pts)
        kc = np.clip(k, 0, None)
        dist = np.minimum(x - self._lo[kc], self._hi[kc] - x)
        return np.where(k >= 0, dist, 0.0)

    def regularity_radii(self):
        half = (self._hi - self._lo) / 2
        gaps = self._lo[1:] - self._hi[:-1]
        interior = float(half.min())
        # outermost boundary points use a complementary ball of matching radius
        exterior = float(min(half[0], half[-1], *(gaps / 2)))
        gap = float(gaps.min()) if gaps.size else math.inf
        return interior, exterior, gap

    def scaled(self, lam):
        return IntervalUnion(tuple((lam * a, lam * b) for a, b in self.intervals))

    def component(self, k):
        return IntervalUnion((self.intervals[k],))

    def bounding_box(self):
        return np.array([self._lo[0]]), np.array([self._hi[-1]])

    def to_config(self):
        if len(self.intervals) == 1:
            return {"type": "interval", "interval": list(self.intervals[0])}
        return {"type": "interval_union", "intervals": [list(iv) for iv in self.intervals]}


def Interval(lo: float, hi: float) -> IntervalUnion:
    return IntervalUnion(((lo, hi),))


@dataclass(frozen=True)
class BallUnion(DomainSpec):
    balls: tuple[tuple[tuple[float, ...], float], ...]

    def __post_init__(self):
        balls = tuple((tuple(float(c) for c in ctr), float(r)) for ctr, r in self.balls)
        if not balls:
            raise ValueError("need at least one ball")
        d = len(balls[0][0])
        if d < 2:
            raise ValueError("balls need d >= 2; use intervals in d = 1")
        for ctr, r in balls:
            if len(ctr) != d:
                raise ValueError("all balls must share the same dimension")
            if not r > 0:
                raise ValueError("radius must be positive")
        ctrs = np.array([c for c, _ in balls])
        rads = np.array([r for _, r in balls])
        for i in range(len(balls)):
            for j in range(i + 1, len(balls)):
                if np.linalg.norm(ctrs[i] - ctrs[j]) - rads[i] - rads[j] <= 0:
                    raise ValueError("balls must be pairwise disjoint with a positive gap")
        object.__setattr__(self, "balls", balls)
        object.__setattr__(self, "_ctr", ctrs)
        object.__setattr__(self, "_rad", rads)

    @property
    def dimension(self) -> int:
        return self._ctr.shape[1]

    @property
    def component_count(self) -> int:
        return len(self.balls)

    def _signed(self, pts):
        # (n, k): radius minus distance to each center
        diff = pts[:, None, :] - self._ctr[None, :, :]
        return self._rad[None, :] - np.sqrt(np.einsum("nkd,nkd->nk", diff, diff))

    def component_index(self, pts):
        s = self._signed(pts)
        k = np.argmax(s, axis=1)
        return np.where(s[np.arange(len(k)), k] > 0, k, OUTSIDE)

    def distance(self, pts):
        return np.clip(self._signed(pts).max(axis=1), 0.0, None)

    def regularity_radii(self):
        interior = float(self._rad.min())
        gap = math.inf
        n = len(self.balls)
        for i in range(n):
            for j in range(i + 1, n):
                g = np.linalg.norm(self._ctr[i] - self._ctr[j]) - self._rad[i] - self._rad[j]
                gap = min(gap, float(g))
        exterior = min(interior, gap / 2)
        return interior, exterior, gap

    def scaled(self, lam):
        return BallUnion(tuple((tuple(lam * np.asarray(c)), lam * r) for c, r in self.balls))

    def component(self, k):
        return BallUnion((self.balls[k],))

    def bounding_box(self):
        return (self._ctr - self._rad[:, None]).min(axis=0), (self._ctr + self._rad[:, None]).max(axis=0)

    def to_config(self):
        if len(self.balls) == 1:
            c, r = self.balls[0]
            return {"type": "ball", "center": list(c), "radius": r}
        return {"type": "ball_union", "balls": [{"center": list(c), "radius": r} for c, r in self.balls]}


def Ball(center: Sequence[float], radius: float) -> BallUnion:
    return BallUnion(((tuple(center), radius),))


@dataclass(frozen=True)
class Annulus(DomainSpec):
    center: tuple[float, ...]
    r_inner: float
    r_outer: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) < 2:
            raise ValueError("annulus needs d >= 2")
        if not 0 < self.r_inner < self.r_outer:
            raise ValueError("need 0 < r_inner < r_outer")

    @property
    def dimension(self) -> int:
        return len(self.center)

    @property
    def component_count(self) -> int:
        return 1

    def _radial(self, pts):
        return np.linalg.norm(pts - np.asarray(self.center), axis=1)

    def component_index(self, pts):
        r = self._radial(pts)
        return np.where((r > self.r_inner) & (r < self.r_outer), 0, OUTSIDE)

    def distance(self, pts):
        r = self._radial(pts)
        return np.clip(np.minimum(r - self.r_inner, self.r_outer - r), 0.0, None)

    def regularity_radii(self):
        return (self.r_outer - self.r_inner) / 2, self.r_inner, math.inf

    def scaled(self, lam):
        return Annulus(tuple(lam * c for c in self.center), lam * self.r_inner, lam * self.r_outer)

    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.r_outer, c + self.r_outer

    def to_config(self):
        return {"type": "annulus", "center": list(self.center),
                "r_inner": self.r_inner, "r_outer": self.r_outer}


@dataclass(frozen=True)
class HalfSpace(DomainSpec):
    """The open set {x : normal . x > offset}."""

    normal: tuple[float, ...]
    offset: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if n.ndim != 1 or norm == 0:
            raise ValueError("normal must be a nonzero vector")
        object.__setattr__(self, "normal", tuple(n / norm))
        object.__setattr__(self, "offset", float(self.offset) / norm)

    @property
    def dimension(self) -> int:
        return len(self.normal)

    @property
    def component_count(self) -> int:
        return 1

    @property
    def bounded(self) -> bool:
        return False

    def component_index(self, pts):
        return np.where(pts @ np.asarray(self.normal) > self.offset, 0, OUTSIDE)

    def distance(self, pts):
        return np.clip(pts @ np.asarray(self.normal) - self.offset, 0.0, None)

    def regularity_radii(self):
        return math.inf, math.inf, math.inf

    def scaled(self, lam):
        return HalfSpace(self.normal, lam * self.offset)

    def bounding_box(self):
        raise ValueError("half-space is unbounded")

    def diameter(self):
        return math.inf

    def to_config(self):
        return {"type": "half_space", "normal": list(self.normal), "offset": self.offset}


def distance_to_complement(dom: DomainSpec, x):
    """Euclidean distance from x to the complement of dom (0 outside dom)."""
    pts, single = as_points(x, dom.dimension)
    out = dom.distance(pts)
    return float(out[0]) if single else out


def component_of(dom: DomainSpec, x):
    """0-based component index, or None for a point outside dom.

    Array input returns an int array with -1 marking outside points.
    """
    pts, single = as_points(x, dom.dimension)
    k = dom.component_index(pts)
    if single:
        return None if k[0] == OUTSIDE else int(k[0])
    return k


def regularity_radii(dom: DomainSpec) -> tuple[float, float, float]:
    """(interior ball radius, exterior ball radius, minimal component gap)."""
    return dom.regularity_radii()


def sample_uniform(dom: DomainSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample n points uniformly from a bounded domain."""
    lo, hi = dom.bounding_box()
    out = []
    have = 0
    while have < n:
        cand = rng.uniform(lo, hi, size=(max(2 * (n - have), 64), len(lo)))
        cand = cand[dom.contains(cand)]
        out.append(cand)
        have += len(cand)
    return np.concatenate(out)[:n]


def domain_from_config(cfg: dict) -> DomainSpec:
    kind = cfg["type"]
    if kind == "interval":
        lo, hi = cfg["interval"]
        return Interval(lo, hi)
    if kind == "interval_union":
        return IntervalUnion(tuple(tuple(iv) for iv in cfg["intervals"]))
    if kind == "ball":
        return Ball(cfg["center"], cfg["radius"])
    if kind == "ball_union":
        return BallUnion(tuple((tuple(b["center"]), b["radius"]) for b in cfg["balls"]))
    if kind == "annulus":
        return Annulus(tuple(cfg["center"]), cfg["r_inner"], cfg["r_outer"])
    if kind == "half_space":
        return HalfSpace(tuple(cfg["normal"]), cfg.get("offset", 0.0))
    raise ValueError(f"unknown domain type {kind!r}")
