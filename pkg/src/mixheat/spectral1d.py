"""Dense 1-D discretization of -(Delta + a^alpha Delta^{alpha/2}) on interval unions.

Nodes sit at l + i*h strictly inside each interval, each owning the cell of
width h around it; the function is extended by zero outside D.  The nonlocal
part uses exact cell integrals of |x - y|^{-1-alpha} off the diagonal, the
exact integral over everything outside the node's own cell on the diagonal,
and a second-difference correction for the singular cell.  The resulting
matrix is symmetric and affine in a^alpha:

    M = T / h^2 + a^alpha * A(1, alpha) * K
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .geometry import IntervalUnion
from .levy_sampling import ProcessParams, fractional_constant

MIN_NODES = 16


class MeshError(ValueError):
    pass


def _interval_nodes(dom: IntervalUnion, h: float):
    nodes, comp = [], []
    for k, (lo, hi) in enumerate(dom.intervals):
        m = (hi - lo) / h
        if abs(m - round(m)) > 1e-8 * max(1.0, m):
            raise MeshError(f"mesh width {h} does not divide interval ({lo}, {hi})")
        m = int(round(m))
        if m - 1 < MIN_NODES:
            raise MeshError(f"interval ({lo}, {hi}) gets {m - 1} nodes at h={h}; need >= {MIN_NODES}")
        nodes.append(lo + h * np.arange(1, m))
        comp.append(np.full(m - 1, k))
    return np.concatenate(nodes), np.concatenate(comp)


def second_difference(comp: np.ndarray) -> np.ndarray:
    """Tridiagonal 2u_i - u_{i-1} - u_{i+1}, not coupling across interval ends."""
    n = len(comp)
    t = 2.0 * np.eye(n)
    same = comp[1:] == comp[:-1]
    idx = np.arange(n - 1)[same]
    t[idx, idx + 1] = -1.0
    t[idx + 1, idx] = -1.0
    return t


def nonlocal_stencil(nodes: np.ndarray, comp: np.ndarray, h: float, alpha: float) -> np.ndarray:
    """K such that A(1, alpha) * K discretizes (-Delta)^{alpha/2} with zero extension."""
    dist = np.abs(nodes[:, None] - nodes[None, :])
    off = dist > h / 2
    w = np.zeros_like(dist)
    dd = dist[off]
    w[off] = ((dd - h / 2) ** (-alpha) - (dd + h / 2) ** (-alpha)) / alpha
    k = -w
    k[np.diag_indices_from(k)] = 2 * (h / 2) ** (-alpha) / alpha
    c_sing = (h / 2) ** (2 - alpha) / (2 - alpha) / h ** 2
    return k + c_sing * second_difference(comp)


@dataclass
class SpectralModel:
    dom: IntervalUnion
    params: ProcessParams
    h: float
    nodes: np.ndarray
    comp: np.ndarray
    local: np.ndarray          # T / h^2
    nonlocal_unit: np.ndarray  # A(1, alpha) * K, independent of a
    eigenvalues: np.ndarray
    phi: np.ndarray            # columns phi_k at nodes, sum(phi_k^2) * h = 1
    _green: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return self.local + self.params.weight * self.nonlocal_unit

    @property
    def nonlocal_block(self) -> np.ndarray:
        return self.params.weight * self.nonlocal_unit

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    def basis_at(self, x) -> np.ndarray:
        """Interpolation matrix P with P @ (nodal values) = values at x (zero at the ends)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.zeros((len(x), self.size))
        comp_x = self.dom.component_index(x[:, None])
        for i, (xi, k) in enumerate(zip(x, comp_x)):
            if k < 0:
                raise ValueError(f"point {xi} is not in the domain")
            lo = self.dom.intervals[k][0]
            members = np.flatnonzero(self.comp == k)
            first, m1 = members[0], len(members)      # local nodes j = 1..m1, ends j = 0, m1 + 1 are zero
            s = (xi - lo) / self.h
            j = int(math.floor(s + 1e-9))
            f = max(s - j, 0.0)
            if f < 1e-9:
                f = 0.0
            if 1 <= j <= m1:
                p[i, first + j - 1] += 1 - f
            if f > 0 and 1 <= j + 1 <= m1:
                p[i, first + j] += f
        return p

    def green_matrix(self) -> np.ndarray:
        if self._green is None:
            self._green = linalg.inv(self.matrix) / self.h
            self._green = (self._green + self._green.T) / 2
        return self._green


def assemble(dom: IntervalUnion, params: ProcessParams, h: float) -> SpectralModel:
    """Assemble the operator matrix and its full eigendecomposition."""
    if not isinstance(dom, IntervalUnion):
        raise TypeError("spectral model needs a bounded 1-D interval union")
    if params.d != 1:
        raise ValueError("spectral model is one-dimensional")
    nodes, comp = _interval_nodes(dom, h)
    local = second_difference(comp) / h ** 2
    unit = fractional_constant(1, params.alpha) * nonlocal_stencil(nodes, comp, h, params.alpha)
    mat = local + params.weight * unit
    lam, vec = linalg.eigh(mat)
    phi = vec / math.sqrt(h)
    for k in range(phi.shape[1]):
        s = phi[:, k].sum()
        if abs(s) < 1e-10 * np.abs(phi[:, k]).sum():
            s = phi[np.argmax(np.abs(phi[:, k])), k]
        if s < 0:
            phi[:, k] = -phi[:, k]
    return SpectralModel(dom, params, h, nodes, comp, local, unit, lam, phi)


def component_models(model: SpectralModel) -> list[SpectralModel]:
    return [assemble(model.dom.component(k), model.params, model.h)
            for k in range(model.dom.component_count)]


def eigen_kernel(model: SpectralModel, t: float, x, y, K: Optional[int] = None,
                 tol: Optional[float] = None):
    """Truncated eigen-expansion sum_k e^{-lambda_k t} phi_k(x) phi_k(y).

    Returns (value, truncation_bound); the bound is sum over dropped modes of
    e^{-lambda_k t} max|phi_k|^2.  Scalars in, scalars out; arrays give the
    outer grid over x and y.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    n = model.size
    K = n if K is None else int(K)
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, {n}]")
    px = model.basis_at(x) @ model.phi[:, :K]
    py = model.basis_at(y) @ model.phi[:, :K]
    decay = np.exp(-model.eigenvalues[:K] * t)
    val = (px * decay) @ py.T
    rest = model.eigenvalues[K:]
    bound = float(np.sum(np.exp(-rest * t) * np.max(model.phi[:, K:] ** 2, axis=0))) if K < n else 0.0
    if tol is not None and bound > tol:
        raise ValueError(f"truncation bound {bound:.3g} exceeds tolerance {tol:.3g}; raise K or t")
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(val[0, 0]), bound
    return val, bound


def green_function(model: SpectralModel, x, y):
    """G = sum_k phi_k(x) phi_k(y) / lambda_k, via the inverse matrix."""
    g = model.basis_at(x) @ model.green_matrix() @ model.basis_at(y).T
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(g[0, 0])
    return g


def model_summary(model: SpectralModel, n_eig: int = 10) -> dict:
    lam = model.eigenvalues[:n_eig]
    phi1 = model.phi[:, 0]
    delta = model.dom.distance(model.nodes[:, None])
    return {
        "a": model.params.a, "alpha": model.params.alpha, "h": model.h,
        "eigenvalues": [float(v) for v in lam],
        "phi1_over_delta_max": float(np.max(phi1 / delta)),
        "phi1_over_delta_min": float(np.min(phi1 / delta)),
    }


def largetime_checks(dom: IntervalUnion, alpha: float, a_grid: Sequence[float], h: float,
                     t_grid: Sequence[float], points: Sequence[float]) -> dict:
    """Large-time shape ratios and principal-eigenvalue diagnostics on a union.

    For every a: coupled vs per-component principal eigenvalues; same- and
    cross-component kernel ratios against the large-time shapes over t_grid
    and all pairs of ``points``; the bound phi_1 <= c * delta on the grid.
    The a -> 0 section compares against the Brownian per-component ground
    energies and tracks kernel / a^alpha across the grid.
    """
    if dom.component_count < 2:
        raise ValueError("largetime_checks needs a disconnected union")
    pts = np.asarray(points, dtype=float)
    comp = dom.component_index(pts[:, None])
    if np.any(comp < 0):
        raise ValueError(f"points outside the domain: {pts[comp < 0].tolist()}")
    delta = dom.distance(pts[:, None])
    dd = delta[:, None] * delta[None, :]
    same = comp[:, None] == comp[None, :]
    brownian = [m.lambda1 for m in component_models(assemble(dom, ProcessParams(alpha, 0.0, 1), h))]
    per_a = []
    for a in a_grid:
        params = ProcessParams(alpha, float(a), 1)
        model = assemble(dom, params, h)
        lam_comp = np.array([m.lambda1 for m in component_models(model)])
        lam = model.lambda1
        lam_x = lam_comp[comp]
        w = params.weight
        same_r, cross_r, cross_up = [], [], []
        for t in t_grid:
            k, _ = eigen_kernel(model, t, pts, pts)
            shape_same = (np.exp(-lam_x[:, None] * t) + min(1.0, w * t) * np.exp(-lam * t)) * dd
            shape_cross = w * t * np.exp(-t * np.maximum(lam_x[:, None], lam_x[None, :])) * dd
            shape_up = min(1.0, w * t) * np.exp(-lam * t) * dd
            same_r.append(k[same] / shape_same[same])
            if w > 0:   # at a = 0 the components decouple and both cross quantities vanish
                cross_r.append(k[~same] / shape_cross[~same])
                cross_up.append(k[~same] / shape_up[~same])
        same_r = np.concatenate(same_r)
        cross_r = np.concatenate(cross_r) if cross_r else None
        cross_up = np.concatenate(cross_up) if cross_up else None
        phi1 = model.phi[:, 0]
        per_a.append({
            "a": float(a),
            "lambda1": lam,
            "lambda1_components": lam_comp.tolist(),
            "coupled_below_components": bool(lam < lam_comp.min()),
            "phi1_positive": bool(np.all(phi1 > 0)),
            "phi1_over_delta_max": float(np.max(phi1 / dom.distance(model.nodes[:, None]))),
            "same_ratio_min": float(same_r.min()), "same_ratio_max": float(same_r.max()),
            "cross_ratio_min": None if cross_r is None else float(cross_r.min()),
            "cross_ratio_max": None if cross_r is None else float(cross_r.max()),
            "cross_upper_ratio_max": None if cross_up is None else float(cross_up.max()),
            "cross_over_weight": (eigen_kernel(model, float(t_grid[0]), pts, pts)[0][~same] / w).tolist()
            if w > 0 else None,
        })
    lam_all = np.array([p["lambda1"] for p in per_a])
    ratios = np.array([p[k] for p in per_a for k in ("same_ratio_min", "same_ratio_max",
                                                     "cross_ratio_min", "cross_ratio_max")
                       if p[k] is not None])
    return {
        "alpha": alpha, "h": h, "t_grid": [float(t) for t in t_grid], "points": pts.tolist(),
        "brownian_component_lambda1": brownian,
        "per_a": per_a,
        "shape_constant": float(max(ratios.max(), 1 / ratios.min())),
        "lambda1_min": float(lam_all.min()), "lambda1_max": float(lam_all.max()),
        "brownian_limit": float(min(brownian)),
    }
