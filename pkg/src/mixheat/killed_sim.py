"""Time-stepped simulation of X^a killed on leaving a domain.

Each step applies the Brownian sub-move first (checked for a continuous exit
and, optionally, for a Brownian-bridge crossing), then adds the stable jump
at the step end (checked only at its endpoint).  Jumps never trigger bridge
killing: X^a jumps across space rather than traversing it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import OUTSIDE, DomainSpec, as_points
from .levy_sampling import ProcessParams, sample_increment
from .parallel import DEFAULT_BLOCK, as_stream, map_blocks

EXIT_NONE, EXIT_CONTINUOUS, EXIT_JUMP, EXIT_BRIDGE = 0, 1, 2, 3
EXIT_NAMES = {EXIT_CONTINUOUS: "continuous", EXIT_JUMP: "jump", EXIT_BRIDGE: "bridge"}


@dataclass(frozen=True)
class SimScheme:
    dt: float = 1e-3
    bridge_correction: bool = True
    max_steps: int = 10_000_000
    # draw increments for dead paths too, so equal seeds give path-by-path coupling
    coupled: bool = False
    block_size: int = DEFAULT_BLOCK

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def default_scheme(dom: DomainSpec, **kw) -> SimScheme:
    """dt = 1e-3 * min(1, R^2) with R the interior ball radius."""
    r1 = dom.regularity_radii()[0]
    return SimScheme(dt=1e-3 * min(1.0, r1 ** 2), **kw)


@dataclass
class KilledPathRecord:
    survived: bool
    exit_time: Optional[float]
    exit_mode: Optional[str]
    exit_position: Optional[np.ndarray]
    final_position: Optional[np.ndarray]
    path_touchpoints: Optional[list] = None


@dataclass
class PathBatch:
    """Outcome of a block of independent killed paths."""

    survived: np.ndarray
    exit_time: np.ndarray
    exit_mode: np.ndarray
    exit_position: np.ndarray
    final_position: np.ndarray
    snapshots: dict = field(default_factory=dict)   # time -> (n, d), NaN once dead

    def __len__(self):
        return len(self.survived)

    def record(self, i: int) -> KilledPathRecord:
        if self.survived[i]:
            return KilledPathRecord(True, None, None, None, self.final_position[i].copy())
        return KilledPathRecord(False, float(self.exit_time[i]), EXIT_NAMES[int(self.exit_mode[i])],
                                self.exit_position[i].copy(), None)


def time_grid(horizon: float, dt: float, checkpoints: Sequence[float] = ()) -> np.ndarray:
    """Step end times: multiples of dt, plus each checkpoint, ending at horizon."""
    n = int(math.ceil(horizon / dt - 1e-9))
    grid = np.minimum(dt * np.arange(1, n + 1), horizon)
    grid[-1] = horizon
    if len(checkpoints):
        grid = np.concatenate([grid, np.asarray(checkpoints, dtype=float)])
        grid = np.unique(grid)
        keep = np.concatenate([[True], np.diff(grid) > 1e-12 * max(1.0, horizon)])
        grid = grid[keep]
    return grid


def _check_start(dom: DomainSpec, x0) -> np.ndarray:
    pts, _ = as_points(x0, dom.dimension)
    if pts.shape[0] != 1:
        raise ValueError("x0 must be a single point")
    if not np.all(np.isfinite(pts)):
        raise ValueError("x0 has non-finite coordinates")
    if dom.component_index(pts)[0] == OUTSIDE:
        raise ValueError(f"x0={pts[0].tolist()} is not in the domain")
    return pts[0]


StepHook = Callable[[np.ndarray, np.ndarray, object, np.ndarray, np.ndarray], None]


def simulate_block(dom: DomainSpec, params: ProcessParams, x0, horizon: float, scheme: SimScheme,
                   n: int, rng: np.random.Generator, checkpoints: Sequence[float] = (),
                   step_hook: Optional[StepHook] = None, trace: bool = False) -> PathBatch:
    """Simulate n killed paths from x0 up to ``horizon``.

    ``step_hook(idx, z, inc, end, alive)`` sees every step of the paths alive
    at its start: their indices, start points, the IncrementSample, the end
    points and whether each path is still alive after the step.
    """
    if params.d != dom.dimension:
        raise ValueError(f"process dimension {params.d} does not match domain dimension {dom.dimension}")
    start = _check_start(dom, x0)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    grid = time_grid(horizon, scheme.dt, checkpoints)
    if len(grid) > scheme.max_steps:
        raise ValueError(f"horizon needs {len(grid)} steps, scheme allows {scheme.max_steps}")
    d = dom.dimension
    pos = np.tile(start, (n, 1))
    comp = np.full(n, dom.component_index(start[None, :])[0])
    dist = np.full(n, dom.distance(start[None, :])[0])
    alive = np.ones(n, dtype=bool)
    exit_time = np.full(n, np.nan)
    exit_mode = np.zeros(n, dtype=np.int8)
    exit_pos = np.full((n, d), np.nan)
    snaps = {}
    cp = set(float(c) for c in checkpoints)
    touch = [(0.0, start.copy())] if trace else None
    t_prev = 0.0
    for t_now in grid:
        h = t_now - t_prev
        t_prev = t_now
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        if scheme.coupled:
            full = sample_increment(params, h, rng, size=n)
            inc = type(full)(h, full.dS[idx], full.gaussian_part[idx], full.jump_part[idx])
            u_all = rng.random(n) if scheme.bridge_correction else None
        else:
            inc = sample_increment(params, h, rng, size=idx.size)
        z = pos[idx]
        mid = z + inc.gaussian_part
        c_mid = dom.component_index(mid)
        cont = c_mid != comp[idx]
        bridge = np.zeros(idx.size, dtype=bool)
        d_mid = dom.distance(mid)
        if scheme.bridge_correction:
            u = u_all[idx] if scheme.coupled else rng.random(idx.size)
            # crossing probability of a variance-rate-2 Brownian bridge over a flat boundary
            bridge = ~cont & (u < np.exp(-dist[idx] * d_mid / h))
        if params.a == 0:
            end = mid
            c_end = c_mid
            d_end = d_mid
        else:
            end = mid + inc.jump_part
            c_end = dom.component_index(end)
            d_end = dom.distance(end)
        jumped_out = ~cont & ~bridge & (c_end == OUTSIDE)
        dead = cont | bridge | jumped_out
        if dead.any():
            k = idx[dead]
            exit_time[k] = t_now
            mode = np.where(cont, EXIT_CONTINUOUS, EXIT_BRIDGE)
            big_jump = np.linalg.norm(inc.jump_part, axis=1) > np.linalg.norm(inc.gaussian_part, axis=1)
            mode = np.where(jumped_out, np.where(big_jump, EXIT_JUMP, EXIT_CONTINUOUS), mode)
            exit_mode[k] = mode[dead]
            exit_pos[k] = np.where(jumped_out[:, None], end, mid)[dead]
            alive[k] = False
        live = ~dead
        kl = idx[live]
        pos[kl] = end[live]
        comp[kl] = c_end[live]
        dist[kl] = d_end[live]
        if step_hook is not None:
            step_hook(idx, z, inc, end, live)
        if trace:
            touch.append((float(t_now), (end[0] if live[0] else mid[0]).copy()))
        if t_now in cp:
            snap = np.full((n, d), np.nan)
            snap[alive] = pos[alive]
            snaps[float(t_now)] = snap
    for c in cp:
        snaps.setdefault(c, np.full((n, d), np.nan))
    final = np.where(alive[:, None], pos, np.nan)
    batch = PathBatch(alive, exit_time, exit_mode, exit_pos, final, snaps)
    if trace:
        batch.touchpoints = touch
    return batch


def simulate_killed_path(dom: DomainSpec, params: ProcessParams, x0, t: float, scheme: SimScheme,
                         rng, record_path: bool = False) -> KilledPathRecord:
    """One killed trajectory of X^a started at x0, observed up to time t."""
    gen = as_stream(rng).generator() if not isinstance(rng, np.random.Generator) else rng
    batch = simulate_block(dom, params, x0, t, scheme, 1, gen, trace=record_path)
    rec = batch.record(0)
    if record_path:
        rec.path_touchpoints = batch.touchpoints
    return rec


def _survival_block(dom, params, x0, t, scheme, checkpoints, size, gen):
    b = simulate_block(dom, params, x0, t, scheme, size, gen, checkpoints=checkpoints)
    if checkpoints:
        return np.array([np.isfinite(b.snapshots[c][:, 0]).sum() for c in checkpoints]), size
    return np.array([b.survived.sum()]), size


def survival_curve(dom: DomainSpec, params: ProcessParams, x0, times: Sequence[float], scheme: SimScheme,
                   n_paths: int, rng, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """P_x0(tau_D > t) for each t in ``times`` from one set of paths."""
    times = sorted(float(t) for t in times)
    fn = partial(_survival_block, dom, params, x0, times[-1], scheme, tuple(times))
    parts = map_blocks(fn, n_paths, as_stream(rng), scheme.block_size, workers)
    k = sum(p[0] for p in parts)
    n = sum(p[1] for p in parts)
    est = k / n
    return est, np.sqrt(est * (1 - est) / n)


def survival_probability(dom: DomainSpec, params: ProcessParams, x0, t: float, scheme: SimScheme,
                         n_paths: int, rng, workers: int = 1) -> tuple[float, float]:
    """Estimate of P_x0(tau_D > t) with its binomial standard error."""
    fn = partial(_survival_block, dom, params, x0, t, scheme, ())
    parts = map_blocks(fn, n_paths, as_stream(rng), scheme.block_size, workers)
    k = int(sum(p[0][0] for p in parts))
    est = k / n_paths
    return est, math.sqrt(est * (1 - est) / n_paths)


def simulate_paths(dom: DomainSpec, params: ProcessParams, x0, t: float, scheme: SimScheme,
                   n_paths: int, rng, workers: int = 1) -> PathBatch:
    """All paths concatenated into one PathBatch (memory grows with n_paths)."""
    fn = partial(_batch_block, dom, params, x0, t, scheme)
    parts = map_blocks(fn, n_paths, as_stream(rng), scheme.block_size, workers)
    return PathBatch(*(np.concatenate([getattr(p, f) for p in parts])
                       for f in ("survived", "exit_time", "exit_mode", "exit_position", "final_position")))


def _batch_block(dom, params, x0, t, scheme, size, gen):
    return simulate_block(dom, params, x0, t, scheme, size, gen)


def exit_statistics(records, bins: int | Sequence[float] = 20, hist_range=None) -> dict:
    """Exit-mode frequencies, exit-position histogram and mean exit time.

    ``records`` is a PathBatch or a list of KilledPathRecord.  The histogram
    is over the first coordinate in d = 1 and over |exit position| otherwise.
    """
    if isinstance(records, PathBatch):
        batch = records
    else:
        records = list(records)
        if not records:
            raise ValueError("exit_statistics needs at least one record")
        codes = {v: k for k, v in EXIT_NAMES.items()}
        killed = [r for r in records if not r.survived]
        d = len((records[0].final_position if records[0].survived else records[0].exit_position))
        batch = PathBatch(
            np.array([r.survived for r in records]),
            np.array([np.nan if r.survived else r.exit_time for r in records]),
            np.array([EXIT_NONE if r.survived else codes[r.exit_mode] for r in records], dtype=np.int8),
            np.array([np.full(d, np.nan) if r.survived else r.exit_position for r in records]),
            np.array([r.final_position if r.survived else np.full(d, np.nan) for r in records]),
        )
        del killed
    if len(batch) == 0:
        raise ValueError("exit_statistics needs at least one record")
    dead = ~batch.survived
    n_killed = int(dead.sum())
    freqs = {name: (float((batch.exit_mode[dead] == code).sum()) / n_killed if n_killed else 0.0)
             for code, name in EXIT_NAMES.items()}
    times = batch.exit_time[dead]
    ep = batch.exit_position[dead]
    coord = ep[:, 0] if ep.shape[1] == 1 else np.linalg.norm(ep, axis=1)
    counts, edges = np.histogram(coord, bins=bins, range=hist_range)
    return {
        "n_paths": len(batch),
        "n_killed": n_killed,
        "frequencies": freqs,
        "mean_exit_time": float(times.mean()) if n_killed else math.nan,
        "exit_time_se": float(times.std(ddof=1) / math.sqrt(n_killed)) if n_killed > 1 else math.nan,
        "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
    }
