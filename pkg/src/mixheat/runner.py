"""Experiment configs: parsing, validation, execution and atomic result files.

A config is a TOML file with a top-level ``kind``, ``seed``, a ``[domain]``
table, a ``[params]`` table of grids and an optional ``[scheme]`` table.
Every result row carries the config hash and seed.  The hash covers the
config minus ``workers`` and ``output``, so the worker count never changes
any output byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np
import tomli

from . import envelopes, identity_checks, kernel_estimation, killed_sim, spectral1d
from .geometry import OUTSIDE, as_points, domain_from_config
from .levy_sampling import ProcessParams, RngStream

KINDS = ("survival", "kernel", "green", "envelope_certify", "spectral", "largetime",
         "levy_check", "scaling_check", "subordination_check")
SCHEMA_VERSION = 1

_num = {"type": "number"}
_num_list = {"type": "array", "items": _num, "minItems": 1}
_point = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]}
_point_list = {"type": "array", "items": _point, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["kind", "seed", "domain", "params"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(KINDS)},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
        "domain": {"type": "object", "required": ["type"]},
        "target": {"type": "object", "required": ["type"]},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "required": ["alpha", "a"],
            "properties": {
                "alpha": {"type": "array", "minItems": 1,
                          "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2}},
                "a": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                "t": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
                "x": _point_list,
                "y": _point_list,
                "lambda": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "scheme": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "bridge": {"type": "boolean"},
                "n_paths": {"type": "integer", "minimum": 1},
                "delta_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.1},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["auto", "spectral", "mc"]},
                "survival_mode": {"type": "boolean"},
                "max_rel_se": {"type": "number", "exclusiveMinimum": 0},
                "c_bound": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

# grid fields each kind needs beyond alpha and a
REQUIRED = {
    "survival": ("t", "x"),
    "kernel": ("t", "x", "y"),
    "green": ("x", "y"),
    "envelope_certify": ("t", "x"),
    "spectral": (),
    "largetime": ("t", "x"),
    "levy_check": ("t", "x"),
    "scaling_check": ("t", "x", "lambda"),
    "subordination_check": ("t", "x", "y"),
}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def _path(err) -> str:
    out = ""
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _message(err) -> str:
    name = next((p for p in reversed(list(err.absolute_path)) if isinstance(p, str)), "value")
    v = err.validator_value
    if err.validator == "minimum":
        return f"{name} must be ≥ {v:g}"
    if err.validator == "exclusiveMinimum":
        return f"{name} must be > {v:g}"
    if err.validator == "maximum":
        return f"{name} must be ≤ {v:g}"
    if err.validator == "exclusiveMaximum":
        return f"{name} must be < {v:g}"
    if err.validator == "required":
        return err.message
    if err.validator == "additionalProperties":
        return err.message
    return err.message


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    domain: dict
    params: dict
    scheme: dict = field(default_factory=dict)
    target: Optional[dict] = None
    workers: int = 1
    output: str = "results"

    def canonical(self) -> dict:
        out = {"kind": self.kind, "seed": self.seed, "domain": self.domain, "params": self.params,
               "scheme": self.scheme, "schema_version": SCHEMA_VERSION}
        if self.target is not None:
            out["target"] = self.target
        return out

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def dom(self):
        return domain_from_config(self.domain)


def validate_dict(raw: dict, kind: Optional[str] = None) -> list[str]:
    """Schema and semantic errors for a parsed config (empty list means valid)."""
    raw = dict(raw)
    if kind is not None:
        raw.setdefault("kind", kind)
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = [f"{_path(e)}: {_message(e)}" for e in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))]
    if errors:
        return errors
    if kind is not None and raw["kind"] != kind:
        return [f"kind: config is '{raw['kind']}' but the command runs '{kind}'"]
    params = raw["params"]
    for f in REQUIRED[raw["kind"]]:
        if f not in params:
            errors.append(f"params: '{f}' is required for kind '{raw['kind']}'")
    if raw["kind"] == "levy_check" and "target" not in raw:
        errors.append("target: a target set is required for kind 'levy_check'")
    try:
        dom = domain_from_config(raw["domain"])
    except (ValueError, KeyError, TypeError) as exc:
        return errors + [f"domain: {exc}"]
    for f in ("x", "y"):
        for i, p in enumerate(params.get(f, [])):
            try:
                pts, _ = as_points(p, dom.dimension)
            except ValueError as exc:
                errors.append(f"params.{f}[{i}]: {exc}")
                continue
            if dom.component_index(pts)[0] == OUTSIDE:
                errors.append(f"params.{f}[{i}]: point {p} is not in the domain {raw['domain']}")
    if "target" in raw:
        try:
            domain_from_config(raw["target"])
        except (ValueError, KeyError, TypeError) as exc:
            errors.append(f"target: {exc}")
    return errors


def load_config(path, kind: Optional[str] = None, seed: Optional[int] = None,
                workers: Optional[int] = None, output: Optional[str] = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"parse error: {exc}"]) from None
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    if seed is not None:
        raw["seed"] = seed
    errors = validate_dict(raw, kind)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(raw["kind"], int(raw["seed"]), raw["domain"], raw["params"], raw.get("scheme", {}),
                            raw.get("target"), int(workers or raw.get("workers", 1)),
                            output or raw.get("output", "results"))


def validate(path) -> list[str]:
    try:
        load_config(path)
    except ConfigError as exc:
        return exc.errors
    return []


# ---------------------------------------------------------------------------
# atomic output

def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _json_text(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class RunResult:
    files: dict            # file name -> text
    assertions: list       # (name, passed)
    summary: list          # stdout lines

    @property
    def ok(self) -> bool:
        return all(p for _, p in self.assertions)


# ---------------------------------------------------------------------------
# experiment kinds

def _scheme(cfg: ExperimentConfig, dom) -> killed_sim.SimScheme:
    base = killed_sim.default_scheme(dom)
    return killed_sim.SimScheme(dt=float(cfg.scheme.get("dt", base.dt)),
                                bridge_correction=bool(cfg.scheme.get("bridge", True)))


def _coord(p, d):
    return p if d > 1 else float(np.ravel(p)[0])


def _cols(prefix, p, d):
    return [f"{prefix}{i + 1}" for i in range(d)], np.atleast_1d(p).astype(float).tolist()


def _run_survival(cfg, dom, stream):
    d = dom.dimension
    n = int(cfg.scheme.get("n_paths", 10_000))
    scheme = _scheme(cfg, dom)
    times = sorted(float(t) for t in cfg.params["t"])
    rows, asserts, lines = [], [], []
    k = 0
    for alpha in cfg.params["alpha"]:
        for a in cfg.params["a"]:
            params = ProcessParams(float(alpha), float(a), d)
            for x in cfg.params["x"]:
                est, se = killed_sim.survival_curve(dom, params, _coord(x, d), times, scheme, n,
                                                    stream.child(k), cfg.workers)
                k += 1
                xc, xv = _cols("x", x, d)
                for t, e, s in zip(times, est, se):
                    rows.append([float(alpha), float(a), *xv, t, float(e), float(s), n, scheme.dt,
                                 "bridge" if scheme.bridge_correction else "endpoint", cfg.seed, cfg.config_hash])
                mono = bool(np.all(np.diff(est) <= 4 * np.hypot(se[1:], se[:-1])))
                asserts.append((f"survival monotone alpha={alpha} a={a} x={x}", mono))
                lines.append(f"alpha={alpha} a={a} x={x}: " + " ".join(f"{e:.4f}" for e in est))
    header = ["alpha", "a", *xc, "t", "survival", "std_error", "n_paths", "dt", "scheme", "seed", "config_hash"]
    return {"survival.csv": _csv_text(header, rows)}, asserts, lines


def _run_kernel(cfg, dom, stream):
    d = dom.dimension
    n = int(cfg.scheme.get("n_paths", 10_000))
    scheme = _scheme(cfg, dom)
    frac = float(cfg.scheme.get("delta_fraction", 0.01))
    ys = [_coord(y, d) for y in cfg.params["y"]]
    ests, k = [], 0
    for alpha in cfg.params["alpha"]:
        for a in cfg.params["a"]:
            params = ProcessParams(float(alpha), float(a), d)
            for x in cfg.params["x"]:
                grid = kernel_estimation.estimate_kernel_grid(dom, params, _coord(x, d), ys, cfg.params["t"],
                                                              scheme, n, stream.child(k), frac,
                                                              workers=cfg.workers)
                k += 1
                ests.extend(e for row in grid for e in row)
    header, rows = kernel_estimation.kernel_rows(ests)
    rows = [r + [cfg.config_hash] for r in rows]
    lines = [f"{len(ests)} kernel estimates"]
    return {"kernel.csv": _csv_text(header + ["config_hash"], rows)}, [], lines


def _run_green(cfg, dom, stream):
    d = dom.dimension
    method = cfg.scheme.get("method", "auto")
    h = float(cfg.scheme.get("h", 1 / 256))
    n = int(cfg.scheme.get("n_paths", 10_000))
    rows, k = [], 0
    for alpha in cfg.params["alpha"]:
        for a in cfg.params["a"]:
            params = ProcessParams(float(alpha), float(a), d)
            for x in cfg.params["x"]:
                for y in cfg.params["y"]:
                    if np.allclose(np.atleast_1d(x), np.atleast_1d(y)):
                        continue
                    g = kernel_estimation.estimate_green(dom, params, _coord(x, d), _coord(y, d), method, h=h,
                                                         scheme=_scheme(cfg, dom), n_paths=n, rng=stream.child(k),
                                                         workers=cfg.workers)
                    k += 1
                    shape = envelopes.g_form(dom, params, _coord(x, d), _coord(y, d)) if a > 0 else math.nan
                    xc, xv = _cols("x", x, d)
                    yc, yv = _cols("y", y, d)
                    rows.append([float(alpha), float(a), *xv, *yv, g.value, g.std_error, g.T_max, g.tail_estimate,
                                 float(shape), g.method, cfg.seed, cfg.config_hash])
    header = ["alpha", "a", *xc, *yc, "green", "std_error", "T_max", "tail_estimate", "g_form", "method",
              "seed", "config_hash"]
    return {"green.csv": _csv_text(header, rows)}, [], [f"{len(rows)} Green values"]


def _run_certify(cfg, dom, stream):
    d = dom.dimension
    n = int(cfg.scheme.get("n_paths", 10_000))
    scheme = _scheme(cfg, dom)
    pts = [_coord(p, d) for p in cfg.params["x"]]
    policy = envelopes.FitPolicy(max_rel_se=float(cfg.scheme.get("max_rel_se", 0.10)),
                                 c_bound=float(cfg.scheme.get("c_bound", 50.0)), required_coverage=0.0)
    files, asserts, lines = {}, [], []
    for alpha in cfg.params["alpha"]:
        ests, k = [], 0
        for a in cfg.params["a"]:
            params = ProcessParams(float(alpha), float(a), d)
            for x in pts:
                grid = kernel_estimation.estimate_kernel_grid(dom, params, x, pts, cfg.params["t"], scheme, n,
                                                              stream.child(k), workers=cfg.workers)
                k += 1
                ests.extend(e for row in grid for e in row)
        rep = envelopes.certify_two_sided(ests, dom, policy)
        doc = {"config_hash": cfg.config_hash, "seed": cfg.seed, "alpha": alpha, "report": rep.to_json()}
        files[f"certify_alpha{alpha}.json"] = _json_text(doc)
        rows = [[p["a"], p["t"], *p["x"], *p["y"], p["value"], p["std_error"], p["ratio_lower"],
                 p["ratio_upper"], cfg.seed, cfg.config_hash] for p in rep.points]
        header = ["a", "t", *[f"x{i + 1}" for i in range(d)], *[f"y{i + 1}" for i in range(d)], "value",
                  "std_error", "ratio_lower", "ratio_upper", "seed", "config_hash"]
        files[f"certify_alpha{alpha}.csv"] = _csv_text(header, rows)
        full = rep.coverage == 1.0
        asserts.append((f"certify alpha={alpha} uniform_in_a", rep.uniform_in_a))
        asserts.append((f"certify alpha={alpha} full coverage", full))
        lines.append(f"alpha={alpha}: C={rep.constant:.3g} coverage={rep.coverage:.2f} "
                     f"uniform_in_a={rep.uniform_in_a}")
    return files, asserts, lines


def _run_spectral(cfg, dom, stream):
    h = float(cfg.scheme.get("h", 1 / 256))
    rows = []
    for alpha in cfg.params["alpha"]:
        for a in cfg.params["a"]:
            m = spectral1d.assemble(dom, ProcessParams(float(alpha), float(a), 1), h)
            s = spectral1d.model_summary(m)
            rows.append([float(alpha), float(a), h, *s["eigenvalues"], s["phi1_over_delta_max"],
                         s["phi1_over_delta_min"], cfg.config_hash])
    n_eig = len(rows[0]) - 6
    header = ["alpha", "a", "h", *[f"lambda{k + 1}" for k in range(n_eig)], "phi1_over_delta_max",
              "phi1_over_delta_min", "config_hash"]
    return {"spectral.csv": _csv_text(header, rows)}, [], [f"{len(rows)} spectral models"]


def _run_largetime(cfg, dom, stream):
    h = float(cfg.scheme.get("h", 1 / 128))
    files, asserts, lines = {}, [], []
    pts = [float(np.ravel(p)[0]) for p in cfg.params["x"]]
    for alpha in cfg.params["alpha"]:
        rep = spectral1d.largetime_checks(dom, float(alpha), [float(a) for a in cfg.params["a"]], h,
                                          [float(t) for t in cfg.params["t"]], pts)
        files[f"largetime_alpha{alpha}.json"] = _json_text({"config_hash": cfg.config_hash, "report": rep})
        asserts.append((f"largetime alpha={alpha} coupled below components",
                        all(p["coupled_below_components"] for p in rep["per_a"] if p["a"] > 0)))
        lines.append(f"alpha={alpha}: shape constant {rep['shape_constant']:.3g}")
    return files, asserts, lines


def _reports_out(cfg, name, reports):
    doc = {"config_hash": cfg.config_hash, "seed": cfg.seed, "reports": [r.to_json() for r in reports]}
    return ({f"{name}.json": _json_text(doc)}, [(f"{name} {i}", r.passed) for i, r in enumerate(reports)],
            [r.line() for r in reports])


def _run_levy(cfg, dom, stream):
    target = domain_from_config(cfg.target)
    n = int(cfg.scheme.get("n_paths", 10_000))
    reports, k = [], 0
    for alpha in cfg.params["alpha"]:
        for a in cfg.params["a"]:
            for x in cfg.params["x"]:
                for t in cfg.params["t"]:
                    reports.append(identity_checks.check_levy_system(
                        dom, ProcessParams(float(alpha), float(a), dom.dimension), _coord(x, dom.dimension),
                        float(t), target, _scheme(cfg, dom), n, stream.child(k), cfg.workers))
                    k += 1
    return _reports_out(cfg, "levy_check", reports)


def _run_scaling(cfg, dom, stream):
    n = int(cfg.scheme.get("n_paths", 10_000))
    ys = cfg.params.get("y", [None])
    if cfg.scheme.get("survival_mode", "y" not in cfg.params):
        ys = [None]
    reports, k = [], 0
    for alpha in cfg.params["alpha"]:
        for a in cfg.params["a"]:
            for lam in cfg.params["lambda"]:
                for x in cfg.params["x"]:
                    for y in ys:
                        for t in cfg.params["t"]:
                            reports.append(identity_checks.check_scaling(
                                dom, ProcessParams(float(alpha), float(a), dom.dimension), float(lam), float(t),
                                _coord(x, dom.dimension), None if y is None else _coord(y, dom.dimension),
                                _scheme(cfg, dom), n, stream.child(k), cfg.workers))
                            k += 1
    return _reports_out(cfg, "scaling_check", reports)


def _run_subordination(cfg, dom, stream):
    n = int(cfg.scheme.get("n_paths", 10_000))
    d = dom.dimension
    grid = [(float(t), _coord(x, d), _coord(y, d)) for t in cfg.params["t"] for x in cfg.params["x"]
            for y in cfg.params["y"]]
    reports, k = [], 0
    for alpha in cfg.params["alpha"]:
        for a in cfg.params["a"]:
            reports.extend(identity_checks.check_subordination_bound(
                dom, ProcessParams(float(alpha), float(a), d), grid, _scheme(cfg, dom), n, stream.child(k),
                cfg.workers))
            k += 1
    return _reports_out(cfg, "subordination_check", reports)


RUNNERS = {
    "survival": _run_survival, "kernel": _run_kernel, "green": _run_green,
    "envelope_certify": _run_certify, "spectral": _run_spectral, "largetime": _run_largetime,
    "levy_check": _run_levy, "scaling_check": _run_scaling, "subordination_check": _run_subordination,
}


def execute(cfg: ExperimentConfig) -> RunResult:
    """Run the experiment in memory; nothing is written."""
    dom = cfg.dom()
    files, asserts, lines = RUNNERS[cfg.kind](cfg, dom, RngStream(cfg.seed, 0))
    return RunResult(files, asserts, lines)


def run(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> RunResult:
    """Execute and write every result file atomically into the output directory."""
    res = execute(cfg)
    out = Path(out_dir or cfg.output)
    for name, text in sorted(res.files.items()):
        atomic_write(out / name, text)
    return res
