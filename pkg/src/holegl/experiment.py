"""Run configuration, experiment pipelines and JSON/CSV reports."""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .elliptic import solve_xi0
from .errors import (
    AtThreshold,
    BulkVortexFound,
    ConfigError,
    DegreeMismatch,
    HoleGLError,
    SchemaMismatch,
)
from .geometry import DiskRegion, PerforatedDomain, RectangleRegion, build_grid, validate_domain
from .gl import GLState, Schedule, energy_decomposition_check, gl_energy, minimize_gl, seed_from_london, uniform_state
from .london import (
    applied_field,
    energy_quadratic_form,
    london_basis,
    london_energy,
    minimize_degrees,
    predicted_degrees,
    reconstruct_s1_minimizer,
    solve_london,
    threshold_set,
    xi0_at_holes,
)
from .vortex import assert_no_bulk_vortices, vortex_report

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Configuration


def eps_from_rule(rule: str, delta: float) -> float:
    """``cube`` gives delta**3, ``square`` gives delta**2, ``fixed:V`` gives V."""
    rule = rule.strip()
    if rule == "cube":
        return delta**3
    if rule == "square":
        return delta**2
    if rule.startswith("fixed:"):
        try:
            return float(rule.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad eps rule {rule!r}") from exc
    raise ConfigError(f"unknown eps rule {rule!r}")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one run.

    ``grid_h=None`` means ``h_over_delta * delta``.  Sweeps over ``delta``
    always use ``h_over_delta``.
    """

    outer: dict = field(default_factory=lambda: {"kind": "disk", "center": [0.0, 0.0], "radius": 1.0})
    holes: tuple = ((0.0, 0.0),)
    delta: float = 0.05
    grid_h: float | None = None
    h_over_delta: float = 0.25
    sigma: float | None = None
    sigma_sweep: tuple | None = None
    delta_sweep: tuple | None = None
    degrees: tuple | None = None
    eps_rule: str = "cube"
    max_iters: int = 20000
    grad_tol: float | None = None
    collar: float = 3.0
    floor: float = 0.1
    radii: tuple = (2.0, 4.0)
    theta: float = 0.5
    box_radius: int = 2
    seed: int = 0
    threads: int = 1
    out: str = "runs/default"

    def domain(self, delta: float | None = None) -> PerforatedDomain:
        d = float(self.delta if delta is None else delta)
        kind = self.outer.get("kind", "disk")
        if kind == "disk":
            outer = DiskRegion(tuple(map(float, self.outer.get("center", (0.0, 0.0)))),
                               float(self.outer.get("radius", 1.0)))
        elif kind == "rectangle":
            outer = RectangleRegion(tuple(map(float, self.outer["corner_lo"])),
                                    tuple(map(float, self.outer["corner_hi"])))
        else:
            raise ConfigError(f"unknown outer region {kind!r}")
        return validate_domain(PerforatedDomain(outer, tuple(tuple(map(float, a)) for a in self.holes), d))

    def h(self, delta: float | None = None) -> float:
        if delta is not None or self.grid_h is None:
            return self.h_over_delta * float(self.delta if delta is None else delta)
        return float(self.grid_h)

    def eps(self, delta: float | None = None) -> float:
        return eps_from_rule(self.eps_rule, float(self.delta if delta is None else delta))

    def validate(self) -> "RunConfig":
        self.domain()
        if self.holes and self.h() > self.delta / 4 * (1 + 1e-12):
            raise ConfigError(f"grid h={self.h()} exceeds delta/4")
        for d in [self.delta] + list(self.delta_sweep or ()):
            if self.eps(d) > d * d * (1 + 1e-12):
                raise ConfigError(f"eps rule gives eps={self.eps(d)} > delta^2 at delta={d}")
        if self.sigma_sweep is not None and len(self.sigma_sweep) != 3:
            raise ConfigError("sigma_sweep needs start, stop, step")
        if self.degrees is not None and len(self.degrees) != len(self.holes):
            raise ConfigError("degrees must list one integer per hole")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["holes"] = [list(a) for a in self.holes]
        for key in ("sigma_sweep", "delta_sweep", "degrees", "radii"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def parse_holes(text: str) -> list[list[float]]:
    holes = []
    for chunk in text.split(";"):
        if chunk.strip():
            xy = _floats(chunk)
            if len(xy) != 2:
                raise ConfigError(f"bad hole entry {chunk!r}")
            holes.append(xy)
    return holes


_INI_KEYS = {
    "outer": str, "center": _floats, "radius": float, "corner_lo": _floats, "corner_hi": _floats,
    "holes": parse_holes, "delta": float, "h": float, "h_over_delta": float, "sigma": float,
    "sigma_sweep": _floats, "delta_sweep": _floats, "degrees": lambda s: [int(v) for v in _floats(s)],
    "eps_rule": str, "max_iters": int, "grad_tol": float, "collar": float, "floor": float,
    "radii": _floats, "theta": float, "box_radius": int, "seed": int, "threads": int, "out": str,
}


def _mapping_to_config(flat: dict) -> RunConfig:
    unknown = set(flat) - set(_INI_KEYS) - {"grid_h"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw: dict[str, Any] = {}
    kind = flat.get("outer", "disk")
    if isinstance(kind, dict):
        kw["outer"] = kind
    elif kind == "disk":
        kw["outer"] = {"kind": "disk", "center": list(flat.get("center", [0.0, 0.0])),
                       "radius": float(flat.get("radius", 1.0))}
    elif kind == "rectangle":
        if "corner_lo" not in flat or "corner_hi" not in flat:
            raise ConfigError("rectangle needs corner_lo and corner_hi")
        kw["outer"] = {"kind": "rectangle", "corner_lo": list(flat["corner_lo"]),
                       "corner_hi": list(flat["corner_hi"])}
    else:
        raise ConfigError(f"unknown outer region {kind!r}")
    if "holes" in flat:
        kw["holes"] = tuple(tuple(float(v) for v in a) for a in flat["holes"])
    if "h" in flat or "grid_h" in flat:
        kw["grid_h"] = float(flat.get("h", flat.get("grid_h")))
    for key in ("delta", "h_over_delta", "sigma", "grad_tol", "collar", "floor", "theta"):
        if key in flat and flat[key] is not None:
            kw[key] = float(flat[key])
    for key in ("max_iters", "box_radius", "seed", "threads"):
        if key in flat:
            kw[key] = int(flat[key])
    for key in ("sigma_sweep", "delta_sweep", "radii"):
        if key in flat and flat[key] is not None:
            kw[key] = tuple(float(v) for v in flat[key])
    if "degrees" in flat and flat["degrees"] is not None:
        kw["degrees"] = tuple(int(v) for v in flat["degrees"])
    for key in ("eps_rule", "out"):
        if key in flat:
            kw[key] = str(flat[key])
    return RunConfig(**kw)


def parse_config_text(text: str, fmt: str = "ini") -> RunConfig:
    """Parse INI (sections are optional groupings) or JSON configuration text."""
    if fmt == "json":
        data = json.loads(text)
        flat: dict = {}
        for key, val in data.items():
            if isinstance(val, dict) and key not in ("outer",):
                flat.update(val)
            else:
                flat[key] = val
        return _mapping_to_config(flat)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string(text)
    flat = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in _INI_KEYS:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            raw = raw.strip()
            if raw == "":
                continue
            try:
                flat[key] = _INI_KEYS[key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return _mapping_to_config(flat)


def load_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text()
    fmt = "json" if path.suffix.lower() == ".json" else "ini"
    return parse_config_text(text, fmt)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class RunReport:
    """One run: configuration echo, results by stage, timings, assertion status."""

    command: str
    config: dict
    results: dict = field(default_factory=dict)
    status: dict = field(default_factory=lambda: {"passed": True, "failures": []})
    timings: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def fail(self, kind: str, message: str) -> None:
        self.status["passed"] = False
        self.status["failures"].append({"kind": kind, "message": message})

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "command": self.command,
            "config": self.config,
            "results": self.results,
            "status": self.status,
            "timings": self.timings,
        }

    def to_json(self) -> str:
        data = _clean(self.to_dict())
        return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"

    def digest(self) -> str:
        """SHA-256 of the report without timings."""
        data = _clean(self.to_dict())
        data.pop("timings")
        return hashlib.sha256(json.dumps(data, sort_keys=True, allow_nan=False).encode()).hexdigest()


def _clean(obj):
    """Convert numpy types to plain JSON values; reject non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        if not math.isfinite(val):
            raise ValueError("non-finite number in report")
        return val
    return obj


class _Timer:
    def __init__(self, report: RunReport, name: str):
        self.report = report
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings[self.name] = round(time.perf_counter() - self.t0, 6)


def write_report(report: RunReport, out: str | os.PathLike, tables: dict | None = None) -> Path:
    """Write ``report.json`` and ``tables/<name>.csv`` under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    for name, rows in (tables or {}).items():
        write_table(out / "tables" / f"{name}.csv", rows)
    return out / "report.json"


def write_table(path: Path, rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row.get(k)) for k in keys})


def _csv_value(v):
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    if isinstance(v, float):
        return f"{v:.12g}"
    return v


# ---------------------------------------------------------------------------
# Pipelines


@dataclass
class _Setup:
    domain: PerforatedDomain
    grid: Any
    xi0: Any
    sigma: float
    h_ext: float


def _setup(cfg: RunConfig, sigma: float | None = None, delta: float | None = None) -> _Setup:
    dom = cfg.domain(delta)
    grid = build_grid(dom, cfg.h(delta))
    xi0 = solve_xi0(dom, grid)
    s = cfg.sigma if sigma is None else sigma
    s = 0.0 if s is None else float(s)
    return _Setup(dom, grid, xi0, s, applied_field(s, dom.hole_radius))


def _predict_block(st: _Setup, sigma_max: float) -> dict:
    out = {
        "xi0_at_holes": xi0_at_holes(st.xi0, st.domain).tolist(),
        "thresholds": [{"sigma": s, "hole": j} for s, j in threshold_set(st.xi0, st.domain, sigma_max)],
    }
    return out


def cmd_predict(cfg: RunConfig) -> tuple[RunReport, dict]:
    """Screening field, predicted degrees and the threshold set.

    Raises
    ------
    AtThreshold
        If ``sigma`` sits on a threshold; the partial report is attached.
    """
    cfg.validate()
    report = RunReport("predict", cfg.to_dict())
    with _Timer(report, "predict"):
        st = _setup(cfg)
        sigma_max = max(2.0 * max(st.sigma, 1.0), 13.0)
        report.results.update(_predict_block(st, sigma_max))
        report.results["sigma"] = st.sigma
        report.results["h_ext"] = st.h_ext
    tables = {"thresholds": report.results["thresholds"]}
    try:
        report.results["predicted_degrees"] = list(predicted_degrees(st.xi0, st.domain, st.sigma))
    except AtThreshold as exc:
        report.fail("AtThreshold", str(exc))
        exc.report = report
        exc.tables = tables
        raise
    return report, tables


def _london_block(st: _Setup, box_radius: int, degrees=None, basis=None):
    basis = basis or london_basis(st.domain, st.grid)
    form = energy_quadratic_form(st.domain, st.grid, st.h_ext, basis)
    arg = minimize_degrees(form, box_radius)
    block = {
        "Q": form.Q.tolist(),
        "b": form.b.tolist(),
        "c": form.c,
        "vertex": form.vertex().tolist(),
        "argmin": list(arg.degrees),
        "argmin_energy": arg.energy,
        "argmin_unique": arg.is_unique,
    }
    D = arg.degrees if degrees is None else tuple(degrees)
    sol = solve_london(st.domain, st.grid, st.h_ext, D, basis)
    block["evaluated_degrees"] = list(D)
    block["H"] = list(sol.H)
    block["energy"] = london_energy(sol).to_dict()
    block["form_energy"] = form.evaluate(np.asarray(D))
    return block, form, arg, sol, basis


def cmd_london(cfg: RunConfig, degrees=None) -> tuple[RunReport, dict]:
    """Quadratic energy form, integer argmin and the energy at ``degrees``."""
    cfg.validate()
    degrees = degrees if degrees is not None else cfg.degrees
    report = RunReport("london", cfg.to_dict())
    with _Timer(report, "london"):
        st = _setup(cfg)
        report.results["sigma"] = st.sigma
        report.results["h_ext"] = st.h_ext
        report.results.update(_predict_block(st, max(2.0 * max(st.sigma, 1.0), 13.0)))
        block, form, arg, sol, _ = _london_block(st, cfg.box_radius, degrees)
        report.results["london"] = block
    n = st.domain.n_holes
    center = np.asarray(arg.degrees)
    rows = []
    for k in range(-cfg.box_radius, cfg.box_radius + 1):
        for j in range(n):
            D = center.copy()
            D[j] += k
            rows.append({"hole": j, "degrees": D.tolist(), "energy": form.evaluate(D)})
    return report, {"london_energies": rows}


def _gl_run(st: _Setup, cfg: RunConfig, sol, label: str, rng):
    eps = cfg.eps(st.domain.hole_radius)
    schedule = Schedule(max_iters=cfg.max_iters, grad_tol=cfg.grad_tol)
    if sol is None:
        init = uniform_state(st.grid.lattice, eps, st.domain.hole_radius, st.sigma)
    else:
        init = seed_from_london(sol, eps, cfg.collar, cfg.floor)
    res = minimize_gl(init, schedule, rng=rng)
    return {
        "label": label,
        "initial_energy": gl_energy(init).total,
        "energy": gl_energy(res.state).to_dict(),
        "iterations": res.iterations,
        "converged": res.converged,
        "stalled": res.stalled,
        "max_modulus": float(np.abs(res.state.u).max()),
    }, res


def _trace_rows(result) -> list[dict]:
    return [{"iter": r.iteration, "energy": r.energy, "grad_norm": r.grad_norm, "step": r.step}
            for r in result.trace]


def cmd_gl(cfg: RunConfig, degrees=None, seed_kind: str = "london") -> tuple[RunReport, dict]:
    """Minimize the lattice GL energy from one seed and measure the hole degrees."""
    cfg.validate()
    report = RunReport("gl", cfg.to_dict())
    rng = np.random.default_rng(cfg.seed)
    with _Timer(report, "setup"):
        st = _setup(cfg)
        block, form, arg, sol, basis = _london_block(st, cfg.box_radius, degrees or cfg.degrees)
        report.results["london"] = block
    with _Timer(report, "gl"):
        summary, res = _gl_run(st, cfg, sol if seed_kind == "london" else None, seed_kind, rng)
        vrep = vortex_report(res.state, cfg.radii, cfg.theta)
    report.results["gl"] = summary
    report.results["vortices"] = vrep.to_dict()
    tables = {"trace": _trace_rows(res)}
    report._state = res.state  # for field dumps by the caller
    return report, tables


def cmd_verify_degrees(cfg: RunConfig) -> tuple[RunReport, dict]:
    """Full pipeline: prediction, London argmin, GL from two seeds, degree checks.

    The GL run keeps the lower-energy result of the London-seeded and the
    Meissner starts.  The report fails when the measured hole degrees differ
    from the London argmin or a bulk vortex is found.
    """
    cfg.validate()
    report = RunReport("verify-degrees", cfg.to_dict())
    rng = np.random.default_rng(cfg.seed)
    with _Timer(report, "predict"):
        st = _setup(cfg)
        report.results["sigma"] = st.sigma
        report.results["h_ext"] = st.h_ext
        report.results.update(_predict_block(st, max(2.0 * max(st.sigma, 1.0), 13.0)))
        try:
            report.results["predicted_degrees"] = list(predicted_degrees(st.xi0, st.domain, st.sigma))
        except AtThreshold as exc:
            report.fail("AtThreshold", str(exc))
            exc.report = report
            exc.tables = {}
            raise
    with _Timer(report, "london"):
        block, form, arg, sol, basis = _london_block(st, cfg.box_radius)
        report.results["london"] = block
    runs = []
    with _Timer(report, "gl_london_seed"):
        runs.append(_gl_run(st, cfg, sol, "london", rng))
    with _Timer(report, "gl_meissner_seed"):
        runs.append(_gl_run(st, cfg, None, "meissner", rng))
    report.results["gl_runs"] = [r[0] for r in runs]
    best_summary, best = min(runs, key=lambda r: r[0]["energy"]["total"])
    report.results["gl"] = best_summary
    with _Timer(report, "analysis"):
        vrep = vortex_report(best.state, cfg.radii, cfg.theta)
        bulk = assert_no_bulk_vortices(vrep, st.domain)
        report.results["vortices"] = vrep.to_dict()
        report.results["bulk_check"] = bulk.to_dict()
        decomposition = energy_decomposition_check(best.state, sol)
        report.results["decomposition"] = decomposition.to_dict()
        report.results["decomposition"]["relative_residual"] = (
            abs(decomposition.residual) / max(abs(decomposition.gl_total), 1e-300))
        report.results["upper_bound_ok"] = bool(
            best.energy <= form.evaluate(np.zeros(st.domain.n_holes)) + 1.0)
    measured = vrep.per_radius.degrees
    report.results["measured_degrees"] = [list(r) for r in measured]
    if any(tuple(row) != tuple(arg.degrees) for row in measured):
        report.fail("DegreeMismatch",
                    f"GL degrees {[list(r) for r in measured]} differ from London argmin {list(arg.degrees)}")
    if not bulk.passed:
        report.fail("BulkVortexFound", f"{len(bulk.offending)} bulk region(s) with nonzero degree")
    tables = {
        "trace": _trace_rows(best),
        "bad_regions": [r.to_dict() for r in vrep.bad_regions],
    }
    report._state = best.state
    return report, tables


def raise_for_status(report: RunReport) -> None:
    """Raise the first recorded failure as its exception type."""
    for failure in report.status["failures"]:
        exc_type = {"DegreeMismatch": DegreeMismatch, "BulkVortexFound": BulkVortexFound}.get(failure["kind"])
        if exc_type is not None:
            exc = exc_type(failure["message"])
            exc.report = report
            raise exc


def _sigma_values(sweep) -> list[float]:
    start, stop, step = sweep
    if not step > 0:
        raise ConfigError("sigma sweep step must be positive")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(n)]


def cmd_sweep_sigma(cfg: RunConfig) -> tuple[RunReport, dict]:
    """Predicted and London-optimal degrees along a grid of sigma values.

    The basis solves are shared by all points.  The report lists the first
    sigma where the argmin changes and the nearest predicted thresholds.
    """
    cfg.validate()
    if cfg.sigma_sweep is None:
        raise ConfigError("sweep-sigma needs sigma_sweep = start, stop, step")
    report = RunReport("sweep-sigma", cfg.to_dict())
    sigmas = _sigma_values(cfg.sigma_sweep)
    rows = []
    with _Timer(report, "sweep"):
        st = _setup(cfg, sigma=0.0)
        basis = london_basis(st.domain, st.grid)
        thresholds = threshold_set(st.xi0, st.domain, max(sigmas) + 1.0)
        report.results.update(_predict_block(st, max(sigmas) + 1.0))
        for s in sigmas:
            he = applied_field(s, st.domain.hole_radius)
            form = energy_quadratic_form(st.domain, st.grid, he, basis)
            arg = minimize_degrees(form, cfg.box_radius)
            try:
                pred = list(predicted_degrees(st.xi0, st.domain, s))
            except AtThreshold:
                pred = None
            rows.append({
                "sigma": s,
                "h_ext": he,
                "predicted": pred,
                "argmin": list(arg.degrees),
                "unique": arg.is_unique,
                "vertex": form.vertex().tolist(),
                "energy": arg.energy,
            })
    flips = []
    for prev, row in zip(rows, rows[1:]):
        if row["argmin"] != prev["argmin"]:
            flips.append({"sigma_before": prev["sigma"], "sigma_after": row["sigma"],
                          "from": prev["argmin"], "to": row["argmin"]})
    report.results["points"] = rows
    report.results["argmin_changes"] = flips
    report.results["predicted_thresholds"] = [
        {"sigma": s, "hole": j} for s, j in thresholds if sigmas[0] <= s <= sigmas[-1]]
    return report, {"sigma_sweep": [
        {**r, "predicted": r["predicted"] if r["predicted"] is not None else "threshold"} for r in rows]}


def _fit_slope(x, y) -> tuple[float, float]:
    slope, intercept = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)
    return float(slope), float(intercept)


def _delta_point(cfg: RunConfig, delta: float) -> dict:
    st = _setup(cfg, delta=delta)
    basis = london_basis(st.domain, st.grid)
    form = energy_quadratic_form(st.domain, st.grid, st.h_ext, basis)
    xi = xi0_at_holes(st.xi0, st.domain)
    return {
        "delta": delta,
        "abs_log_delta": abs(math.log(delta)),
        "h": st.grid.h,
        "h_ext": st.h_ext,
        "xi0_at_holes": xi.tolist(),
        "half_Q_diag": (0.5 * np.diag(form.Q)).tolist(),
        "b": form.b.tolist(),
        "Q": form.Q.tolist(),
        "c": form.c,
        "zeta_flux": [float(basis.flux_matrix[j, j]) for j in range(st.domain.n_holes)],
    }


def cmd_sweep_delta(cfg: RunConfig) -> tuple[RunReport, dict]:
    """Quadratic-form coefficients across hole radii and their slopes in ``|log delta|``.

    ``Q_jj/2`` should grow like ``pi |log delta|``.  ``b_j`` should grow like
    ``-2 pi sigma (1 - xi0(a_j)) |log delta|`` at fixed ``sigma``.
    """
    cfg.validate()
    if not cfg.delta_sweep:
        raise ConfigError("sweep-delta needs delta_sweep")
    report = RunReport("sweep-delta", cfg.to_dict())
    deltas = sorted(cfg.delta_sweep, reverse=True)
    with _Timer(report, "sweep"):
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                points = list(pool.map(lambda d: _delta_point(cfg, d), deltas))
        else:
            points = [_delta_point(cfg, d) for d in deltas]
    sigma = cfg.sigma or 0.0
    logs = [p["abs_log_delta"] for p in points]
    fits = []
    for j in range(len(cfg.holes)):
        q_slope, _ = _fit_slope(logs, [p["half_Q_diag"][j] for p in points])
        b_slope, _ = _fit_slope(logs, [p["b"][j] for p in points])
        xi = float(np.mean([p["xi0_at_holes"][j] for p in points]))
        target_b = -2 * math.pi * sigma * (1 - xi)
        fits.append({
            "hole": j,
            "half_Q_slope": q_slope,
            "half_Q_slope_over_pi": q_slope / math.pi,
            "b_slope": b_slope,
            "b_slope_target": target_b,
            "b_slope_ratio": b_slope / target_b if target_b != 0 else None,
        })
    report.results["points"] = points
    report.results["fits"] = fits
    rows = [{"delta": p["delta"], "abs_log_delta": p["abs_log_delta"],
             "half_Q_diag": p["half_Q_diag"], "b": p["b"], "c": p["c"]} for p in points]
    return report, {"delta_sweep": rows}


def cmd_report(directory) -> tuple[RunReport, dict]:
    """Merge every ``report.json`` below ``directory`` into one table.

    Raises
    ------
    SchemaMismatch
        If a report carries another schema version.
    """
    directory = Path(directory)
    paths = sorted(p for p in directory.rglob("report.json") if p.parent != directory / "_summary")
    rows = []
    for path in paths:
        data = json.loads(path.read_text())
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaMismatch(f"{path} has schema version {version}, expected {SCHEMA_VERSION}")
        cfg = data.get("config", {})
        res = data.get("results", {})
        delta = float(cfg.get("delta", float("nan")))
        london = res.get("london", {})
        rows.append({
            "run": str(path.parent.relative_to(directory)) if path.parent != directory else ".",
            "command": data.get("command"),
            "delta": delta,
            "abs_log_delta": abs(math.log(delta)) if delta > 0 else None,
            "sigma": cfg.get("sigma"),
            "n_holes": len(cfg.get("holes", [])),
            "predicted": res.get("predicted_degrees"),
            "argmin": london.get("argmin"),
            "measured": res.get("measured_degrees", [None])[0] if res.get("measured_degrees") else None,
            "gl_energy": res.get("gl", {}).get("energy", {}).get("total"),
            "passed": data.get("status", {}).get("passed"),
        })
    rows.sort(key=lambda r: (r["command"] or "", r["abs_log_delta"] or 0.0,
                             r["sigma"] if r["sigma"] is not None else -1.0, r["run"]))
    report = RunReport("report", {"directory": str(directory)})
    report.results["rows"] = rows
    return report, {"summary": rows}
