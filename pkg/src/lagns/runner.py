"""Run configuration, simulation driver and CSV/JSON output."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import ConfigurationError, DomainError, DomainKind, GasParams, MassGrid, State
from .functionals import (
    NORM_KEYS,
    dissipation,
    estimate_report,
    level_set_bound,
    norm_suite,
    slab_roots,
)
from .scenarios import Family, InitialDataSpec, make_initial_data
from .stepper import SimulationAbort, StepControls, advance

log = logging.getLogger(__name__)

SERIES_COLUMNS = (
    "t", "E", "W", "cumulative_W", "energy_residual", "min_v", "max_v", "min_theta", "max_theta",
    "meas_lt_half", "meas_gt_2", "slab_violations", "L2_ux", "L2_thetax_weighted", "L2_vx",
    "L2_uxx", "L2_ut", "L2_thetat", "L2_thetaxx", "dt", "picard_iters",
)
# solver diagnostics rather than functionals of the solution
DIAGNOSTIC_COLUMNS = ("t", "dt", "picard_iters")

GAS_KEYS = tuple(f.name for f in dataclasses.fields(GasParams))
GRID_KEYS = ("L", "n_cells")
CONTROL_KEYS = tuple(f.name for f in dataclasses.fields(StepControls))
INITIAL_KEYS = tuple(f.name for f in dataclasses.fields(InitialDataSpec))
RUN_KEYS = ("problem", "t_end", "report_every", "snapshot_every", "output_dir", "energy_rtol", "slab_tol")
SECTIONS = {"gas": GAS_KEYS, "grid": GRID_KEYS, "controls": CONTROL_KEYS, "initial": INITIAL_KEYS}
INT_KEYS = {"n_cells", "picard_max", "growth_after"}
STR_KEYS = {"problem", "output_dir", "family"}


class ConfigError(ConfigurationError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    problem: DomainKind
    L: float
    n_cells: int
    t_end: float
    gas: GasParams = GasParams()
    controls: StepControls = StepControls()
    initial: InitialDataSpec = InitialDataSpec()
    report_every: float | None = None
    snapshot_every: float | None = None
    output_dir: str | None = None
    energy_rtol: float = 0.05
    slab_tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "problem", DomainKind.parse(self.problem))
        if not (isinstance(self.t_end, (int, float)) and self.t_end > 0):
            raise ConfigError(f"t_end must be positive, got {self.t_end!r}", "t_end")
        if self.report_every is None:
            object.__setattr__(self, "report_every", self.t_end / 100)
        if self.snapshot_every is None:
            object.__setattr__(self, "snapshot_every", self.t_end / 10)
        for key in ("report_every", "snapshot_every", "energy_rtol", "slab_tol"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)!r}", key)

    @property
    def grid(self) -> MassGrid:
        return MassGrid(self.problem, self.L, self.n_cells)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _check_value(key, value):
    if key in STR_KEYS:
        if value is None and key == "output_dir":
            return None
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}", key)
        return value
    if key == "center" and value is None:
        return None
    if isinstance(value, str):
        # YAML 1.1 reads exponents without a decimal point, such as 1e-9, as strings
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {value!r}", key) from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}", key)
    if key in INT_KEYS:
        if int(value) != value:
            raise ConfigError(f"{key} must be an integer, got {value!r}", key)
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{key} must be finite, got {value!r}", key)
    return value


def config_from_mapping(doc) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping at the top level")
    owner = {k: sec for sec, keys in SECTIONS.items() for k in keys if sec != "initial"}
    owner.update({k: "run" for k in RUN_KEYS})
    values = {"run": {}, "gas": {}, "grid": {}, "controls": {}, "initial": {}}
    for key, value in doc.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping", key)
            for sub, sv in value.items():
                if sub not in SECTIONS[key]:
                    raise ConfigError(f"unknown key {sub!r} in section {key!r}", sub)
                if sub in values[key]:
                    raise ConfigError(f"duplicate key {sub!r}", sub)
                values[key][sub] = _check_value(sub, sv)
        elif key in owner:
            sec = owner[key]
            if key in values[sec]:
                raise ConfigError(f"duplicate key {key!r}", key)
            values[sec][key] = _check_value(key, value)
        else:
            raise ConfigError(f"unknown key {key!r}", key)

    run = values["run"]
    grid = values["grid"]
    for key in ("problem", "t_end"):
        if key not in run:
            raise ConfigError(f"missing required key {key!r}", key)
    for key in GRID_KEYS:
        if key not in grid:
            raise ConfigError(f"missing required key {key!r}", key)

    def build(cls, section, kwargs):
        try:
            return cls(**kwargs)
        except (DomainError, ConfigurationError, ValueError) as exc:
            bad = next((k for k in kwargs if k in str(exc)), section)
            raise ConfigError(f"{section}: {exc}", bad) from exc

    gas = build(GasParams, "gas", values["gas"])
    controls = build(StepControls, "controls", values["controls"])
    initial = build(InitialDataSpec, "initial", values["initial"])
    try:
        problem = DomainKind.parse(run["problem"])
        cfg = RunConfig(problem=problem, L=grid["L"], n_cells=grid["n_cells"], gas=gas,
                        controls=controls, initial=initial,
                        **{k: v for k, v in run.items() if k != "problem"})
        cfg.grid  # validates L and n_cells
    except ConfigError:
        raise
    except (ConfigurationError, DomainError) as exc:
        bad = next((k for k in list(run) + list(grid) if k in str(exc)), None)
        raise ConfigError(str(exc), bad) from exc
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse a YAML (or JSON) run configuration; unknown keys are rejected."""
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"cannot parse configuration at {where}: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    return config_from_mapping(doc)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def config_to_mapping(cfg: RunConfig) -> dict:
    initial = dataclasses.asdict(cfg.initial)
    initial["family"] = cfg.initial.family.value
    return {
        "problem": cfg.problem.value,
        "t_end": cfg.t_end,
        "report_every": cfg.report_every,
        "snapshot_every": cfg.snapshot_every,
        "output_dir": cfg.output_dir,
        "energy_rtol": cfg.energy_rtol,
        "slab_tol": cfg.slab_tol,
        "gas": dataclasses.asdict(cfg.gas),
        "grid": {"L": cfg.L, "n_cells": cfg.n_cells},
        "controls": dataclasses.asdict(cfg.controls),
        "initial": initial,
    }


def render_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_mapping(cfg), sort_keys=False)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(render_config(cfg).encode()).hexdigest()


# -- history -------------------------------------------------------------------

@dataclass
class RunHistory:
    config: RunConfig | None = None
    e0: float = 0.0
    roots: tuple = (1.0, 1.0)
    reports: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (t, State)
    metadata: dict = field(default_factory=dict)
    integrals: dict = field(default_factory=dict)  # time integrals of the norm suite
    extrema: dict = field(default_factory=dict)  # over every accepted step
    summary: dict = field(default_factory=dict)
    abort: str | None = None

    @property
    def final_state(self) -> State | None:
        return self.snapshots[-1][1] if self.snapshots else None


class RunAborted(RuntimeError):
    def __init__(self, history: RunHistory, cause: SimulationAbort):
        super().__init__(str(cause))
        self.history = history
        self.cause = cause


def _series_row(report) -> dict:
    row = {
        "t": report.t, "E": report.E, "W": report.W, "cumulative_W": report.cumulative_W,
        "energy_residual": report.energy_residual,
        "min_v": report.min_v, "max_v": report.max_v,
        "min_theta": report.min_theta, "max_theta": report.max_theta,
        "meas_lt_half": report.meas_theta_lt_half, "meas_gt_2": report.meas_theta_gt_2,
        "slab_violations": report.slab_violations,
    }
    row.update(report.norm_suite)
    row["dt"] = report.dt
    row["picard_iters"] = report.picard_iters
    return row


def evaluate_bounds(rows, e0, energy_rtol, c_v=1.0) -> dict:
    """Per-bound pass/fail over series rows (dicts keyed by ``SERIES_COLUMNS``)."""
    bound = level_set_bound(e0) / c_v
    tol = energy_rtol * e0 + 1e-12
    checks = {"positivity": True, "slab_bounds": True, "level_set": True, "energy_residual": True}
    for r in rows:
        if not (r["min_v"] > 0 and r["min_theta"] > 0):
            checks["positivity"] = False
        if r["slab_violations"] != 0:
            checks["slab_bounds"] = False
        if r["meas_lt_half"] + r["meas_gt_2"] > bound + 1e-12:
            checks["level_set"] = False
        if abs(r["energy_residual"]) > tol:
            checks["energy_residual"] = False
    return checks


def _summarize(history: RunHistory, reached: bool):
    cfg = history.config
    rows = [_series_row(r) for r in history.reports]
    checks = evaluate_bounds(rows, history.e0, cfg.energy_rtol, cfg.gas.c_v)
    if history.extrema and not (history.extrema["min_v"] > 0 and history.extrema["min_theta"] > 0):
        checks["positivity"] = False
    checks["reached_t_end"] = reached
    history.summary = {
        "verdict": "pass" if all(checks.values()) else ("abort" if history.abort else "fail"),
        "checks": checks,
        "e0": history.e0,
        "alpha1": history.roots[0],
        "alpha2": history.roots[1],
        "level_set_bound": level_set_bound(history.e0, cfg.gas),
        "extrema": dict(history.extrema),
        "integrals": dict(history.integrals),
        "abort": history.abort,
        "metadata": dict(history.metadata),
    }


def _on_grid(t, step):
    k = round(t / step)
    return abs(t - k * step) <= 1e-9 * max(1.0, abs(t))


def run(config: RunConfig, output_dir=None) -> RunHistory:
    """Integrate to ``t_end`` recording reports, snapshots and bound checks.

    With ``output_dir`` (or ``config.output_dir``) the outputs are written on
    completion and also when the stepper aborts, in which case ``RunAborted``
    carrying the partial history is raised afterwards.
    """
    out_dir = output_dir if output_dir is not None else config.output_dir
    wall0 = time.perf_counter()
    grid = config.grid
    params = config.gas
    controls = config.controls
    state, e0 = make_initial_data(config.initial, grid)
    roots = slab_roots(e0, params)
    history = RunHistory(config=config, e0=e0, roots=roots)
    history.metadata = {"config_hash": config_hash(config), "total_steps": 0, "total_rejections": 0}
    history.integrals = {k: 0.0 for k in NORM_KEYS if k != "L2_vx"}
    history.integrals["W"] = 0.0

    cumulative_W = 0.0
    history.reports.append(
        estimate_report(state, params, e0, 0.0, roots, slab_tol=config.slab_tol)
    )
    history.snapshots.append((state.t, state))
    norms0 = history.reports[0].norm_suite
    sup_vx = norms0["L2_vx"]
    extrema = {"min_v": float(state.v.min()), "max_v": float(state.v.max()),
               "min_theta": float(state.theta.min()), "max_theta": float(state.theta.max())}

    k_report, k_snap = 1, 1
    dt, streak = controls.dt_init, 0
    steps = rejections = 0
    reached = False
    failure = None
    try:
        while True:
            t_report = min(k_report * config.report_every, config.t_end)
            t_snap = min(k_snap * config.snapshot_every, config.t_end)
            t_stop = min(t_report, t_snap, config.t_end)
            W = dissipation(state, params)
            out = advance(state, controls, params, dt=dt, streak=streak, t_stop=t_stop)
            prev, state = state, out.state
            dt, streak = out.dt_next, out.streak
            steps += 1
            rejections += out.rejections
            cumulative_W += W * out.dt_used
            history.integrals["W"] += W * out.dt_used
            norms = norm_suite(state, prev, out.dt_used)
            for key in history.integrals:
                if key != "W":
                    history.integrals[key] += norms[key] * out.dt_used
            sup_vx = max(sup_vx, norms["L2_vx"])
            extrema["min_v"] = min(extrema["min_v"], float(state.v.min()))
            extrema["max_v"] = max(extrema["max_v"], float(state.v.max()))
            extrema["min_theta"] = min(extrema["min_theta"], float(state.theta.min()))
            extrema["max_theta"] = max(extrema["max_theta"], float(state.theta.max()))

            done = state.t >= config.t_end
            if state.t == t_report or done:
                report = estimate_report(state, params, e0, cumulative_W, roots, prev, out.dt_used,
                                         slab_tol=config.slab_tol, picard_iters=out.picard_iters)
                history.reports.append(report)
                k_report += 1
            if state.t == t_snap or done:
                history.snapshots.append((state.t, state))
                k_snap += 1
            if done:
                reached = True
                break
    except SimulationAbort as exc:
        failure = exc
        history.abort = str(exc)
        log.warning("run aborted: %s", exc)
        if history.snapshots[-1][1] is not exc.state:
            history.snapshots.append((exc.state.t, exc.state))
    finally:
        history.integrals["sup_L2_vx"] = sup_vx
        history.extrema = extrema
        history.metadata.update(
            total_steps=steps, total_rejections=rejections,
            wall_time=time.perf_counter() - wall0,
        )
        _summarize(history, reached)
    if out_dir is not None:
        write_outputs(history, out_dir)
    if failure is not None:
        raise RunAborted(history, failure)
    return history


# -- output --------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def series_text(history: RunHistory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SERIES_COLUMNS)
    for report in history.reports:
        row = _series_row(report)
        writer.writerow([_fmt(row[c]) for c in SERIES_COLUMNS])
    return buf.getvalue()


def snapshot_text(state: State) -> str:
    """Paired layout: row ``i`` holds cell ``i`` (blank past the last cell) and edge ``i``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("x_center", "v", "theta", "x_edge", "u"))
    grid = state.grid
    xc, xe = grid.centers, grid.edges
    n = grid.n_cells
    for i in range(n + 1):
        if i < n:
            cell = ["%.17g" % xc[i], "%.17g" % state.v[i], "%.17g" % state.theta[i]]
        else:
            cell = ["", "", ""]
        writer.writerow(cell + ["%.17g" % xe[i], "%.17g" % state.u[i]])
    return buf.getvalue()


def read_snapshot(path, grid: MassGrid, t: float = 0.0) -> State:
    v, theta, u = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ("x_center", "v", "theta", "x_edge", "u"):
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            if row[0]:
                v.append(float(row[1]))
                theta.append(float(row[2]))
            u.append(float(row[4]))
    return State(t, np.array(v), np.array(u), np.array(theta), grid)


def read_series(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SERIES_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            rows.append({k: (int(row[k]) if k in ("slab_violations", "picard_iters") else float(row[k]))
                         for k in SERIES_COLUMNS})
    return rows


class OutputError(OSError):
    pass


def _summary_document(history: RunHistory, snapshot_files) -> dict:
    doc = dict(history.summary)
    doc["config"] = config_to_mapping(history.config) if history.config else None
    doc["snapshots"] = [{"index": i, "t": t, "file": name}
                        for i, ((t, _), name) in enumerate(zip(history.snapshots, snapshot_files))]
    return doc


def write_outputs(history: RunHistory, output_dir) -> list:
    """Write ``series.csv``, ``snap_<index>.csv`` and ``summary.json``; return the written paths."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc}") from exc
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputError(f"{out} is locked by another run ({lock} exists)") from None
    except OSError as exc:
        raise OutputError(f"cannot lock {out}: {exc}") from exc
    os.close(fd)

    written = []
    try:
        def emit(name, text):
            path = out / name
            tmp = out / (name + ".tmp")
            try:
                tmp.write_text(text)
                os.replace(tmp, path)
            except OSError as exc:
                if tmp.exists():
                    tmp.unlink()
                raise OutputError(f"cannot write {path}: {exc}") from exc
            written.append(path)

        emit("series.csv", series_text(history))
        names = []
        for i, (_, state) in enumerate(history.snapshots):
            name = f"snap_{i:04d}.csv"
            emit(name, snapshot_text(state))
            names.append(name)
        emit("summary.json", json.dumps(_summary_document(history, names), indent=2, default=_json_default) + "\n")
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    finally:
        lock.unlink(missing_ok=True)
    return written


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, DomainKind):
        return obj.value
    raise TypeError(f"not serializable: {type(obj)}")


def audit(series_path, energy_rtol: float = 0.05) -> dict:
    """Re-check the monitored bounds from a ``series.csv`` file."""
    rows = read_series(series_path)
    if not rows:
        return {"rows": 0, "e0": 0.0, "checks": {}, "verdict": "pass"}
    first = rows[0]
    e0 = first["E"] + first["cumulative_W"] - first["energy_residual"]
    checks = evaluate_bounds(rows, e0, energy_rtol)
    return {"rows": len(rows), "e0": e0, "checks": checks,
            "verdict": "pass" if all(checks.values()) else "fail"}


# -- studies -------------------------------------------------------------------

def truncation_study(config: RunConfig, factor: int = 2) -> dict:
    """Compare the final report of ``config`` with the same run on a domain ``factor`` times longer.

    The cell width and the perturbation center are kept fixed, so the two
    grids share every cell of the shorter domain.
    """
    if int(factor) != factor or factor < 2:
        raise ConfigError(f"factor must be an integer >= 2, got {factor!r}", "factor")
    cfg = config
    if cfg.initial.center is None and cfg.problem is not DomainKind.CAUCHY:
        cfg = cfg.replace(initial=dataclasses.replace(cfg.initial, center=0.5 * cfg.L))
    cfg = cfg.replace(output_dir=None)
    wide = cfg.replace(L=cfg.L * factor, n_cells=cfg.n_cells * int(factor))
    a = _series_row(run(cfg).reports[-1])
    b = _series_row(run(wide).reports[-1])
    rel = {}
    for col in SERIES_COLUMNS:
        if col in DIAGNOSTIC_COLUMNS:
            continue
        x, y = float(a[col]), float(b[col])
        scale = max(abs(x), abs(y))
        rel[col] = 0.0 if x == y else abs(x - y) / scale
    return {"base": a, "wide": b, "relative_change": rel, "max_relative_change": max(rel.values())}
