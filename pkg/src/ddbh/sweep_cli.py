"""Command-line front end: single runs, parameter sweeps and snapshot export.

    ddbh run <file> --tier <t> [--out DIR] [--workers N] [--fixed-step DT]
    ddbh sweep <file> [--out DIR] [--workers N]
    ddbh snapshot <run-id> --t0 T0 --t1 T1 [--out DIR]

The output root defaults to ``$DDBH_OUTPUT_ROOT`` (or ``./ddbh_output``).
Exit codes: 0 success, 2 invalid input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DDBHError, MissingTrajectoryError, ScenarioError, SolverError
from .integrate import IntegratorOptions
from .io import read_csv, series_columns, series_rows, write_csv, write_json
from .model import ScenarioConfig, scenario_from_dict

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
ENV_ROOT = "DDBH_OUTPUT_ROOT"
TIERS = ("linear", "gp", "gutzwiller", "single_cavity", "fluctuations")
LEDGER = "ledger.jsonl"

_RUN_KEYS = {"t_final", "sample_dt", "window", "tol", "rtol", "atol", "method", "initial", "cutoff",
             "check_saturation", "store_phi", "ramp", "grid"}
_INITIAL_KEYS = {"kind", "density", "phase", "noise", "seed"}
_RAMP_KEYS = {"parameter", "start", "end", "rate", "window", "tol", "duration"}


def output_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get(ENV_ROOT) or "ddbh_output")


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:12]


# --- run options -------------------------------------------------------------

def parse_run_section(run: dict | None) -> dict:
    run = dict(run or {})
    unknown = set(run) - _RUN_KEYS
    if unknown:
        raise ScenarioError(f"unknown key(s) in run: {', '.join(sorted(unknown))}")
    init = run.get("initial", {"kind": "vacuum"})
    if not isinstance(init, dict) or set(init) - _INITIAL_KEYS:
        raise ScenarioError(f"run.initial accepts keys {sorted(_INITIAL_KEYS)}")
    if init.get("kind", "vacuum") not in ("vacuum", "coherent"):
        raise ScenarioError("run.initial.kind must be 'vacuum' or 'coherent'")
    if "ramp" in run and (not isinstance(run["ramp"], dict) or set(run["ramp"]) - _RAMP_KEYS):
        raise ScenarioError(f"run.ramp accepts keys {sorted(_RAMP_KEYS)}")
    for k in ("t_final", "sample_dt", "window"):
        if k in run and not (isinstance(run[k], (int, float)) and run[k] > 0):
            raise ScenarioError(f"run.{k} must be a positive number")
    if "cutoff" in run and not (isinstance(run["cutoff"], int) and run["cutoff"] >= 2):
        raise ScenarioError("run.cutoff must be an integer >= 2")
    return run


def _integrator(run: dict, tier: str, fixed_step: float | None) -> IntegratorOptions:
    gp = tier == "gp"
    return IntegratorOptions(rtol=run.get("rtol", 1e-9 if gp else 1e-8),
                             atol=run.get("atol", 1e-12 if gp else 1e-10),
                             method=run.get("method", "dopri5" if gp else "dop853"),
                             fixed_step=fixed_step, sample_dt=run.get("sample_dt", 1.0))


def _require(run: dict, key: str, tier: str):
    if key not in run:
        raise ScenarioError(f"tier {tier} needs run.{key}")
    return run[key]


# --- tier solvers ----------------------------------------------------------------

@dataclass
class TierResult:
    summary: dict
    series: object = None
    tables: dict | None = None  # name -> (columns, rows)


def _center(n_bonds: int) -> slice:
    w = max(1, n_bonds // 5)
    lo = max(0, n_bonds // 2 - w // 2)
    return slice(lo, min(n_bonds, lo + w))


def _solve_linear(config: ScenarioConfig, run: dict, fixed_step) -> TierResult:
    from .linear_steady import steady_state_linear
    from .observables import bond_currents, flux_balance, flux_in, flux_out
    from .observables import ObservableSeries
    st = steady_state_linear(config)
    n = st.field.densities
    j = bond_currents(st.field, config)
    series = ObservableSeries(np.array([math.inf]), n[None], j[None],
                              np.array([flux_in(st.field.phi, config)]), np.array([flux_out(n, config)]))
    summary = {"bulk_current": float(j[0]) if j.size else 0.0,
               "mean_current": float(j.mean()) if j.size else 0.0,
               "mean_density": float(n.mean()), "residual": st.residual,
               "flux_residual": flux_balance(st.field, config)}
    return TierResult(summary, series)


def _gp_initial(config, run):
    from .states import CoherentField
    init = run.get("initial", {"kind": "vacuum"})
    if init.get("kind", "vacuum") == "vacuum":
        return CoherentField.vacuum(config.n_x), "vacuum"
    f = CoherentField.plane_wave(config.n_x, init.get("density", 1.0), init.get("phase", 0.0),
                                 init.get("noise", 0.0), init.get("seed"))
    return f, f"coherent({json.dumps(init, sort_keys=True)})"


def _solve_gp(config: ScenarioConfig, run: dict, fixed_step) -> TierResult:
    from . import meanfield_gp as gp
    from .observables import bond_currents, flux_balance
    opts = _integrator(run, "gp", fixed_step)
    init, desc = _gp_initial(config, run)
    if "ramp" in run:
        r = dict(run["ramp"])
        sched = gp.RampSchedule(r["parameter"], float(r["start"]), float(r["end"]), float(r["rate"]),
                                window=float(r.get("window", gp.STEADY_WINDOW)), tol=float(r.get("tol", 1e-4)),
                                duration=r.get("duration"))
        start = config.with_params(**{gp._param_key(config, sched.parameter): sched.start})
        if "t_final" in run:
            _, init = gp.evolve(init, start, (0.0, float(run["t_final"])), opts)
        res = gp.adiabatic_ramp(init, config, sched, opts)
        rows = zip(res.parameter, res.density, res.current, res.phase, res.converged)
        bd = res.breakdown()
        summary = {"ramp_points": int(res.parameter.size), "breakdown": bd if bd is not None else math.nan,
                   "initial": desc}
        return TierResult(summary, None, {"ramp": (["parameter", "n", "j", "phase", "converged"], rows)})
    t_final = float(_require(run, "t_final", "gp"))
    window = float(run.get("window", gp.STEADY_WINDOW))
    series, final = gp.evolve(init, config, (0.0, t_final), opts,
                              store_phi=bool(run.get("store_phi", False)), initial_descriptor=desc)
    try:
        rep = gp.detect_steady(series, window, float(run.get("tol", gp.STEADY_TOL)), final=final)
        conv, osc, rhs = rep.converged, rep.oscillating, rep.rhs_norm
    except DDBHError:
        conv, osc, rhs = False, False, math.nan
    j = bond_currents(final, config)
    sel = _center(j.size)
    summary = {"converged": conv, "oscillating": osc, "rhs_norm": rhs,
               "branch": gp._branch_label(config, final), "bulk_current": float(j[sel].mean()),
               "mean_density": float(final.densities.mean()), "flux_residual": flux_balance(final, config),
               "initial": desc}
    tables = None
    if series.phi is not None:
        rows = ((t, l + 1, p.real, p.imag) for t, ph in zip(series.times, series.phi) for l, p in enumerate(ph))
        tables = {"trajectory": (["tJ", "l", "re_phi", "im_phi"], rows)}
    return TierResult(summary, series, tables)


def _solve_gutzwiller(config: ScenarioConfig, run: dict, fixed_step) -> TierResult:
    from . import gutzwiller as gw
    opts = _integrator(run, "gutzwiller", fixed_step)
    cutoff = int(run.get("cutoff", gw.DEFAULT_CUTOFF))
    init = run.get("initial", {"kind": "vacuum"})
    st, desc = gw.initial_gw_state(init.get("kind", "vacuum"), config.n_x, cutoff,
                                   init.get("density", 1.0), init.get("phase", -math.pi / 2))
    t_final = float(_require(run, "t_final", "gutzwiller"))
    res = gw.evolve_gw(st, config, (0.0, t_final), opts,
                       check_saturation=bool(run.get("check_saturation", True)), initial_descriptor=desc)
    window = float(run.get("window", 0.2 * t_final))
    sel = _center(config.lattice.n_bonds)
    summary = {"trace_drift": res.trace_drift, "min_eigenvalue": res.min_eigenvalue,
               "max_top_occupation": res.max_top_occupation, "initial": desc, "cutoff": cutoff}
    try:
        avg = gw.quasi_steady_average(res.series, window, sites=sel)
        w = res.series.window(t_final - window)
        jc = w.currents[:, sel].mean(axis=1)
        summary.update(mean_current=float(jc.mean()), variance=float(jc.var()), quasi_steady=avg.quasi_steady,
                       chain_current=float(w.currents.mean()))
    except DDBHError:
        summary.update(mean_current=math.nan, variance=math.nan, quasi_steady=False, chain_current=math.nan)
    return TierResult(summary, res.series)


def _pi_profile(config: ScenarioConfig, tier: str):
    prof = config.profile
    if prof is None or prof.kind != "phase_imprint":
        raise ScenarioError(f"tier {tier} needs a phase_imprint profile")
    return prof


def _solve_single_cavity(config: ScenarioConfig, run: dict, fixed_step) -> TierResult:
    from .single_cavity import pi_self_consistent
    prof = _pi_profile(config, "single_cavity")
    r = pi_self_consistent(prof.F, prof.phase, config.delta, prof.gamma_b, config.U, config.J)
    summary = {"re_phi": r.phi.real, "im_phi": r.phi.imag, "coherence_sq": abs(r.phi) ** 2, "n": r.n,
               "j": r.j, "iterations": r.iterations, "residual": r.residual}
    return TierResult(summary)


def _solve_fluctuations(config: ScenarioConfig, run: dict, fixed_step) -> TierResult:
    from .errors import UnstableModeError
    from .fluctuations import classify_branch, fluctuation_ratio
    from .meanfield_gp import pi_density_roots
    prof = _pi_profile(config, "fluctuations")
    grid = tuple(run.get("grid", (64, 64)))
    roots = pi_density_roots(prof.F, config.delta, prof.gamma_b, config.U, config.J, prof.phase)
    summary = {"n_roots": len(roots)}
    for i in range(3):
        if i < len(roots):
            n = roots[i].density
            cls = classify_branch(n, config.U, config.delta, prof.gamma_b, config.J, prof.phase, grid)
            try:
                ratio = fluctuation_ratio(config, n, grid)
            except UnstableModeError:
                ratio = math.nan
            summary.update({f"root{i}_n": n, f"root{i}_branch": roots[i].branch,
                            f"root{i}_class": cls, f"root{i}_ratio": ratio})
        else:
            summary.update({f"root{i}_n": math.nan, f"root{i}_branch": "", f"root{i}_class": "",
                            f"root{i}_ratio": math.nan})
    return TierResult(summary)


SOLVERS = {"linear": _solve_linear, "gp": _solve_gp, "gutzwiller": _solve_gutzwiller,
           "single_cavity": _solve_single_cavity, "fluctuations": _solve_fluctuations}


def solve(config: ScenarioConfig, tier: str, run: dict, fixed_step: float | None = None) -> TierResult:
    if tier not in SOLVERS:
        raise ScenarioError(f"unknown tier {tier!r}; choose from {', '.join(TIERS)}")
    return SOLVERS[tier](config, run, fixed_step)


# --- ledger ------------------------------------------------------------------------

def append_ledger(root: Path, entry: dict):
    root.mkdir(parents=True, exist_ok=True)
    with open(root / LEDGER, "a", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def read_ledger(root: Path) -> list[dict]:
    p = root / LEDGER
    if not p.exists():
        return []
    return [json.loads(ln) for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip()]


def _stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()) + f".{int(time.time() * 1e3) % 1000:03d}Z"


# --- run ---------------------------------------------------------------------------

def load_document(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from None


def run_id_for(config: ScenarioConfig, tier: str, run: dict, fixed_step) -> str:
    return f"{tier}-{_hash([config.config_hash(), tier, run, fixed_step])}"


def write_run_outputs(out_dir: Path, config: ScenarioConfig, tier: str, run: dict, res: TierResult,
                      fixed_step) -> list[str]:
    meta = {"config_hash": config.config_hash(), "tier": tier, "code_version": __version__}
    files = []
    if res.series is not None:
        s = res.series
        cols = series_columns(config.n_x, config.lattice.n_bonds)
        files.append(write_csv(out_dir / "series.csv", cols, series_rows(s), meta).name)
    for name, (cols, rows) in (res.tables or {}).items():
        files.append(write_csv(out_dir / f"{name}.csv", cols, rows, meta).name)
    summary = {"config_hash": config.config_hash(), "tier": tier, "code_version": __version__,
               "scenario": config.to_dict(), "run": run, "fixed_step": fixed_step,
               "units": "energies in J, time in 1/J", "result": res.summary}
    files.append(write_json(out_dir / "summary.json", summary).name)
    return files


def cmd_run(args) -> int:
    doc = load_document(args.file)
    config = scenario_from_dict(doc, extra_keys={"run"})
    run = parse_run_section(doc.get("run"))
    root = output_root(args.out)
    rid = run_id_for(config, args.tier, run, args.fixed_step)
    out_dir = root / "runs" / rid
    start = _stamp()
    entry = {"kind": "run", "run_id": rid, "config_hash": config.config_hash(), "tier": args.tier,
             "code_version": __version__, "start": start, "workers": args.workers}
    try:
        res = solve(config, args.tier, run, args.fixed_step)
    except SolverError as exc:
        append_ledger(root, {**entry, "end": _stamp(), "status": "failed",
                             "error": f"{type(exc).__name__}: {exc}", "outputs": []})
        raise
    files = write_run_outputs(out_dir, config, args.tier, run, res, args.fixed_step)
    append_ledger(root, {**entry, "end": _stamp(), "status": "complete", "outputs": files})
    print(rid)
    return EXIT_OK


# --- sweep -------------------------------------------------------------------------

_SWEEP_KEYS = {"version", "name", "base", "tier", "axes", "run", "fixed_step"}


@dataclass
class SweepSpec:
    base: dict
    tier: str
    axes: list[tuple[str, list[float]]]
    run: dict
    name: str
    fixed_step: float | None = None

    def cells(self) -> list[tuple[float, ...]]:
        grids = [v for _, v in self.axes]
        if len(grids) == 1:
            return [(a,) for a in grids[0]]
        return [(a, b) for a in grids[0] for b in grids[1]]

    def spec_hash(self) -> str:
        return _hash([self.base, self.tier, self.axes, self.run, self.fixed_step])


def _axis_values(ax: dict) -> list[float]:
    if "values" in ax:
        vals = [float(v) for v in ax["values"]]
    elif {"start", "stop", "num"} <= set(ax):
        vals = [float(v) for v in np.linspace(ax["start"], ax["stop"], int(ax["num"]))]
    else:
        raise ScenarioError("each axis needs 'values' or 'start'/'stop'/'num'")
    if not vals:
        raise ScenarioError(f"axis {ax.get('path')!r} has an empty grid")
    return vals


def _set_path(doc: dict, path: str, value):
    parts = path.split(".")
    if len(parts) != 2 or parts[0] not in ("params", "profile", "lattice"):
        raise ScenarioError(f"axis path {path!r} must look like params.<key> or profile.<key>")
    sec = doc.get(parts[0])
    if not isinstance(sec, dict) or parts[1] not in sec or parts[1] == "kind":
        raise ScenarioError(f"axis path {path!r} does not resolve against the base scenario")
    sec[parts[1]] = int(value) if parts[0] == "lattice" else value


def parse_sweep(doc: dict) -> SweepSpec:
    if not isinstance(doc, dict):
        raise ScenarioError("sweep file must hold an object")
    unknown = set(doc) - _SWEEP_KEYS
    if unknown:
        raise ScenarioError(f"unknown key(s) in sweep: {', '.join(sorted(unknown))}")
    for k in ("base", "tier", "axes"):
        if k not in doc:
            raise ScenarioError(f"sweep is missing {k!r}")
    if doc["tier"] not in TIERS:
        raise ScenarioError(f"unknown tier {doc['tier']!r}")
    axes_doc = doc["axes"]
    if not isinstance(axes_doc, list) or not 1 <= len(axes_doc) <= 2:
        raise ScenarioError("a sweep needs one or two axes")
    axes = [(str(a["path"]), _axis_values(a)) for a in axes_doc]
    base = doc["base"]
    scenario_from_dict(base)
    for path, vals in axes:
        trial = copy.deepcopy(base)
        _set_path(trial, path, vals[0])
    spec = SweepSpec(base, doc["tier"], axes, parse_run_section(doc.get("run")),
                     str(doc.get("name", "")), doc.get("fixed_step"))
    return spec


def _run_cell(args):
    spec, index, values = args
    doc = copy.deepcopy(spec.base)
    for (path, _), v in zip(spec.axes, values):
        _set_path(doc, path, v)
    cell = {"index": index, "values": list(values)}
    try:
        config = scenario_from_dict(doc)
        cell["config_hash"] = config.config_hash()
        res = solve(config, spec.tier, spec.run, spec.fixed_step)
        cell.update(status="ok", result=res.summary)
    except (DDBHError, ValueError, ArithmeticError) as exc:
        cell.update(status="failed", error=f"{type(exc).__name__}: {exc}", result={})
    return cell


def run_sweep(spec: SweepSpec, root: Path, workers: int = 1) -> Path:
    sid = spec.name or f"sweep-{spec.spec_hash()}"
    sdir = root / "sweeps" / sid
    cdir = sdir / "cells"
    cdir.mkdir(parents=True, exist_ok=True)
    write_json(sdir / "spec.json", {"base": spec.base, "tier": spec.tier, "axes": spec.axes,
                                    "run": spec.run, "fixed_step": spec.fixed_step})
    done = {e["cell"] for e in read_ledger(root)
            if e.get("kind") == "cell" and e.get("sweep") == sid and e.get("status") == "complete"}
    cells = spec.cells()
    pending = [(spec, i, v) for i, v in enumerate(cells)
               if not (i in done and (cdir / f"cell_{i:05d}.json").exists())]

    def record(cell, start):
        path = write_json(cdir / f"cell_{cell['index']:05d}.json", cell)
        append_ledger(root, {"kind": "cell", "sweep": sid, "cell": cell["index"],
                             "config_hash": cell.get("config_hash"), "code_version": __version__,
                             "start": start, "end": _stamp(), "status": "complete",
                             "cell_status": cell["status"], "outputs": [path.name]})

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            start = _stamp()
            for cell in pool.map(_run_cell, pending):
                record(cell, start)
    else:
        for job in pending:
            start = _stamp()
            record(_run_cell(job), start)

    results = [json.loads((cdir / f"cell_{i:05d}.json").read_text(encoding="utf-8")) for i in range(len(cells))]
    keys = sorted({k for r in results for k in r["result"]})
    cols = [p for p, _ in spec.axes] + ["status"] + keys
    rows = [list(r["values"]) + [r["status"]] + [r["result"].get(k, math.nan) for k in keys] for r in results]
    meta = {"sweep": sid, "tier": spec.tier, "base_config_hash": scenario_from_dict(spec.base).config_hash(),
            "code_version": __version__}
    return write_csv(sdir / "table.csv", cols, rows, meta)


def cmd_sweep(args) -> int:
    spec = parse_sweep(load_document(args.file))
    path = run_sweep(spec, output_root(args.out), max(1, args.workers))
    print(path)
    return EXIT_OK


# --- snapshot ----------------------------------------------------------------------

def snapshot_export(root: Path, run_id: str, t0: float, t1: float) -> Path:
    run_dir = root / "runs" / run_id
    src = run_dir / "series.csv"
    if not src.exists():
        raise MissingTrajectoryError(f"run {run_id!r} has no stored trajectory under {run_dir}")
    meta, cols, data = read_csv(src)
    jcols = [i for i, c in enumerate(cols) if c.startswith("j_")]
    if data.size == 0 or not np.all(np.isfinite(data[:, 0])):
        raise MissingTrajectoryError(f"run {run_id!r} is a steady-state run without time samples")
    sel = (data[:, 0] >= t0) & (data[:, 0] <= t1)
    rows = [[data[i, 0]] + [data[i, k] for k in jcols] for i in np.flatnonzero(sel)]
    meta = {k: v for k, v in meta.items() if k != "units"}
    meta.update(run_id=run_id, t0=t0, t1=t1)
    return write_csv(run_dir / f"snapshot_{t0:g}_{t1:g}.csv", ["tJ"] + [cols[k] for k in jcols], rows, meta)


def cmd_snapshot(args) -> int:
    print(snapshot_export(output_root(args.out), args.run_id, args.t0, args.t1))
    return EXIT_OK


# --- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddbh", description="Steady states and dynamics of driven-dissipative Bose-Hubbard lattices")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="solve one scenario file")
    r.add_argument("file")
    r.add_argument("--tier", required=True, choices=TIERS)
    r.add_argument("--out", default=None, help=f"output root (default ${ENV_ROOT} or ./ddbh_output)")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--fixed-step", type=float, default=None, dest="fixed_step",
                   help="use fixed-step RK4 with this step (bitwise reproducible)")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="run a one- or two-axis parameter sweep")
    s.add_argument("file")
    s.add_argument("--out", default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    n = sub.add_parser("snapshot", help="export a space-time bond-current grid of a stored run")
    n.add_argument("run_id")
    n.add_argument("--t0", type=float, required=True)
    n.add_argument("--t1", type=float, required=True)
    n.add_argument("--out", default=None)
    n.set_defaults(func=cmd_snapshot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "fixed_step", None) is not None and not args.fixed_step > 0:
        print("error: --fixed-step must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ScenarioError, MissingTrajectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
