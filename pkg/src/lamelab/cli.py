"""Scenario-driven command line front end.

    lamelab <experiment> --scenario s.toml --out DIR [--threads N] [--seed N]

Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import platform
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
import tomli_w

from . import __version__
from .attractor import (
    EnsembleSpec, absorbing_check, attractor_approximate, contraction_test, dyadic_times,
    save_cloud, smooth_random_state,
)
from .diagnostics import (
    ConstantError, build_q, compute_constants, energy_identity_residuals, inequality_ledger,
    observe,
)
from .grid import GridSpec, State, first_eigenvalue
from .integrator import IntegrationError, SchemeConfig, run, stable_dt
from .model import (
    ForcingSymbol, ModelError, ModelSpec, Nonlinearity, TimeCoefficient, hull_net,
    lb2_norm_estimate, validate_assumptions,
)
from .operators import PoissonSolverSpec, SolverError, estimate_operator_constants
from .snapshot import SnapshotError, read_state, write_state

EXPERIMENTS = ("run", "constants", "assumptions", "absorbing", "attractor", "contraction",
               "convergence")

TRAJECTORY_COLUMNS = (
    "time", "E", "E_c", "F1", "F2", "F3", "L", "grad_theta_sq", "g_norm_sq", "hc_norm_sq",
    "margin_3_1", "margin_3_3", "margin_3_8", "margin_3_18", "margin_3_28", "envelope_rhs",
)
# CSV column name -> margin key of the inequality ledger
MARGIN_COLUMNS = {
    "margin_3_1": "energy_rate",
    "margin_3_3": "F1_rate",
    "margin_3_8": "F2_rate",
    "margin_3_18": "F3_rate",
    "margin_3_28": "lyapunov_rate",
}

DEFAULTS = {
    "seed": 0,
    "grid": {"dim": 1, "n": 31, "length": 1.0},
    "model": {
        "mu": 1.0,
        "lambda": 0.0,
        "alpha": {"kind": "constant", "params": [1.0]},
        "kappa": {"kind": "constant", "params": [1.0]},
        "nonlinearity": {"kind": "zero", "c": 0.0, "rho": 2.0, "eta": 1.0, "C_f": 0.0},
        "forcing": {"kind": "static", "temporal": [], "amplitude": 0.0,
                    "profile": [], "shifts": [0.0]},
    },
    "initial": {"kind": "modes", "u": [], "v": [], "theta": []},
    "scheme": {"cfl_safety": 0.5, "record_stride": 1, "solver": "dst", "tolerance": 1e-10},
    "experiment": {"kind": "run", "tau": 0.0, "T": 1.0},
    "output": {"directory": "out", "formats": ["csv", "json"], "snapshot_times": []},
}

EXPERIMENT_DEFAULTS = {
    "run": {"ledger": True},
    "constants": {"lb2_horizon": 4.0, "lb2_dt": 0.001},
    "assumptions": {"samples": 1000, "t_max": 10.0},
    "absorbing": {"count": 5, "norm_scale": 10.0, "chunk": 5.0, "dwell": 20.0,
                  "T_max": 1000.0, "lb2_horizon": 4.0, "lb2_dt": 0.001},
    "attractor": {"count": 8, "norm_min": 0.5, "norm_max": 4.0, "dyadic": 8,
                  "T_max": 100.0},
    "contraction": {"count": 8, "base_norm": 1.0, "direction_norm": 1.0, "T": 2.0,
                    "all_pairs": True},
    "convergence": {"levels": [63, 127, 255], "T": 1.0},
}


class ScenarioError(ValueError):
    def __init__(self, errors: list[dict]):
        self.errors = errors
        super().__init__("; ".join(f"{e['path']}: {e['message']}" for e in errors))


@dataclass
class Scenario:
    config: dict
    grid: GridSpec
    model: ModelSpec
    symbols: list[ForcingSymbol]
    scheme: SchemeConfig
    initial: State
    experiment: dict
    output: dict
    seed: int
    warnings: list[str] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return self.experiment["kind"]


# {{{ parsing

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _sine_modes(grid: GridSpec, modes: list[dict], path: str, errors: list) -> np.ndarray:
    out = grid.zeros()
    coords = grid.mesh()
    for i, mode in enumerate(modes):
        k = mode.get("k")
        if not isinstance(k, list) or len(k) != grid.dim or any(
                not isinstance(x, int) or x < 1 for x in k):
            errors.append({"path": f"{path}[{i}].k",
                           "message": f"expected {grid.dim} positive integers"})
            continue
        term = np.full(grid.shape, float(mode.get("a", 1.0)))
        for kk, x, L in zip(k, coords, grid.lengths):
            term = term * np.sin(kk * np.pi * x / L)
        out += term
    return out


def _vector_modes(grid: GridSpec, modes: list[dict], path: str, errors: list) -> np.ndarray:
    out = grid.vzeros()
    for i, mode in enumerate(modes):
        comp = mode.get("component", 0)
        if not isinstance(comp, int) or not 0 <= comp < grid.dim:
            errors.append({"path": f"{path}[{i}].component",
                           "message": f"component must be in [0, {grid.dim})"})
            continue
        out[comp] += _sine_modes(grid, [mode], f"{path}", errors)
    return out


def _build_grid(cfg: dict, errors: list) -> GridSpec | None:
    g = cfg["grid"]
    try:
        if "lengths" in g or "interior_counts" in g:
            return GridSpec(tuple(g["lengths"]), tuple(g["interior_counts"]))
        return GridSpec.uniform(int(g["dim"]), int(g["n"]), float(g["length"]))
    except (KeyError, TypeError, ValueError) as exc:
        errors.append({"path": "grid", "message": str(exc)})
        return None


def _build_coeff(block: dict, path: str, errors: list) -> TimeCoefficient | None:
    try:
        return TimeCoefficient(block["kind"], tuple(block["params"]))
    except (KeyError, TypeError, ModelError) as exc:
        errors.append({"path": path, "message": str(exc)})
        return None


def _lattice(x: float, dt: float) -> bool:
    j = round(x / dt)
    return abs(x / dt - j) <= 1e-9 * max(1.0, abs(j))


def build_scenario(raw: dict, seed: int | None = None) -> Scenario:
    """Merge defaults, validate every field and build the domain objects.
    All violations are collected before raising."""
    cfg = _merge(DEFAULTS, raw)
    kind = cfg["experiment"].get("kind")
    errors: list[dict] = []
    if kind not in EXPERIMENTS:
        errors.append({"path": "experiment.kind", "message": f"must be one of {EXPERIMENTS}"})
    else:
        cfg["experiment"] = _merge(EXPERIMENT_DEFAULTS[kind], cfg["experiment"])
    if seed is not None:
        cfg["seed"] = int(seed)

    grid = _build_grid(cfg, errors)
    if grid is None:
        raise ScenarioError(errors)

    mc = cfg["model"]
    alpha = _build_coeff(mc["alpha"], "model.alpha", errors)
    kappa = _build_coeff(mc["kappa"], "model.kappa", errors)
    nl = mc["nonlinearity"]
    try:
        f = Nonlinearity(nl["kind"], float(nl["c"]), float(nl["rho"]), float(nl["eta"]),
                         float(nl["C_f"]))
        if not f.is_zero and not 0 < f.eta < mc["mu"] * first_eigenvalue(grid):
            errors.append({"path": "model.nonlinearity.eta",
                           "message": f"eta must lie in (0, mu lambda1) = "
                                      f"(0, {mc['mu'] * first_eigenvalue(grid):.6g})"})
    except (KeyError, TypeError, ModelError) as exc:
        errors.append({"path": "model.nonlinearity", "message": str(exc)})
        f = None
    fc = mc["forcing"]
    try:
        profile = _sine_modes(grid, fc["profile"], "model.forcing.profile", errors)
        g0 = ForcingSymbol(fc["kind"], profile, tuple(fc["temporal"]), 0.0,
                           float(fc["amplitude"]) if fc["profile"] else 0.0)
    except (KeyError, TypeError, ModelError) as exc:
        errors.append({"path": "model.forcing", "message": str(exc)})
        g0 = None

    model = None
    if None not in (alpha, kappa, f, g0):
        try:
            model = ModelSpec(float(mc["mu"]), float(mc["lambda"]), alpha, kappa, f, g0)
        except ModelError as exc:
            errors.append({"path": "model", "message": str(exc)})

    sc = cfg["scheme"]
    scheme = None
    if model is not None:
        safety = float(sc["cfl_safety"])
        if "dt" not in sc:
            # largest stable dt that divides unit time, so integer times land on steps
            sc["dt"] = 1.0 / math.ceil(1.0 / stable_dt(grid, model, min(max(safety, 1e-6), 1)))
        try:
            spec = PoissonSolverSpec(sc["solver"], float(sc["tolerance"]))
            scheme = SchemeConfig(float(sc["dt"]), safety, spec, int(sc["record_stride"]))
            scheme.check_cfl(grid, model)
        except (ValueError, TypeError) as exc:
            path = "scheme.dt" if "dt" in str(exc) else "scheme"
            errors.append({"path": path, "message": str(exc)})
            scheme = None if path != "scheme.dt" else scheme

    symbols = []
    if g0 is not None:
        for k, s in enumerate(fc["shifts"]):
            if not isinstance(s, (int, float)) or s < 0:
                errors.append({"path": f"model.forcing.shifts[{k}]",
                               "message": "shift must be a nonnegative number"})
            elif scheme is not None and not _lattice(s, scheme.dt):
                errors.append({"path": f"model.forcing.shifts[{k}]",
                               "message": f"shift {s} is not a multiple of dt={scheme.dt}"})
        if not errors:
            symbols = hull_net(g0, [float(s) for s in fc["shifts"]])

    ex = cfg["experiment"]
    if scheme is not None and kind in ("run", "convergence"):
        tau, T = float(ex.get("tau", 0.0)), float(ex["T"])
        if T < tau:
            errors.append({"path": "experiment.T", "message": "T must be >= tau"})
        elif kind == "run" and not _lattice(T - tau, scheme.dt):
            errors.append({"path": "experiment.T",
                           "message": f"T - tau = {T - tau} is not a multiple of dt"})
    if scheme is not None:
        for k, ts in enumerate(cfg["output"]["snapshot_times"]):
            if not _lattice(ts - float(ex.get("tau", 0.0)), scheme.dt):
                errors.append({"path": f"output.snapshot_times[{k}]",
                               "message": f"{ts} is not on the dt lattice"})

    initial = None
    ic = cfg["initial"]
    tau = float(ex.get("tau", 0.0))
    if ic["kind"] == "modes":
        u = _vector_modes(grid, ic["u"], "initial.u", errors)
        v = _vector_modes(grid, ic["v"], "initial.v", errors)
        th = _sine_modes(grid, ic["theta"], "initial.theta", errors)
        initial = State(tau, u, v, th, grid)
    elif ic["kind"] == "random":
        if model is not None:
            rng = np.random.default_rng(cfg["seed"])
            initial = smooth_random_state(grid, rng, float(ic.get("hc_norm", 1.0)),
                                          model.mu, model.lam, int(ic.get("modes", 4)), tau)
    elif ic["kind"] == "snapshot":
        try:
            initial, sgrid = read_state(ic["path"])
            if sgrid != grid:
                errors.append({"path": "initial.path", "message": "snapshot grid differs"})
        except (OSError, SnapshotError, KeyError) as exc:
            errors.append({"path": "initial.path", "message": str(exc)})
    else:
        errors.append({"path": "initial.kind", "message": "expected modes, random or snapshot"})

    if errors:
        raise ScenarioError(errors)
    return Scenario(cfg, grid, model, symbols, scheme, initial, ex, cfg["output"],
                    int(cfg["seed"]))


def parse_scenario(path, seed: int | None = None) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        err = {"path": "<toml>", "message": str(exc)}
        if m:
            err["line"], err["column"] = int(m.group(1)), int(m.group(2))
        raise ScenarioError([err]) from None
    return build_scenario(raw, seed)


def resolved_config(sc: Scenario) -> str:
    return tomli_w.dumps(sc.config)

# }}}


# {{{ output helpers

def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) if isinstance(x, (float, int, np.floating, np.integer))
                        and not isinstance(x, bool) else x for x in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

# }}}


# {{{ experiments

def _ledger(sc: Scenario, g_lb2: float | None = None):
    ex = sc.experiment
    g = sc.model.forcing
    if g_lb2 is None:
        g_lb2 = 0.0 if g.is_zero else lb2_norm_estimate(
            g, float(ex.get("lb2_horizon", 4.0)), float(ex.get("lb2_dt", 0.001)), sc.grid)
    opc = estimate_operator_constants(sc.grid)
    q = build_q(sc.grid)
    return compute_constants(sc.model, opc, q, sc.grid, g_lb2=g_lb2, seed=sc.seed), q


def exp_run(sc: Scenario, out: Path, threads: int) -> dict:
    ex = sc.experiment
    ledger, q = _ledger(sc) if ex["ledger"] else (None, build_q(sc.grid))
    tau, T = float(ex["tau"]), float(ex["T"])
    rec = run(sc.initial, tau, T, sc.symbols[0], sc.model, sc.scheme, sc.grid,
              observer=lambda s: observe(s, sc.model.with_forcing(sc.symbols[0]), sc.grid,
                                         q, ledger),
              snapshot_times=sc.output["snapshot_times"])
    d = rec.diagnostics
    nrow = len(rec.times)
    cols = {"time": rec.times}
    for key in ("E", "E_c", "F1", "F2", "F3", "grad_theta_sq", "g_norm_sq", "hc_norm_sq"):
        cols[key] = d[key]
    cols["L"] = d["L"] if "L" in d else [math.nan] * nrow
    summary = {"steps": round((T - tau) / sc.scheme.dt), "rows": nrow,
               "E_initial": d["E"][0], "E_final": d["E"][-1]}
    if ledger is not None and nrow >= 2:
        rep = inequality_ledger(rec.times, d, ledger, tau)
        for col, key in MARGIN_COLUMNS.items():
            cols[col] = rep.margins[key]
        cols["envelope_rhs"] = rep.envelope_rhs
        summary["margins"] = rep.summary()
        write_json(out / "ledger.json", ledger.to_dict())
    else:
        for col in list(MARGIN_COLUMNS) + ["envelope_rhs"]:
            cols[col] = [math.nan] * nrow
        if ledger is not None:
            write_json(out / "ledger.json", ledger.to_dict())
    write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS,
              zip(*(cols[c] for c in TRAJECTORY_COLUMNS)))
    if rec.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for ts, s in sorted(rec.snapshots.items()):
            write_state(snap_dir / f"t_{fmt(ts)}.lths", s, sc.grid)
    return summary


def exp_constants(sc: Scenario, out: Path, threads: int) -> dict:
    ledger, _ = _ledger(sc)
    write_json(out / "ledger.json", ledger.to_dict())
    return {"P": ledger.P, "rho0": ledger.rho0, "xi1": ledger.xi1, "N0": ledger.N0,
            "identities": ledger.identities}


def exp_assumptions(sc: Scenario, out: Path, threads: int) -> dict:
    ex = sc.experiment
    rep = validate_assumptions(sc.model, sc.grid, int(ex["samples"]),
                               (0.0, float(ex["t_max"])), seed=sc.seed)
    write_json(out / "assumptions.json", rep.to_dict())
    return {"passed": rep.passed, "hard_failures": rep.hard_failures}


def exp_absorbing(sc: Scenario, out: Path, threads: int) -> dict:
    ex = sc.experiment
    ledger, _ = _ledger(sc)
    count = int(ex["count"])
    norms = ex.get("norms") or [float(ex["norm_scale"]) * ledger.rho0] * count
    ens = EnsembleSpec.random(sc.grid, sc.model, norms, sc.symbols, tau=float(ex["tau"]),
                              seed=sc.seed)
    chunk = round(float(ex["chunk"]) / sc.scheme.dt) * sc.scheme.dt
    rep = absorbing_check(ens, ledger, sc.model, sc.scheme, chunk=chunk,
                          dwell=float(ex["dwell"]), T_max=float(ex["T_max"]), threads=threads)
    write_json(out / "absorbing.json", rep.to_dict())
    write_json(out / "ledger.json", ledger.to_dict())
    write_csv(out / "absorbing.csv",
              ("ic", "symbol", "initial_hc", "entry_time", "predicted_time", "exits"),
              [(m.ic, m.symbol, m.initial_hc, m.entry_time if m.entry_time is not None
                else math.nan, m.predicted_time, m.exits) for m in rep.members])
    if any(m.error for m in rep.members):
        raise IntegrationError("; ".join(m.error for m in rep.members if m.error), math.nan,
                               None)
    return {"passed": rep.passed, "rho0": ledger.rho0,
            "max_entry_time": max((m.entry_time or math.inf) for m in rep.members)}


def exp_attractor(sc: Scenario, out: Path, threads: int) -> dict:
    ex = sc.experiment
    T = float(ex["T_max"])
    tau = float(ex["tau"])
    norms = np.linspace(float(ex["norm_min"]), float(ex["norm_max"]), int(ex["count"]))
    ens = EnsembleSpec.random(sc.grid, sc.model, norms, sc.symbols,
                              dyadic_times(T, int(ex["dyadic"]), tau, sc.scheme.dt),
                              tau=tau, seed=sc.seed)
    rep = attractor_approximate(ens, T, sc.model, sc.scheme, threads=threads)
    write_csv(out / "decay_series.csv", ("time", "distance"),
              zip(rep.times, rep.decay_series))
    save_cloud(rep.A_approx, out / "A_approx", sc.model.mu, sc.model.lam, sc.grid)
    return {"nonincreasing": rep.nonincreasing, "decay_series": rep.decay_series,
            "failures": rep.failures}


def exp_contraction(sc: Scenario, out: Path, threads: int) -> dict:
    ex = sc.experiment
    rng = np.random.default_rng(sc.seed)
    tau = float(ex["tau"])
    U = smooth_random_state(sc.grid, rng, float(ex["base_norm"]), sc.model.mu, sc.model.lam,
                            t=tau)
    W = smooth_random_state(sc.grid, rng, float(ex["direction_norm"]), sc.model.mu,
                            sc.model.lam, t=tau)
    seq = [U + W.scaled(2.0**-k) for k in range(int(ex["count"]))]
    g = sc.symbols[0]
    T = tau + round((float(ex["T"]) - tau) / sc.scheme.dt) * sc.scheme.dt
    rep = contraction_test(seq, [g] * len(seq), T, sc.model, sc.scheme, sc.grid, tau=tau,
                           all_pairs=bool(ex["all_pairs"]), threads=threads)
    write_json(out / "contraction.json", rep.to_dict())
    write_csv(out / "phi_pairs.csv", ("i", "j", "E_Z_T", "phi_T", "C_M", "bound"),
              [(p.i, p.j, p.E_Z_T, p.phi_T, p.C_M, p.bound) for p in rep.pairs])
    return {"inequality_holds": rep.inequality_holds, "ratios": rep.ratios,
            "monotone_decay": rep.monotone_decay()}


def exp_convergence(sc: Scenario, out: Path, threads: int) -> dict:
    """Max energy-identity residual under simultaneous (dt, h) halving."""
    ex = sc.experiment
    tau, T = float(ex["tau"]), float(ex["T"])
    g0cfg = sc.config["model"]
    rows = []
    for n in ex["levels"]:
        raw = copy.deepcopy(sc.config)
        raw["grid"] = {"dim": sc.grid.dim, "n": int(n), "length": sc.grid.lengths[0]}
        raw["scheme"].pop("dt", None)
        raw["experiment"] = {"kind": "run", "tau": tau, "T": T, "ledger": False}
        raw["model"] = g0cfg
        level = build_scenario(raw)
        T_level = tau + round((T - tau) / level.scheme.dt) * level.scheme.dt
        r = energy_identity_residuals(level.initial, tau, T_level, level.symbols[0],
                                      level.model, level.scheme, level.grid)
        rows.append((int(n), level.scheme.dt, float(np.max(np.abs(r)))))
    orders = [math.log2(rows[k][2] / rows[k + 1][2]) for k in range(len(rows) - 1)]
    write_csv(out / "convergence.csv", ("n", "dt", "max_residual"), rows)
    return {"levels": [r[0] for r in rows], "max_residual": [r[2] for r in rows],
            "orders": orders}


RUNNERS = {
    "run": exp_run, "constants": exp_constants, "assumptions": exp_assumptions,
    "absorbing": exp_absorbing, "attractor": exp_attractor, "contraction": exp_contraction,
    "convergence": exp_convergence,
}

# }}}


def versions() -> dict:
    return {"lamelab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _manifest(out: Path, stage: str, message: str) -> None:
    files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    (out / "MANIFEST").write_text(
        "incomplete\n" f"failed stage: {stage}\n" f"error: {message}\n"
        + "".join(f"{f}\n" for f in files))


def execute(sc: Scenario, out: Path, threads: int = 1) -> int:
    """Run the scenario's experiment; summary.json is written whatever happens."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved-config.toml").write_text(resolved_config(sc))
    start = time.perf_counter()
    summary = {"experiment": sc.kind, "seed": sc.seed, "threads": threads,
               "versions": versions()}
    code, stage = 0, sc.kind
    try:
        summary["metrics"] = RUNNERS[sc.kind](sc, out, threads)
        summary["status"] = "ok"
    except (IntegrationError, SolverError, ConstantError, FloatingPointError) as exc:
        code = 3
        summary["status"] = "numerical failure"
        summary["error"] = str(exc)
    except OSError as exc:
        code = 4
        summary["status"] = "io failure"
        summary["error"] = str(exc)
    if code:
        summary["failed_stage"] = stage
    ledger_path = out / "ledger.json"
    if ledger_path.exists():
        summary["ledger"] = json.loads(ledger_path.read_text())
    summary["wall_clock_seconds"] = time.perf_counter() - start
    try:
        write_json(out / "summary.json", summary)
        if code:
            _manifest(out, stage, summary["error"])
    except OSError:
        return 4
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lamelab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--scenario", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None,
                        help="output directory (default: output.directory of the scenario)")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 2
    try:
        text = args.scenario.read_text()
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return 4
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError:
        raw = None
    try:
        if raw is None:
            parse_scenario(args.scenario)  # raises with line/column
        raw.setdefault("experiment", {})["kind"] = raw.get("experiment", {}).get(
            "kind", args.experiment)
        if raw["experiment"]["kind"] != args.experiment:
            raw["experiment"] = {k: v for k, v in raw["experiment"].items()
                                 if k in ("tau", "T")}
            raw["experiment"]["kind"] = args.experiment
        sc = build_scenario(raw, args.seed)
    except ScenarioError as exc:
        out = args.out or Path(_merge(DEFAULTS, raw or {})["output"]["directory"])
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "errors.json", {"errors": exc.errors})
            write_json(out / "summary.json", {"experiment": args.experiment,
                                              "status": "validation failure",
                                              "errors": exc.errors, "versions": versions()})
        except OSError:
            pass
        for e in exc.errors:
            print(f"{e['path']}: {e['message']}", file=sys.stderr)
        return 2
    out = args.out or Path(sc.output["directory"])
    try:
        code = execute(sc, out, args.threads)
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return 4
    print(json.dumps({"experiment": sc.kind, "exit": code, "out": str(out)}))
    return code


if __name__ == "__main__":
    sys.exit(main())
