"""Ensembles over initial data and hull symbols: absorbing-ball entry,
Hausdorff semidistances, attractor approximation and the contraction test."""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import ConstantLedger, energy
from .grid import GridSpec, State
from .integrator import (
    IntegrationError, SchemeConfig, difference_run, run, step_count,
)
from .model import ForcingSymbol, ModelSpec
from .operators import hc_norm_sq
from .snapshot import read_state, write_state


# {{{ ensembles

def smooth_random_state(grid: GridSpec, rng: np.random.Generator, hc_norm: float,
                        mu: float, lam: float, modes: int = 4, t: float = 0.0) -> State:
    """Random combination of the lowest sine modes, scaled to a given H_c norm."""
    coords = grid.mesh()

    def field_():
        out = grid.zeros()
        for ks in itertools.product(range(1, modes + 1), repeat=grid.dim):
            basis = np.ones(grid.shape)
            for kk, x, L in zip(ks, coords, grid.lengths):
                basis = basis * np.sin(kk * np.pi * x / L)
            out += rng.standard_normal() * basis / (1 + sum(k * k for k in ks))
        return out

    u = np.stack([field_() for _ in range(grid.dim)])
    v = np.stack([field_() for _ in range(grid.dim)])
    theta = field_()
    s = State(t, u, v, theta, grid)
    return s.scaled(hc_norm / math.sqrt(hc_norm_sq(s, mu, lam, grid)))


@dataclass
class EnsembleSpec:
    grid: GridSpec
    initial_states: list[State]
    symbols: list[ForcingSymbol]
    snapshot_times: list[float] = field(default_factory=list)
    tau: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.initial_states or not self.symbols:
            raise ValueError("ensemble needs at least one initial state and one symbol")
        for s in self.initial_states:
            self.grid.check_vector(s.u, "initial u")
        if any(t < self.tau for t in self.snapshot_times):
            raise ValueError("snapshot times must not precede tau")

    @classmethod
    def random(cls, grid: GridSpec, model: ModelSpec, norms, symbols, snapshot_times=(),
               tau: float = 0.0, seed: int = 0, modes: int = 4) -> "EnsembleSpec":
        rng = np.random.default_rng(seed)
        states = [smooth_random_state(grid, rng, r, model.mu, model.lam, modes, tau)
                  for r in norms]
        return cls(grid, states, list(symbols), sorted(snapshot_times), tau, seed)

    def members(self):
        """(ic index, symbol index) pairs in a fixed order."""
        return [(i, j) for i in range(len(self.initial_states))
                for j in range(len(self.symbols))]


def dyadic_times(T: float, count: int, tau: float = 0.0, dt: float | None = None) -> list[float]:
    """tau + (T - tau)/2^k for k < count, snapped to the dt lattice when given."""
    times = [tau + (T - tau) / 2**k for k in range(count)]
    if dt is not None:
        times = [tau + round((t - tau) / dt) * dt for t in times]
    return sorted(set(times))


def _pool_map(fn, items, threads: int):
    # results come back in submission order, so reductions are deterministic
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))

# }}}


# {{{ clouds and distances

@dataclass
class SnapshotCloud:
    time: float
    points: list[State]
    labels: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.points:
            raise ValueError("snapshot cloud must be nonempty")

    def subset(self, symbol_index: int) -> "SnapshotCloud":
        keep = [(p, lab) for p, lab in zip(self.points, self.labels) if lab[1] == symbol_index]
        return SnapshotCloud(self.time, [p for p, _ in keep], [lab for _, lab in keep])


def save_cloud(cloud: SnapshotCloud, directory, mu: float, lam: float,
               grid: GridSpec) -> Path:
    """One LTHS file per point plus index.json with labels and H_c norms."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, (p, lab) in enumerate(zip(cloud.points, cloud.labels or [None] * len(cloud.points))):
        name = f"point_{k:04d}.lths"
        write_state(directory / name, p, grid)
        entries.append({"file": name, "label": list(lab) if lab else None,
                        "hc_norm": math.sqrt(hc_norm_sq(p, mu, lam, grid))})
    (directory / "index.json").write_text(
        json.dumps({"time": cloud.time, "points": entries}, indent=2))
    return directory


def load_cloud(directory) -> SnapshotCloud:
    directory = Path(directory)
    index = json.loads((directory / "index.json").read_text())
    points, labels = [], []
    for e in index["points"]:
        s, _ = read_state(directory / e["file"])
        points.append(s)
        labels.append(tuple(e["label"]) if e["label"] else None)
    return SnapshotCloud(index["time"], points, labels)


def hausdorff_semidist(A: SnapshotCloud, B: SnapshotCloud, mu: float, lam: float,
                       grid: GridSpec) -> float:
    """sup over a in A of min over b in B of ||a - b||_{H_c}."""
    if not A.points or not B.points:
        raise ValueError("Hausdorff semidistance needs nonempty clouds")
    worst = 0.0
    for a in A.points:
        best = min(hc_norm_sq(a - b, mu, lam, grid) for b in B.points)
        worst = max(worst, math.sqrt(max(best, 0.0)))
    return worst

# }}}


# {{{ absorbing ball

@dataclass
class MemberEntry:
    ic: int
    symbol: int
    initial_hc: float
    entry_time: float | None
    predicted_time: float
    exits: int
    observed_until: float
    error: str | None = None

    @property
    def within_prediction(self) -> bool:
        return self.entry_time is not None and self.error is None and (
            self.entry_time <= self.predicted_time)


@dataclass
class AbsorbingReport:
    rho0: float
    tau: float
    members: list[MemberEntry]
    slack: float

    @property
    def passed(self) -> bool:
        return all(m.within_prediction and m.exits == 0 for m in self.members)

    def to_dict(self):
        return {"rho0": self.rho0, "passed": self.passed, "slack": self.slack,
                "members": [vars(m) for m in self.members]}


def predicted_entry_time(E_tau: float, ledger: ConstantLedger, tau: float = 0.0) -> float:
    """Time at which the decay envelope drops below the energy level that
    guarantees ||U||_{H_c} <= rho0 (inf when the envelope never gets there)."""
    R = (1 + 1 / ledger.xi1) * (ledger.M_tilde1 + ledger.g_lb2)
    margin = ledger.beta0 * ledger.rho0**2 - ledger.C_f * ledger.volume - R
    if margin <= 0:
        return math.inf
    if E_tau <= margin:
        return tau
    return tau + math.log(E_tau / margin) / ledger.xi1


def absorbing_check(ensemble: EnsembleSpec, ledger: ConstantLedger, model: ModelSpec,
                    scheme: SchemeConfig, *, chunk: float = 5.0, dwell: float = 20.0,
                    T_max: float = 1e4, slack: float = 2.0,
                    threads: int = 1) -> AbsorbingReport:
    """Run each member until it enters B0, then for ``dwell`` more time units,
    counting exits from B0 * (1 + 1e-2)."""
    grid = ensemble.grid
    rho_sq = ledger.rho0**2
    exit_sq = (ledger.rho0 * (1 + 1e-2)) ** 2
    tau = ensemble.tau
    nchunk = max(1, step_count(0.0, chunk, scheme.dt)) if _aligned(chunk, scheme.dt) else None
    if nchunk is None:
        raise ValueError(f"chunk {chunk} must be a multiple of dt")

    def member(idx):
        i, j = idx
        s = ensemble.initial_states[i]
        g = ensemble.symbols[j]
        E0 = energy(s, model.with_forcing(g), grid).E
        pred = predicted_entry_time(E0, ledger, tau)
        pred_slack = tau + slack * (pred - tau)
        entry = tau if hc_norm_sq(s, model.mu, model.lam, grid) <= rho_sq else None
        exits = 0
        t = tau
        state = s
        try:
            while t < T_max:
                if entry is not None and t >= entry + dwell:
                    break
                t_next = min(t + chunk, T_max)
                rec = run(state, t, t_next, g, model, scheme, grid,
                          observer=lambda x: {"hc": hc_norm_sq(x, model.mu, model.lam, grid)})
                for tt, hc in zip(rec.times[1:], rec.diagnostics["hc"][1:]):
                    if entry is None and hc <= rho_sq:
                        entry = tt
                    elif entry is not None and hc > exit_sq:
                        exits += 1
                state, t = rec.final, t_next
        except IntegrationError as exc:
            return MemberEntry(i, j, math.sqrt(hc_norm_sq(s, model.mu, model.lam, grid)),
                               entry, pred_slack, exits, t, str(exc))
        return MemberEntry(i, j, math.sqrt(hc_norm_sq(s, model.mu, model.lam, grid)),
                           entry, pred_slack, exits, t)

    members = _pool_map(member, ensemble.members(), threads)
    return AbsorbingReport(ledger.rho0, tau, members, slack)


def _aligned(x: float, dt: float) -> bool:
    j = round(x / dt)
    return abs(x / dt - j) <= 1e-9 * max(1.0, j)

# }}}


# {{{ attractor approximation

@dataclass
class AttractorReport:
    times: list[float]
    decay_series: list[float]
    A_approx: SnapshotCloud
    clouds: dict[float, SnapshotCloud]
    failures: list[str]
    jitter: float = 0.05

    @property
    def nonincreasing(self) -> bool:
        d = self.decay_series
        return all(d[k + 1] <= (1 + self.jitter) * d[k] for k in range(len(d) - 1))


def attractor_approximate(ensemble: EnsembleSpec, T_max: float, model: ModelSpec,
                          scheme: SchemeConfig, threads: int = 1) -> AttractorReport:
    grid = ensemble.grid
    times = sorted(set(t for t in ensemble.snapshot_times if t <= T_max) | {T_max})

    def member(idx):
        i, j = idx
        try:
            rec = run(ensemble.initial_states[i], ensemble.tau, T_max, ensemble.symbols[j],
                      model, scheme, grid, snapshot_times=times)
        except IntegrationError as exc:
            return idx, None, f"member {idx}: {exc}"
        return idx, rec.snapshots, None

    results = _pool_map(member, ensemble.members(), threads)
    failures = [err for _, _, err in results if err]
    good = [(idx, snaps) for idx, snaps, err in results if not err]
    if not good:
        raise IntegrationError("every ensemble member failed")
    clouds = {t: SnapshotCloud(t, [snaps[t] for _, snaps in good], [idx for idx, _ in good])
              for t in times}
    A = clouds[T_max]
    nsym = len(ensemble.symbols)
    series = []
    for t in times:
        per_symbol = []
        for j in range(nsym):
            sub = [p for p, lab in zip(clouds[t].points, clouds[t].labels) if lab[1] == j]
            if sub:
                per_symbol.append(hausdorff_semidist(SnapshotCloud(t, sub), A,
                                                     model.mu, model.lam, grid))
        series.append(max(per_symbol))
    return AttractorReport(times, series, A, clouds, failures)

# }}}


# {{{ contraction

@dataclass
class PairResult:
    i: int
    j: int
    E_Z_T: float
    phi_T: float
    C_M: float
    T: float

    @property
    def bound(self) -> float:
        return self.C_M / self.T + self.phi_T / self.T

    @property
    def holds(self) -> bool:
        return self.E_Z_T <= self.bound * (1 + 1e-12) + 1e-300


@dataclass
class ContractionReport:
    pairs: list[PairResult]
    consecutive_phi: list[float]
    ratios: list[float]
    note: str = ("designed convergent sequences only; a finite ensemble cannot certify "
                 "the contractive property over all sequences")

    @property
    def inequality_holds(self) -> bool:
        return all(p.holds for p in self.pairs)

    def monotone_decay(self, jitter: float = 0.10, target: float = 1e-3) -> bool:
        phi = self.consecutive_phi
        if not phi or phi[0] == 0:
            return False
        mono = all(phi[k + 1] <= (1 + jitter) * phi[k] for k in range(len(phi) - 1))
        return mono and phi[-1] < target * phi[0]

    def to_dict(self):
        return {"pairs": [vars(p) | {"bound": p.bound, "holds": p.holds} for p in self.pairs],
                "consecutive_phi": self.consecutive_phi, "ratios": self.ratios,
                "inequality_holds": self.inequality_holds, "note": self.note}


def contraction_test(sequence: list[State], g_sequence: list[ForcingSymbol], T: float,
                     model: ModelSpec, scheme: SchemeConfig, grid: GridSpec, *,
                     tau: float = 0.0, all_pairs: bool = False, C_B: float | None = None,
                     threads: int = 1) -> ContractionReport:
    """phi_T and E_Z(T) over pairs of a sequence; consecutive pairs always,
    every pair i < j when ``all_pairs``."""
    if len(sequence) != len(g_sequence):
        raise ValueError("sequence and symbol sequence differ in length")
    n = len(sequence)
    idx = [(i, i + 1) for i in range(n - 1)]
    if all_pairs:
        idx = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def pair(ij):
        i, j = ij
        rec = difference_run(sequence[i], sequence[j], tau, T, g_sequence[i], g_sequence[j],
                             model, scheme, grid, C_B=C_B)
        return PairResult(i, j, float(rec.E_Z[-1]), rec.phi_T, rec.C_M, rec.horizon)

    pairs = _pool_map(pair, idx, threads)
    consec = [p.phi_T for p in pairs if p.j == p.i + 1]
    ratios = [consec[k] / consec[k + 1] if consec[k + 1] > 0 else math.inf
              for k in range(len(consec) - 1)]
    return ContractionReport(pairs, consec, ratios)

# }}}
