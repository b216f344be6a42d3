"""IMEX time stepping: velocity-Verlet for the displacement, Crank-Nicolson heat.

Times live on the lattice t = j*dt whenever the start time is dt-aligned, so
runs that are split at aligned times repeat exactly the same arithmetic as an
unsplit run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import GridSpec, State, l2_norm_sq
from .model import ForcingSymbol, ModelSpec, f_apply
from .operators import (
    DEFAULT_SOLVER, PoissonSolverSpec, divergence, gradient, grad_norm_sq,
    hc_norm_sq, lame_apply, laplacian, solve_shifted,
)


class IntegrationError(RuntimeError):
    def __init__(self, msg, time=None, last_state=None):
        super().__init__(msg)
        self.time = time
        self.last_state = last_state


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    cfl_safety: float = 0.5
    theta_solver: PoissonSolverSpec = DEFAULT_SOLVER
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    def max_dt(self, grid: GridSpec, model: ModelSpec) -> float:
        return self.cfl_safety * grid.h_min / math.sqrt(model.wave_modulus)

    def check_cfl(self, grid: GridSpec, model: ModelSpec) -> None:
        limit = self.max_dt(grid, model)
        if self.dt > limit * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds the wave CFL limit {limit:.6g}")


def stable_dt(grid: GridSpec, model: ModelSpec, cfl_safety: float = 0.5) -> float:
    return cfl_safety * grid.h_min / math.sqrt(model.wave_modulus)


# {{{ clock

def _lattice_index(t: float, dt: float) -> int | None:
    j = round(t / dt)
    if abs(t / dt - j) <= 1e-9 * max(1.0, abs(j)):
        return int(j)
    return None


@dataclass(frozen=True)
class _Clock:
    """Maps half-step counters to times and forcing arguments."""

    dt: float
    origin: float       # used only when the start time is off-lattice
    aligned: bool

    @classmethod
    def start(cls, t0: float, dt: float) -> tuple["_Clock", int]:
        j = _lattice_index(t0, dt)
        if j is None:
            return cls(dt, t0, False), 0
        return cls(dt, 0.0, True), 2 * j

    def time(self, half: int) -> float:
        if self.aligned:
            return half * self.dt / 2
        return self.origin + half * self.dt / 2

    def forcing(self, g: ForcingSymbol, half: int) -> np.ndarray:
        # an aligned shift is folded into the integer counter so that
        # U_{T(s)g}(t, tau) and U_g(t+s, tau+s) evaluate identical floats
        if self.aligned:
            m = _lattice_index(g.shift, self.dt)
            if m is not None:
                return g.at_base_time((half + 2 * m) * self.dt / 2)
        return g(self.time(half))

# }}}


def _step(s: State, half: int, clock: _Clock, model: ModelSpec, scheme: SchemeConfig,
          grid: GridSpec) -> State:
    dt = scheme.dt
    mu, lam = model.mu, model.lam
    t_n, t_mid, t_next = clock.time(half), clock.time(half + 1), clock.time(half + 2)

    accel = lame_apply(grid, s.u, mu, lam) - model.alpha(t_n) * gradient(grid, s.theta) \
        - f_apply(model.f, s.u)
    v_half = s.v + 0.5 * dt * accel
    u_next = s.u + dt * v_half

    kappa = model.kappa(t_mid)
    rhs = s.theta + 0.5 * dt * kappa * laplacian(grid, s.theta) \
        - dt * model.alpha(t_mid) * divergence(grid, v_half)
    if not model.forcing.is_zero:
        rhs = rhs + dt * clock.forcing(model.forcing, half + 1)
    theta_next = solve_shifted(grid, rhs, 1.0, 0.5 * dt * kappa, scheme.theta_solver)

    accel = lame_apply(grid, u_next, mu, lam) \
        - model.alpha(t_next) * gradient(grid, 0.5 * (s.theta + theta_next)) \
        - f_apply(model.f, u_next)
    v_next = v_half + 0.5 * dt * accel
    return State(t_next, u_next, v_next, theta_next, grid)


def step(s: State, model: ModelSpec, scheme: SchemeConfig, grid: GridSpec) -> State:
    """Advance one step of size scheme.dt."""
    scheme.check_cfl(grid, model)
    clock, half = _Clock.start(s.t, scheme.dt)
    try:
        out = _step(s, half, clock, model, scheme, grid)
    except FloatingPointError as exc:
        raise IntegrationError(f"step from t={s.t}: {exc}", s.t, s) from exc
    if not out.is_finite():
        raise IntegrationError(f"non-finite state after step from t={s.t}", s.t, s)
    return out


# {{{ runs

@dataclass
class TrajectoryRecord:
    times: list[float] = field(default_factory=list)
    diagnostics: dict[str, list[float]] = field(default_factory=dict)
    states: list[State] = field(default_factory=list)
    snapshots: dict[float, State] = field(default_factory=dict)
    final: State | None = None
    stride: int = 1

    def append(self, s: State, values: dict[str, float] | None, keep_state: bool):
        self.times.append(s.t)
        for key, val in (values or {}).items():
            self.diagnostics.setdefault(key, []).append(val)
        if keep_state:
            self.states.append(s)

    def series(self, key: str) -> np.ndarray:
        return np.asarray(self.diagnostics[key])


def step_count(tau: float, T: float, dt: float) -> int:
    if T < tau:
        raise ValueError(f"final time {T} precedes start time {tau}")
    n = round((T - tau) / dt)
    if abs((T - tau) / dt - n) > 1e-9 * max(1.0, n):
        raise ValueError(f"(T - tau)/dt = {(T - tau) / dt} is not an integer")
    return int(n)


def run(U_tau: State, tau: float, T: float, symbol: ForcingSymbol, model: ModelSpec,
        scheme: SchemeConfig, grid: GridSpec, *,
        observer: Callable[[State], dict[str, float]] | None = None,
        keep_states: bool = False, snapshot_times=(),
        on_step: Callable[[State, State], None] | None = None) -> TrajectoryRecord:
    """Evaluate the process U_g(T, tau) applied to U_tau.

    ``observer`` is called on every recorded state; ``on_step(old, new)`` on
    every step, for accumulators that need full time resolution.
    """
    scheme.check_cfl(grid, model)
    nsteps = step_count(tau, T, scheme.dt)
    model = model.with_forcing(symbol)
    clock, half = _Clock.start(tau, scheme.dt)
    s = State(clock.time(half), U_tau.u, U_tau.v, U_tau.theta, grid)
    snap_idx = {step_count(tau, ts, scheme.dt): ts for ts in snapshot_times
                if tau <= ts <= T}

    rec = TrajectoryRecord(stride=scheme.record_stride)
    rec.append(s, observer(s) if observer else None, keep_states)
    if 0 in snap_idx:
        rec.snapshots[snap_idx[0]] = s
    for n in range(1, nsteps + 1):
        try:
            new = _step(s, half, clock, model, scheme, grid)
        except FloatingPointError as exc:
            raise IntegrationError(f"step from t={s.t}: {exc}", s.t, s) from exc
        if not new.is_finite():
            raise IntegrationError(f"non-finite state after step from t={s.t}", s.t, s)
        if on_step is not None:
            on_step(s, new)
        s = new
        half += 2
        if n % scheme.record_stride == 0 or n == nsteps:
            rec.append(s, observer(s) if observer else None, keep_states)
        if n in snap_idx:
            rec.snapshots[snap_idx[n]] = s
    rec.final = s
    return rec


def check_translation_identity(U_tau: State, tau: float, t: float, s: float,
                               g0: ForcingSymbol, model: ModelSpec, scheme: SchemeConfig,
                               grid: GridSpec) -> float:
    """H_c distance between U_g(t+s, tau+s)U_tau and U_{T(s)g}(t, tau)U_tau."""
    if s < 0 or _lattice_index(s, scheme.dt) is None:
        raise ValueError(f"shift s={s} must be a nonnegative multiple of dt={scheme.dt}")
    if s == 0:
        return 0.0
    a = run(U_tau, tau + s, t + s, g0, model, scheme, grid).final
    b = run(U_tau, tau, t, g0.shifted(s), model, scheme, grid).final
    return math.sqrt(hc_norm_sq(a - b, model.mu, model.lam, grid))

# }}}


# {{{ paired trajectories

def lp_norm_sq(grid: GridSpec, z: np.ndarray, p: float) -> float:
    """||z||_p^2 with |z| the pointwise Euclidean length."""
    mag = np.sqrt(np.sum(z**2, axis=0)) if z.ndim == grid.dim + 1 else np.abs(z)
    return (grid.cell_volume * float(np.sum(mag**p))) ** (2.0 / p)


def difference_energy(grid: GridSpec, z: State, wave_modulus: float) -> float:
    return 0.5 * (l2_norm_sq(grid, z.v) + wave_modulus * grad_norm_sq(grid, z.u)
                  + l2_norm_sq(grid, z.theta))


@dataclass
class DifferenceRecord:
    times: np.ndarray
    E_Z: np.ndarray
    disp_double: float      # int_0^T int_sigma^T ||u1-u2||_{2 rho}^2 ds dsigma
    forcing_double: float   # int_0^T int_sigma^T ||g1-g2||^2 ds dsigma
    energy_single: float    # int_0^T E_Z
    energy_double: float    # int_0^T int_sigma^T E_Z(s) ds dsigma
    C_B: float
    final: tuple[State, State]

    @property
    def phi_T(self) -> float:
        return 0.5 * self.C_B**2 * self.disp_double + 0.5 * self.forcing_double

    @property
    def C_M(self) -> float:
        return self.energy_double + self.energy_single

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])


def _weighted_integrals(times, values, tau):
    """Trapezoid rule for int a(s) ds and int (s - tau) a(s) ds."""
    t = np.asarray(times)
    a = np.asarray(values)
    dt = np.diff(t)
    single = float(np.sum(0.5 * dt * (a[1:] + a[:-1])))
    w = (t - tau) * a
    double = float(np.sum(0.5 * dt * (w[1:] + w[:-1])))
    return single, double


def difference_run(U1_tau: State, U2_tau: State, tau: float, T: float,
                   g1: ForcingSymbol, g2: ForcingSymbol, model: ModelSpec,
                   scheme: SchemeConfig, grid: GridSpec,
                   C_B: float | None = None) -> DifferenceRecord:
    """Co-evolve two trajectories and accumulate the ingredients of phi_T.

    ``C_B`` bounds the nonlinearity difference; by default it is 1 for f = 0
    and 2^(rho-1) N C (1 + sup ||u1||_{2rho}^(rho-1) + sup ||u2||_{2rho}^(rho-1))
    measured along the run otherwise, C being the fitted growth constant.
    """
    grid.check_vector(U1_tau.u)
    grid.check_vector(U2_tau.u)
    nsteps = step_count(tau, T, scheme.dt)
    scheme.check_cfl(grid, model)
    m1, m2 = model.with_forcing(g1), model.with_forcing(g2)
    clock, half = _Clock.start(tau, scheme.dt)
    s1 = State(clock.time(half), U1_tau.u, U1_tau.v, U1_tau.theta, grid)
    s2 = State(clock.time(half), U2_tau.u, U2_tau.v, U2_tau.theta, grid)
    # f = 0 has no growth exponent; its rho = 1 limit is the L^2 norm
    p = 2.0 if model.f.is_zero else 2 * model.f.rho
    times, ez, disp, forc = [], [], [], []
    sup1 = sup2 = 0.0

    def record(a, b, h):
        nonlocal sup1, sup2
        z = a - b
        times.append(a.t)
        ez.append(difference_energy(grid, z, model.wave_modulus))
        disp.append(lp_norm_sq(grid, z.u, p))
        dg = clock.forcing(g1, h) - clock.forcing(g2, h)
        forc.append(l2_norm_sq(grid, dg))
        sup1 = max(sup1, lp_norm_sq(grid, a.u, p))
        sup2 = max(sup2, lp_norm_sq(grid, b.u, p))

    t0 = s1.t
    record(s1, s2, half)
    for _ in range(nsteps):
        try:
            s1 = _step(s1, half, clock, m1, scheme, grid)
            s2 = _step(s2, half, clock, m2, scheme, grid)
        except FloatingPointError as exc:
            raise IntegrationError(f"difference run at t={s1.t}: {exc}", s1.t) from exc
        if not (s1.is_finite() and s2.is_finite()):
            raise IntegrationError(f"non-finite state at t={s1.t}", s1.t)
        half += 2
        record(s1, s2, half)

    if C_B is None:
        f = model.f
        if f.is_zero:
            C_B = 1.0
        else:
            from .model import validate_assumptions
            C = validate_assumptions(model, grid).constants["C_growth"]
            e = (f.rho - 1) / 2
            C_B = 2 ** (f.rho - 1) * grid.dim * C * (1 + sup1**e + sup2**e)
    e_single, e_double = _weighted_integrals(times, ez, t0)
    _, d_double = _weighted_integrals(times, disp, t0)
    _, f_double = _weighted_integrals(times, forc, t0)
    return DifferenceRecord(np.asarray(times), np.asarray(ez), d_double, f_double,
                            e_single, e_double, float(C_B), (s1, s2))

# }}}
