"""Time coefficients, nonlinearities, forcing symbols and assumption checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .grid import GridSpec, first_eigenvalue, l2_inner, l2_norm_sq


class ModelError(ValueError):
    pass


# {{{ time coefficients

@dataclass(frozen=True)
class TimeCoefficient:
    """alpha(t) or kappa(t).

    kinds and params:
      constant      : (value,)
      sinusoidal    : (mean, amplitude, frequency[, phase])
      ramp-clamped  : (start_value, end_value, t_start, t_end)
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        need = {"constant": (1,), "sinusoidal": (3, 4), "ramp-clamped": (4,)}
        if self.kind not in need:
            raise ModelError(f"unknown coefficient kind {self.kind!r}")
        if len(self.params) not in need[self.kind]:
            raise ModelError(f"{self.kind} coefficient takes {need[self.kind]} params, "
                             f"got {len(self.params)}")
        if self.kind == "ramp-clamped" and self.params[3] <= self.params[2]:
            raise ModelError("ramp-clamped needs t_end > t_start")
        # zero is allowed for decoupled experiments; validate_assumptions flags it
        if self.lo < 0:
            raise ModelError(f"coefficient lower bound must be >= 0, got {self.lo}")

    @classmethod
    def constant(cls, value: float) -> "TimeCoefficient":
        return cls("constant", (value,))

    def __call__(self, t: float) -> float:
        p = self.params
        if self.kind == "constant":
            return p[0]
        if self.kind == "sinusoidal":
            phase = p[3] if len(p) > 3 else 0.0
            return p[0] + p[1] * math.sin(2 * math.pi * p[2] * t + phase)
        a, b, t0, t1 = p
        s = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        return a + (b - a) * s

    @property
    def lo(self) -> float:
        p = self.params
        if self.kind == "constant":
            return p[0]
        if self.kind == "sinusoidal":
            return p[0] - abs(p[1])
        return min(p[0], p[1])

    @property
    def hi(self) -> float:
        p = self.params
        if self.kind == "constant":
            return p[0]
        if self.kind == "sinusoidal":
            return p[0] + abs(p[1])
        return max(p[0], p[1])

    @property
    def lipschitz(self) -> float:
        p = self.params
        if self.kind == "constant":
            return 0.0
        if self.kind == "sinusoidal":
            return 2 * math.pi * abs(p[2] * p[1])
        return abs(p[1] - p[0]) / (p[3] - p[2])

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}

# }}}


# {{{ nonlinearity

@dataclass(frozen=True)
class Nonlinearity:
    """f(xi) = c |xi|^(rho-1) xi with potential c |xi|^(rho+1) / (rho+1).

    ``kind='zero'`` is f = 0. ``eta`` and ``C_f`` are the dissipation
    constants of the two-sided potential bound.
    """

    kind: str = "zero"
    c: float = 0.0
    rho: float = 2.0
    eta: float = 1.0
    C_f: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "power"):
            raise ModelError(f"unknown nonlinearity kind {self.kind!r}")
        if self.c < 0:
            raise ModelError("nonlinearity amplitude c must be >= 0")
        if self.rho <= 1:
            raise ModelError(f"growth exponent rho must exceed 1, got {self.rho}")
        if self.C_f < 0:
            raise ModelError("C_f must be >= 0")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.c == 0.0

    def pointwise(self, xi: np.ndarray) -> np.ndarray:
        """f applied to xi of shape (d, ...) (components first)."""
        if self.is_zero:
            return np.zeros_like(xi)
        r = np.sqrt(np.sum(xi**2, axis=0))
        return self.c * r ** (self.rho - 1) * xi

    def potential(self, xi: np.ndarray) -> np.ndarray:
        if self.is_zero:
            return np.zeros(xi.shape[1:])
        r = np.sqrt(np.sum(xi**2, axis=0))
        return self.c * r ** (self.rho + 1) / (self.rho + 1)

    def jacobian(self, xi: np.ndarray) -> np.ndarray:
        """d f_i / d xi_j at a single point xi of shape (d,)."""
        d = xi.size
        if self.is_zero:
            return np.zeros((d, d))
        r = float(np.linalg.norm(xi))
        if r == 0.0:
            return np.zeros((d, d)) if self.rho > 1 else np.full((d, d), np.inf)
        return self.c * r ** (self.rho - 1) * (
            np.eye(d) + (self.rho - 1) * np.outer(xi, xi) / r**2)

    def second_diagonal(self, xi: np.ndarray) -> np.ndarray:
        """d^2 f_i / d xi_i^2 at a single point, for each i."""
        if self.is_zero:
            return np.zeros(xi.size)
        r = float(np.linalg.norm(xi))
        if r == 0.0:
            return np.full(xi.size, 0.0 if self.rho >= 3 else np.inf)
        rho = self.rho
        return self.c * (rho - 1) * r ** (rho - 3) * xi * (3 + (rho - 3) * xi**2 / r**2)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "rho": self.rho, "eta": self.eta,
                "C_f": self.C_f}


def f_apply(f: Nonlinearity, u: np.ndarray) -> np.ndarray:
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = f.pointwise(u)
        except FloatingPointError:
            out = None
    if out is None or not np.isfinite(out).all():
        with np.errstate(all="ignore"):
            bad = ~np.isfinite(f.pointwise(u)).all(axis=0)
        node = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.any() else None
        raise FloatingPointError(f"nonlinearity overflow at node {node}")
    return out


def fhat_integral(grid: GridSpec, f: Nonlinearity, u: np.ndarray) -> float:
    u = grid.check_vector(u)
    with np.errstate(over="raise", invalid="raise"):
        try:
            p = f.potential(u)
        except FloatingPointError:
            p = None
    if p is None or not np.isfinite(p).all():
        with np.errstate(all="ignore"):
            bad = ~np.isfinite(f.potential(u))
        node = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.any() else None
        raise FloatingPointError(f"potential overflow at node {node}")
    return grid.cell_volume * float(p.sum())

# }}}


# {{{ forcing symbols

@dataclass(frozen=True)
class ForcingSymbol:
    """g(x, t) = profile(x) * a(t + shift).

    temporal params by kind:
      static          : ()                       a = 1
      time-periodic   : (period[, phase])        a = sin(2 pi t / period + phase)
      quasi-periodic  : (f1, f2[, ...])          a = mean of sin(2 pi f_k t)
      pulse-train     : (period, width)          a = 1 on [0, width) mod period
    """

    base_kind: str
    profile: np.ndarray = field(repr=False)
    temporal_params: tuple[float, ...] = ()
    shift: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "temporal_params", tuple(float(p) for p in self.temporal_params))
        object.__setattr__(self, "profile", np.asarray(self.profile, dtype=float))
        kinds = ("static", "time-periodic", "quasi-periodic", "pulse-train")
        if self.base_kind not in kinds:
            raise ModelError(f"unknown forcing kind {self.base_kind!r}")
        p = self.temporal_params
        if self.base_kind == "time-periodic" and (len(p) not in (1, 2) or p[0] <= 0):
            raise ModelError("time-periodic forcing needs (period[, phase]) with period > 0")
        if self.base_kind == "quasi-periodic" and len(p) < 2:
            raise ModelError("quasi-periodic forcing needs at least two frequencies")
        if self.base_kind == "pulse-train" and (len(p) != 2 or not 0 < p[1] <= p[0]):
            raise ModelError("pulse-train forcing needs (period, width), 0 < width <= period")
        if self.shift < 0:
            raise ModelError(f"shift must be >= 0, got {self.shift}")
        if not np.isfinite(self.profile).all():
            raise ModelError("forcing profile must be finite")

    @classmethod
    def zero(cls, grid: GridSpec) -> "ForcingSymbol":
        return cls("static", grid.zeros(), amplitude=0.0)

    def base_temporal(self, s: float) -> float:
        """Temporal factor of the unshifted base symbol at time s."""
        p = self.temporal_params
        if self.base_kind == "static":
            a = 1.0
        elif self.base_kind == "time-periodic":
            a = math.sin(2 * math.pi * s / p[0] + (p[1] if len(p) > 1 else 0.0))
        elif self.base_kind == "quasi-periodic":
            a = sum(math.sin(2 * math.pi * fk * s) for fk in p) / len(p)
        else:
            a = 1.0 if (s % p[0]) < p[1] else 0.0
        return self.amplitude * a

    def temporal(self, t: float) -> float:
        return self.base_temporal(t + self.shift)

    def at_base_time(self, s: float) -> np.ndarray:
        return self.base_temporal(s) * self.profile

    def __call__(self, t: float) -> np.ndarray:
        return self.temporal(t) * self.profile

    def shifted(self, s: float) -> "ForcingSymbol":
        """The translate T(s) g."""
        if s < 0:
            raise ModelError(f"translation semigroup only acts for s >= 0, got {s}")
        return replace(self, shift=self.shift + s)

    @property
    def is_zero(self) -> bool:
        return self.amplitude == 0.0 or not np.any(self.profile)

    def to_dict(self):
        return {"base_kind": self.base_kind, "temporal_params": list(self.temporal_params),
                "shift": self.shift, "amplitude": self.amplitude}


def hull_net(g0: ForcingSymbol, shifts: Sequence[float]) -> list[ForcingSymbol]:
    bad = [s for s in shifts if s < 0]
    if bad:
        raise ModelError(f"negative hull shifts {bad}")
    return [g0.shifted(s) for s in shifts]


def lb2_norm_estimate(g: ForcingSymbol, horizon: float, dt: float, grid: GridSpec) -> float:
    """sup over unit windows [t, t+1] in [0, horizon] of int ||g(s)||^2 ds."""
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    if dt > 0.01:
        raise ValueError("dt must be <= 0.01")
    if g.is_zero:
        return 0.0
    per_window = int(round(1.0 / dt))
    h = 1.0 / per_window
    nsteps = int(math.floor(horizon / h + 1e-9))
    ts = h * np.arange(nsteps + 1)
    mass = l2_norm_sq(grid, g.profile)
    a2 = np.array([g.temporal(t) ** 2 for t in ts])
    # trapezoid window sums via cumulative sums of the panel integrals
    panels = 0.5 * h * (a2[1:] + a2[:-1])
    csum = np.concatenate([[0.0], np.cumsum(panels)])
    windows = csum[per_window:] - csum[:-per_window]
    return float(mass * windows.max())

# }}}


@dataclass(frozen=True)
class ModelSpec:
    mu: float
    lam: float
    alpha: TimeCoefficient
    kappa: TimeCoefficient
    f: Nonlinearity
    forcing: ForcingSymbol

    def __post_init__(self):
        if self.mu <= 0:
            raise ModelError(f"mu must be positive, got {self.mu}")
        if 2 * self.mu + self.lam <= 0:
            raise ModelError("2 mu + lambda must be positive")

    @property
    def wave_modulus(self) -> float:
        return 2 * self.mu + self.lam

    def with_forcing(self, g: ForcingSymbol) -> "ModelSpec":
        return replace(self, forcing=g)

    def with_nonlinearity(self, f: Nonlinearity) -> "ModelSpec":
        return replace(self, f=f)

    def to_dict(self):
        return {"mu": self.mu, "lambda": self.lam, "alpha": self.alpha.to_dict(),
                "kappa": self.kappa.to_dict(), "f": self.f.to_dict(),
                "forcing": self.forcing.to_dict()}


# {{{ assumption validation

@dataclass
class AssumptionReport:
    violations: dict[str, float]
    constants: dict[str, float]
    hard_failures: list[str]
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return not self.hard_failures and all(v <= self.tolerance for v in self.violations.values())

    def to_dict(self):
        return {"passed": self.passed, "violations": dict(self.violations),
                "constants": dict(self.constants), "hard_failures": list(self.hard_failures)}


def _sample_points(rng, d, count, radii):
    dirs = rng.standard_normal((count, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = np.exp(rng.uniform(np.log(radii[0]), np.log(radii[1]), count))
    return dirs * r[:, None]


def validate_assumptions(model: ModelSpec, grid: GridSpec, sample_count: int = 1000,
                         t_range: tuple[float, float] = (0.0, 10.0), seed: int = 0,
                         xi_max: float = 1e3) -> AssumptionReport:
    """Sample the coefficient bounds, the potential sandwich, conservativity
    and the growth conditions; hard failures are structural (exponent range,
    eta range, nonpositive lower bounds)."""
    if sample_count < 1000:
        raise ValueError("sample_count must be at least 1000")
    rng = np.random.default_rng(seed)
    d = grid.dim
    f = model.f
    viol: dict[str, float] = {}
    consts: dict[str, float] = {}
    hard: list[str] = []

    lam1 = first_eigenvalue(grid)
    consts["lambda1"] = lam1
    eta_hi = min(lam1 * model.wave_modulus / 2, lam1)
    consts["eta_upper"] = eta_hi
    if not 0 < f.eta < eta_hi:
        hard.append(f"eta={f.eta} outside (0, {eta_hi:.6g})")
    if f.kind == "power" and d >= 3 and not f.rho < d / (d - 2):
        hard.append(f"rho={f.rho} violates rho < N/(N-2) = {d / (d - 2):g}")

    ts = np.linspace(*t_range, sample_count)
    for name, coef in (("alpha", model.alpha), ("kappa", model.kappa)):
        vals = np.array([coef(t) for t in ts])
        viol[f"{name}_bounds"] = float(max(0.0, (coef.lo - vals).max(), (vals - coef.hi).max()))
        slopes = np.abs(np.diff(vals)) / np.diff(ts)
        viol[f"{name}_lipschitz"] = float(max(0.0, (slopes - coef.lipschitz).max()))
        consts[f"{name}_0"], consts[f"{name}_1"] = coef.lo, coef.hi
        if coef.lo <= 0:
            hard.append(f"{name} lower bound {coef.lo} is not positive")

    xi = _sample_points(rng, d, sample_count, (1e-3, xi_max))
    xi = np.vstack([xi, np.zeros((1, d))])
    F = f.pointwise(xi.T)
    Fh = f.potential(xi.T)
    sq = np.sum(xi**2, axis=1)
    lower = -f.C_f - 0.5 * f.eta * sq
    upper = np.sum(F * xi.T, axis=0) + 0.5 * f.eta * sq
    scale = np.maximum(1.0, np.abs(Fh))
    viol["potential_lower"] = float(max(0.0, ((lower - Fh) / scale).max()))
    viol["potential_upper"] = float(max(0.0, ((Fh - upper) / scale).max()))

    # conservativity: f = grad fhat, relative central differences
    worst = 0.0
    for p in xi[: min(200, len(xi))]:
        step = 1e-6 * max(1.0, np.linalg.norm(p))
        g_fd = np.empty(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = step
            g_fd[i] = (f.potential((p + e)[:, None])[0] - f.potential((p - e)[:, None])[0]) / (2 * step)
        fv = f.pointwise(p[:, None])[:, 0]
        worst = max(worst, float(np.abs(g_fd - fv).max() / max(1.0, np.abs(fv).max())))
    consts["conservativity_residual"] = worst
    viol["conservativity"] = max(0.0, worst - 1e-6)

    # growth conditions. Both quotients are evaluated along fixed directions
    # on radial shells 1e-6 .. 1e6; the fitted constant is the sup over all
    # shells, and a quotient still growing by more than 1% per decade at either
    # end of the range is reported as unbounded.
    if f.is_zero:
        for key in ("C_growth", "C_second"):
            consts[key] = 0.0
        viol["gradient_growth"] = viol["second_derivative"] = 0.0
    else:
        dirs = _sample_points(rng, d, 100, (1.0, 1.0))
        radii = 10.0 ** np.arange(-6, 7)

        def grad_q(p):
            J = f.jacobian(p)
            return float(np.linalg.norm(J, axis=1).max() / (1 + np.sum(np.abs(p) ** (f.rho - 1))))

        def second_q(p):
            return float(np.abs(f.second_diagonal(p)).max())

        for key, vkey, q in (("C_growth", "gradient_growth", grad_q),
                             ("C_second", "second_derivative", second_q)):
            shell = np.array([max(q(r * e) for e in dirs) for r in radii])
            consts[key] = float(shell.max())
            growth = max(shell[-1] / shell[-2], shell[0] / shell[1])
            viol[vkey] = float(growth - 1) if growth > 1.01 else 0.0
    return AssumptionReport(viol, consts, hard)

# }}}
