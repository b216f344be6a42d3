"""Energies, multiplier functionals, the Lyapunov constant recipe and
per-time inequality margins."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import GridSpec, State, first_eigenvalue, l2_inner, l2_norm_sq
from .model import ModelSpec, Nonlinearity, fhat_integral
from .operators import (
    DEFAULT_SOLVER, OperatorConstants, PoissonSolverSpec, boundary_div_sq, d_central,
    div_norm_sq, divergence, grad_norm_sq, h01_inner, hc_norm_sq, laplacian, poisson_solve,
)


class ConstantError(ValueError):
    pass


# {{{ energies and multipliers

@dataclass(frozen=True)
class Energies:
    E: float
    E_c: float


def energy(s: State, model: ModelSpec, grid: GridSpec) -> Energies:
    kinetic = 0.5 * l2_norm_sq(grid, s.v)
    thermal = 0.5 * l2_norm_sq(grid, s.theta)
    potential = fhat_integral(grid, model.f, s.u)
    div_sq = div_norm_sq(grid, s.u)
    E = kinetic + 0.5 * model.mu * grad_norm_sq(grid, s.u) \
        + 0.5 * (model.mu + model.lam) * div_sq + thermal + potential
    E_c = kinetic + 0.5 * model.wave_modulus * div_sq + thermal + potential
    return Energies(E, E_c)


@dataclass(frozen=True)
class Multipliers:
    phi: np.ndarray
    phi_t: np.ndarray
    w: np.ndarray


def multiplier_solve(s: State, grid: GridSpec,
                     spec: PoissonSolverSpec = DEFAULT_SOLVER) -> Multipliers:
    """-lap phi = div u, -lap phi_t = div v, -lap w = theta."""
    out = []
    for rhs in (divergence(grid, s.u), divergence(grid, s.v), s.theta):
        x = poisson_solve(grid, rhs, spec)
        norm = np.linalg.norm(rhs)
        if norm > 0:
            res = np.linalg.norm(-laplacian(grid, x) - rhs) / norm
            if res > spec.tolerance:
                from .operators import SolverError
                raise SolverError(f"multiplier residual {res:.3e}", residual=res)
        out.append(x)
    return Multipliers(*out)

# }}}


# {{{ q field and functionals

@dataclass(frozen=True)
class QField:
    """q(x)_i = 2 x_i / L_i - 1: equals the outward normal component on the
    faces normal to axis i."""

    values: np.ndarray = field(repr=False)
    slopes: tuple[float, ...]     # diagonal of Dq
    div_q: float
    Mq: float
    Mq_source: str
    q_max: float                  # sup |q|


def build_q(grid: GridSpec) -> QField:
    vals = grid.vzeros()
    for ax, (x, L) in enumerate(zip(grid.axes(), grid.lengths)):
        shape = [1] * grid.dim
        shape[ax] = -1
        vals[ax] = (2 * x / L - 1).reshape(shape) * np.ones(grid.shape)
    slopes = tuple(2.0 / L for L in grid.lengths)
    div_q = float(sum(slopes))
    # ||Dq|| (spectral) = ||grad q|| = max slope for a diagonal Jacobian
    cands = {"Dq": max(slopes), "div q": div_q}
    src = max(cands, key=cands.get)
    return QField(vals, slopes, div_q, cands[src], src, math.sqrt(grid.dim))


@dataclass(frozen=True)
class Functionals:
    F1: float
    F2: float
    F3: float


def functionals(s: State, grid: GridSpec, mult: Multipliers, q: QField) -> Functionals:
    F1 = l2_inner(grid, s.u, s.v)
    F2 = l2_inner(grid, s.theta, mult.phi_t)
    acc = 0.0
    for j, h in enumerate(grid.spacings):
        vj = s.v[j]
        for i in range(grid.dim):
            acc += float(np.sum(vj * q.values[i] * d_central(s.u[i], j, h)))
        # dq_i/dx_j vanishes off the diagonal
        acc += q.slopes[j] * float(np.sum(vj * s.u[j]))
    F3 = -grid.cell_volume * acc
    return Functionals(F1, F2, F3)

# }}}


# {{{ nonlinearity fit

@dataclass(frozen=True)
class NonlinearityFit:
    M1: float
    Mbar1: float
    M2: float
    radius: float
    method: str


def fit_nonlinearity(f: Nonlinearity, grid: GridSpec, mu: float, lam: float, radius: float,
                     samples: int = 200, seed: int = 0) -> NonlinearityFit:
    """Constants with int |f(u)|^2 <= (Mbar1/lambda1) ||grad u||^2 + M2 for
    ||u||_{H} <= radius.

    In 1-D the bound |u(x)|^2 <= (L/4) ||u_x||^2 holds exactly on the grid,
    which gives Mbar1 = c^2 (L/4)^(rho-1) (radius^2/mu)^(rho-1) with M2 = 0.
    Elsewhere Mbar1 is the sampled sup of lambda1 int|f|^2 / ||grad u||^2.
    """
    if f.is_zero:
        return NonlinearityFit(0.0, 0.0, 0.0, radius, "zero")
    lam1 = first_eigenvalue(grid)
    d = grid.dim
    M1 = f.c**2 * d ** (f.rho - 1)
    if d == 1:
        L = grid.lengths[0]
        Mbar1 = f.c**2 * (L / 4) ** (f.rho - 1) * (radius**2 / mu) ** (f.rho - 1)
        return NonlinearityFit(M1, Mbar1, 0.0, radius, "analytic sup bound")
    rng = np.random.default_rng(seed)
    best = 0.0
    for k in range(samples):
        u = rng.standard_normal(grid.vshape)
        # bias toward smooth fields too, since they concentrate |u|
        if k % 2:
            from .operators import apply_neg_laplacian_power
            u = np.stack([apply_neg_laplacian_power(grid, c, -1.0) for c in u])
        scale = radius / math.sqrt(h01_inner(grid, u, u, mu, lam))
        for t in (0.25, 0.5, 1.0):
            w = t * scale * u
            fsq = l2_norm_sq(grid, f.pointwise(w))
            best = max(best, lam1 * fsq / grad_norm_sq(grid, w))
    return NonlinearityFit(M1, best, 0.0, radius, f"sampled sup over {samples} fields")

# }}}


# {{{ constant recipe

def solve_P(A: float, B: float, D: float, W: float, tol: float = 1e-14,
            max_iter: int = 200) -> tuple[float, int]:
    """Fixed point of P = A + 3 D / (W (B + P)), started at P = A."""
    P = A
    for it in range(1, max_iter + 1):
        nxt = A + 3 * D / (W * (B + P))
        if abs(nxt - P) <= tol * max(1.0, abs(nxt)):
            return nxt, it
        P = nxt
    raise ConstantError(f"P fixed point did not converge in {max_iter} iterations")


@dataclass
class ConstantLedger:
    mu: float
    lam: float
    alpha0: float
    alpha1: float
    kappa0: float
    kappa1: float
    lambda1: float
    eta: float
    C_f: float
    volume: float
    Mq: float
    q_max: float
    k: float
    k_c: float
    C_tr: float
    M1: float
    Mbar1: float
    M2: float
    radius: float
    g_lb2: float
    A: float
    B: float
    D: float
    P: float
    P_iterations: int
    delta: float
    epsilon: float
    N0: float
    N1: float
    N2: float
    N3: float
    xi: float
    C_tilde: float
    M_tilde: float
    M_tilde_carry: float
    beta0: float
    c1: float
    c2: float
    xi1: float
    C_tilde1: float
    M_tilde1: float
    rho0: float
    F1_theta_coeff: float
    young_constants: dict
    identities: dict
    formulas: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def wave_modulus(self) -> float:
        return 2 * self.mu + self.lam

    @property
    def equivalence_K(self) -> float:
        return (self.N0 - self.c1) * self.beta0

    def absorbing_radius_sq(self) -> float:
        return self.rho0**2

    def to_dict(self) -> dict:
        out = asdict(self)
        out["formulas"] = dict(FORMULAS)
        return out


FORMULAS = {
    "W": "2 mu + lambda",
    "A": "5 W Mq / 2 + (2 Mbar1 + Mq^2 + lambda1 Mq^2) / (2 lambda1)",
    "B": "W Mq + 2",
    "D": "W^2 alpha0 / (12 k)",
    "P": "fixed point of P = A + 3 D / (W (B + P)), i.e. P = A + epsilon",
    "delta": "D / (B + P)",
    "epsilon": "3 delta / W",
    "N3": "1",
    "N2": "W / (3 delta)",
    "N1": "(4 + 2 P) / W",
    "N0": "1.01 * 2 (Xi / lambda1 + X) / kappa0, X = F1_theta N1 + N2 C_eps_delta + N3 C_eps_tprime",
    "xi": "min(Mq/2, 1, W/6)",
    "C_tilde": "N0 / (2 kappa0 lambda1) + N2 / (alpha0 lambda1)",
    "M_tilde": "N3 M2 (+ N2 M2 epsilon lambda1 / (2 Mbar1) in the carry variant)",
    "C_delta": "W^2 C_tr^2 / (4 delta)",
    "C_eps_prime": "W^2 / (2 epsilon lambda1)",
    "C_eps_dprime": "Mbar1 / (2 epsilon lambda1^3) (doubled in the carry variant)",
    "C_eps_tprime": "alpha1^2 (Mq k_c + q_max)^2 / (4 epsilon)",
    "C_eps_delta": "C_delta + C_eps_prime + C_eps_dprime + kappa1^2 / alpha0 + alpha1 / lambda1",
    "F1_theta": "max(lambda1 alpha1^2 / (2 eta), alpha1^2 lambda1 k_c^2 / (2 eta))",
    "beta0": "(1 - eta / (mu lambda1)) / 2",
    "K": "N1/(2 sqrt(mu lambda1)) + N2/(2 sqrt(lambda1)) + N3 (q_max/sqrt(mu) + Mq/sqrt(mu lambda1))/2",
    "c1": "N0 - K / beta0",
    "c2": "N0 + K / beta0",
    "xi1": "xi / c2",
    "C_tilde1": "C_tilde / c1",
    "M_tilde1": "M_tilde / c1",
    "rho0": "2 (1 + 1/xi1) (M_tilde1 + ||g0||_Lb^2)",
}


def constants_from_parameters(*, mu, lam, alpha0, alpha1, kappa0, kappa1, lambda1, eta,
                              C_f, volume, Mq, q_max, k, k_c, C_tr, M1=0.0, Mbar1=0.0,
                              M2=0.0, radius=0.0, g_lb2=0.0,
                              carry_M2: bool = True) -> ConstantLedger:
    """Pure algebra of the Lyapunov recipe from scalar inputs."""
    W = 2 * mu + lam
    for name, val in (("mu", mu), ("2 mu + lambda", W), ("alpha0", alpha0),
                      ("kappa0", kappa0), ("lambda1", lambda1), ("k", k), ("Mq", Mq)):
        if not val > 0:
            raise ConstantError(f"{name} must be positive, got {val}")
    eta_hi = min(lambda1 * W / 2, lambda1)
    if not 0 < eta < eta_hi:
        raise ConstantError(f"eta={eta} outside (0, {eta_hi})")

    A = 5 * W * Mq / 2 + (2 * Mbar1 + Mq**2 + lambda1 * Mq**2) / (2 * lambda1)
    B = W * Mq + 2
    D = W**2 * alpha0 / (12 * k)
    P, P_its = solve_P(A, B, D, W)
    delta = D / (B + P)
    eps = 3 * delta / W
    N3 = 1.0
    N2 = W / (3 * delta)
    N1 = (4 + 2 * P) / W

    C_delta = W**2 * C_tr**2 / (4 * delta)
    C_eps1 = W**2 / (2 * eps * lambda1)
    C_eps2 = Mbar1 / (2 * eps * lambda1**3)
    carry = 0.0
    if carry_M2 and Mbar1 > 0 and M2 > 0:
        C_eps2 *= 2
        carry = M2 * eps * lambda1 / (2 * Mbar1)
    C_eps3 = alpha1**2 * (Mq * k_c + q_max) ** 2 / (4 * eps)
    C_eps_delta = C_delta + C_eps1 + C_eps2 + kappa1**2 / alpha0 + alpha1 / lambda1
    F1_theta = max(lambda1 * alpha1**2 / (2 * eta), alpha1**2 * lambda1 * k_c**2 / (2 * eta))

    Xi = max(Mq / 2, 1.0, W / 6)
    X = F1_theta * N1 + N2 * C_eps_delta + N3 * C_eps3
    N0 = 1.01 * 2 * (Xi / lambda1 + X) / kappa0
    xi = min(Mq / 2, 1.0, W / 6)
    C_tilde = N0 / (2 * kappa0 * lambda1) + N2 / (alpha0 * lambda1)
    M_tilde = N3 * M2
    M_tilde_carry = M_tilde + N2 * carry

    beta0 = 0.5 * (1 - eta / (mu * lambda1))
    if not beta0 > 0:
        raise ConstantError(f"beta0 = {beta0} is not positive (eta >= mu lambda1)")
    K = (N1 / (2 * math.sqrt(mu * lambda1)) + N2 / (2 * math.sqrt(lambda1))
         + N3 * (q_max / math.sqrt(mu) + Mq / math.sqrt(mu * lambda1)) / 2)
    c1 = N0 - K / beta0
    c2 = N0 + K / beta0
    if not c1 > 0:
        raise ConstantError(f"equivalence constant c1 = {c1} is not positive")
    xi1 = xi / c2
    C_tilde1 = C_tilde / c1
    M_used = M_tilde_carry if carry_M2 else M_tilde
    M_tilde1 = M_used / c1
    rho0 = 2 * (1 + 1 / xi1) * (M_tilde1 + g_lb2)

    identities = {
        "u_t coefficient": (alpha0 * N2 / (2 * k) - N1 - 1.5 * Mq * N3, Mq / 2),
        "div u coefficient": (N1 * W / 2 - N2 * eps - P * N3, 1.0),
        "boundary coefficient": (N3 * W / 2 - N2 * delta, W / 6),
        "grad theta coefficient": (lambda1 * (kappa0 * N0 / 2 - X), Xi),
    }
    young = {"C_delta": C_delta, "C_eps_prime": C_eps1, "C_eps_dprime": C_eps2,
             "C_eps_tprime": C_eps3, "C_eps_delta": C_eps_delta, "M2_carry": carry}
    led = ConstantLedger(
        mu=mu, lam=lam, alpha0=alpha0, alpha1=alpha1, kappa0=kappa0, kappa1=kappa1,
        lambda1=lambda1, eta=eta, C_f=C_f, volume=volume, Mq=Mq, q_max=q_max, k=k, k_c=k_c,
        C_tr=C_tr, M1=M1, Mbar1=Mbar1, M2=M2, radius=radius, g_lb2=g_lb2, A=A, B=B, D=D, P=P,
        P_iterations=P_its, delta=delta, epsilon=eps, N0=N0, N1=N1, N2=N2, N3=N3, xi=xi,
        C_tilde=C_tilde, M_tilde=M_tilde, M_tilde_carry=M_tilde_carry, beta0=beta0, c1=c1,
        c2=c2, xi1=xi1, C_tilde1=C_tilde1, M_tilde1=M_tilde1, rho0=rho0,
        F1_theta_coeff=F1_theta, young_constants=young,
        identities={k_: list(v) for k_, v in identities.items()})
    led.notes = [
        "coefficient of ||grad theta||^2 in the F1 estimate uses alpha1^2",
        "the M2 term of the f(u) bound is carried into M_tilde" if carry_M2
        else "the M2 term of the f(u) bound is dropped",
        "||grad u|| <= ||div u|| is used for curl-free fields (exact in 1-D)",
    ]
    for name in ("delta", "epsilon", "N0", "N1", "N2", "N3", "xi"):
        if not getattr(led, name) > 0:
            raise ConstantError(f"derived constant {name} = {getattr(led, name)} is not positive")
    if rho0 < 0:
        raise ConstantError(f"rho0 = {rho0} is negative")
    if rho0 == 0:
        led.notes.append("rho0 = 0: no forcing and no M2 term, the absorbing ball is {0}")
    return led


def compute_constants(model: ModelSpec, opc: OperatorConstants, q: QField, grid: GridSpec,
                      r: float | None = None, g_lb2: float = 0.0, refit: bool = True,
                      carry_M2: bool = True, seed: int = 0) -> ConstantLedger:
    """Assemble the ledger. Without an explicit radius r the nonlinearity is
    first fitted at r = 1, then refitted once at r = 2 rho0."""
    base = dict(
        mu=model.mu, lam=model.lam, alpha0=model.alpha.lo, alpha1=model.alpha.hi,
        kappa0=model.kappa.lo, kappa1=model.kappa.hi, lambda1=first_eigenvalue(grid),
        eta=model.f.eta, C_f=model.f.C_f, volume=grid.volume, Mq=q.Mq, q_max=q.q_max,
        k=opc.k, k_c=opc.k_c, C_tr=opc.C_tr, g_lb2=g_lb2, carry_M2=carry_M2)

    def with_fit(radius):
        fit = fit_nonlinearity(model.f, grid, model.mu, model.lam, radius, seed=seed)
        return constants_from_parameters(**base, M1=fit.M1, Mbar1=fit.Mbar1, M2=fit.M2,
                                         radius=radius)

    if r is not None:
        return with_fit(r)
    led = with_fit(1.0)
    if refit and not model.f.is_zero:
        first_rho0 = led.rho0
        led = with_fit(2 * first_rho0)
        led.notes.append(f"nonlinearity refitted at r = 2 rho0 = {2 * first_rho0:.6g}; "
                         f"the refitted rho0 is {led.rho0:.6g}")
    return led

# }}}


# {{{ trajectory diagnostics and margins

def observe(s: State, model: ModelSpec, grid: GridSpec, q: QField,
            ledger: ConstantLedger | None = None,
            spec: PoissonSolverSpec = DEFAULT_SOLVER) -> dict[str, float]:
    """Everything the inequality ledger needs at one recorded time."""
    en = energy(s, model, grid)
    mult = multiplier_solve(s, grid, spec)
    F = functionals(s, grid, mult, q)
    g = model.forcing(s.t)
    out = {
        "E": en.E, "E_c": en.E_c, "F1": F.F1, "F2": F.F2, "F3": F.F3,
        "grad_theta_sq": grad_norm_sq(grid, s.theta),
        "g_norm_sq": l2_norm_sq(grid, g),
        "hc_norm_sq": hc_norm_sq(s, model.mu, model.lam, grid),
        "v_sq": l2_norm_sq(grid, s.v),
        "div_sq": div_norm_sq(grid, s.u),
        "boundary_div_sq": boundary_div_sq(grid, s.u),
        "fhat": fhat_integral(grid, model.f, s.u),
    }
    if ledger is not None:
        out["L"] = (ledger.N0 * en.E + ledger.N1 * F.F1 + ledger.N2 * F.F2
                    + ledger.N3 * F.F3)
    return out


def _rate(times: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Centered differences inside, one-sided at the ends."""
    return np.gradient(y, times)


MARGIN_KEYS = ("energy_rate", "F1_rate", "F2_rate", "F3_rate", "lyapunov_rate")


@dataclass
class MarginReport:
    times: np.ndarray
    margins: dict[str, np.ndarray]
    envelope_rhs: np.ndarray
    envelope_rhs_rigorous: np.ndarray
    lower_bound_margin: np.ndarray

    def min_margin(self, key: str) -> float:
        return float(np.min(self.margins[key]))

    def violation(self, key: str) -> float:
        return max(0.0, -self.min_margin(key))

    def summary(self) -> dict:
        out = {key: {"min_margin": self.min_margin(key), "violation": self.violation(key)}
               for key in self.margins}
        out["envelope"] = {"min_margin": float(np.min(self.margins["envelope"]))}
        out["lower_bound"] = {"min_margin": float(np.min(self.lower_bound_margin))}
        return out


def inequality_ledger(times, diag: dict[str, list[float]], ledger: ConstantLedger,
                      tau: float | None = None) -> MarginReport:
    """Margins RHS - LHS of the differential inequalities along a record,
    with time derivatives from centered differences on the record grid."""
    t = np.asarray(times, dtype=float)
    d = {key: np.asarray(val, dtype=float) for key, val in diag.items()}
    W = ledger.wave_modulus
    gt, gsq, vsq = d["grad_theta_sq"], d["g_norm_sq"], d["v_sq"]
    div_sq, bdy, fhat = d["div_sq"], d["boundary_div_sq"], d["fhat"]
    k0, lam1, a0 = ledger.kappa0, ledger.lambda1, ledger.alpha0
    eps, delta, P = ledger.epsilon, ledger.delta, ledger.P
    yc = ledger.young_constants
    M2 = ledger.M2

    m = {}
    m["energy_rate"] = (-k0 / 2 * gt + gsq / (2 * k0 * lam1)) - _rate(t, d["E"])
    m["F1_rate"] = (vsq - W / 2 * div_sq + ledger.F1_theta_coeff * gt - fhat) - _rate(t, d["F1"])
    m["F2_rate"] = (-a0 / (2 * ledger.k) * vsq + yc["C_eps_delta"] * gt + eps * div_sq
                    + delta * bdy + gsq / (a0 * lam1)) - _rate(t, d["F2"])
    m["F3_rate"] = (1.5 * ledger.Mq * vsq + P * div_sq + yc["C_eps_tprime"] * gt
                    - W / 2 * bdy + M2) - _rate(t, d["F3"])
    L = d["L"] if "L" in d else (ledger.N0 * d["E"] + ledger.N1 * d["F1"]
                                 + ledger.N2 * d["F2"] + ledger.N3 * d["F3"])
    M_used = ledger.M_tilde_carry
    m["lyapunov_rate"] = (-ledger.xi * d["E"] + ledger.C_tilde * gsq + M_used) - _rate(t, L)

    tau = t[0] if tau is None else tau
    E0 = d["E"][0]
    decay = np.exp(-ledger.xi1 * (t - tau))
    env = E0 * decay + (1 + 1 / ledger.xi1) * (ledger.M_tilde1 + ledger.g_lb2)
    env_rig = (ledger.c2 / ledger.c1) * max(E0, 0.0) * decay \
        + (1 + 1 / ledger.xi1) * (ledger.M_tilde1 + ledger.C_tilde1 * ledger.g_lb2)
    m["envelope"] = env - d["E"]
    lower = d["E"] - (ledger.beta0 * d["hc_norm_sq"] - ledger.C_f * ledger.volume)
    return MarginReport(t, m, env, env_rig, lower)

# }}}


# {{{ discrete energy identity

def energy_identity_residuals(U_tau: State, tau: float, T: float, g, model: ModelSpec,
                              scheme, grid: GridSpec) -> np.ndarray:
    """r^n = (E^{n+1} - E^n)/dt + kappa(t_mid) |grad theta_mid|^2 - <g(t_mid), theta_mid>
    for every step of a run, with theta_mid the average of the two levels."""
    from .integrator import run

    dt = scheme.dt
    m = model.with_forcing(g)
    res = []

    def on_step(a: State, b: State):
        th = 0.5 * (a.theta + b.theta)
        t_mid = 0.5 * (a.t + b.t)
        r = (energy(b, m, grid).E - energy(a, m, grid).E) / dt \
            + m.kappa(t_mid) * grad_norm_sq(grid, th) - l2_inner(grid, g(t_mid), th)
        res.append(r)

    run(U_tau, tau, T, g, m, scheme, grid, on_step=on_step)
    return np.asarray(res)

# }}}
