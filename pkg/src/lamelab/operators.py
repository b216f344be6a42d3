"""Finite-difference operators on the collocated Dirichlet grid.

First derivatives are central differences against a zero ghost layer, the
Laplacian is the compact (2d+1)-point stencil. The Lame operator keeps the
compact stencil on the diagonal of grad-div, which makes it self-adjoint,
negative semidefinite for lambda + mu >= 0 and equal to (2mu+lambda) d_xx in
one dimension. Norms of gradients use forward differences over all links
(including the two boundary links), so ||grad u||^2 = (-lap u, u) exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy.sparse.linalg import LinearOperator, cg

from .grid import GridSpec, State, l2_inner, l2_norm_sq

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A linear solve or eigen-iteration failed to converge."""

    def __init__(self, msg, residual=None, iterates=None):
        super().__init__(msg)
        self.residual = residual
        self.iterates = iterates


# {{{ stencils

def _pad(s: np.ndarray, axis: int) -> np.ndarray:
    width = [(0, 0)] * s.ndim
    width[axis] = (1, 1)
    return np.pad(s, width)


def _sl(ndim, axis, sl):
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def d_central(s: np.ndarray, axis: int, h: float) -> np.ndarray:
    p = _pad(s, axis)
    return (p[_sl(s.ndim, axis, slice(2, None))]
            - p[_sl(s.ndim, axis, slice(None, -2))]) / (2 * h)


def d_forward_links(s: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Forward differences on the n+1 links, boundary links included."""
    return np.diff(_pad(s, axis), axis=axis) / h


def d2_compact(s: np.ndarray, axis: int, h: float) -> np.ndarray:
    p = _pad(s, axis)
    nd = s.ndim
    return (p[_sl(nd, axis, slice(2, None))] - 2 * s
            + p[_sl(nd, axis, slice(None, -2))]) / h**2

# }}}


def gradient(grid: GridSpec, s: np.ndarray) -> np.ndarray:
    s = grid.check_scalar(s)
    return np.stack([d_central(s, a, h) for a, h in enumerate(grid.spacings)])


def divergence(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    u = grid.check_vector(u)
    return sum(d_central(u[a], a, h) for a, h in enumerate(grid.spacings))


def curl(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Zero scalar in 1-D, scalar d_x u_y - d_y u_x in 2-D, 3-vector in 3-D."""
    u = grid.check_vector(u)
    hs = grid.spacings
    if grid.dim == 1:
        return grid.zeros()
    if grid.dim == 2:
        return d_central(u[1], 0, hs[0]) - d_central(u[0], 1, hs[1])
    D = lambda c, a: d_central(u[c], a, hs[a])  # noqa: E731
    return np.stack([D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1)])


def laplacian(grid: GridSpec, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape == grid.vshape:
        return np.stack([laplacian(grid, c) for c in s])
    s = grid.check_scalar(s)
    return sum(d2_compact(s, a, h) for a, h in enumerate(grid.spacings))


def grad_div(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """grad(div u) with compact second differences on the diagonal."""
    u = grid.check_vector(u)
    hs = grid.spacings
    d = grid.dim
    du = [d_central(u[j], j, hs[j]) for j in range(d)]
    out = np.empty_like(u)
    for i in range(d):
        acc = d2_compact(u[i], i, hs[i])
        for j in range(d):
            if j != i:
                acc = acc + d_central(du[j], i, hs[i])
        out[i] = acc
    return out


def lame_apply(grid: GridSpec, u: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """mu lap u + (lambda + mu) grad div u."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return mu * laplacian(grid, u) + (lam + mu) * grad_div(grid, u)


def grad_inner(grid: GridSpec, a: np.ndarray, b: np.ndarray) -> float:
    """(grad a, grad b) with forward differences; scalars or vectors."""
    a = grid.check_any(a)
    b = grid.check_any(b)
    if a.ndim == grid.dim:
        a, b = a[None], b[None]
    tot = 0.0
    for ca, cb in zip(a, b):
        for ax, h in enumerate(grid.spacings):
            tot += float(np.sum(d_forward_links(ca, ax, h) * d_forward_links(cb, ax, h)))
    return grid.cell_volume * tot


def grad_norm_sq(grid: GridSpec, a: np.ndarray) -> float:
    return grad_inner(grid, a, a)


def div_inner(grid: GridSpec, u: np.ndarray, w: np.ndarray) -> float:
    """Discrete (div u, div w): the form -(grad div u, w).

    Equals ||d_x u||^2 (forward differences) in 1-D and is bounded by
    dim * ||grad u||^2 in general.
    """
    return -l2_inner(grid, grad_div(grid, u), w)


def div_norm_sq(grid: GridSpec, u: np.ndarray) -> float:
    return div_inner(grid, u, u)


def h01_inner(grid: GridSpec, u1: np.ndarray, u2: np.ndarray, mu: float, lam: float) -> float:
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return mu * grad_inner(grid, u1, u2) + (lam + mu) * div_inner(grid, u1, u2)


def hc_norm_sq(s: State, mu: float, lam: float, grid: GridSpec | None = None) -> float:
    grid = grid or s.grid
    return (h01_inner(grid, s.u, s.u, mu, lam) + l2_norm_sq(grid, s.v)
            + l2_norm_sq(grid, s.theta))


def hc_norm(s: State, mu: float, lam: float, grid: GridSpec | None = None) -> float:
    return float(np.sqrt(max(hc_norm_sq(s, mu, lam, grid), 0.0)))


# {{{ Poisson solves

@dataclass(frozen=True)
class PoissonSolverSpec:
    method: str = "dst"
    tolerance: float = 1e-10
    max_iterations: int | None = None

    def __post_init__(self):
        if self.method not in ("dst", "cg"):
            raise ValueError(f"unknown Poisson method {self.method!r}")
        if not 0 < self.tolerance <= 1e-6:
            raise ValueError(f"tolerance must lie in (0, 1e-6], got {self.tolerance}")

    def iterations_for(self, grid: GridSpec) -> int:
        n = self.max_iterations if self.max_iterations is not None else 4 * grid.node_count
        if n < grid.node_count:
            raise ValueError(
                f"max_iterations={n} is below the node count {grid.node_count}")
        return n


DEFAULT_SOLVER = PoissonSolverSpec()


def neg_laplacian_symbol(grid: GridSpec) -> np.ndarray:
    """Eigenvalues of -lap on the DST-I basis, broadcast to grid.shape."""
    out = np.zeros(grid.shape)
    for ax, (h, n) in enumerate(zip(grid.spacings, grid.interior_counts)):
        m = np.arange(1, n + 1)
        ev = 4.0 / h**2 * np.sin(m * np.pi / (2 * (n + 1))) ** 2
        shape = [1] * grid.dim
        shape[ax] = -1
        out = out + ev.reshape(shape)
    return out


def dst(a: np.ndarray) -> np.ndarray:
    return scipy.fft.dstn(a, type=1)


def idst(a: np.ndarray) -> np.ndarray:
    return scipy.fft.idstn(a, type=1)


def apply_neg_laplacian_power(grid: GridSpec, s: np.ndarray, p: float) -> np.ndarray:
    return idst(dst(s) * neg_laplacian_symbol(grid) ** p)


def _cg(apply, rhs, tol, maxiter, what):
    n = rhs.size
    op = LinearOperator((n, n), matvec=lambda x: apply(x.reshape(rhs.shape)).ravel(),
                        dtype=float)
    norm = np.linalg.norm(rhs)
    if norm == 0.0:
        return np.zeros_like(rhs)
    x, info = cg(op, rhs.ravel(), rtol=0.5 * tol, atol=0.0, maxiter=maxiter)
    x = x.reshape(rhs.shape)
    res = np.linalg.norm(apply(x) - rhs) / norm
    if res > tol:
        raise SolverError(f"{what}: CG stopped with relative residual {res:.3e}",
                          residual=res)
    return x


def solve_shifted(grid: GridSpec, rhs: np.ndarray, a: float, b: float,
                  spec: PoissonSolverSpec = DEFAULT_SOLVER) -> np.ndarray:
    """Solve (a I - b lap) x = rhs with Dirichlet data; a >= 0, b > 0."""
    rhs = grid.check_scalar(rhs)
    if spec.method == "dst":
        return idst(dst(rhs) / (a + b * neg_laplacian_symbol(grid)))
    return _cg(lambda x: a * x - b * laplacian(grid, x), rhs, spec.tolerance,
               spec.iterations_for(grid), "shifted Poisson solve")


def poisson_solve(grid: GridSpec, rhs: np.ndarray,
                  spec: PoissonSolverSpec = DEFAULT_SOLVER) -> np.ndarray:
    """Solve -lap phi = rhs, phi = 0 on the boundary."""
    return solve_shifted(grid, rhs, 0.0, 1.0, spec)

# }}}


def helmholtz_decompose(grid: GridSpec, u: np.ndarray,
                        spec: PoissonSolverSpec = DEFAULT_SOLVER):
    """Split u into u_c = grad psi (curl-free) and u_d = u - u_c.

    psi solves -lap psi = -div u. In 1-D every field is curl-free and the
    split is (u, 0).
    """
    u = grid.check_vector(u)
    if grid.dim == 1:
        return u.copy(), np.zeros_like(u)
    psi = poisson_solve(grid, -divergence(grid, u), spec)
    uc = gradient(grid, psi)
    return uc, u - uc


# {{{ operator constants

def _rayleigh_power(apply_t, x0, inner, *, min_iter=200, max_iter=5000, rtol=1e-8, what=""):
    """Power iteration for the dominant eigenvalue of a self-adjoint map."""
    x = x0 / np.sqrt(inner(x0, x0))
    history = []
    prev = None
    for it in range(max_iter):
        y = apply_t(x)
        val = inner(x, y)
        ny = np.sqrt(inner(y, y))
        if ny == 0:
            raise SolverError(f"{what}: power iteration collapsed to zero")
        x = y / ny
        history.append(val)
        if prev is not None and it + 1 >= min_iter and abs(val - prev) <= rtol * abs(val):
            return val, x, it + 1
        prev = val
    raise SolverError(f"{what}: power iteration did not converge", iterates=history[-2:])


@dataclass
class OperatorConstants:
    k: float
    k_c: float
    C_tr: float
    iterations: dict

    def to_dict(self):
        return {"k": self.k, "k_c": self.k_c, "C_tr": self.C_tr,
                "iterations": dict(self.iterations)}


def curl_free_project(grid: GridSpec, w: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthogonal projection onto range(gradient), the discrete curl-free fields."""
    # in 1-D this still matters: the central gradient misses the sawtooth
    # kernel of the central divergence when n is odd
    neg_wide = lambda s: -divergence(grid, gradient(grid, s))  # noqa: E731
    psi = _cg(neg_wide, -divergence(grid, w), tol, 20 * grid.node_count,
              "curl-free projection")
    return gradient(grid, psi)


def multiplier_quotient_op(grid: GridSpec, w: np.ndarray, spec=DEFAULT_SOLVER) -> np.ndarray:
    """w -> -grad(phi) with -lap phi = div w, so (w, K w) = ||grad phi||^2."""
    phi = poisson_solve(grid, divergence(grid, w), spec)
    return -gradient(grid, phi)


def estimate_operator_constants(grid: GridSpec, spec: PoissonSolverSpec = DEFAULT_SOLVER,
                                seed: int = 0, min_iter: int = 200) -> OperatorConstants:
    """Power-iteration estimates of k, k_c and C_tr on the given grid.

    k   : sup ||w||^2 / ||grad phi(w)||^2 over curl-free w, -lap phi = div w
    k_c : sup ||u|| / ||div u|| over curl-free u
    C_tr: sup ||d_nu w||_boundary / ||grad theta|| with -lap w = theta
    """
    rng = np.random.default_rng(seed)
    inner = lambda a, b: l2_inner(grid, a, b)  # noqa: E731
    its = {}
    x0 = curl_free_project(grid, rng.standard_normal(grid.vshape))

    # k: inverse iteration on K restricted to range(gradient)
    def k_step(w):
        # re-project: inverse iteration amplifies round-off in the kernel
        w = curl_free_project(grid, w)
        return _cg(lambda x: multiplier_quotient_op(grid, x, spec), w, 1e-10,
                   50 * grid.node_count, "k inverse iteration")
    k, _, its["k"] = _rayleigh_power(k_step, x0, inner, min_iter=min_iter, what="k")

    # k_c: inverse iteration on -grad_div restricted to curl-free fields
    if grid.dim == 1:
        def kc_step(u):
            return np.stack([poisson_solve(grid, u[0], spec)])
    else:
        def kc_apply(x):
            return curl_free_project(grid, -grad_div(grid, curl_free_project(grid, x)))

        def kc_step(u):
            return _cg(kc_apply, curl_free_project(grid, u), 1e-10,
                       50 * grid.node_count, "k_c inverse iteration")
    kc_sq, _, its["k_c"] = _rayleigh_power(kc_step, x0, inner, min_iter=min_iter, what="k_c")

    # C_tr: theta -> boundary normal derivative of w, in the L^{-1/2} metric
    def trace_op(theta):
        w = poisson_solve(grid, theta, spec)
        return _boundary_flux(grid, w)

    def trace_adj(flux):
        return poisson_solve(grid, _boundary_flux_adjoint(grid, flux), spec)

    def ctr_step(y):
        x = apply_neg_laplacian_power(grid, y, -0.5)
        z = trace_adj(trace_op(x))
        return apply_neg_laplacian_power(grid, z, -0.5)

    y0 = rng.standard_normal(grid.shape)
    ctr_sq, _, its["C_tr"] = _rayleigh_power(
        ctr_step, y0, lambda a, b: float(np.vdot(a, b)), min_iter=min_iter, what="C_tr")
    return OperatorConstants(k=float(k), k_c=float(np.sqrt(kc_sq)),
                             C_tr=float(np.sqrt(ctr_sq)), iterations=its)


def _boundary_flux(grid: GridSpec, w: np.ndarray) -> list[np.ndarray]:
    """Outward one-sided normal derivatives on each face, scaled by sqrt(face weight)."""
    out = []
    hs = grid.spacings
    for ax, h in enumerate(hs):
        face_w = np.sqrt(grid.cell_volume / h)
        lo = np.take(w, 0, axis=ax) / h
        hi = np.take(w, -1, axis=ax) / h
        out.extend([face_w * lo, face_w * hi])
    return out


def _boundary_flux_adjoint(grid: GridSpec, flux: list[np.ndarray]) -> np.ndarray:
    """Adjoint of _boundary_flux with respect to the plain l2 inner product,
    divided by the cell volume so that it pairs with l2_inner on the grid."""
    w = grid.zeros()
    hs = grid.spacings
    for ax, h in enumerate(hs):
        face_w = np.sqrt(grid.cell_volume / h)
        lo, hi = flux[2 * ax], flux[2 * ax + 1]
        idx_lo = [slice(None)] * grid.dim
        idx_lo[ax] = 0
        idx_hi = [slice(None)] * grid.dim
        idx_hi[ax] = -1
        w[tuple(idx_lo)] += face_w * lo / h
        w[tuple(idx_hi)] += face_w * hi / h
    return w / grid.cell_volume


def boundary_flux_sq(grid: GridSpec, w: np.ndarray) -> float:
    """Discrete integral over the boundary of |d_nu w|^2."""
    return float(sum(np.sum(f**2) for f in _boundary_flux(grid, w)))

# }}}


def boundary_div_sq(grid: GridSpec, u: np.ndarray) -> float:
    """Discrete boundary integral of |div u|^2.

    With u = 0 on the boundary only the normal derivative of the normal
    component survives, so on faces normal to axis i div u = d_i u_i.
    """
    u = grid.check_vector(u)
    tot = 0.0
    for ax, h in enumerate(grid.spacings):
        face = grid.cell_volume / h
        lo = np.take(u[ax], 0, axis=ax) / h
        hi = np.take(u[ax], -1, axis=ax) / h
        tot += face * float(np.sum(lo**2) + np.sum(hi**2))
    return tot
