"""Box grids, Dirichlet fields and the basic quadrature.

Scalar fields are numpy arrays of shape ``grid.shape`` holding interior
values only; the boundary is an implicit layer of zeros. Vector fields are
arrays of shape ``(grid.dim, *grid.shape)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    lengths: tuple[float, ...]
    interior_counts: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(x) for x in self.lengths)
        counts = tuple(int(n) for n in self.interior_counts)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "interior_counts", counts)
        if len(lengths) not in (1, 2, 3) or len(lengths) != len(counts):
            raise ValueError(
                f"need 1-3 axes with matching lengths/counts, got {lengths} / {counts}")
        if any(L <= 0 or not np.isfinite(L) for L in lengths):
            raise ValueError(f"box lengths must be positive, got {lengths}")
        if any(n < 3 for n in counts):
            raise ValueError(f"need at least 3 interior nodes per axis, got {counts}")

    @classmethod
    def uniform(cls, dim: int, n: int, length: float = 1.0) -> "GridSpec":
        return cls((length,) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.interior_counts

    @property
    def vshape(self) -> tuple[int, ...]:
        return (self.dim,) + self.interior_counts

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(L / (n + 1) for L, n in zip(self.lengths, self.interior_counts))

    @property
    def h_min(self) -> float:
        return min(self.spacings)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def node_count(self) -> int:
        return int(np.prod(self.interior_counts))

    def axes(self) -> list[np.ndarray]:
        """Interior node coordinates per axis."""
        return [h * np.arange(1, n + 1) for h, n in zip(self.spacings, self.interior_counts)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(*coords)`` at the interior nodes."""
        return np.asarray(fn(*self.mesh()), dtype=float) * np.ones(self.shape)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def vzeros(self) -> np.ndarray:
        return np.zeros(self.vshape)

    def check_scalar(self, a: np.ndarray, name: str = "field") -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape != self.shape:
            raise GridMismatchError(f"{name} has shape {a.shape}, grid expects {self.shape}")
        return a

    def check_vector(self, a: np.ndarray, name: str = "field") -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape != self.vshape:
            raise GridMismatchError(f"{name} has shape {a.shape}, grid expects {self.vshape}")
        return a

    def check_any(self, a: np.ndarray, name: str = "field") -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape not in (self.shape, self.vshape):
            raise GridMismatchError(
                f"{name} has shape {a.shape}, grid expects {self.shape} or {self.vshape}")
        return a

    def to_dict(self) -> dict:
        return {"dim": self.dim, "lengths": list(self.lengths),
                "interior_counts": list(self.interior_counts)}


@dataclass
class State:
    """Displacement, velocity and temperature at time ``t``."""

    t: float
    u: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    grid: GridSpec = field(repr=False, default=None)

    def __post_init__(self):
        if not np.isfinite(self.t):
            raise ValueError("state time must be finite")
        if self.grid is not None:
            self.grid.check_vector(self.u, "u")
            self.grid.check_vector(self.v, "v")
            self.grid.check_scalar(self.theta, "theta")
        elif self.u.shape != self.v.shape or self.u.shape[1:] != self.theta.shape:
            raise GridMismatchError("state fields live on different grids")

    @classmethod
    def zeros(cls, grid: GridSpec, t: float = 0.0) -> "State":
        return cls(t, grid.vzeros(), grid.vzeros(), grid.zeros(), grid)

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.v.copy(), self.theta.copy(), self.grid)

    def __sub__(self, other: "State") -> "State":
        return State(self.t, self.u - other.u, self.v - other.v,
                     self.theta - other.theta, self.grid)

    def __add__(self, other: "State") -> "State":
        return State(self.t, self.u + other.u, self.v + other.v,
                     self.theta + other.theta, self.grid)

    def scaled(self, c: float) -> "State":
        return State(self.t, c * self.u, c * self.v, c * self.theta, self.grid)

    def with_time(self, t: float) -> "State":
        return State(t, self.u, self.v, self.theta, self.grid)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all()
                    and np.isfinite(self.theta).all())


def l2_inner(grid: GridSpec, a: np.ndarray, b: np.ndarray) -> float:
    """h^d-weighted interior sum; boundary nodes carry zero."""
    a = grid.check_any(a, "a")
    b = grid.check_any(b, "b")
    if a.shape != b.shape:
        raise GridMismatchError(f"cannot pair shapes {a.shape} and {b.shape}")
    return grid.cell_volume * float(np.dot(a.ravel(), b.ravel()))


def l2_norm_sq(grid: GridSpec, a: np.ndarray) -> float:
    return l2_inner(grid, a, a)


def first_eigenvalue(grid: GridSpec) -> float:
    """Smallest eigenvalue of the compact Dirichlet -Laplacian on the grid."""
    return float(sum(4.0 / h**2 * np.sin(np.pi * h / (2 * L)) ** 2
                     for h, L in zip(grid.spacings, grid.lengths)))


def first_eigenfunction(grid: GridSpec) -> np.ndarray:
    """Product of sin(pi x_i / L_i) sampled at the nodes (unnormalised)."""
    out = np.ones(grid.shape)
    for ax, (x, L) in enumerate(zip(grid.axes(), grid.lengths)):
        shape = [1] * grid.dim
        shape[ax] = -1
        out = out * np.sin(np.pi * x / L).reshape(shape)
    return out


def as_grid(d: dict | GridSpec | Sequence) -> GridSpec:
    if isinstance(d, GridSpec):
        return d
    return GridSpec(tuple(d["lengths"]), tuple(d["interior_counts"]))
