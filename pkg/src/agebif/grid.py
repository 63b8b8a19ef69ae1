"""Uniform space/age grids, the Dirichlet Laplacian and age quadrature.

Space is the interval ``(0, L)`` with homogeneous Dirichlet conditions,
discretized by the 3-point stencil on ``n_x`` interior nodes. Age is
``[0, a_m]`` split into ``n_a`` equal steps with trapezoidal weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import GridError, IterationFailure


@dataclass(frozen=True)
class SpatialGrid:
    L: float
    n_x: int
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_x < 3:
            raise GridError(f"n_x must be >= 3, got {self.n_x}")
        if not self.L > 0:
            raise GridError(f"L must be positive, got {self.L}")
        h = self.L / (self.n_x + 1)
        nodes = h * np.arange(1, self.n_x + 1)
        nodes.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "nodes", nodes)


@dataclass(frozen=True)
class AgeGrid:
    a_m: float
    n_a: int
    da: float = field(init=False)
    ages: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_a < 2:
            raise GridError(f"n_a must be >= 2, got {self.n_a}")
        if not self.a_m > 0:
            raise GridError(f"a_m must be positive, got {self.a_m}")
        da = self.a_m / self.n_a
        ages = da * np.arange(self.n_a + 1)
        weights = np.full(self.n_a + 1, da)
        weights[0] = weights[-1] = 0.5 * da
        for arr in (ages, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "da", da)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class Eigenpair:
    """Principal eigenpair of the discrete ``-Laplacian``; ``phi1`` has sup-norm 1."""

    lambda1: float
    phi1: np.ndarray = field(repr=False)
    iterations: int = 0
    residual: float = 0.0


def build_grid(L: float = 1.0, n_x: int = 64, a_m: float = 1.0,
               n_a: int = 128) -> tuple[SpatialGrid, AgeGrid]:
    return SpatialGrid(float(L), int(n_x)), AgeGrid(float(a_m), int(n_a))


def apply_laplacian(grid: SpatialGrid, w: np.ndarray) -> np.ndarray:
    """Apply the Dirichlet 3-point Laplacian (``+Delta``) along axis 0.

    Trailing axes are treated as independent columns.
    """
    w = np.asarray(w, dtype=float)
    if w.shape[0] != grid.n_x:
        raise GridError(f"expected leading length {grid.n_x}, got {w.shape[0]}")
    inv_h2 = 1.0 / grid.h ** 2
    out = -2.0 * inv_h2 * w
    out[1:] += inv_h2 * w[:-1]
    out[:-1] += inv_h2 * w[1:]
    return out


def laplacian_matrix(grid: SpatialGrid) -> np.ndarray:
    """Dense ``+Delta`` matrix; meant for small-grid oracles only."""
    return apply_laplacian(grid, np.eye(grid.n_x))


def principal_eigenpair(grid: SpatialGrid, tol: float = 1e-12,
                        maxiter: int = 500) -> Eigenpair:
    """Inverse power iteration (shift 0) on the SPD tridiagonal ``-Delta``.

    Iterates until the residual reaches ``tol * lambda1`` or the round-off
    floor, then certifies ``residual < 1e-10 * lambda1``.
    """
    n, inv_h2 = grid.n_x, 1.0 / grid.h ** 2
    ab = np.empty((3, n))
    ab[0, :] = -inv_h2
    ab[1, :] = 2.0 * inv_h2
    ab[2, :] = -inv_h2
    # round-off floor of the residual is about eps * ||Delta|| = eps * 4/h^2
    floor = 64 * np.finfo(float).eps * 4.0 * inv_h2
    x = np.ones(n)
    lam = 0.0
    for it in range(1, maxiter + 1):
        y = solve_banded((1, 1), ab, x, check_finite=False)
        x = y / np.max(np.abs(y))
        minus_lap = -apply_laplacian(grid, x)
        lam = float(x @ minus_lap) / float(x @ x)
        res = float(np.max(np.abs(minus_lap - lam * x)))
        if res <= max(tol * lam, floor):
            break
    else:
        raise IterationFailure(f"inverse iteration stalled, residual {res:.3e}")
    if res >= 1e-10 * lam:
        raise IterationFailure(f"eigen-residual {res:.3e} above 1e-10*lambda1")
    phi = x if x[np.argmax(np.abs(x))] > 0 else -x
    phi = phi / phi.max()
    if np.any(phi <= 0):
        raise IterationFailure("principal eigenvector is not strictly positive")
    phi.setflags(write=False)
    return Eigenpair(lam, phi, it, res)


def age_integral(ag: AgeGrid, samples: np.ndarray) -> np.ndarray | float:
    """Trapezoidal integral over age of samples stored along axis 0."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != ag.n_a + 1:
        raise GridError(f"expected {ag.n_a + 1} age samples, got {samples.shape[0]}")
    out = np.tensordot(ag.weights, samples, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out
