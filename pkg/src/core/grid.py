"""
Uniform Dirichlet grid on the truncated cube [-L, L]^N.

The whole line (or space) is replaced by a box whose faces carry zero boundary
values; ground states decay exponentially, so for L >= 15 in 1D (L >= 8 in 3D)
the truncation error sits below the quadrature error.

Contents:
  - Grid, Field                  : immutable values, node j at -L + j*h (j = 1..n)
  - build_grid                   : validated constructor
  - laplacian_apply              : 3/5/7-point stencil for -Δ_h
  - integrate, lp_norm           : rectangle-rule quadrature
  - h_norm_sq                    : ‖u‖² = ∫|∇_h u|² + ∫V u², gradient term via
                                   summation by parts  Σ u·(-Δ_h u)·h^N
  - ShiftedLaplacianSolver       : (-Δ_h + w) x = b, the H¹-type preconditioner

Energy and residual share the single operator -Δ_h, so the discrete energy
gradient is exactly the discrete residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from src.utils.errors import ConvergenceError, GridMismatchError

# ─── Defaults per dimension ──────────────────────────────────────────────────

SUPPORTED_DIMS = (1, 2, 3)
MIN_NODES_PER_DIM = 3

DEFAULT_HALF_WIDTH = {1: 20.0, 2: 10.0, 3: 8.0}
DEFAULT_NODES_PER_DIM = {1: 2047, 2: 99, 3: 63}


# ─── Grid ────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Grid:
    """Interior nodes of a uniform grid on [-L, L]^dim with zero boundary values."""
    dim: int
    half_width: float
    n_per_dim: int

    def __post_init__(self):
        if self.dim not in SUPPORTED_DIMS:
            raise ValueError(f"dim must be one of {SUPPORTED_DIMS}, got {self.dim!r}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width!r}")
        if int(self.n_per_dim) != self.n_per_dim or self.n_per_dim < MIN_NODES_PER_DIM:
            raise ValueError(
                f"n_per_dim must be an integer >= {MIN_NODES_PER_DIM}, got {self.n_per_dim!r}"
            )

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n_per_dim + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_per_dim ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_dim,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        j = np.arange(1, self.n_per_dim + 1)
        return -self.half_width + j * self.h

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (n_nodes, dim), C order (last axis fastest)."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    @cached_property
    def radius_sq(self) -> np.ndarray:
        return np.sum(self.coordinates ** 2, axis=1)

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Sparse matrix of -Δ_h; neighbours outside the box contribute 0."""
        n = self.n_per_dim
        second_diff = sp.diags(
            [-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], shape=(n, n)
        ) / self.h ** 2
        total = sp.csr_matrix((self.n_nodes, self.n_nodes))
        for axis in range(self.dim):
            before = sp.identity(n ** axis, format="csr")
            after = sp.identity(n ** (self.dim - axis - 1), format="csr")
            total = total + sp.kron(before, sp.kron(second_diff, after))
        return total.tocsr()


def build_grid(dim: int, L: float, n_per_dim: int) -> Grid:
    """Validated grid constructor, h = 2L / (n_per_dim + 1)."""
    return Grid(dim=int(dim), half_width=float(L), n_per_dim=int(n_per_dim))


# ─── Field ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Field:
    """Real scalar function sampled at the interior nodes of one grid (read-only)."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.n_nodes:
            raise GridMismatchError(
                f"field has {values.size} values, grid has {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.n_nodes))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Sample fn on the node coordinates (array of shape (n_nodes, dim))."""
        return cls(grid, fn(grid.coordinates))

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def _other_values(self, other) -> Union[np.ndarray, float]:
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return float(other)

    def __add__(self, other) -> "Field":
        return Field(self.grid, self.values + self._other_values(other))

    def __sub__(self, other) -> "Field":
        return Field(self.grid, self.values - self._other_values(other))

    def __mul__(self, other) -> "Field":
        return Field(self.grid, self.values * self._other_values(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


def _require_on_grid(grid: Grid, field: Field) -> None:
    if field.grid != grid:
        raise GridMismatchError(f"field lives on {field.grid}, expected {grid}")


# ─── Operators and quadrature ────────────────────────────────────────────────

def laplacian_apply(grid: Grid, field: Field) -> Field:
    """(-Δ_h u)_j = (2·dim·u_j - Σ neighbours) / h²."""
    _require_on_grid(grid, field)
    return Field(grid, grid.laplacian @ field.values)


def integrate(grid: Grid, field: Field) -> float:
    """Rectangle rule: h^dim · Σ values."""
    _require_on_grid(grid, field)
    return float(grid.cell_volume * np.sum(field.values))


def lp_norm(grid: Grid, field: Field, p: float) -> float:
    if p < 1:
        raise ValueError(f"lp_norm needs p >= 1, got {p!r}")
    _require_on_grid(grid, field)
    total = grid.cell_volume * np.sum(np.abs(field.values) ** p)
    return float(total ** (1.0 / p))


def potential_values(grid: Grid, potential) -> np.ndarray:
    """Nodal values of a potential given as a spec (with .sample), Field, array or scalar."""
    if hasattr(potential, "sample"):
        return potential.sample(grid)
    if isinstance(potential, Field):
        _require_on_grid(grid, potential)
        return potential.values
    values = np.asarray(potential, dtype=float)
    if values.ndim == 0:
        return np.full(grid.n_nodes, float(values))
    if values.size != grid.n_nodes:
        raise GridMismatchError(f"potential has {values.size} values, grid has {grid.n_nodes}")
    return values.reshape(-1)


def quadratic_form(grid: Grid, values: np.ndarray, weights: np.ndarray) -> float:
    """h^N Σ u·(-Δ_h u + w u) on raw nodal arrays."""
    return float(grid.cell_volume * np.dot(values, grid.laplacian @ values + weights * values))


def h_norm_sq(grid: Grid, field: Field, potential) -> float:
    """‖u‖² = ∫ u·(-Δ_h u) + ∫ V u²."""
    _require_on_grid(grid, field)
    return quadratic_form(grid, field.values, potential_values(grid, potential))


# ─── Preconditioner ──────────────────────────────────────────────────────────

class ShiftedLaplacianSolver:
    """
    Solves (-Δ_h + diag(w)) x = b.

    Sparse LU is factorised once for dim <= 2; in 3D the factor fills in badly,
    so conjugate gradients are used instead (w must keep the operator SPD).
    """

    def __init__(self, grid: Grid, weights, rtol: float = 1e-10, maxiter: int = 2000):
        self.grid = grid
        self.rtol = rtol
        self.maxiter = maxiter
        w = np.broadcast_to(np.asarray(weights, dtype=float), (grid.n_nodes,))
        self.operator = (grid.laplacian + sp.diags(np.array(w))).tocsr()
        self._lu = splu(self.operator.tocsc()) if grid.dim <= 2 else None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(np.asarray(rhs, dtype=float))
        x, info = cg(self.operator, rhs, rtol=self.rtol, maxiter=self.maxiter)
        if info != 0:
            raise ConvergenceError(f"CG preconditioner solve did not converge (info={info})")
        return x


@lru_cache(maxsize=16)
def shifted_laplacian_solver(grid: Grid, shift: float) -> ShiftedLaplacianSolver:
    """Cached solver for a constant shift, e.g. (-Δ_h + V∞)^{-1}."""
    return ShiftedLaplacianSolver(grid, shift)
