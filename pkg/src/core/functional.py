"""
Energies, strong-form residuals and Nehari quantities of the scalar equations
and of the quadratically coupled system

  -Δu + V(x)u = μ₁|u|^{p-2}u + βuv
  -Δv + V(x)v = μ₂|v|^{p-2}v + (β/2)u²

  J_i(u)     = ½‖u‖² - (μ_i/p)|u|_p^p
  I_β(u, v)  = J₁(u) + J₂(v) - (β/2)∫u²v

Every residual here is the exact L²-gradient of the matching discrete energy.
The coupling coefficient is β/2: it is the only constant whose derivative
reproduces the system above.

Array-level kernels (energy_values, residual_values, ...) work on raw nodal
arrays and are what the solvers call in their inner loops; the Field/StatePair
functions wrap them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from src.core.grid import Field, Grid, quadratic_form
from src.core.potential import PotentialSpec
from src.utils.errors import GridMismatchError


# ─── Problem specification ───────────────────────────────────────────────────

@dataclass(frozen=True)
class ModelParams:
    """(N, p, μ₁, μ₂, β, V): everything that defines one coupled problem."""
    dim: int
    p: float
    mu1: float = 1.0
    mu2: float = 1.0
    beta: float = 0.0
    potential: PotentialSpec = field(default_factory=PotentialSpec)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim!r}")
        if not self.p > 2:
            raise ValueError(f"p must exceed 2, got {self.p!r}")
        if self.dim == 3 and not self.p < 5:
            raise ValueError(f"in 3D p must be below 5, got {self.p!r}")
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise ValueError("mu1 and mu2 must be positive")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta!r}")

    def mu(self, i: int) -> float:
        if i == 1:
            return self.mu1
        if i == 2:
            return self.mu2
        raise ValueError(f"component index must be 1 or 2, got {i!r}")

    def with_beta(self, beta: float) -> "ModelParams":
        return replace(self, beta=float(beta))

    def at_infinity(self) -> "ModelParams":
        """Same problem with V replaced by its limit V∞."""
        return replace(self, potential=self.potential.as_constant())

    def potential_values(self, grid: Grid) -> np.ndarray:
        if grid.dim != self.dim:
            raise GridMismatchError(f"grid is {grid.dim}D, model is {self.dim}D")
        return self.potential.sample(grid)


@dataclass(frozen=True, eq=False)
class StatePair:
    """(u, v) ∈ H¹ × H¹ on one grid."""
    u: Field
    v: Field

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise GridMismatchError("u and v live on different grids")

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def flat(self) -> np.ndarray:
        return np.concatenate([self.u.values, self.v.values])

    @classmethod
    def from_flat(cls, grid: Grid, values: np.ndarray) -> "StatePair":
        n = grid.n_nodes
        return cls(Field(grid, values[:n]), Field(grid, values[n:]))

    @classmethod
    def zeros(cls, grid: Grid) -> "StatePair":
        return cls(Field.zeros(grid), Field.zeros(grid))

    def scaled(self, t: float, s: float) -> "StatePair":
        return StatePair(self.u * t, self.v * s)

    def __sub__(self, other: "StatePair") -> "StatePair":
        return StatePair(self.u - other.u, self.v - other.v)


# ─── Array kernels ───────────────────────────────────────────────────────────

def power_nonlinearity(values: np.ndarray, p: float) -> np.ndarray:
    """|u|^{p-2}u, equal to 0 at u = 0 for any real p > 2."""
    return np.sign(values) * np.abs(values) ** (p - 1.0)


def lp_power(grid: Grid, values: np.ndarray, p: float) -> float:
    """|u|_p^p."""
    return float(grid.cell_volume * np.sum(np.abs(values) ** p))


def energy_values(grid: Grid, potential: np.ndarray, mu: float, p: float, u: np.ndarray) -> float:
    return 0.5 * quadratic_form(grid, u, potential) - mu / p * lp_power(grid, u, p)


def residual_values(grid: Grid, potential: np.ndarray, mu: float, p: float, u: np.ndarray) -> np.ndarray:
    return grid.laplacian @ u + potential * u - mu * power_nonlinearity(u, p)


def system_energy_values(
    params: ModelParams, grid: Grid, potential: np.ndarray, u: np.ndarray, v: np.ndarray
) -> float:
    coupling = grid.cell_volume * float(np.sum(u * u * v))
    return (
        energy_values(grid, potential, params.mu1, params.p, u)
        + energy_values(grid, potential, params.mu2, params.p, v)
        - 0.5 * params.beta * coupling
    )


def system_residual_values(
    params: ModelParams, grid: Grid, potential: np.ndarray, u: np.ndarray, v: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    g_u = residual_values(grid, potential, params.mu1, params.p, u) - params.beta * u * v
    g_v = residual_values(grid, potential, params.mu2, params.p, v) - 0.5 * params.beta * u * u
    return g_u, g_v


def l2_norm_values(grid: Grid, values: np.ndarray) -> float:
    return float(np.sqrt(grid.cell_volume * np.dot(values, values)))


# ─── Scalar problems ─────────────────────────────────────────────────────────

def energy_single(params: ModelParams, i: int, u: Field) -> float:
    """J_i(u) = ½‖u‖² - (μ_i/p)|u|_p^p."""
    grid = u.grid
    return energy_values(grid, params.potential_values(grid), params.mu(i), params.p, u.values)


def residual_single(params: ModelParams, i: int, u: Field) -> Field:
    """-Δ_h u + Vu - μ_i|u|^{p-2}u."""
    grid = u.grid
    return Field(grid, residual_values(grid, params.potential_values(grid), params.mu(i), params.p, u.values))


def norm_sq(params: ModelParams, u: Field) -> float:
    """‖u‖² with the model's potential."""
    grid = u.grid
    return quadratic_form(grid, u.values, params.potential_values(grid))


@dataclass
class NehariProjection:
    t: float
    projected: Field
    energy: float


def nehari_project(params: ModelParams, i: int, u: Field) -> NehariProjection:
    """
    Scale u onto N_i. t = (‖u‖² / (μ_i|u|_p^p))^{1/(p-2)} maximises s ↦ J_i(su), and
    the maximum is (½ - 1/p)·t^p·μ_i|u|_p^p.
    """
    if u.is_zero():
        raise ValueError("Nehari projection is undefined for u = 0")
    grid, p, mu = u.grid, params.p, params.mu(i)
    quad = quadratic_form(grid, u.values, params.potential_values(grid))
    power = mu * lp_power(grid, u.values, p)
    if not quad > 0:
        raise ValueError(f"‖u‖² = {quad:.3e} is not positive; the ray energy has no maximum")
    t = (quad / power) ** (1.0 / (p - 2.0))
    energy = (0.5 - 1.0 / p) * t ** p * power
    return NehariProjection(t=float(t), projected=u * t, energy=float(energy))


def j_ratio(params: ModelParams, i: int, u: Field) -> float:
    """μ_i|u|_p^p / ‖u‖² (0 for u = 0); equal to 1 exactly on N_i."""
    if u.is_zero():
        return 0.0
    grid = u.grid
    quad = quadratic_form(grid, u.values, params.potential_values(grid))
    return params.mu(i) * lp_power(grid, u.values, params.p) / quad


def c_star(params: ModelParams, i: int, sbar_p: float) -> float:
    """c_i* = μ_i(½ - 1/p)(S̄_p/μ_i)^{p/(p-2)}."""
    if not sbar_p > 0:
        raise ValueError(f"sbar_p must be positive, got {sbar_p!r}")
    p, mu = params.p, params.mu(i)
    return mu * (0.5 - 1.0 / p) * (sbar_p / mu) ** (p / (p - 2.0))


def sbar_from_level(params: ModelParams, i: int, level: float) -> float:
    """Invert c = μ_i(½ - 1/p)(S̄/μ_i)^{p/(p-2)} for S̄."""
    p, mu = params.p, params.mu(i)
    return mu * (level / (mu * (0.5 - 1.0 / p))) ** ((p - 2.0) / p)


def estimate_sbar_p(params: ModelParams, grid: Grid, i: int = 1, controls=None) -> float:
    """
    S̄_p = inf{ ‖u‖²_∞ : |u|_p = 1 } from the ground level c_i^∞ of the limit
    problem V ≡ V∞. The result does not depend on which μ_i is used.
    """
    from src.solvers.ground import solve_ground_state

    limit = params.at_infinity()
    ground = solve_ground_state(limit, i, grid=grid, controls=controls)
    return sbar_from_level(limit, i, ground.level)


# ─── Coupled system ──────────────────────────────────────────────────────────

def energy_system(params: ModelParams, pair: StatePair) -> float:
    """I_β(u, v) = J₁(u) + J₂(v) - (β/2)∫u²v."""
    grid = pair.grid
    return system_energy_values(params, grid, params.potential_values(grid), pair.u.values, pair.v.values)


def residual_system(params: ModelParams, pair: StatePair) -> StatePair:
    grid = pair.grid
    g_u, g_v = system_residual_values(
        params, grid, params.potential_values(grid), pair.u.values, pair.v.values
    )
    return StatePair(Field(grid, g_u), Field(grid, g_v))


def residual_norm(pair: StatePair) -> float:
    """(|g_u|²_2 + |g_v|²_2)^{1/2}."""
    grid = pair.grid
    return float(np.hypot(l2_norm_values(grid, pair.u.values), l2_norm_values(grid, pair.v.values)))


def coupling_integral(pair: StatePair) -> float:
    """∫u²v."""
    grid = pair.grid
    return float(grid.cell_volume * np.sum(pair.u.values ** 2 * pair.v.values))


def pair_norm(params: ModelParams, pair: StatePair) -> float:
    """‖(u, v)‖ = (‖u‖² + ‖v‖²)^{1/2}."""
    return float(np.sqrt(norm_sq(params, pair.u) + norm_sq(params, pair.v)))


def l2_inner(a: StatePair, b: StatePair) -> float:
    grid = a.grid
    return float(grid.cell_volume * (np.dot(a.u.values, b.u.values) + np.dot(a.v.values, b.v.values)))
