"""
Admissible potentials V(x) and numerical checks of the two hypotheses on them.

  (V1)  V(x) <= V∞ := lim_{|x|→∞} V(x), with V∞ > 0
  (V0)  ∫ |V⁻(x)|^{N/2} < S,   V⁻ := max(-V, 0),  S the Sobolev constant of D^{1,2}

Three families, one witness per hypothesis path:
  constant       V ≡ V∞                       (exact-soliton oracles)
  gaussian_well  V = V∞ - a·exp(-|x|²/w²)     ((V1) holds for a >= 0)
  sign_changing  same formula with a > V∞     (min V < 0, exercises V⁻ ≠ 0)

(V0) only reads as intended for N = 3; in 1D/2D the checker reports
"not applicable" instead of inventing a bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from src.core.grid import Field, Grid, integrate
from src.utils.errors import GridMismatchError

logger = logging.getLogger(__name__)

# Sharp constant of |∇u|²_2 >= S |u|²_{2*} in R³ (attained by Aubin–Talenti bubbles).
LITERATURE_SOBOLEV_S = 3.0 * (math.pi / 2.0) ** (4.0 / 3.0)


class PotentialVariant(str, Enum):
    CONSTANT = "constant"
    GAUSSIAN_WELL = "gaussian_well"
    SIGN_CHANGING = "sign_changing"


@dataclass(frozen=True)
class PotentialSpec:
    """Parametric potential; GaussianWell/SignChanging: V = V∞ - a·exp(-|x|²/w²)."""
    variant: PotentialVariant = PotentialVariant.CONSTANT
    v_infinity: float = 1.0
    depth: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "variant", PotentialVariant(self.variant))
        if not self.v_infinity > 0:
            raise ValueError(f"v_infinity must be positive, got {self.v_infinity!r}")
        if not self.width > 0:
            raise ValueError(f"width must be positive, got {self.width!r}")
        if self.variant is PotentialVariant.CONSTANT and self.depth != 0:
            raise ValueError("constant potential must have depth 0")
        if self.variant is PotentialVariant.SIGN_CHANGING and not self.depth > self.v_infinity:
            raise ValueError("sign_changing potential needs depth > v_infinity")

    @property
    def is_constant(self) -> bool:
        return self.variant is PotentialVariant.CONSTANT or self.depth == 0

    def __call__(self, x) -> np.ndarray:
        """Evaluate on points x of shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        if self.variant is PotentialVariant.CONSTANT:
            return np.full(x.shape[:-1], self.v_infinity)
        r2 = np.sum(x ** 2, axis=-1)
        return self.v_infinity - self.depth * np.exp(-r2 / self.width ** 2)

    def sample(self, grid: Grid) -> np.ndarray:
        return _sample_on_grid(self, grid)

    def as_constant(self) -> "PotentialSpec":
        """The limit problem V ≡ V∞."""
        return PotentialSpec(PotentialVariant.CONSTANT, v_infinity=self.v_infinity)


@lru_cache(maxsize=64)
def _sample_on_grid(spec: PotentialSpec, grid: Grid) -> np.ndarray:
    if spec.variant is PotentialVariant.CONSTANT:
        values = np.full(grid.n_nodes, spec.v_infinity)
    else:
        values = spec.v_infinity - spec.depth * np.exp(-grid.radius_sq / spec.width ** 2)
    values.setflags(write=False)
    return values


def eval_potential(spec: PotentialSpec, x) -> float:
    """V at a single point x ∈ R^dim (a scalar is read as a 1D point)."""
    point = np.atleast_1d(np.asarray(x, dtype=float))
    return float(spec(point[np.newaxis, :])[0])


# ─── Hypothesis checks ───────────────────────────────────────────────────────

@dataclass
class V1Report:
    holds: bool
    max_violation: float


@dataclass
class V0Report:
    applicable: bool
    integral: Optional[float]
    bound: float
    holds: Optional[bool]

    @property
    def verdict(self) -> str:
        if not self.applicable:
            return "not applicable"
        return "holds" if self.holds else "fails"


def check_v1(spec: PotentialSpec, grid: Grid) -> V1Report:
    """V(x) <= V∞ at every node, tolerance 0."""
    excess = spec.sample(grid) - spec.v_infinity
    max_violation = float(max(np.max(excess), 0.0))
    return V1Report(holds=bool(max_violation == 0.0), max_violation=max_violation)


def negative_part_integral(spec: PotentialSpec, grid: Grid) -> float:
    """∫ max(-V, 0)^{N/2} by the rectangle rule."""
    negative = np.maximum(-spec.sample(grid), 0.0)
    return integrate(grid, Field(grid, negative ** (grid.dim / 2.0)))


def check_v0(spec: PotentialSpec, grid: Grid, sobolev_s: float) -> V0Report:
    if not sobolev_s > 0:
        raise ValueError(f"sobolev_s must be positive, got {sobolev_s!r}")
    if grid.dim != 3:
        return V0Report(applicable=False, integral=None, bound=sobolev_s, holds=None)
    value = negative_part_integral(spec, grid)
    return V0Report(applicable=True, integral=value, bound=sobolev_s, holds=bool(value < sobolev_s))


# ─── Sobolev constant ────────────────────────────────────────────────────────

@dataclass
class SobolevEstimate:
    mesh_widths: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    extrapolated: float = float("nan")

    @property
    def finest(self) -> float:
        return self.values[int(np.argmin(self.mesh_widths))]


def sobolev_quotient(grid: Grid, field_: Field) -> float:
    """∫|∇_h u|² / |u|²_6, invariant under u → λu."""
    if grid.dim != 3:
        raise GridMismatchError("the Sobolev quotient is defined for dim = 3")
    values = field_.values
    gradient_term = grid.cell_volume * float(np.dot(values, grid.laplacian @ values))
    l6 = (grid.cell_volume * float(np.sum(values ** 6))) ** (1.0 / 6.0)
    if l6 == 0:
        raise ValueError("quotient undefined for the zero field")
    return gradient_term / l6 ** 2


def sobolev_constant(
    grids: Sequence[Grid], tol: float = 1e-6, max_iter: int = 5000
) -> SobolevEstimate:
    """
    Minimise the Sobolev quotient on each grid with the Nehari-constrained descent
    used for ground states (p = 2* = 6, V ≡ 0), then extrapolate linearly in h².

    Grid minimisers concentrate at the mesh scale, so every value and the
    extrapolation lie below the sharp constant; treat the result as a lower estimate.
    """
    from src.solvers.ground import DescentControls, gaussian_bump, nehari_descent
    from src.core.grid import shifted_laplacian_solver

    estimate = SobolevEstimate()
    for grid in sorted(grids, key=lambda g: -g.h):
        if grid.dim != 3:
            raise GridMismatchError("sobolev_constant needs 3D grids")
        result = nehari_descent(
            grid,
            potential=np.zeros(grid.n_nodes),
            mu=1.0,
            p=6.0,
            init=gaussian_bump(grid, width=grid.half_width / 2.0),
            preconditioner=shifted_laplacian_solver(grid, 0.0),
            controls=DescentControls(tol=tol, max_iter=max_iter),
        )
        value = sobolev_quotient(grid, Field(grid, result.values))
        logger.debug("Sobolev quotient on n=%d: %.8f", grid.n_per_dim, value)
        estimate.mesh_widths.append(grid.h)
        estimate.values.append(value)

    if len(estimate.values) >= 2:
        slope, intercept = np.polyfit(np.square(estimate.mesh_widths), estimate.values, 1)
        estimate.extrapolated = float(intercept)
    else:
        estimate.extrapolated = estimate.values[0]
    return estimate
