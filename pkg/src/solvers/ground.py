"""
Ground states of the scalar equations  -Δu + V(x)u = μ_i|u|^{p-2}u.

The solver is a preconditioned steepest descent on the Nehari manifold:

  u ← P_N( u - τ·(-Δ_h + V∞)^{-1} g(u) ),    g = residual_single

with P_N the closed-form Nehari projection and τ found by backtracking so the
energy never increases. Starting from an even bump the iteration stays even,
which pins the translation orbit of minimisers when V is constant.

Also here: the exact 1D soliton, a shift fit against it, and the ray brackets
t1 < 1 < t2 where J_i(tU) crosses c_i/4.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from src.core.functional import (
    ModelParams,
    energy_single,
    l2_norm_values,
    lp_power,
    residual_values,
)
from src.core.grid import Field, Grid, quadratic_form, shifted_laplacian_solver
from src.utils.errors import BracketError, ConvergenceError, GridMismatchError

logger = logging.getLogger(__name__)

LOG_EVERY = 100


# ─── Descent engine ──────────────────────────────────────────────────────────

@dataclass
class DescentControls:
    tol: float = 1e-8
    max_iter: int = 10_000
    step: float = 1.0
    max_step: float = 1.0
    min_step: float = 1e-10


@dataclass
class DescentResult:
    values: np.ndarray
    level: float
    residual_norm: float
    iterations: int
    energy_trace: list[float] = field(default_factory=list)


def _project(grid: Grid, potential: np.ndarray, mu: float, p: float, u: np.ndarray) -> tuple[np.ndarray, float]:
    quad = quadratic_form(grid, u, potential)
    power = mu * lp_power(grid, u, p)
    if not (quad > 0 and power > 0):
        raise ValueError("cannot project onto the Nehari manifold: ‖u‖² or |u|_p^p is not positive")
    t = (quad / power) ** (1.0 / (p - 2.0))
    return t * u, (0.5 - 1.0 / p) * t ** p * power


def nehari_descent(
    grid: Grid,
    potential: np.ndarray,
    mu: float,
    p: float,
    init: Union[Field, np.ndarray],
    preconditioner,
    controls: Optional[DescentControls] = None,
) -> DescentResult:
    """
    Array-level engine shared by ground states and the Sobolev estimator.

    preconditioner must expose solve(rhs) -> ndarray. Raises ConvergenceError
    when max_iter is hit or the step underflows min_step.
    """
    controls = controls or DescentControls()
    potential = np.broadcast_to(np.asarray(potential, dtype=float), (grid.n_nodes,))
    start = init.values if isinstance(init, Field) else np.asarray(init, dtype=float).reshape(-1)
    if not np.any(start):
        raise ValueError("initial guess must be nonzero")

    u, energy = _project(grid, potential, mu, p, start)
    trace = [energy]
    tau = controls.step

    for iteration in range(controls.max_iter + 1):
        g = residual_values(grid, potential, mu, p, u)
        res = l2_norm_values(grid, g)
        if iteration % LOG_EVERY == 0:
            logger.debug("descent iter %d: J=%.12f |g|=%.3e tau=%.3g", iteration, energy, res, tau)
        if res < controls.tol:
            return DescentResult(u, energy, res, iteration, trace)
        if iteration == controls.max_iter:
            break

        direction = preconditioner.solve(g)
        slack = 1e-13 * abs(energy)
        while True:
            trial, trial_energy = _project(grid, potential, mu, p, u - tau * direction)
            if trial_energy <= energy + slack:
                break
            tau *= 0.5
            if tau < controls.min_step:
                raise ConvergenceError(
                    f"descent step underflow at iteration {iteration} (|g|={res:.3e})",
                    residual_norm=res,
                    iterations=iteration,
                )
        u, energy = trial, trial_energy
        trace.append(energy)
        tau = min(2.0 * tau, controls.max_step)

    raise ConvergenceError(
        f"descent did not reach tol={controls.tol:.1e} in {controls.max_iter} iterations (|g|={res:.3e})",
        residual_norm=res,
        iterations=controls.max_iter,
    )


def gaussian_bump(grid: Grid, width: float = 1.0, amplitude: float = 1.0, center=None) -> Field:
    """amplitude·exp(-|x - center|²/width²), centered at the origin by default."""
    if center is None:
        r2 = grid.radius_sq
    else:
        r2 = np.sum((grid.coordinates - np.asarray(center, dtype=float)) ** 2, axis=1)
    return Field(grid, amplitude * np.exp(-r2 / width ** 2))


def default_initial_guess(params: ModelParams, grid: Grid) -> Field:
    # Every supported potential attains its minimum at the origin.
    return gaussian_bump(grid, width=2.0 / np.sqrt(params.potential.v_infinity))


# ─── Ground states ───────────────────────────────────────────────────────────

@dataclass
class GroundState:
    field: Field
    level: float
    residual_norm: float
    nehari_gap: float
    iterations: int
    index: int = 1
    energy_trace: list[float] = field(default_factory=list, repr=False)

    def norm_sq(self, params: ModelParams) -> float:
        return quadratic_form(self.field.grid, self.field.values, params.potential_values(self.field.grid))


def solve_ground_state(
    params: ModelParams,
    i: int,
    init: Optional[Field] = None,
    *,
    grid: Optional[Grid] = None,
    controls: Optional[DescentControls] = None,
) -> GroundState:
    """Ground state of -Δu + Vu = μ_i|u|^{p-2}u; level c_i = J_i(U)."""
    if init is None and grid is None:
        raise ValueError("solve_ground_state needs an initial field or a grid")
    if init is None:
        init = default_initial_guess(params, grid)
    if grid is not None and init.grid != grid:
        raise GridMismatchError("initial guess lives on a different grid")
    grid = init.grid
    if init.is_zero():
        raise ValueError("initial guess must be nonzero")

    potential = params.potential_values(grid)
    result = nehari_descent(
        grid,
        potential,
        params.mu(i),
        params.p,
        init,
        shifted_laplacian_solver(grid, params.potential.v_infinity),
        controls,
    )
    ground_field = Field(grid, result.values)
    g = residual_values(grid, potential, params.mu(i), params.p, result.values)
    gap = abs(grid.cell_volume * float(np.dot(g, result.values)))
    level = energy_single(params, i, ground_field)
    logger.info("ground state %d: c=%.10f |g|=%.2e after %d iterations", i, level, result.residual_norm, result.iterations)
    return GroundState(
        field=ground_field,
        level=level,
        residual_norm=result.residual_norm,
        nehari_gap=gap,
        iterations=result.iterations,
        index=i,
        energy_trace=result.energy_trace,
    )


# ─── Exact 1D soliton ────────────────────────────────────────────────────────

def soliton_profile(x, p: float, mu: float, v_inf: float) -> np.ndarray:
    """(pV∞/(2μ))^{1/(p-2)} sech^{2/(p-2)}((p-2)√V∞ x / 2), solving -u'' + V∞u = μ|u|^{p-2}u."""
    amplitude = (p * v_inf / (2.0 * mu)) ** (1.0 / (p - 2.0))
    sech = 1.0 / np.cosh(0.5 * (p - 2.0) * np.sqrt(v_inf) * np.asarray(x, dtype=float))
    return amplitude * sech ** (2.0 / (p - 2.0))


def exact_soliton_1d(p: float, mu: float, v_inf: float, grid: Grid) -> Field:
    if grid.dim != 1:
        raise GridMismatchError("the exact soliton is a 1D oracle")
    return Field(grid, soliton_profile(grid.axis, p, mu, v_inf))


@dataclass
class SolitonFit:
    shift: float
    max_error: float


def fit_soliton_shift(field_: Field, p: float, mu: float, v_inf: float) -> SolitonFit:
    """Translation x0 maximising ∫u(x)·s(x - x0), and max|u - s(· - x0)| there."""
    grid = field_.grid
    if grid.dim != 1:
        raise GridMismatchError("soliton shift fit needs a 1D field")
    x = grid.axis
    u = field_.values
    peak = float(x[int(np.argmax(np.abs(u)))])

    def negative_correlation(x0: float) -> float:
        return -float(np.dot(u, soliton_profile(x - x0, p, mu, v_inf)))

    found = minimize_scalar(
        negative_correlation,
        bounds=(peak - 2.0 * grid.h, peak + 2.0 * grid.h),
        method="bounded",
        options={"xatol": 1e-12},
    )
    shift = float(found.x)
    error = float(np.max(np.abs(u - soliton_profile(x - shift, p, mu, v_inf))))
    return SolitonFit(shift=shift, max_error=error)


# ─── Ray brackets ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Bracket:
    t1: float
    t2: float


def ray_energy(p: float, level: float, t: float) -> float:
    """J_i(tU) for U on the Nehari manifold at level c: c·p/(p-2)·(t² - (2/p)t^p)."""
    return level * p / (p - 2.0) * (t * t - 2.0 / p * t ** p)


def bracket_ts(params: ModelParams, i: int, ground: GroundState) -> Bracket:
    """t1 < 1 < t2 with J_i(tU) = c_i/4, and J_i(tU) <= c_i/4 outside (t1, t2)."""
    p, c = params.p, ground.level
    if not (np.isfinite(c) and c > 0):
        raise BracketError(f"ground level must be positive and finite, got {c!r}")

    def excess(t: float) -> float:
        return ray_energy(p, c, t) - 0.25 * c

    hi = 2.0
    for _ in range(60):
        if excess(hi) < 0:
            break
        hi *= 2.0
    else:
        raise BracketError("no upper crossing of c/4 along the ray")

    t1 = brentq(excess, 0.0, 1.0, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    t2 = brentq(excess, 1.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    # The ray identity only holds on N_i; compare with direct evaluation.
    for t in (t1, t2):
        direct = energy_single(params, i, ground.field * t)
        if abs(direct - 0.25 * c) > 1e-6 * c:
            raise BracketError(
                f"J_{i}({t:.6f}·U) = {direct:.8f} differs from c/4 = {0.25 * c:.8f}; ground state not converged"
            )
    logger.debug("bracket %d: t1=%.10f t2=%.10f", i, t1, t2)
    return Bracket(t1=float(t1), t2=float(t2))
