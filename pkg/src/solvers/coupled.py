"""
The coupled system for β > 0: Newton continuation from the decoupled ground
pair (U, V), and numerical estimates of the two minimax levels

  m_β = max_{(t,s) ∈ Q} I_β(tU, sV)         over Q = [0, t2] × [0, s2]
  c_β = inf_{γ ∈ Γ} max_{(t,s) ∈ Q} I_β(γ(t,s))

c_β is bounded from above by deforming a discretised copy of the reference
surface γ̄(t,s) = (tU, sV); nodes outside (t1,t2) × (s1,s2) stay pinned to γ̄.

All linear algebra is matrix-free: the Newton Jacobian is the symmetric
Hessian of I_β, solved with preconditioned MINRES.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.sparse.linalg import LinearOperator, minres

from src.core.functional import (
    ModelParams,
    StatePair,
    coupling_integral,
    energy_system,
    j_ratio,
    l2_norm_values,
    lp_power,
    norm_sq,
    pair_norm,
    system_energy_values,
    system_residual_values,
)
from src.core.grid import Field, Grid, shifted_laplacian_solver
from src.solvers.ground import Bracket, GroundState
from src.utils.errors import (
    ContinuationError,
    ConvergenceError,
    NewtonDivergenceError,
    SemitrivialCollapseError,
)

logger = logging.getLogger(__name__)

# Snap the surface sample closest to 1 onto 1 so (U, V) itself is a node.
SNAP_TO_ONE = True


# ─── Reference pair ──────────────────────────────────────────────────────────

@dataclass
class ReferencePair:
    """The decoupled ground pair (U, V) with its levels."""
    first: GroundState
    second: GroundState

    @property
    def pair(self) -> StatePair:
        return StatePair(self.first.field, self.second.field)

    @property
    def grid(self) -> Grid:
        return self.first.field.grid

    @property
    def c1(self) -> float:
        return self.first.level

    @property
    def c2(self) -> float:
        return self.second.level

    @property
    def level_sum(self) -> float:
        """m₀ = c₁ + c₂."""
        return self.first.level + self.second.level


def separation_radius(p: float, c1: float, c2: float) -> float:
    """d₁ = ½ min_i ‖U_i‖, with ‖U_i‖ = (2p·c_i/(p-2))^{1/2} on the Nehari manifold."""
    return 0.5 * min(np.sqrt(2.0 * p * c / (p - 2.0)) for c in (c1, c2))


def semitrivial_threshold(p: float, c1: float, c2: float) -> float:
    """A component whose H-norm is at most d₁/2 counts as vanished."""
    return 0.5 * separation_radius(p, c1, c2)


# ─── Preconditioner ──────────────────────────────────────────────────────────

class PairPreconditioner:
    """Block diag((-Δ_h + V∞)^{-1}, (-Δ_h + V∞)^{-1}) on stacked (u, v) vectors."""

    def __init__(self, grid: Grid, shift: float):
        self.grid = grid
        self.block = shifted_laplacian_solver(grid, float(shift))

    def solve(self, flat: np.ndarray) -> np.ndarray:
        n = self.grid.n_nodes
        return np.concatenate([self.block.solve(flat[:n]), self.block.solve(flat[n:])])

    def as_operator(self) -> LinearOperator:
        size = 2 * self.grid.n_nodes
        return LinearOperator((size, size), matvec=self.solve, dtype=float)


def jacobian_operator(params: ModelParams, grid: Grid, potential: np.ndarray, u: np.ndarray, v: np.ndarray) -> LinearOperator:
    """
    Hessian of I_β at (u, v), applied to (φ, ψ):
      (-Δφ + Vφ - (p-1)μ₁|u|^{p-2}φ - βvφ - βuψ,
       -Δψ + Vψ - (p-1)μ₂|v|^{p-2}ψ - βuφ)
    """
    n = grid.n_nodes
    p, beta = params.p, params.beta
    lap = grid.laplacian
    diag_u = potential - (p - 1.0) * params.mu1 * np.abs(u) ** (p - 2.0) - beta * v
    diag_v = potential - (p - 1.0) * params.mu2 * np.abs(v) ** (p - 2.0)

    def matvec(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x).reshape(-1)
        phi, psi = x[:n], x[n:]
        return np.concatenate([
            lap @ phi + diag_u * phi - beta * u * psi,
            lap @ psi + diag_v * psi - beta * u * phi,
        ])

    return LinearOperator((2 * n, 2 * n), matvec=matvec, dtype=float)


# ─── Newton solve ────────────────────────────────────────────────────────────

@dataclass
class NewtonControls:
    tol: float = 1e-8
    max_iter: int = 50
    linear_rtol: float = 1e-3
    linear_maxiter: int = 1000
    min_damping: float = 1.0 / 1024.0
    sufficient_decrease: float = 1e-4


@dataclass
class SolveReport:
    beta: float
    pair: StatePair = field(repr=False)
    energy: float
    residual_norm: float
    newton_iters: int
    dist_to_uv: float
    norm_u: float
    norm_v: float

    def high_energy_margin(self, reference: ReferencePair) -> float:
        """I_β(ū, v̄) - max(c₁, c₂); positive means above both semitrivial levels."""
        return self.energy - max(reference.c1, reference.c2)


def _residual_norm(params: ModelParams, grid: Grid, potential: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, float]:
    n = grid.n_nodes
    g_u, g_v = system_residual_values(params, grid, potential, x[:n], x[n:])
    norm = float(np.hypot(l2_norm_values(grid, g_u), l2_norm_values(grid, g_v)))
    return np.concatenate([g_u, g_v]), norm


def _make_report(params: ModelParams, pair: StatePair, reference: ReferencePair, residual: float, iters: int) -> SolveReport:
    return SolveReport(
        beta=params.beta,
        pair=pair,
        energy=energy_system(params, pair),
        residual_norm=residual,
        newton_iters=iters,
        dist_to_uv=pair_norm(params, pair - reference.pair),
        norm_u=float(np.sqrt(norm_sq(params, pair.u))),
        norm_v=float(np.sqrt(norm_sq(params, pair.v))),
    )


def newton_solve_at_beta(
    params: ModelParams,
    initial_pair: StatePair,
    reference: ReferencePair,
    controls: Optional[NewtonControls] = None,
) -> SolveReport:
    """
    Damped inexact Newton on residual_system at params.beta.

    Raises NewtonDivergenceError when the line search stalls or the iteration
    budget runs out, and SemitrivialCollapseError when the converged pair has a
    component at or below the d₁/2 threshold.
    """
    controls = controls or NewtonControls()
    if initial_pair.u.is_zero() or initial_pair.v.is_zero():
        raise ValueError("initial pair must be nonzero in both components")

    grid = initial_pair.grid
    n = grid.n_nodes
    potential = params.potential_values(grid)
    preconditioner = PairPreconditioner(grid, params.potential.v_infinity).as_operator()

    x = initial_pair.flat()
    residual, res_norm = _residual_norm(params, grid, potential, x)
    iters = 0
    while res_norm >= controls.tol:
        if iters == controls.max_iter:
            raise NewtonDivergenceError(
                f"Newton did not converge in {controls.max_iter} iterations at beta={params.beta:.6g} "
                f"(|F|={res_norm:.3e})",
                residual_norm=res_norm,
                iterations=iters,
            )
        iters += 1
        jac = jacobian_operator(params, grid, potential, x[:n], x[n:])
        step, info = minres(
            jac, -residual, M=preconditioner, rtol=controls.linear_rtol, maxiter=controls.linear_maxiter
        )
        if info < 0 or not np.all(np.isfinite(step)):
            raise NewtonDivergenceError(
                f"linear solve broke down (minres info={info}) at beta={params.beta:.6g}",
                residual_norm=res_norm,
                iterations=iters,
            )

        alpha = 1.0
        while True:
            trial = x + alpha * step
            if np.all(np.isfinite(trial)):
                trial_residual, trial_norm = _residual_norm(params, grid, potential, trial)
                if trial_norm <= (1.0 - controls.sufficient_decrease * alpha) * res_norm:
                    break
            alpha *= 0.5
            if alpha < controls.min_damping:
                raise NewtonDivergenceError(
                    f"residual line search stalled at beta={params.beta:.6g} (|F|={res_norm:.3e})",
                    residual_norm=res_norm,
                    iterations=iters,
                )
        x, residual, res_norm = trial, trial_residual, trial_norm
        logger.debug("newton beta=%.4g iter %d: |F|=%.3e damping=%.4g", params.beta, iters, res_norm, alpha)

    report = _make_report(params, StatePair.from_flat(grid, x), reference, res_norm, iters)
    threshold = semitrivial_threshold(params.p, reference.c1, reference.c2)
    if min(report.norm_u, report.norm_v) <= threshold:
        raise SemitrivialCollapseError(
            f"solution at beta={params.beta:.6g} is semitrivial: "
            f"‖u‖={report.norm_u:.3e}, ‖v‖={report.norm_v:.3e}, threshold {threshold:.3e}",
            report=report,
        )
    return report


def continuation_sweep(
    params: ModelParams,
    reference: ReferencePair,
    beta_list: Sequence[float],
    controls: Optional[NewtonControls] = None,
) -> list[SolveReport]:
    """Solve along ascending β, warm-starting each solve from the previous solution."""
    betas = [float(b) for b in beta_list]
    if not betas:
        raise ValueError("beta_list is empty")
    if any(b > a for a, b in zip(betas[1:], betas[:-1])):
        raise ValueError("beta_list must be sorted ascending")

    reports: list[SolveReport] = []
    current = reference.pair
    for beta in betas:
        try:
            report = newton_solve_at_beta(params.with_beta(beta), current, reference, controls)
        except (ConvergenceError, SemitrivialCollapseError) as exc:
            raise ContinuationError(beta, reports, exc) from exc
        logger.info(
            "beta=%.6g: I=%.10f dist=%.3e (%d Newton steps)",
            beta, report.energy, report.dist_to_uv, report.newton_iters,
        )
        reports.append(report)
        current = report.pair
    return reports


# ─── Reference surface and m_β ───────────────────────────────────────────────

@dataclass(frozen=True)
class RayCoefficients:
    """I_β(tU, sV) = a1·t² - b1·t^p + a2·s² - b2·s^p - (β/2)·K·t²s."""
    a1: float
    b1: float
    a2: float
    b2: float
    coupling: float

    @classmethod
    def from_reference(cls, params: ModelParams, reference: ReferencePair) -> "RayCoefficients":
        grid = reference.grid
        U, V = reference.first.field, reference.second.field
        return cls(
            a1=0.5 * norm_sq(params, U),
            b1=params.mu1 / params.p * lp_power(grid, U.values, params.p),
            a2=0.5 * norm_sq(params, V),
            b2=params.mu2 / params.p * lp_power(grid, V.values, params.p),
            coupling=coupling_integral(reference.pair),
        )

    def energy(self, params: ModelParams, t, s):
        p, beta = params.p, params.beta
        return (
            self.a1 * t ** 2 - self.b1 * t ** p
            + self.a2 * s ** 2 - self.b2 * s ** p
            - 0.5 * beta * self.coupling * t ** 2 * s
        )

    def gradient(self, params: ModelParams, t: float, s: float) -> np.ndarray:
        p, beta, k = params.p, params.beta, self.coupling
        return np.array([
            2 * self.a1 * t - p * self.b1 * t ** (p - 1) - beta * k * t * s,
            2 * self.a2 * s - p * self.b2 * s ** (p - 1) - 0.5 * beta * k * t ** 2,
        ])


@dataclass
class SurfaceMaximum:
    m_beta: float
    argmax: tuple[float, float]


def surface_max_m_beta(
    params: ModelParams,
    reference: ReferencePair,
    brackets: tuple[Bracket, Bracket],
    resolution: int = 201,
) -> SurfaceMaximum:
    """max over Q of I_β(tU, sV): dense sampling, then bounded L-BFGS-B refinement."""
    coeffs = RayCoefficients.from_reference(params, reference)
    t2, s2 = brackets[0].t2, brackets[1].t2
    t = np.linspace(0.0, t2, resolution)
    s = np.linspace(0.0, s2, resolution)
    values = coeffs.energy(params, t[:, None], s[None, :])
    j, k = np.unravel_index(int(np.argmax(values)), values.shape)
    best = (float(values[j, k]), (float(t[j]), float(s[k])))

    refined = minimize(
        lambda x: -coeffs.energy(params, x[0], x[1]),
        x0=np.array([t[j], s[k]]),
        jac=lambda x: -coeffs.gradient(params, x[0], x[1]),
        method="L-BFGS-B",
        bounds=[(0.0, t2), (0.0, s2)],
        options={"ftol": 1e-15, "gtol": 1e-12},
    )
    if -refined.fun > best[0]:
        best = (float(-refined.fun), (float(refined.x[0]), float(refined.x[1])))
    return SurfaceMaximum(m_beta=best[0], argmax=best[1])


# ─── Discretised surface and its deformation ─────────────────────────────────

def _samples(upper: float, count: int) -> np.ndarray:
    samples = np.linspace(0.0, upper, count)
    if SNAP_TO_ONE and upper > 1.0:
        samples[int(np.argmin(np.abs(samples - 1.0)))] = 1.0
    return samples


class MinimaxSurface:
    """
    γ: Q → H on an n_t × n_s node lattice. Only deformed nodes are stored; every
    other node is γ̄(t_j, s_k) = (t_j·U, s_k·V).
    """

    def __init__(self, params: ModelParams, reference: ReferencePair, brackets: tuple[Bracket, Bracket], n_t: int = 33, n_s: int = 33):
        if n_t < 3 or n_s < 3:
            raise ValueError("surface needs at least 3 samples per direction")
        self.params = params
        self.reference = reference
        self.brackets = brackets
        bt, bs = brackets
        self.t_samples = _samples(bt.t2, n_t)
        self.s_samples = _samples(bs.t2, n_s)
        inside_t = (self.t_samples > bt.t1) & (self.t_samples < bt.t2)
        inside_s = (self.s_samples > bs.t1) & (self.s_samples < bs.t2)
        self.frozen = ~(inside_t[:, None] & inside_s[None, :])

        norm_u = np.sqrt(norm_sq(params, reference.first.field))
        norm_v = np.sqrt(norm_sq(params, reference.second.field))
        c_bar = max(norm_u, norm_v)
        c_zero = np.hypot(bt.t2 * norm_u, bs.t2 * norm_v)
        self.norm_cap = float(2.0 * c_bar + c_zero)

        coeffs = RayCoefficients.from_reference(params, reference)
        self._energies = coeffs.energy(params, self.t_samples[:, None], self.s_samples[None, :])
        self._nodes: dict[tuple[int, int], StatePair] = {}

    @classmethod
    def from_reference(cls, params, reference, brackets, n_t: int = 33, n_s: int = 33) -> "MinimaxSurface":
        return cls(params, reference, brackets, n_t, n_s)

    @property
    def shape(self) -> tuple[int, int]:
        return self._energies.shape

    def node(self, j: int, k: int) -> StatePair:
        stored = self._nodes.get((j, k))
        if stored is not None:
            return stored
        return self.reference.pair.scaled(self.t_samples[j], self.s_samples[k])

    def energies(self) -> np.ndarray:
        view = self._energies.view()
        view.flags.writeable = False
        return view

    def max_energy(self) -> float:
        return float(np.max(self._energies))

    def set_node(self, j: int, k: int, pair: StatePair, energy: Optional[float] = None) -> None:
        if self.frozen[j, k]:
            raise ValueError(f"node ({j}, {k}) is pinned to the reference surface")
        if pair_norm(self.params, pair) > self.norm_cap * (1.0 + 1e-12):
            raise ValueError("node exceeds the surface norm cap")
        self._nodes[(j, k)] = pair
        self._energies[j, k] = energy_system(self.params, pair) if energy is None else energy

    @property
    def deformed_nodes(self) -> int:
        return len(self._nodes)


@dataclass
class FlowControls:
    step: float = 0.5
    max_iter: int = 100
    band: float = 0.05
    max_halvings: int = 8


@dataclass
class MinimaxEstimate:
    c_beta_estimate: float
    trace: list[float] = field(default_factory=list)
    exhausted: bool = False
    iterations: int = 0


def _rescale_to_ratio(params: ModelParams, i: int, component: np.ndarray, grid: Grid, target: float) -> np.ndarray:
    current = j_ratio(params, i, Field(grid, component))
    if current <= 0 or target <= 0:
        return component
    return component * (target / current) ** (1.0 / (params.p - 2.0))


def _deform_node(
    surface: MinimaxSurface,
    j: int,
    k: int,
    potential: np.ndarray,
    preconditioner: PairPreconditioner,
    controls: FlowControls,
) -> bool:
    """One preconditioned descent step on node (j,k), keeping both Nehari ratios."""
    params = surface.params
    pair = surface.node(j, k)
    grid = pair.grid
    n = grid.n_nodes
    energy = float(surface.energies()[j, k])
    ratio_u = j_ratio(params, 1, pair.u)
    ratio_v = j_ratio(params, 2, pair.v)

    g_u, g_v = system_residual_values(params, grid, potential, pair.u.values, pair.v.values)
    direction = preconditioner.solve(np.concatenate([g_u, g_v]))
    x = pair.flat()

    tau = controls.step
    for _ in range(controls.max_halvings + 1):
        trial = x - tau * direction
        u = _rescale_to_ratio(params, 1, trial[:n], grid, ratio_u)
        v = _rescale_to_ratio(params, 2, trial[n:], grid, ratio_v)
        candidate = StatePair(Field(grid, u), Field(grid, v))
        norm = pair_norm(params, candidate)
        if norm > surface.norm_cap:
            candidate = candidate.scaled(surface.norm_cap / norm, surface.norm_cap / norm)
        trial_energy = system_energy_values(params, grid, potential, candidate.u.values, candidate.v.values)
        if trial_energy < energy:
            surface.set_node(j, k, candidate, trial_energy)
            return True
        tau *= 0.5
    return False


def surface_minimax_c_beta(
    params: ModelParams,
    surface: MinimaxSurface,
    controls: Optional[FlowControls] = None,
) -> MinimaxEstimate:
    """
    Deform the non-frozen nodes within `band` of the surface max and record the
    max after every sweep. The estimate is the smallest recorded max, an upper
    bound for c_β that never exceeds the initial surface max.
    """
    controls = controls or FlowControls()
    if surface.params != params:
        raise ValueError("surface was built for different model parameters")
    grid = surface.reference.grid
    potential = params.potential_values(grid)
    preconditioner = PairPreconditioner(grid, params.potential.v_infinity)

    trace: list[float] = []
    iteration = 0
    exhausted = True
    while True:
        energies = surface.energies()
        top = float(np.max(energies))
        trace.append(top)
        if iteration == controls.max_iter:
            break
        band = (energies >= top - controls.band * abs(top)) & ~surface.frozen
        moved = 0
        for j, k in zip(*np.nonzero(band)):
            moved += _deform_node(surface, int(j), int(k), potential, preconditioner, controls)
        iteration += 1
        if not moved:
            exhausted = False
            break
        logger.debug("surface flow sweep %d: max=%.10f, %d nodes moved", iteration, top, moved)

    estimate = min(trace)
    logger.info("c_beta estimate at beta=%.6g: %.10f after %d sweeps", params.beta, estimate, iteration)
    return MinimaxEstimate(c_beta_estimate=estimate, trace=trace, exhausted=exhausted, iterations=iteration)


# ─── Gradient gap probe ──────────────────────────────────────────────────────

@dataclass
class GapProbe:
    delta_estimate: Optional[float]
    kept: int
    n_samples: int


def dual_norm(grid: Grid, preconditioner: PairPreconditioner, residual: np.ndarray) -> float:
    """(h^N ⟨g, (-Δ_h + V∞)^{-1} g⟩)^{1/2}, the norm of g as a functional on H."""
    return float(np.sqrt(max(grid.cell_volume * np.dot(residual, preconditioner.solve(residual)), 0.0)))


def gradient_gap_probe(
    params: ModelParams,
    reference: ReferencePair,
    d: float,
    n_samples: int = 200,
    *,
    m_beta: float,
    seed: int = 12345,
    noise_weight: float = 0.5,
) -> GapProbe:
    """
    Monte-Carlo witness for inf ‖I'_β‖ over the annulus d/2 <= dist((u,v), (U,V)) <= d
    intersected with {I_β <= m_β}.

    Directions mix the two scaling directions (U, 0), (0, V) with a smoothed
    random perturbation; every sample consumes the same random draws whether or
    not it passes the energy filter, so the minimum is nonincreasing in n_samples.
    """
    threshold = separation_radius(params.p, reference.c1, reference.c2) / 2.0
    if not 0 < d < threshold:
        raise ValueError(f"d must lie in (0, d1/2) = (0, {threshold:.6g}), got {d!r}")
    if n_samples < 100:
        raise ValueError(f"n_samples must be at least 100, got {n_samples!r}")

    grid = reference.grid
    n = grid.n_nodes
    potential = params.potential_values(grid)
    preconditioner = PairPreconditioner(grid, params.potential.v_infinity)
    base = reference.pair
    U, V = base.u.values, base.v.values
    e_u = np.concatenate([U, np.zeros(n)]) / np.sqrt(norm_sq(params, base.u))
    e_v = np.concatenate([np.zeros(n), V]) / np.sqrt(norm_sq(params, base.v))

    rng = np.random.default_rng(seed)
    best: Optional[float] = None
    kept = 0
    for _ in range(n_samples):
        a, b = rng.standard_normal(2)
        weight = rng.uniform(0.0, noise_weight)
        noise = preconditioner.solve(rng.standard_normal(2 * n))
        radius = rng.uniform(0.5 * d, d)

        noise_norm = pair_norm(params, StatePair.from_flat(grid, noise))
        direction = a * e_u + b * e_v + weight * noise / noise_norm
        length = pair_norm(params, StatePair.from_flat(grid, direction))
        if length == 0:
            continue
        sample = base.flat() + radius * direction / length
        u, v = sample[:n], sample[n:]
        if system_energy_values(params, grid, potential, u, v) > m_beta:
            continue
        kept += 1
        g_u, g_v = system_residual_values(params, grid, potential, u, v)
        score = dual_norm(grid, preconditioner, np.concatenate([g_u, g_v]))
        best = score if best is None else min(best, score)

    if best is None:
        logger.warning("gradient gap probe: none of %d samples passed I_beta <= m_beta", n_samples)
    return GapProbe(delta_estimate=best, kept=kept, n_samples=n_samples)
