"""
Tests for src/solvers/ground.py

Covers:
  - solve_ground_state: soliton reproduction, norm identity across dimensions,
    potentials and exponents, μ scaling, threshold strictness, level ordering,
    monotone descent, failure modes
  - exact_soliton_1d and fit_soliton_shift
  - bracket_ts: roots against an independent bisection
"""

import numpy as np
import pytest

from src.core.functional import ModelParams, c_star, energy_single, estimate_sbar_p, j_ratio
from src.core.grid import Field, build_grid
from src.core.potential import PotentialSpec
from src.solvers.ground import (
    DescentControls,
    GroundState,
    bracket_ts,
    exact_soliton_1d,
    fit_soliton_shift,
    gaussian_bump,
    ray_energy,
    solve_ground_state,
)
from src.utils.errors import BracketError, ConvergenceError, GridMismatchError
from tests.conftest import SOLITON_LEVEL, SOLITON_NORM_SQ, TIGHT

WELL = PotentialSpec("gaussian_well", v_infinity=1.0, depth=0.5, width=2.0)


def _bisect(f, lo, hi, tol=1e-13):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if (fmid < 0) == (flo < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ─── Soliton reproduction ────────────────────────────────────────────────────

class TestSolitonReproduction:
    def test_level(self, ground_fine):
        assert ground_fine.level == pytest.approx(SOLITON_LEVEL, abs=1e-3)

    def test_profile_after_shift(self, ground_fine):
        fit = fit_soliton_shift(ground_fine.field, 3.0, 1.0, 1.0)
        assert fit.max_error < 1e-2
        assert abs(fit.shift) < 1e-6

    def test_converged(self, ground_fine):
        assert ground_fine.residual_norm < 1e-10
        assert ground_fine.nehari_gap < 1e-8
        assert ground_fine.level > 0

    def test_norm(self, params_1d, ground_fine):
        assert ground_fine.norm_sq(params_1d) == pytest.approx(SOLITON_NORM_SQ, abs=1e-2)

    def test_even(self, ground_fine):
        values = ground_fine.field.values
        assert np.allclose(values, values[::-1], atol=1e-12)


# ─── Norm identity and Nehari membership ─────────────────────────────────────

GRIDS = {1: build_grid(1, 20.0, 511), 2: build_grid(2, 10.0, 63)}


class TestNormIdentity:
    @pytest.mark.parametrize("dim", [1, 2])
    @pytest.mark.parametrize("potential", [PotentialSpec(), WELL], ids=["constant", "gaussian_well"])
    @pytest.mark.parametrize("p", [2.5, 3.0, 4.0])
    def test_identity(self, dim, potential, p):
        params = ModelParams(dim=dim, p=p, potential=potential)
        state = solve_ground_state(params, 1, grid=GRIDS[dim], controls=TIGHT)
        identity = 2.0 * p * state.level / (p - 2.0)
        assert state.norm_sq(params) == pytest.approx(identity, rel=1e-6)
        assert j_ratio(params, 1, state.field) == pytest.approx(1.0, abs=1e-6)


# ─── Scaling, thresholds, ordering ───────────────────────────────────────────

class TestLevels:
    def test_mu_scaling(self, coarse_grid_1d):
        base = solve_ground_state(ModelParams(dim=1, p=3.0), 1, grid=coarse_grid_1d, controls=TIGHT)
        scaled = solve_ground_state(ModelParams(dim=1, p=3.0, mu1=4.0), 1, grid=coarse_grid_1d, controls=TIGHT)
        # c(μ) = μ^{-2/(p-2)} c(1)
        assert scaled.level == pytest.approx(base.level / 16.0, rel=1e-6)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_well_strictly_below_threshold(self, dim):
        params = ModelParams(dim=dim, p=3.0, potential=WELL)
        state = solve_ground_state(params, 1, grid=GRIDS[dim], controls=TIGHT)
        threshold = c_star(params, 1, estimate_sbar_p(params, GRIDS[dim], controls=TIGHT))
        assert threshold - state.level > 1e-3

    def test_zero_depth_recovers_threshold(self, coarse_grid_1d):
        params = ModelParams(dim=1, p=3.0, potential=PotentialSpec("gaussian_well", depth=0.0, width=2.0))
        state = solve_ground_state(params, 1, grid=coarse_grid_1d, controls=TIGHT)
        threshold = c_star(params, 1, estimate_sbar_p(params, coarse_grid_1d, controls=TIGHT))
        assert state.level == pytest.approx(threshold, abs=1e-3)

    def test_level_ordering(self, coarse_grid_1d, reference_coarse):
        well = solve_ground_state(ModelParams(dim=1, p=3.0, potential=WELL), 1, grid=coarse_grid_1d, controls=TIGHT)
        assert well.level < reference_coarse.c1

    def test_energy_trace_nonincreasing(self, ground_fine):
        trace = np.asarray(ground_fine.energy_trace)
        slack = 1e-13 * np.abs(trace[:-1])
        assert np.all(np.diff(trace) <= slack)


# ─── Failure modes ───────────────────────────────────────────────────────────

class TestFailures:
    def test_zero_init(self, params_1d, coarse_grid_1d):
        with pytest.raises(ValueError):
            solve_ground_state(params_1d, 1, Field.zeros(coarse_grid_1d))

    def test_needs_grid_or_init(self, params_1d):
        with pytest.raises(ValueError):
            solve_ground_state(params_1d, 1)

    def test_init_on_other_grid(self, params_1d, coarse_grid_1d, fine_grid_1d):
        with pytest.raises(GridMismatchError):
            solve_ground_state(params_1d, 1, gaussian_bump(fine_grid_1d), grid=coarse_grid_1d)

    def test_budget_exhausted(self, params_1d, coarse_grid_1d):
        with pytest.raises(ConvergenceError) as info:
            solve_ground_state(params_1d, 1, grid=coarse_grid_1d, controls=DescentControls(tol=1e-12, max_iter=2))
        assert info.value.iterations == 2
        assert info.value.residual_norm > 1e-12

    def test_custom_init_is_used(self, params_1d, coarse_grid_1d):
        narrow = gaussian_bump(coarse_grid_1d, width=0.5, amplitude=3.0)
        state = solve_ground_state(params_1d, 1, narrow, controls=TIGHT)
        assert state.level == pytest.approx(SOLITON_LEVEL, abs=1e-3)


# ─── Exact soliton ───────────────────────────────────────────────────────────

class TestExactSoliton:
    def test_amplitude(self, fine_grid_1d):
        soliton = exact_soliton_1d(3.0, 1.0, 1.0, fine_grid_1d)
        assert soliton.values[1023] == pytest.approx(1.5, rel=1e-14)

    def test_general_amplitude(self, fine_grid_1d):
        # (pV∞/(2μ))^{1/(p-2)} at p = 4, μ = 2, V∞ = 3
        soliton = exact_soliton_1d(4.0, 2.0, 3.0, fine_grid_1d)
        assert soliton.values[1023] == pytest.approx(3.0 ** 0.5, rel=1e-14)

    def test_on_nehari_manifold(self, params_1d, fine_grid_1d):
        assert j_ratio(params_1d, 1, exact_soliton_1d(3.0, 1.0, 1.0, fine_grid_1d)) == pytest.approx(1.0, abs=1e-4)

    def test_rejects_2d(self):
        with pytest.raises(GridMismatchError):
            exact_soliton_1d(3.0, 1.0, 1.0, build_grid(2, 5.0, 9))

    def test_shift_fit_recovers_translation(self, fine_grid_1d):
        moved = Field.from_function(
            fine_grid_1d, lambda x: 1.5 / np.cosh(0.5 * (x[:, 0] - 0.3)) ** 2
        )
        fit = fit_soliton_shift(moved, 3.0, 1.0, 1.0)
        assert fit.shift == pytest.approx(0.3, abs=1e-6)
        assert fit.max_error < 1e-6


# ─── Brackets ────────────────────────────────────────────────────────────────

class TestBrackets:
    def test_roots_match_bisection(self, params_1d, reference_coarse, brackets_coarse):
        bracket = brackets_coarse[0]
        f = lambda t: 3.0 * (t * t - 2.0 / 3.0 * t ** 3) - 0.25
        assert bracket.t1 == pytest.approx(_bisect(f, 0.0, 1.0), abs=1e-10)
        assert bracket.t2 == pytest.approx(_bisect(f, 1.0, 1.5), abs=1e-10)

    def test_ordering(self, brackets_coarse):
        for bracket in brackets_coarse:
            assert 0 < bracket.t1 < 1 < bracket.t2

    def test_ray_energy_at_roots(self, params_1d, reference_coarse, brackets_coarse):
        U = reference_coarse.first.field
        c = reference_coarse.c1
        for t in (brackets_coarse[0].t1, brackets_coarse[0].t2):
            assert energy_single(params_1d, 1, U * t) == pytest.approx(c / 4.0, rel=1e-6)

    def test_maximum_at_one(self, params_1d, reference_coarse):
        assert ray_energy(3.0, reference_coarse.c1, 1.0) == pytest.approx(reference_coarse.c1)
        assert ray_energy(3.0, reference_coarse.c1, 50.0) < -1e3

    def test_outside_bracket_below_quarter_level(self, params_1d, reference_coarse, brackets_coarse):
        U, c = reference_coarse.first.field, reference_coarse.c1
        bracket = brackets_coarse[0]
        for t in (0.5 * bracket.t1, bracket.t2 + 0.2, 3.0):
            assert energy_single(params_1d, 1, U * t) <= c / 4.0

    def test_nonpositive_level(self, params_1d, reference_coarse):
        fake = GroundState(field=reference_coarse.first.field, level=-1.0, residual_norm=0.0, nehari_gap=0.0, iterations=0)
        with pytest.raises(BracketError):
            bracket_ts(params_1d, 1, fake)

    def test_unconverged_state_detected(self, params_1d, reference_coarse):
        wrong = GroundState(
            field=reference_coarse.first.field * 1.1,
            level=reference_coarse.c1,
            residual_norm=0.0,
            nehari_gap=0.0,
            iterations=0,
        )
        with pytest.raises(BracketError):
            bracket_ts(params_1d, 1, wrong)
