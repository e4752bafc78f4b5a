"""
Tests for src/core/functional.py

Covers:
  - ModelParams validation and derived problems (with_beta, at_infinity)
  - energy_single / energy_system: soliton level, homogeneity, decoupling,
    semitrivial pairs, sign of the coupling term
  - residual_single / residual_system: soliton truncation order, gradient
    consistency against finite differences of the energy
  - nehari_project: ray maximum, scale invariance, zero field
  - j_ratio, c_star, estimate_sbar_p
"""

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from src.core.functional import (
    ModelParams,
    StatePair,
    c_star,
    coupling_integral,
    energy_single,
    energy_system,
    estimate_sbar_p,
    j_ratio,
    l2_inner,
    nehari_project,
    pair_norm,
    residual_norm,
    residual_single,
    residual_system,
)
from src.core.grid import Field, build_grid, h_norm_sq, lp_norm
from src.core.potential import PotentialSpec
from src.solvers.ground import DescentControls, exact_soliton_1d
from src.utils.errors import GridMismatchError
from tests.conftest import SBAR_3, SOLITON_LEVEL

TIGHT = DescentControls(tol=1e-10)


def _random_field(grid, rng, positive=False):
    """Smooth random field: a few Gaussians with random centres, widths, signs."""
    values = np.zeros(grid.n_nodes)
    for _ in range(3):
        centre = rng.uniform(-2.0, 2.0, size=grid.dim)
        width = rng.uniform(0.7, 1.5)
        weight = rng.uniform(0.3, 1.5) if positive else rng.uniform(-1.5, 1.5)
        values += weight * np.exp(-np.sum((grid.coordinates - centre) ** 2, axis=1) / width ** 2)
    return Field(grid, values)


# ─── ModelParams ─────────────────────────────────────────────────────────────

class TestModelParams:
    def test_defaults(self):
        params = ModelParams(dim=1, p=3.0)
        assert params.mu1 == params.mu2 == 1.0
        assert params.beta == 0.0
        assert params.potential.is_constant

    @pytest.mark.parametrize("kwargs", [
        {"dim": 1, "p": 2.0},
        {"dim": 3, "p": 5.0},
        {"dim": 4, "p": 3.0},
        {"dim": 1, "p": 3.0, "mu1": 0.0},
        {"dim": 1, "p": 3.0, "beta": -0.1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ModelParams(**kwargs)

    def test_with_beta_and_at_infinity(self):
        params = ModelParams(dim=1, p=3.0, potential=PotentialSpec("gaussian_well", depth=0.5))
        assert params.with_beta(0.2).beta == 0.2
        assert params.at_infinity().potential.is_constant
        assert params.at_infinity().potential.v_infinity == params.potential.v_infinity

    def test_component_index(self):
        params = ModelParams(dim=1, p=3.0, mu1=2.0, mu2=5.0)
        assert params.mu(1) == 2.0 and params.mu(2) == 5.0
        with pytest.raises(ValueError):
            params.mu(3)

    def test_grid_dimension_checked(self):
        params = ModelParams(dim=2, p=3.0)
        grid = build_grid(1, 1.0, 5)
        with pytest.raises(GridMismatchError):
            energy_single(params, 1, Field.zeros(grid))


# ─── Energies ────────────────────────────────────────────────────────────────

class TestEnergies:
    def test_zero_field(self, params_1d, coarse_grid_1d):
        assert energy_single(params_1d, 1, Field.zeros(coarse_grid_1d)) == 0.0

    def test_soliton_level(self, params_1d, fine_grid_1d):
        soliton = exact_soliton_1d(3.0, 1.0, 1.0, fine_grid_1d)
        assert energy_single(params_1d, 1, soliton) == pytest.approx(SOLITON_LEVEL, abs=1e-3)

    def test_homogeneity(self, params_1d, coarse_grid_1d):
        u = _random_field(coarse_grid_1d, np.random.default_rng(3))
        t, p = 2.0, params_1d.p
        quad = h_norm_sq(coarse_grid_1d, u, 1.0)
        power = lp_norm(coarse_grid_1d, u, p) ** p
        expected = 0.5 * t ** 2 * quad - t ** p / p * power
        assert energy_single(params_1d, 1, u * t) == pytest.approx(expected, rel=1e-12)

    def test_decoupled_system(self, params_1d, coarse_grid_1d):
        rng = np.random.default_rng(4)
        pair = StatePair(_random_field(coarse_grid_1d, rng), _random_field(coarse_grid_1d, rng))
        expected = energy_single(params_1d, 1, pair.u) + energy_single(params_1d, 2, pair.v)
        assert energy_system(params_1d, pair) == pytest.approx(expected, rel=1e-14)

    def test_semitrivial_pairs(self, params_1d, reference_coarse):
        U, V = reference_coarse.first.field, reference_coarse.second.field
        coupled = params_1d.with_beta(0.3)
        zero = Field.zeros(U.grid)
        assert energy_system(coupled, StatePair(U, zero)) == pytest.approx(reference_coarse.c1, rel=1e-12)
        assert energy_system(coupled, StatePair(zero, V)) == pytest.approx(reference_coarse.c2, rel=1e-12)

    def test_coupling_lowers_energy_of_positive_pairs(self, params_1d, coarse_grid_1d):
        rng = np.random.default_rng(5)
        pair = StatePair(
            _random_field(coarse_grid_1d, rng, positive=True),
            _random_field(coarse_grid_1d, rng, positive=True),
        )
        assert energy_system(params_1d.with_beta(0.2), pair) < energy_system(params_1d, pair)

    def test_coupling_term_value(self, params_1d, coarse_grid_1d):
        rng = np.random.default_rng(6)
        pair = StatePair(_random_field(coarse_grid_1d, rng), _random_field(coarse_grid_1d, rng))
        beta = 0.4
        difference = energy_system(params_1d, pair) - energy_system(params_1d.with_beta(beta), pair)
        assert difference == pytest.approx(0.5 * beta * coupling_integral(pair), rel=1e-10)


# ─── Residuals ───────────────────────────────────────────────────────────────

class TestResiduals:
    def test_zero_pair(self, params_1d, coarse_grid_1d):
        pair = StatePair.zeros(coarse_grid_1d)
        assert residual_norm(residual_system(params_1d.with_beta(0.5), pair)) == 0.0

    def test_soliton_residual_small(self, params_1d, fine_grid_1d):
        soliton = exact_soliton_1d(3.0, 1.0, 1.0, fine_grid_1d)
        residual = residual_single(params_1d, 1, soliton)
        assert lp_norm(fine_grid_1d, residual, 2.0) < 1e-3

    def test_soliton_residual_second_order(self, params_1d):
        norms = []
        for n in (511, 1023):
            grid = build_grid(1, 20.0, n)
            soliton = exact_soliton_1d(3.0, 1.0, 1.0, grid)
            pair = StatePair(soliton, soliton)
            norms.append(residual_norm(residual_system(params_1d, pair)))
        assert 3.5 < norms[0] / norms[1] < 4.5

    def test_decoupled_residual(self, params_1d, coarse_grid_1d):
        rng = np.random.default_rng(7)
        pair = StatePair(_random_field(coarse_grid_1d, rng), _random_field(coarse_grid_1d, rng))
        residual = residual_system(params_1d, pair)
        assert np.allclose(residual.u.values, residual_single(params_1d, 1, pair.u).values, rtol=0, atol=0)
        assert np.allclose(residual.v.values, residual_single(params_1d, 2, pair.v).values, rtol=0, atol=0)

    @pytest.mark.parametrize("seed", range(20))
    def test_gradient_consistency(self, seed):
        grid = build_grid(1, 6.0, 127)
        params = ModelParams(dim=1, p=3.0, mu1=1.3, mu2=0.7, beta=0.35,
                             potential=PotentialSpec("gaussian_well", depth=0.5, width=2.0))
        rng = np.random.default_rng(100 + seed)
        pair = StatePair(_random_field(grid, rng), _random_field(grid, rng))
        direction = StatePair(_random_field(grid, rng), _random_field(grid, rng))
        eps = 1e-6
        plus = StatePair(pair.u + direction.u * eps, pair.v + direction.v * eps)
        minus = StatePair(pair.u - direction.u * eps, pair.v - direction.v * eps)
        finite_difference = (energy_system(params, plus) - energy_system(params, minus)) / (2 * eps)
        analytic = l2_inner(residual_system(params, pair), direction)
        assert finite_difference == pytest.approx(analytic, rel=1e-5, abs=1e-9)

    def test_ground_state_residual_below_tolerance(self, params_1d, reference_coarse):
        residual = residual_single(params_1d, 1, reference_coarse.first.field)
        assert lp_norm(residual.grid, residual, 2.0) < 1e-8


# ─── Nehari projection and ratios ────────────────────────────────────────────

class TestNehari:
    def test_fixed_point_on_manifold(self, params_1d, reference_coarse):
        projection = nehari_project(params_1d, 1, reference_coarse.first.field)
        assert projection.t == pytest.approx(1.0, abs=1e-9)

    def test_scale_invariance(self, params_1d, coarse_grid_1d):
        u = _random_field(coarse_grid_1d, np.random.default_rng(8))
        a = nehari_project(params_1d, 1, u).projected
        b = nehari_project(params_1d, 1, u * 3.7).projected
        assert np.allclose(a.values, b.values, rtol=1e-12, atol=1e-12)

    def test_soliton(self, params_1d, fine_grid_1d):
        projection = nehari_project(params_1d, 1, exact_soliton_1d(3.0, 1.0, 1.0, fine_grid_1d))
        assert projection.t == pytest.approx(1.0, abs=1e-3)
        assert projection.energy == pytest.approx(SOLITON_LEVEL, abs=1e-3)

    def test_zero_rejected(self, params_1d, coarse_grid_1d):
        with pytest.raises(ValueError):
            nehari_project(params_1d, 1, Field.zeros(coarse_grid_1d))

    def test_ray_maximum(self):
        grid = build_grid(1, 6.0, 127)
        rng = np.random.default_rng(9)
        for p in np.linspace(2.5, 4.5, 50):
            params = ModelParams(dim=1, p=float(p), mu1=float(rng.uniform(0.5, 2.0)))
            u = _random_field(grid, rng)
            projection = nehari_project(params, 1, u)
            ts = np.linspace(0.0, 3.0 * projection.t, 3001)
            sampled = [energy_single(params, 1, u * t) for t in ts]
            best = int(np.argmax(sampled))
            refined = minimize_scalar(
                lambda t: -energy_single(params, 1, u * t),
                bounds=(ts[max(best - 1, 0)], ts[best + 1]),
                method="bounded",
                options={"xatol": 1e-12},
            )
            ray_max = max(sampled[best], -refined.fun)
            assert ray_max == pytest.approx(projection.energy, rel=1e-8)
            assert energy_single(params, 1, projection.projected) == pytest.approx(projection.energy, rel=1e-10)

    def test_j_ratio_zero(self, params_1d, coarse_grid_1d):
        assert j_ratio(params_1d, 1, Field.zeros(coarse_grid_1d)) == 0.0

    def test_j_ratio_ground_state(self, params_1d, reference_coarse):
        assert j_ratio(params_1d, 1, reference_coarse.first.field) == pytest.approx(1.0, abs=1e-6)
        assert j_ratio(params_1d, 2, reference_coarse.second.field) == pytest.approx(1.0, abs=1e-6)

    def test_j_ratio_homogeneity(self, params_1d, coarse_grid_1d):
        u = _random_field(coarse_grid_1d, np.random.default_rng(10))
        assert j_ratio(params_1d, 1, u * 2.0) == pytest.approx(2.0 ** (params_1d.p - 2) * j_ratio(params_1d, 1, u), rel=1e-12)


# ─── Thresholds ──────────────────────────────────────────────────────────────

class TestThresholds:
    def test_c_star_soliton_value(self, params_1d):
        assert c_star(params_1d, 1, SBAR_3) == pytest.approx(SOLITON_LEVEL, rel=1e-12)

    def test_c_star_doubling(self, params_1d):
        assert c_star(params_1d, 1, 2.0) == pytest.approx(8.0 * c_star(params_1d, 1, 1.0), rel=1e-12)

    def test_c_star_decreases_in_mu(self):
        values = [c_star(ModelParams(dim=1, p=3.0, mu1=mu), 1, SBAR_3) for mu in (1.0, 2.0, 4.0, 8.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_c_star_rejects_nonpositive(self, params_1d):
        with pytest.raises(ValueError):
            c_star(params_1d, 1, 0.0)

    def test_sbar_soliton(self, params_1d, fine_grid_1d):
        assert estimate_sbar_p(params_1d, fine_grid_1d, controls=TIGHT) == pytest.approx(SBAR_3, abs=1e-3)

    def test_sbar_independent_of_mu(self, coarse_grid_1d):
        a = estimate_sbar_p(ModelParams(dim=1, p=3.0, mu1=1.0), coarse_grid_1d, 1, TIGHT)
        b = estimate_sbar_p(ModelParams(dim=1, p=3.0, mu1=4.0), coarse_grid_1d, 1, TIGHT)
        assert a == pytest.approx(b, rel=1e-6)

    def test_sbar_scaling_in_v_infinity(self, fine_grid_1d):
        params = ModelParams(dim=1, p=3.0, potential=PotentialSpec(v_infinity=4.0))
        # c scales by 4^{p/(p-2) - 1/2} = 32 at p = 3, S̄₃ = (6c)^{1/3}.
        expected = (6.0 * 32.0 * SOLITON_LEVEL) ** (1.0 / 3.0)
        assert estimate_sbar_p(params, fine_grid_1d, controls=DescentControls(tol=1e-8)) == pytest.approx(expected, rel=1e-3)

    def test_sbar_uses_limit_problem(self, coarse_grid_1d):
        well = ModelParams(dim=1, p=3.0, potential=PotentialSpec("gaussian_well", depth=0.5, width=2.0))
        flat = ModelParams(dim=1, p=3.0)
        assert estimate_sbar_p(well, coarse_grid_1d, controls=TIGHT) == pytest.approx(
            estimate_sbar_p(flat, coarse_grid_1d, controls=TIGHT), rel=1e-9
        )


class TestPairHelpers:
    def test_pair_norm(self, params_1d, reference_coarse):
        expected = np.sqrt(reference_coarse.first.norm_sq(params_1d) + reference_coarse.second.norm_sq(params_1d))
        assert pair_norm(params_1d, reference_coarse.pair) == pytest.approx(expected)

    def test_coupling_integral_zero_when_component_vanishes(self, reference_coarse):
        U = reference_coarse.first.field
        assert coupling_integral(StatePair(U, Field.zeros(U.grid))) == 0.0

    def test_flat_roundtrip(self, reference_coarse):
        pair = reference_coarse.pair
        again = StatePair.from_flat(pair.grid, pair.flat())
        assert np.array_equal(again.u.values, pair.u.values)
        assert np.array_equal(again.v.values, pair.v.values)
