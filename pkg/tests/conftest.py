"""
Shared pytest fixtures for the critical-point toolkit test suite.

Ground states are expensive relative to everything else, so they are solved
once per session. Reference values for the default 1D problem (p = 3, μ = 1,
V ≡ 1) follow from the closed-form soliton U(x) = (3/2)·sech²(x/2):

  ‖U‖² = μ|U|_3^3 = 36/5,   c = (1/2 - 1/3)·36/5 = 6/5,   S̄₃ = (36/5)^{1/3}
"""

import pytest

from src.core.functional import ModelParams
from src.core.grid import build_grid
from src.solvers.coupled import ReferencePair
from src.solvers.ground import DescentControls, bracket_ts, solve_ground_state

SOLITON_LEVEL = 1.2
SOLITON_NORM_SQ = 7.2
SBAR_3 = (36.0 / 5.0) ** (1.0 / 3.0)

TIGHT = DescentControls(tol=1e-10)


# ─── Grids and parameters ────────────────────────────────────────────────────

@pytest.fixture(scope="session")
def fine_grid_1d():
    """Production 1D grid, L = 20, n = 2047 (node 1024 sits at x = 0)."""
    return build_grid(1, 20.0, 2047)


@pytest.fixture(scope="session")
def coarse_grid_1d():
    return build_grid(1, 20.0, 511)


@pytest.fixture(scope="session")
def params_1d():
    return ModelParams(dim=1, p=3.0)


# ─── Ground states ───────────────────────────────────────────────────────────

@pytest.fixture(scope="session")
def ground_fine(params_1d, fine_grid_1d):
    return solve_ground_state(params_1d, 1, grid=fine_grid_1d, controls=TIGHT)


@pytest.fixture(scope="session")
def reference_coarse(params_1d, coarse_grid_1d):
    first = solve_ground_state(params_1d, 1, grid=coarse_grid_1d, controls=TIGHT)
    second = solve_ground_state(params_1d, 2, grid=coarse_grid_1d, controls=TIGHT)
    return ReferencePair(first, second)


@pytest.fixture(scope="session")
def brackets_coarse(params_1d, reference_coarse):
    return (
        bracket_ts(params_1d, 1, reference_coarse.first),
        bracket_ts(params_1d, 2, reference_coarse.second),
    )


# ─── Config files ────────────────────────────────────────────────────────────

@pytest.fixture
def config_file(tmp_path):
    """Factory writing a flat key = value config; output_dir defaults into tmp_path."""
    def _write(name: str = "run.cfg", **entries):
        entries.setdefault("output_dir", str(tmp_path / "out"))
        lines = ["# test configuration"]
        lines += [f"{key} = {value}" for key, value in entries.items() if value is not None]
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    return _write
