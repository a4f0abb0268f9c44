import numpy as np
import pytest

from mfglab import Grid, SolverParams, coupling_from_label, density_cosine, quadratic_hamiltonian
from mfglab.model import Problem, coupling_zero


@pytest.fixture
def grid32():
    return Grid(n=32, nt=16)


@pytest.fixture
def grid64():
    return Grid(n=64, nt=64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_problem(grid: Grid, label: str = "zero", lam: float = 1.0,
                 amplitude: float = 0.5, terminal=None) -> Problem:
    return Problem(
        hamiltonian=quadratic_hamiltonian(),
        coupling=coupling_from_label(grid, label, lam=lam),
        terminal=terminal if terminal is not None else coupling_zero(grid),
        m0=density_cosine(grid, amplitude),
        grid=grid,
    )


def random_density(grid: Grid, rng: np.random.Generator, roughness: float = 0.5) -> np.ndarray:
    """Smooth positive density with exactly unit discrete mass."""
    x = grid.xs()
    m = np.ones(grid.n)
    for k in (1, 2, 3):
        m += roughness / k * (rng.uniform(-1, 1) * np.cos(2 * np.pi * k * x)
                              + rng.uniform(-1, 1) * np.sin(2 * np.pi * k * x))
    m = np.clip(m, 0.05, None)
    return m / (m.sum() * grid.dx)


@pytest.fixture
def fast_params():
    return SolverParams(max_iters=100, tol_fixed_point=1e-9)
