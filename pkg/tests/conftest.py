import numpy as np
import pytest

from csvortex.grid import make_grid
from csvortex.vortex import reconstruct, solve_kw


@pytest.fixture(scope="session")
def grid_n0():
    return make_grid(2 * np.pi, 2 * np.pi, 16, 16, 0)


@pytest.fixture(scope="session")
def grid_n1():
    L = np.sqrt(8 * np.pi)
    return make_grid(L, L, 48, 48, 1)


@pytest.fixture(scope="session")
def grid_n2():
    L = np.sqrt(16 * np.pi)
    return make_grid(L, L, 48, 48, 2)


@pytest.fixture(scope="session")
def vortex1(grid_n1):
    """Solved 1-vortex at the centre, both constraint branches."""
    g = grid_n1
    zeros = np.array([(0.5 * g.Lx, 0.5 * g.Ly)])
    kw = solve_kw(g, zeros, tol=1e-11)
    return {
        "zeros": zeros,
        "kw": kw,
        "gauss": reconstruct(g, kw, zeros, mu=10.0, sigma=1, branch="gauss"),
        "plaquette": reconstruct(g, kw, zeros, mu=10.0, sigma=1, branch="plaquette"),
    }


@pytest.fixture(scope="session")
def vortex2(grid_n2):
    """Solved separated 2-vortex pair, both branches."""
    g = grid_n2
    sep = 0.30 * g.Lx
    zeros = np.array([(0.5 * g.Lx - sep / 2, 0.5 * g.Ly),
                      (0.5 * g.Lx + sep / 2, 0.5 * g.Ly)])
    kw = solve_kw(g, zeros, tol=1e-11)
    return {
        "zeros": zeros,
        "kw": kw,
        "gauss": reconstruct(g, kw, zeros, mu=10.0, sigma=1, branch="gauss"),
        "plaquette": reconstruct(g, kw, zeros, mu=10.0, sigma=1, branch="plaquette"),
    }
