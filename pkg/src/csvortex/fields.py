"""Field containers and the tangent-space algebra.

A configuration is a pair psi = (A, Phi): real fluctuation links A_j and a
complex Higgs field per site, both relative to the fixed background
connection of the grid.  Tangent vectors zeta = (Adot, Phidot) carry the
linearized data; the complex structure acts as

    J (Adot_1, Adot_2, Phidot) = (-Adot_2, Adot_1, i Phidot)

and the L2 pairing is int (Adot.Adot' + Re conj(Phidot) Phidot') dmu.

Containers are frozen; operations return new instances.  The complex
packing alpha = Adot_1 - i*Adot_2 turns the weighted tangent inner product
into the plain one and is used by the linearized operators in energetics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import TorusGrid
from . import operators as ops


class FieldShapeError(ValueError):
    """Fields constructed on, or combined across, mismatched grids."""


def _check_grid(grid, *arrays):
    for arr in arrays:
        if arr.shape[-2:] != grid.shape:
            raise FieldShapeError(
                f"array shape {arr.shape} does not match grid {grid.shape}"
            )


@dataclass(frozen=True)
class GaugeField:
    """Real fluctuation link values A_j(x), one per site per direction."""

    grid: TorusGrid
    a: np.ndarray  # (2, nx, ny) float

    def __post_init__(self):
        _check_grid(self.grid, self.a)

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros((2,) + grid.shape))


@dataclass(frozen=True)
class HiggsField:
    """Complex section values in the background trivialization."""

    grid: TorusGrid
    phi: np.ndarray  # (nx, ny) complex

    def __post_init__(self):
        _check_grid(self.grid, self.phi)

    @classmethod
    def constant(cls, grid, value=1.0):
        return cls(grid, np.full(grid.shape, value, dtype=complex))


@dataclass(frozen=True)
class FieldState:
    """psi = (A, Phi) with the rescaled-system parameters.

    sigma in {-1, 0, +1} selects the sign of the potential perturbation,
    mu >= 1 the stiffness; the corresponding Ginzburg-Landau coupling is
    lam = 1 + sigma/mu.
    """

    gauge: GaugeField
    higgs: HiggsField
    mu: float = 1.0
    sigma: int = 0
    tau: float = 0.0

    def __post_init__(self):
        if self.gauge.grid is not self.higgs.grid:
            raise FieldShapeError("gauge and Higgs fields live on different grids")
        if self.sigma not in (-1, 0, 1):
            raise ValueError(f"sigma must be -1, 0 or +1, got {self.sigma}")
        if self.mu < 1.0:
            raise ValueError(f"mu must be >= 1, got {self.mu}")

    @property
    def grid(self):
        return self.gauge.grid

    @property
    def lam(self):
        return 1.0 + self.sigma / self.mu

    def link_phases(self):
        return ops.link_phases(self.grid, self.gauge.a)

    def with_fields(self, a=None, phi=None, tau=None):
        g = self.gauge if a is None else GaugeField(self.grid, a)
        h = self.higgs if phi is None else HiggsField(self.grid, phi)
        t = self.tau if tau is None else tau
        return FieldState(g, h, self.mu, self.sigma, t)


@dataclass(frozen=True)
class TangentField:
    """Linearized pair (Adot, Phidot), optionally on the gauge slice."""

    grid: TorusGrid
    a_dot: np.ndarray  # (2, nx, ny) float
    phi_dot: np.ndarray  # (nx, ny) complex
    gauge_slice: bool = False

    def __post_init__(self):
        _check_grid(self.grid, self.a_dot, self.phi_dot)

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros((2,) + grid.shape), np.zeros(grid.shape, complex))

    def __add__(self, other):
        return TangentField(self.grid, self.a_dot + other.a_dot, self.phi_dot + other.phi_dot)

    def __sub__(self, other):
        return TangentField(self.grid, self.a_dot - other.a_dot, self.phi_dot - other.phi_dot)

    def __mul__(self, c):
        return TangentField(self.grid, c * self.a_dot, c * self.phi_dot, self.gauge_slice)

    __rmul__ = __mul__


def re_inner(a, b):
    """Pointwise real inner product <a, b> = Re conj(a) b."""
    return np.real(np.conj(a) * b)


def tangent_inner(x, y):
    """L2 inner product on tangent pairs."""
    g = x.grid
    return g.cell_area * float(
        np.sum(x.a_dot * y.a_dot) + np.sum(re_inner(x.phi_dot, y.phi_dot))
    )


def tangent_norm(x):
    return np.sqrt(max(tangent_inner(x, x), 0.0))


def J_apply(x):
    """Complex structure J: (A1, A2, Phidot) -> (-A2, A1, i Phidot)."""
    a = np.empty_like(x.a_dot)
    a[0] = -x.a_dot[1]
    a[1] = x.a_dot[0]
    return TangentField(x.grid, a, 1j * x.phi_dot)


def J_inverse(x):
    """J^-1 = -J."""
    a = np.empty_like(x.a_dot)
    a[0] = x.a_dot[1]
    a[1] = -x.a_dot[0]
    return TangentField(x.grid, a, -1j * x.phi_dot)


def pack_alpha(x):
    """Complex link packing alpha = Adot_1 - i*Adot_2 (unit-weight variable)."""
    return x.a_dot[0] - 1j * x.a_dot[1]


def unpack_alpha(grid, alpha, phi_dot, gauge_slice=False):
    a = np.empty((2,) + grid.shape)
    a[0] = alpha.real
    a[1] = -alpha.imag
    return TangentField(grid, a, phi_dot, gauge_slice)


def gauge_transform(state, chi):
    """Apply (A, Phi) -> (A + d chi, Phi e^{i chi}) with lattice d = grad_plus."""
    grid = state.grid
    a = state.gauge.a + ops.grad_plus(grid, chi)
    phi = state.higgs.phi * np.exp(1j * chi)
    return state.with_fields(a=a, phi=phi)


def gauge_direction(state, chi):
    """Infinitesimal gauge motion (d chi, i chi Phi) at psi."""
    grid = state.grid
    return TangentField(grid, ops.grad_plus(grid, chi), 1j * chi * state.higgs.phi)


def slice_residual(state, zeta):
    """Gauge-slice residual div Adot - <i Phi, Phidot> as a site field."""
    grid = state.grid
    phi = state.higgs.phi
    return ops.div_minus(grid, zeta.a_dot) - re_inner(1j * phi, zeta.phi_dot)


def random_state(grid, mu=1.0, sigma=0, amplitude=0.5, smooth=2, seed=0):
    """Reproducible random configuration, mildly smoothed, for tests."""
    rng = np.random.default_rng(seed)
    a = amplitude * rng.standard_normal((2,) + grid.shape)
    phi = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    phi = 1.0 + amplitude * phi
    for _ in range(smooth):
        a = a + 0.25 * np.stack([_five_point_avg(c) for c in a])
        phi = phi + 0.25 * _five_point_avg(phi)
    return FieldState(GaugeField(grid, a), HiggsField(grid, phi), mu, sigma)


def random_tangent(grid, amplitude=1.0, smooth=2, seed=0):
    rng = np.random.default_rng(seed)
    a = amplitude * rng.standard_normal((2,) + grid.shape)
    phi = amplitude * (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    for _ in range(smooth):
        a = a + 0.25 * np.stack([_five_point_avg(c) for c in a])
        phi = phi + 0.25 * _five_point_avg(phi)
    return TangentField(grid, a, phi)


def _five_point_avg(f):
    return 0.25 * (
        np.roll(f, 1, 0) + np.roll(f, -1, 0) + np.roll(f, 1, 1) + np.roll(f, -1, 1)
    ) - f
