"""Flat periodic lattice with a flux-carrying background connection.

Conventions used throughout the package:

  - sites x[i, j] = (i*ax, j*ay), arrays have shape (nx, ny), axis 0 is x^1
  - link j in {0, 1} joins a site to its forward neighbour in direction j;
    link quantities live in arrays of shape (2, nx, ny) indexed by base site
  - the degree-N line bundle is realised through fixed background link
    phases omega (radians): every plaquette carries background flux
    b*ax*ay with b = 2*pi*N/(Lx*Ly), up to invisible multiples of 2*pi on
    the seam column
  - gauge-field fluctuations are real link values (non-compact, no mod-2pi
    wrapping); the total connection entering covariant differences is
    omega_j + a_j*A_j

The trapezoid quadrature ax*ay*sum(...) is exact for lattice functions and
is the only integral used anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class GridError(ValueError):
    """Invalid grid construction parameters."""


@dataclass(frozen=True)
class TorusGrid:
    """Geometry, background connection and FFT metadata for one lattice.

    Immutable after construction; every operation in the package takes the
    grid as explicit context, so instances can be shared freely between
    threads.
    """

    Lx: float
    Ly: float
    nx: int
    ny: int
    N: int
    rho: float = 0.0  # conformal-factor hook; only rho == 0 is implemented

    ax: float = field(init=False)
    ay: float = field(init=False)
    area: float = field(init=False)
    cell_area: float = field(init=False)
    b: float = field(init=False)
    omega: np.ndarray = field(init=False, repr=False)
    u_bg: np.ndarray = field(init=False, repr=False)
    lap_eigs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.Lx <= 0 or self.Ly <= 0:
            raise GridError(f"side lengths must be positive, got {self.Lx}, {self.Ly}")
        if self.nx < 8 or self.ny < 8:
            raise GridError(f"need nx, ny >= 8, got {self.nx}, {self.ny}")
        if self.N < 0:
            raise GridError(f"bundle degree must be >= 0, got {self.N}")
        if self.rho != 0.0:
            raise GridError("curved metrics (rho != 0) are not implemented")
        object.__setattr__(self, "ax", self.Lx / self.nx)
        object.__setattr__(self, "ay", self.Ly / self.ny)
        object.__setattr__(self, "area", self.Lx * self.Ly)
        object.__setattr__(self, "cell_area", self.ax * self.ay)
        object.__setattr__(self, "b", TWO_PI * self.N / self.area)
        object.__setattr__(self, "omega", _background_links(self.nx, self.ny, self.N))
        object.__setattr__(self, "u_bg", np.exp(-1j * self.omega))
        object.__setattr__(self, "lap_eigs", _laplacian_eigenvalues(self))

    @property
    def shape(self):
        return (self.nx, self.ny)

    def sites(self):
        """Coordinate arrays (X, Y) of shape (nx, ny)."""
        x = self.ax * np.arange(self.nx)
        y = self.ay * np.arange(self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def quadrature(self, f):
        """Integral of a lattice function, exact for the discrete measure."""
        return self.cell_area * float(np.sum(f))

    def l2_norm(self, f):
        return float(np.sqrt(self.cell_area * np.sum(np.abs(f) ** 2)))

    def wrap_coords(self, pts):
        """Reduce (x, y) points mod (Lx, Ly)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float)).copy()
        pts[:, 0] %= self.Lx
        pts[:, 1] %= self.Ly
        return pts

    def min_image(self, d, axis):
        """Shortest signed displacement along one period."""
        L = self.Lx if axis == 0 else self.Ly
        return (d + 0.5 * L) % L - 0.5 * L


def make_grid(Lx, Ly, nx, ny, N, rho=0.0):
    """Build a torus grid with the standard degree-N background twist.

    The background is the lattice version of the constant-curvature
    connection A_bg = b*x^1 dx^2: y-links at column i carry phase
    c*i with c = b*ax*ay, and the last column of x-links carries the
    compensating ramp -c*nx*j so that every plaquette holds flux c as a
    U(1) phase (the seam corner differs by exactly 2*pi*N, invisible in
    all covariant operations).
    """
    return TorusGrid(float(Lx), float(Ly), int(nx), int(ny), int(N), float(rho))


def _background_links(nx, ny, N):
    c = TWO_PI * N / (nx * ny)
    omega = np.zeros((2, nx, ny))
    i = np.arange(nx)[:, None]
    j = np.arange(ny)[None, :]
    omega[1] = c * i * np.ones_like(j, dtype=float)
    omega[0][nx - 1, :] = -c * nx * np.arange(ny)
    return omega


def _forward_symbols(grid):
    """Fourier symbols s_j of the forward difference operators."""
    kx = np.arange(grid.nx)
    ky = np.arange(grid.ny)
    tx = np.exp(2j * np.pi * kx / grid.nx)
    ty = np.exp(2j * np.pi * ky / grid.ny)
    s1 = ((tx - 1.0) / grid.ax)[:, None] * np.ones(grid.ny)[None, :]
    s2 = np.ones(grid.nx)[:, None] * ((ty - 1.0) / grid.ay)[None, :]
    return s1, s2


def _laplacian_eigenvalues(grid):
    """Eigenvalues of minus the 5-point Laplacian (>= 0, zero at k = 0)."""
    s1, s2 = _forward_symbols(grid)
    return (np.abs(s1) ** 2 + np.abs(s2) ** 2).real
