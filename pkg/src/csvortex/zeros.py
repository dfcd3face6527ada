"""Vortex location by covariant phase winding.

The winding of the Higgs phase is accumulated around each plaquette from
parallel-transported corner values (each jump wrapped to (-pi, pi]); adding
the plaquette flux, itself wrapped, yields an exact integer count per cell
whose lattice total is the bundle degree N.  Raw (untransported) jumps
would see the background twist and miscount near the seam, so the
connection is part of the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import operators as ops

TWO_PI = 2.0 * np.pi


class WindingError(RuntimeError):
    """Field inconsistent with the bundle degree, or zeros ill-defined."""


@dataclass(frozen=True)
class VortexConfig:
    """N vortex positions (coordinates of the zeros of Phi) on the torus."""

    zeros: np.ndarray  # (N, 2) float, reduced mod (Lx, Ly)
    counts: np.ndarray = field(default=None, repr=False)  # per-zero multiplicity

    def __len__(self):
        return len(self.zeros)

    @classmethod
    def from_points(cls, grid, pts):
        pts = grid.wrap_coords(np.asarray(pts, float).reshape(-1, 2))
        return cls(pts, np.ones(len(pts), dtype=int))


def _wrap(x):
    """Wrap angles to (-pi, pi]."""
    return -((-x + np.pi) % TWO_PI - np.pi)


def plaquette_flux(grid, a):
    """Real-valued circulation of omega + a*A around each plaquette."""
    theta = np.empty((2,) + grid.shape)
    theta[0] = grid.omega[0] + grid.ax * a[0]
    theta[1] = grid.omega[1] + grid.ay * a[1]
    return (
        theta[0]
        + np.roll(theta[1], -1, 0)
        - np.roll(theta[0], -1, 1)
        - theta[1]
    )


def winding_numbers(grid, phi, a=None):
    """Integer zero count per plaquette; their sum must equal N."""
    if a is None:
        a = np.zeros((2,) + grid.shape)
    arg = np.angle(phi)
    theta = np.empty((2,) + grid.shape)
    theta[0] = grid.omega[0] + grid.ax * a[0]
    theta[1] = grid.omega[1] + grid.ay * a[1]
    # covariant jump along link j: arg(U_j phi(x+e_j)) - arg(phi(x)), wrapped
    jump = [
        _wrap(np.roll(arg, -1, j) - theta[j] - arg) for j in (0, 1)
    ]
    cycle = jump[0] + np.roll(jump[1], -1, 0) - np.roll(jump[0], -1, 1) - jump[1]
    total = (cycle + _wrap(plaquette_flux(grid, a))) / TWO_PI
    n = np.rint(total).astype(int)
    if np.max(np.abs(total - n)) > 0.26:
        raise WindingError("plaquette winding far from integer; field too rough")
    return n


def locate_zeros(grid, phi, a=None, refine=True):
    """Find the zeros of Phi with multiplicity via plaquette winding.

    Each plaquette with winding w contributes w zeros; cells with w = 1 are
    refined to sub-cell accuracy by solving the bilinear interpolant of the
    locally re-gauged corner values.  Raises WindingError when the total
    winding disagrees with the bundle degree or when the field magnitude is
    too small on a large fraction of sites for zeros to be meaningful.
    """
    if a is None:
        a = np.zeros((2,) + grid.shape)
    mag = np.abs(phi)
    floor = 0.1 * np.median(mag)
    if np.mean(mag < floor) > 0.25:
        raise WindingError("|Phi| below floor on more than 25% of sites")
    n = winding_numbers(grid, phi, a)
    if int(n.sum()) != grid.N:
        raise WindingError(
            f"total winding {int(n.sum())} != bundle degree {grid.N}"
        )
    pts, counts = [], []
    U = ops.link_phases(grid, a)
    for i, j in zip(*np.nonzero(n)):
        w = int(n[i, j])
        if abs(w) == 1 and refine:
            s, t = _bilinear_zero(grid, U, phi, i, j)
        else:
            s, t = 0.5, 0.5
        x = (i + s) * grid.ax
        y = (j + t) * grid.ay
        for _ in range(abs(w)):
            pts.append((x % grid.Lx, y % grid.Ly))
            counts.append(w)
    order = np.lexsort(
        (np.asarray(pts)[:, 1], np.asarray(pts)[:, 0])
    ) if pts else []
    pts = np.asarray(pts, float).reshape(-1, 2)[order]
    counts = np.asarray(counts, int)[order] if len(counts) else np.zeros(0, int)
    return VortexConfig(pts, counts)


def _bilinear_zero(grid, U, phi, i, j):
    """Sub-cell zero of the re-gauged bilinear interpolant on cell (i, j)."""
    ip, jp = (i + 1) % grid.nx, (j + 1) % grid.ny
    v00 = phi[i, j]
    v10 = U[0][i, j] * phi[ip, j]
    v01 = U[1][i, j] * phi[i, jp]
    v11 = U[0][i, j] * U[1][ip, j] * phi[ip, jp]
    # phi(s,t) = c0 + c1 s + c2 t + c3 s t on the unit cell
    c0 = v00
    c1 = v10 - v00
    c2 = v01 - v00
    c3 = v11 - v10 - v01 + v00
    best = (0.5, 0.5)
    best_mag = np.inf
    # eliminate t between the real and imaginary bilinear equations:
    # (c0 + c1 s) + t (c2 + c3 s) = 0 componentwise
    aq = c1.real * c3.imag - c1.imag * c3.real
    bq = (c0.real * c3.imag - c0.imag * c3.real) + (c1.real * c2.imag - c1.imag * c2.real)
    cq = c0.real * c2.imag - c0.imag * c2.real
    roots = []
    if abs(aq) < 1e-14 * (abs(bq) + abs(cq) + 1e-300):
        if bq != 0.0:
            roots = [-cq / bq]
    else:
        disc = bq * bq - 4.0 * aq * cq
        if disc >= 0.0:
            rt = np.sqrt(disc)
            roots = [(-bq + rt) / (2 * aq), (-bq - rt) / (2 * aq)]
    for s in roots:
        den = c2 + c3 * s
        num = c0 + c1 * s
        if abs(den) < 1e-300:
            continue
        t = -(num.real * den.real + num.imag * den.imag) / (abs(den) ** 2)
        if -0.25 <= s <= 1.25 and -0.25 <= t <= 1.25:
            m = abs(c0 + c1 * s + c2 * t + c3 * s * t)
            if m < best_mag:
                best_mag = m
                best = (min(max(s, 0.0), 1.0), min(max(t, 0.0), 1.0))
    return best


def match_zero_sets(grid, za, zb):
    """Max torus distance between two zero sets under best pairing.

    Greedy nearest matching is exact here for the small N used in
    experiments; distances use the shortest displacement on the torus.
    """
    za = np.asarray(za, float).reshape(-1, 2)
    zb = np.asarray(zb, float).reshape(-1, 2).copy()
    if len(za) != len(zb):
        return np.inf
    worst = 0.0
    remaining = list(range(len(zb)))
    for p in za:
        dists = [
            np.hypot(grid.min_image(p[0] - zb[k][0], 0), grid.min_image(p[1] - zb[k][1], 1))
            for k in remaining
        ]
        kbest = int(np.argmin(dists))
        worst = max(worst, dists[kbest])
        remaining.pop(kbest)
    return worst
