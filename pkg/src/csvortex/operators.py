"""Difference operators, covariant derivatives and elliptic solvers.

Operator pairs are chosen so that summation by parts is exact on the
periodic lattice:

    <grad_plus(f), v>   = -<f, div_minus(v)>
    <curl_plus(v), g>   =  <v, curl_plus_star(g)>
    <curl_minus(v), g>  =  <v, curl_minus_star(g)>
    laplacian = div_minus o grad_plus         (standard 5-point stencil)

Two discrete curls coexist deliberately:

  * curl_plus is the plaquette circulation (forward differences).  It
    annihilates lattice gauge motions grad_plus(chi) exactly, so the
    curvature B = b + curl_plus(A) is gauge invariant to roundoff.  It is
    the B of every energy and reported residual.

  * curl_minus (backward differences) appears in the moment map of the
    lattice gauge action: b + curl_minus(A) - (1 - |Phi|^2)/2 is the
    density that the semi-discrete Hamiltonian flow conserves exactly,
    and it is what the evolution module monitors as the Gauss-law
    constraint.  It is not invariant under rough gauge transformations
    (the two curls differ at O(h) on rough data), which is why both are
    kept and named.

curl_plus o grad_plus = 0, div_minus o curl_plus_star = 0 and
div_plus o curl_minus_star = 0 hold exactly.
"""

from __future__ import annotations

import numpy as np


class HelmholtzError(RuntimeError):
    """Screened Poisson solve failed or was called with incompatible data."""


def roll_fwd(f, axis):
    """f(x + e_axis) on the periodic lattice."""
    return np.roll(f, -1, axis=axis)


def roll_bwd(f, axis):
    """f(x - e_axis)."""
    return np.roll(f, 1, axis=axis)


def grad_plus(grid, f):
    """Forward gradient, one value per link."""
    out = np.empty((2,) + grid.shape, dtype=f.dtype)
    out[0] = (roll_fwd(f, 0) - f) / grid.ax
    out[1] = (roll_fwd(f, 1) - f) / grid.ay
    return out


def div_minus(grid, v):
    """Backward divergence, negative adjoint of grad_plus."""
    return (v[0] - roll_bwd(v[0], 0)) / grid.ax + (v[1] - roll_bwd(v[1], 1)) / grid.ay


def div_plus(grid, v):
    """Forward divergence D+_x v1 + D+_y v2."""
    return (roll_fwd(v[0], 0) - v[0]) / grid.ax + (roll_fwd(v[1], 1) - v[1]) / grid.ay


def curl_plus(grid, v):
    """Plaquette curl D+_x v2 - D+_y v1; kills grad_plus exactly."""
    return (roll_fwd(v[1], 0) - v[1]) / grid.ax - (roll_fwd(v[0], 1) - v[0]) / grid.ay


def curl_minus(grid, v):
    """Adjoint-type curl D-_x v2 - D-_y v1 (moment-map pairing)."""
    return (v[1] - roll_bwd(v[1], 0)) / grid.ax - (v[0] - roll_bwd(v[0], 1)) / grid.ay


def curl_plus_star(grid, f):
    """Exact adjoint of curl_plus: f -> (D-_y f, -D-_x f)."""
    out = np.empty((2,) + grid.shape, dtype=f.dtype)
    out[0] = (f - roll_bwd(f, 1)) / grid.ay
    out[1] = -(f - roll_bwd(f, 0)) / grid.ax
    return out


def curl_minus_star(grid, f):
    """Exact adjoint of curl_minus: f -> (D+_y f, -D+_x f)."""
    out = np.empty((2,) + grid.shape, dtype=f.dtype)
    out[0] = (roll_fwd(f, 1) - f) / grid.ay
    out[1] = -(roll_fwd(f, 0) - f) / grid.ax
    return out


def laplacian(grid, f):
    """5-point Laplacian div_minus(grad_plus(f))."""
    return (
        (roll_fwd(f, 0) - 2.0 * f + roll_bwd(f, 0)) / grid.ax**2
        + (roll_fwd(f, 1) - 2.0 * f + roll_bwd(f, 1)) / grid.ay**2
    )


def curvature(grid, a):
    """Magnetic field B = b + plaquette curl of the fluctuation links.

    The background contributes the constant b exactly; the fluctuation curl
    telescopes to zero over the torus, so the quadrature of B is 2*pi*N to
    roundoff for every gauge field, and B is exactly gauge invariant.
    """
    return grid.b + curl_plus(grid, a)


# ----------------------------------------------------------------------
# Covariant differences.  The total connection on link (x, x+e_j) is
# omega_j(x) + a_j*A_j(x); parallel transport of the forward neighbour is
# multiplication by U_j(x) = exp(-i(omega_j + a_j A_j)).
# ----------------------------------------------------------------------

def link_phases(grid, a):
    """Transport factors U_j = exp(-i(omega_j + a_j A_j)) for fluctuation a."""
    theta = np.empty((2,) + grid.shape)
    theta[0] = grid.omega[0] + grid.ax * a[0]
    theta[1] = grid.omega[1] + grid.ay * a[1]
    return np.exp(-1j * theta)


def cov_diff(grid, U, phi, j):
    """Forward covariant difference (U_j(x) phi(x+e_j) - phi(x)) / a_j."""
    spacing = grid.ax if j == 0 else grid.ay
    return (U[j] * roll_fwd(phi, j) - phi) / spacing


def transport_bwd(grid, U, g, j):
    """Carry a link/site quantity at x - e_j to x (reverse transport)."""
    return np.conj(roll_bwd(U[j], j)) * roll_bwd(g, j)


def cov_diff_bwd(grid, U, phi, j):
    """Backward covariant difference (phi(x) - transport of phi(x-e_j)) / a_j."""
    spacing = grid.ax if j == 0 else grid.ay
    return (phi - transport_bwd(grid, U, phi, j)) / spacing


def cov_laplacian(grid, U, phi):
    """Covariant 5-point Laplacian sum_j (D+_j - D-_j)/a_j applied to phi."""
    out = np.zeros(grid.shape, dtype=complex)
    for j, spacing in ((0, grid.ax), (1, grid.ay)):
        d = cov_diff(grid, U, phi, j)
        out += (d - transport_bwd(grid, U, d, j)) / spacing
    return out


def dbar_site(grid, U, phi):
    """(0,1) part of the covariant derivative, averaged back to sites.

    Each forward link value is second-order accurate at its midpoint; the
    transported average of the two adjacent links per direction restores a
    site-centred, gauge-covariant value, so the result is O(h^2) pointwise
    for smooth data.
    """
    d1 = cov_diff(grid, U, phi, 0)
    d2 = cov_diff(grid, U, phi, 1)
    d1s = 0.5 * (d1 + transport_bwd(grid, U, d1, 0))
    d2s = 0.5 * (d2 + transport_bwd(grid, U, d2, 1))
    return 0.5 * (d1s + 1j * d2s)


def dbar_forward(grid, U, phi):
    """(0,1) covariant derivative on forward links, no averaging.

    This is the version whose adjoint is exact (used by the linearized
    complex operators); dbar_site is the symmetric second-order version
    used for reported residuals and the A_0 source.
    """
    return 0.5 * (cov_diff(grid, U, phi, 0) + 1j * cov_diff(grid, U, phi, 1))


def dbar_forward_adjoint(grid, U, eta):
    """Exact adjoint of dbar_forward under the plain site inner product."""
    return -0.5 * (cov_diff_bwd(grid, U, eta, 0) - 1j * cov_diff_bwd(grid, U, eta, 1))


def dbar_backward(grid, U, phi):
    """(0,1) covariant derivative on backward links (mirror of dbar_forward)."""
    return 0.5 * (cov_diff_bwd(grid, U, phi, 0) + 1j * cov_diff_bwd(grid, U, phi, 1))


def dbar_backward_adjoint(grid, U, eta):
    """Exact adjoint of dbar_backward."""
    return -0.5 * (cov_diff(grid, U, eta, 0) - 1j * cov_diff(grid, U, eta, 1))


def plaquette_average(grid, f):
    """Average of the four corners of each plaquette (value at its centre)."""
    fx = roll_fwd(f, 0)
    return 0.25 * (f + fx + roll_fwd(f, 1) + roll_fwd(fx, 1))


# ----------------------------------------------------------------------
# Elliptic solvers
# ----------------------------------------------------------------------

def solve_poisson(grid, rhs, mean_tol=1e-10):
    """Zero-mean solution of laplacian(x) = rhs via FFT.

    rhs must have (numerically) zero mean; the mean mode is projected out
    and an error is raised if it is significant relative to the data.
    """
    rhs = np.asarray(rhs)
    scale = np.max(np.abs(rhs)) + 1e-300
    mean = np.mean(rhs)
    if abs(mean) > mean_tol * scale:
        raise HelmholtzError(
            f"Poisson solve needs zero-mean rhs (relative mean {abs(mean)/scale:.2e})"
        )
    rhat = np.fft.fft2(rhs)
    eigs = grid.lap_eigs.copy()
    eigs[0, 0] = 1.0
    xhat = -rhat / eigs
    xhat[0, 0] = 0.0
    x = np.fft.ifft2(xhat)
    return x.real if np.isrealobj(rhs) else x


def pcg(apply_op, rhs, apply_prec=None, tol=1e-10, maxiter=500, x0=None, label="CG"):
    """Preconditioned conjugate gradient for SPD operators on lattice arrays.

    The inner product is the real part of the complex dot, so complex
    fields are treated as their real/imaginary pairs.  Stops at relative
    true residual <= tol; raises HelmholtzError on stagnation.
    """

    def dot(a, b):
        return float(np.real(np.sum(np.conj(a) * b)))

    bnorm = np.sqrt(dot(rhs, rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - apply_op(x)
    z = apply_prec(r) if apply_prec is not None else r
    p = z.copy()
    rz = dot(r, z)
    for _ in range(maxiter):
        if np.sqrt(dot(r, r)) <= tol * bnorm:
            return x
        ap = apply_op(p)
        alpha = rz / dot(p, ap)
        x = x + alpha * p
        r = r - alpha * ap
        if np.sqrt(dot(r, r)) <= tol * bnorm:
            return x
        z = apply_prec(r) if apply_prec is not None else r
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise HelmholtzError(
        f"{label} did not reach relative residual {tol:.1e} in {maxiter} iterations"
    )


def solve_helmholtz(grid, m, rhs, tol=1e-10, maxiter=500, x0=None):
    """Solve (-laplacian + m) x = rhs with site field m >= 0.

    Preconditioned conjugate gradient with the FFT-diagonal operator
    (-laplacian + mean(m)) as preconditioner; relative residual <= tol on
    exit.  For m identically zero the zero-mean FFT solve is used directly
    (rhs must then have zero mean).  Real and complex rhs are supported.
    """
    m = np.asarray(m, dtype=float) * np.ones(grid.shape)
    if np.any(m < -1e-14):
        raise HelmholtzError("Helmholtz coefficient m must be nonnegative")
    rhs = np.asarray(rhs)
    if not np.any(m > 0):
        return -solve_poisson(grid, rhs)

    eigs = grid.lap_eigs + float(np.mean(m))
    is_real = np.isrealobj(rhs) and (x0 is None or np.isrealobj(x0))
    if is_real:
        def apply_prec(r):
            return np.fft.irfft2(np.fft.rfft2(r) / eigs[:, : grid.ny // 2 + 1], s=grid.shape)
    else:
        def apply_prec(r):
            return np.fft.ifft2(np.fft.fft2(r) / eigs)
        rhs = rhs.astype(complex)
        x0 = None if x0 is None else x0.astype(complex)

    def apply_op(x):
        return -laplacian(grid, x) + m * x

    return pcg(apply_op, rhs, apply_prec, tol=tol, maxiter=maxiter, x0=x0,
               label="Helmholtz CG")


def hodge_gauge_from_curl(grid, g, branch="gauss"):
    """Link field realising the flat Hodge system d a = g dmu, div a = 0.

    One FFT Poisson solve, a = curl_star(phi) with -laplacian(phi) = g0
    (g0 = g minus its mean), in one of two exact flavours:

      branch="gauss":     curl_minus(a) = g0 and div_plus(a) = 0 exactly;
                          the moment-map (Gauss) constraint of the
                          evolution starts at roundoff.  Default for
                          states that seed time evolution.
      branch="plaquette": curl_plus(a) = g0 and div_minus(a) = 0 exactly;
                          the gauge-invariant curvature matches g0, which
                          is what the self-dual residual studies measure.

    The two curls of a single field differ by O(h) second differences, so
    only one can be prescribed exactly; both branches leave the other
    residual at that size (harmless wherever it enters squared).
    """
    g0 = g - np.mean(g)
    phi = solve_poisson(grid, -g0)
    if branch == "plaquette":
        return curl_plus_star(grid, phi)
    if branch == "gauss":
        return curl_minus_star(grid, phi)
    raise ValueError(f"unknown Hodge branch {branch!r}")
