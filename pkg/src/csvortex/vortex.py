"""Self-dual vortex construction with prescribed zeros.

The magnitude comes from the scalar reduction: u = log|Phi|^2 solves

    laplacian(u) = e^u - 1 + 4*pi*N/area  + (delta charges at the zeros)

split as u = u0 + v with u0 absorbing the (bilinearly deposited) point
charges and v solved by a damped Newton iteration, each step one screened
Poisson solve.  Solvability requires the Bradlow bound area > 4*pi*N.

The connection is then assigned from the constraint branch (Hodge solve
with curl target (1 - e^u)/2 - b), and the Higgs phase is recovered
spectrally: a crude winding ansatz is projected onto the near-kernel of
the dbar_A Laplacian by shifted inverse iteration, which yields the
holomorphic section for this connection without ever integrating a
multivalued angle.  Setting |Phi| = e^{u/2} on top of that phase gives a
state whose self-dual residual vanishes at second order in the spacing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .fields import FieldState, GaugeField, HiggsField
from .zeros import VortexConfig, locate_zeros

FOUR_PI = 4.0 * np.pi


class BradlowViolation(ValueError):
    """Requested degree does not fit: area <= 4*pi*N."""


class KWConvergenceError(RuntimeError):
    """Newton iteration for the scalar reduction failed to converge."""


class ReconstructError(RuntimeError):
    """Reconstructed state misses the self-dual residual target."""


@dataclass(frozen=True)
class KWSolution:
    """Scalar-reduction solution u = log|Phi|^2 and solve metadata."""

    u: np.ndarray
    newton_iters: int
    final_residual: float
    bradlow_margin: float
    regular: np.ndarray = None  # smooth Newton unknown, reusable as warm start

    def flux(self, grid):
        """int (1 - e^u) dmu; equals 4*pi*N at convergence."""
        return grid.quadrature(1.0 - np.exp(self.u))


def _as_points(grid, zeros):
    if isinstance(zeros, VortexConfig):
        pts = zeros.zeros
    else:
        pts = np.asarray(zeros, dtype=float).reshape(-1, 2)
    return grid.wrap_coords(pts)


def _bspline3_weights(f):
    """Cubic B-spline weights over offsets (-1, 0, 1, 2); sum to 1 exactly."""
    return (
        (1.0 - f) ** 3 / 6.0,
        (4.0 - 6.0 * f**2 + 3.0 * f**3) / 6.0,
        (1.0 + 3.0 * f + 3.0 * f**2 - 3.0 * f**3) / 6.0,
        f**3 / 6.0,
    )


def deposit_charges(grid, pts, kernel="bilinear"):
    """Charge deposition to the site array; total charge exact either way.

    "bilinear" spreads each unit charge over the 4 nearest sites
    (area-weighted) and is the solver's convention.  "cubic" spreads over
    a 4x4 cubic B-spline patch, whose weights depend C^2-smoothly on the
    sub-cell position; the reduced-Hamiltonian machinery uses it so u(z)
    carries no O(h^2) sub-cell wiggle.
    """
    w = np.zeros(grid.shape)
    for x, y in pts:
        fx, ix = np.modf(x / grid.ax)
        fy, iy = np.modf(y / grid.ay)
        ix, iy = int(ix) % grid.nx, int(iy) % grid.ny
        if kernel == "bilinear":
            wx = (1.0 - fx, fx)
            wy = (1.0 - fy, fy)
            offs = (0, 1)
        elif kernel == "cubic":
            wx = _bspline3_weights(fx)
            wy = _bspline3_weights(fy)
            offs = (-1, 0, 1, 2)
        else:
            raise ValueError(f"unknown deposition kernel {kernel!r}")
        for a, ox in zip(wx, offs):
            for b, oy in zip(wy, offs):
                w[(ix + ox) % grid.nx, (iy + oy) % grid.ny] += a * b
    return w


def singular_part(grid, zeros, kernel="bilinear"):
    """Zero-mean u0 with laplacian(u0) = 4*pi*(deposited deltas) - 4*pi*N/area."""
    pts = _as_points(grid, zeros)
    if len(pts) != grid.N:
        raise ValueError(f"{len(pts)} zeros given for bundle degree {grid.N}")
    if grid.N == 0:
        return np.zeros(grid.shape)
    w = deposit_charges(grid, pts, kernel=kernel)
    if np.max(w) > 4.0 + 1e-9:
        import warnings

        warnings.warn("more than 4 charges stacked in one cell; grid too coarse")
    rhs = (FOUR_PI / grid.cell_area) * w - FOUR_PI * grid.N / grid.area
    rhs -= np.mean(rhs)
    return ops.solve_poisson(grid, rhs)


def solve_kw(grid, zeros, tol=1e-10, max_newton=50, cg_tol=1e-12, v0=None,
             kernel="bilinear"):
    """Solve the scalar reduction by damped Newton; returns a KWSolution.

    The update equation (-laplacian + e^{u0+v}) dv = residual is SPD, so
    each step is one preconditioned CG solve; backtracking halves the step
    until the residual norm decreases.  Raises BradlowViolation when
    area <= 4*pi*N and KWConvergenceError when Newton stalls.  v0 warm
    starts the regular part (useful for families of nearby zero sets).
    """
    margin = grid.area - FOUR_PI * grid.N
    if margin <= 0.0:
        raise BradlowViolation(
            f"area {grid.area:.6g} <= 4*pi*N = {FOUR_PI * grid.N:.6g}"
        )
    u0 = singular_part(grid, zeros, kernel=kernel)
    if grid.N == 0:
        return KWSolution(np.zeros(grid.shape), 0, 0.0, margin)

    c = FOUR_PI * grid.N / grid.area
    v = np.full(grid.shape, np.log(1.0 - c)) if v0 is None else v0.copy()

    def residual(vv):
        return ops.laplacian(grid, vv) - (np.exp(u0 + vv) - 1.0 + c)

    res = residual(v)
    rnorm = grid.l2_norm(res)
    iters = 0
    while rnorm > tol and iters < max_newton:
        m = np.exp(u0 + v)
        dv = ops.solve_helmholtz(grid, m, res, tol=cg_tol, maxiter=2000)
        t = 1.0
        while t > 1e-4:
            trial = v + t * dv
            tnorm = grid.l2_norm(residual(trial))
            if tnorm < (1.0 - 1e-4 * t) * rnorm:
                break
            t *= 0.5
        else:
            raise KWConvergenceError(
                f"line search stalled at residual {rnorm:.3e} (iter {iters})"
            )
        v = v + t * dv
        res = residual(v)
        rnorm = grid.l2_norm(res)
        iters += 1
    if rnorm > tol:
        raise KWConvergenceError(
            f"Newton did not reach {tol:.1e} in {max_newton} iterations "
            f"(residual {rnorm:.3e})"
        )
    return KWSolution(u0 + v, iters, rnorm, margin, v)


def _winding_ansatz(grid, pts):
    """Crude product ansatz with the right zero set (seams allowed)."""
    X, Y = grid.sites()
    w = np.ones(grid.shape, dtype=complex)
    for zx, zy in pts:
        dx = grid.min_image(X - zx, 0)
        dy = grid.min_image(Y - zy, 1)
        w *= (dx + 1j * dy) / np.sqrt(dx**2 + dy**2 + 1.0)
    return w


def holomorphic_section(grid, a, pts, mag=None, n_iter=7, shift=None,
                        cg_tol=1e-13, pin_divisor=True, warm=None,
                        warm_sweeps=2, warm_cg_tol=1e-9):
    """Near-holomorphic section with the requested zero divisor.

    Shifted inverse iteration of the symmetrized dbar_A Laplacian,
    started from the winding ansatz (optionally magnitude-weighted by
    mag): non-kernel content, in particular the ansatz's branch seams, is
    damped by roughly (gap/shift) per sweep, while the kernel component
    closest to the ansatz survives.  The forward/backward symmetrization
    makes the section, magnitude included, a second-order-accurate
    sampling of a continuum holomorphic section.

    For degree >= 2 the kernel is an N-complex-dimensional linear system
    in which the zero divisor can still slide (only its sum is pinned by
    the connection), so with pin_divisor the remaining kernel directions
    are resolved and the coefficients Newton-adjusted until the located
    zeros match the request.
    """
    U = ops.link_phases(grid, a)
    if shift is None:
        shift = max(1e-3, 0.02 * grid.b)

    def apply_op(w):
        out = ops.dbar_forward_adjoint(grid, U, ops.dbar_forward(grid, U, w))
        out += ops.dbar_backward_adjoint(grid, U, ops.dbar_backward(grid, U, w))
        return 0.5 * out + shift * w

    eigs = 0.25 * grid.lap_eigs + shift

    def apply_prec(r):
        return np.fft.ifft2(np.fft.fft2(r) / eigs)

    def smooth(w, sweeps, tol=cg_tol):
        for _ in range(sweeps):
            w = ops.pcg(apply_op, w, apply_prec, tol=tol, maxiter=3000,
                        label="dbar inverse iteration")
            w /= grid.l2_norm(w)
        return w

    warm = warm if warm is not None else {}
    n_warm = warm_sweeps
    if warm.get("w") is not None:
        w = smooth(warm["w"].copy(), n_warm, tol=warm_cg_tol)
    else:
        w0 = _winding_ansatz(grid, pts)
        if mag is not None:
            m = np.abs(w0)
            w0 = mag * np.where(m > 1e-14, w0 / np.maximum(m, 1e-300), 1.0)
        w = smooth(w0 / grid.l2_norm(w0), n_iter)

    N = len(pts)
    if N < 2 or not pin_divisor:
        warm["w"] = w
        return w

    # resolve the rest of the kernel: seeds with each zero displaced keep
    # the block well conditioned after smoothing
    cols = [w]
    extras = warm.get("extras")
    for j in range(N - 1):
        if extras is not None and j < len(extras):
            cols.append(smooth(extras[j].copy(), n_warm, tol=warm_cg_tol))
            continue
        shifted = np.array(pts, float)
        shifted[j][0] += 3.0 * grid.ax
        shifted[(j + 1) % N][0] -= 3.0 * grid.ax
        seed = _winding_ansatz(grid, grid.wrap_coords(shifted))
        if mag is not None:
            m = np.abs(seed)
            seed = mag * np.where(m > 1e-14, seed / np.maximum(m, 1e-300), 1.0)
        cols.append(smooth(seed / grid.l2_norm(seed), n_iter))
    warm["extras"] = cols[1:]
    basis = _complex_orthonormalize(grid, cols)
    w = _pin_divisor(grid, a, basis, w, pts)
    warm["w"] = w
    return w


def _complex_orthonormalize(grid, cols):
    out = []
    for c in cols:
        v = c.astype(complex)
        for q in out:
            v = v - (grid.cell_area * np.sum(np.conj(q) * v)) * q
        nrm = grid.l2_norm(v)
        if nrm > 1e-10:
            out.append(v / nrm)
    return out


def _pin_divisor(grid, a, basis, w, pts, max_newton=10, tol_cells=0.01):
    """Gauss-Newton in the kernel coefficients so the zeros land on pts."""
    from .zeros import locate_zeros, match_zero_sets

    if len(basis) < 2:
        return w

    perp = basis[1:]

    def section(c):
        s = w.copy()
        for ck, qk in zip(c, perp):
            s = s + ck * qk
        return s / grid.l2_norm(s)

    def residual(c):
        s = section(c)
        try:
            found = locate_zeros(grid, s, a)
        except Exception:
            return None, np.inf
        if len(found.zeros) != len(pts):
            return None, np.inf
        res = []
        remaining = list(range(len(found.zeros)))
        for p in pts:
            d = [
                (grid.min_image(found.zeros[k][0] - p[0], 0),
                 grid.min_image(found.zeros[k][1] - p[1], 1))
                for k in remaining
            ]
            kb = int(np.argmin([dx * dx + dy * dy for dx, dy in d]))
            res.extend(d[kb])
            remaining.pop(kb)
        res = np.asarray(res)
        return res, float(np.max(np.abs(res)))

    nc = len(perp)
    c = np.zeros(nc, dtype=complex)
    r, worst = residual(c)
    if r is None:
        return w
    step = 0.05
    cell = max(grid.ax, grid.ay)
    for _ in range(max_newton):
        if worst <= tol_cells * cell:
            break
        # finite-difference Jacobian in the 2*nc real parameters
        J = np.zeros((len(r), 2 * nc))
        for k in range(nc):
            for part, delta in ((0, step), (1, 1j * step)):
                cp = c.copy()
                cp[k] += delta
                rp, _ = residual(cp)
                if rp is None:
                    return section(c)
                J[:, 2 * k + part] = (rp - r) / step
        upd, *_ = np.linalg.lstsq(J, -r, rcond=None)
        c = c + upd[0::2] + 1j * upd[1::2]
        r_new, worst_new = residual(c)
        if r_new is None:
            return section(c - upd[0::2] - 1j * upd[1::2])
        r, worst = r_new, worst_new
        step = max(0.3 * step, 1e-4)
    return section(c)


def reconstruct(grid, kw, zeros, mu=1.0, sigma=0, branch="gauss",
                max_residual=None, check=True, workspace=None):
    """Assemble the self-dual FieldState from a scalar-reduction solution.

    Pipeline: a provisional connection is derived from the scalar solution
    via the Hodge solve, the Higgs field is the holomorphic section of
    that connection (inverse iteration; phase and magnitude together, the
    scalar solution only sets the overall scale through exact flux
    matching), and the connection is then re-solved from the actual
    |Phi|^2 so the constraint branch holds exactly.

    branch selects which discrete realisation of B = (1 - |Phi|^2)/2 is
    exact in the final state: "gauss" (default) zeroes the moment-map
    density monitored by the evolution, "plaquette" zeroes the
    gauge-invariant curvature residual at plaquette centres, which is the
    branch the Bogomolny refinement studies measure.  The other residual
    is O(h) pointwise either way and only enters observables squared.
    """
    pts = _as_points(grid, zeros)
    em = np.exp(kw.u)
    if grid.N == 0:
        a = np.zeros((2,) + grid.shape)
        phi = np.sqrt(em).astype(complex)
        return FieldState(GaugeField(grid, a), HiggsField(grid, phi), mu, sigma)

    target0 = 0.5 * (1.0 - ops.plaquette_average(grid, em)) - grid.b
    a0 = ops.hodge_gauge_from_curl(grid, target0, branch="plaquette")
    workspace = workspace if workspace is not None else {}
    warm = workspace.setdefault("section", {})
    mag = np.sqrt(em)

    # The holomorphic structure of the connection pins the divisor CLASS
    # (the sum of the zeros) through its holonomy, not through the shape
    # of the curvature, so the requested sum is dialled in by a constant
    # flat link field: a shift (f1, f2) moves the sum by
    # (area / 2 pi) (f2, -f1).  Newton on that exact linear relation.
    flat = np.array(workspace.get("flat", (0.0, 0.0)), dtype=float)
    cell = max(grid.ax, grid.ay)
    a_work = a0 + flat[:, None, None]
    w = holomorphic_section(grid, a_work, pts, mag=mag, warm=warm,
                            pin_divisor=False)
    for _ in range(6):
        found = locate_zeros(grid, w, a_work)
        if len(found.zeros) != grid.N:
            raise ReconstructError("could not track the zeros of the section")
        mx = grid.min_image(np.sum(pts[:, 0]) - np.sum(found.zeros[:, 0]), 0)
        my = grid.min_image(np.sum(pts[:, 1]) - np.sum(found.zeros[:, 1]), 1)
        if np.hypot(mx, my) <= 0.05 * cell:
            break
        flat = flat + (2.0 * np.pi / grid.area) * np.array([my, -mx])
        a_work = a0 + flat[:, None, None]
        w = holomorphic_section(grid, a_work, pts, mag=mag, warm=warm,
                                pin_divisor=False)
    workspace["flat"] = flat
    if grid.N >= 2:
        w = holomorphic_section(grid, a_work, pts, mag=mag, warm=warm,
                                pin_divisor=True)

    # exact flux normalisation: int (1 - |Phi|^2) = 4 pi N to roundoff
    s2 = (grid.area - FOUR_PI * grid.N) / grid.quadrature(np.abs(w) ** 2)
    phi = np.sqrt(s2) * w
    align = np.sum(np.conj(_winding_ansatz(grid, pts)) * phi)
    if abs(align) > 0:
        phi *= np.conj(align) / abs(align)

    dens = np.abs(phi) ** 2
    if branch == "plaquette":
        target = 0.5 * (1.0 - ops.plaquette_average(grid, dens)) - grid.b
    else:
        target = 0.5 * (1.0 - dens) - grid.b
    a = ops.hodge_gauge_from_curl(grid, target, branch=branch)
    a = a + flat[:, None, None]

    state = FieldState(GaugeField(grid, a), HiggsField(grid, phi), mu, sigma)
    if check:
        from .energetics import bogomolny

        bnorm = bogomolny(state).norm
        if max_residual is None:
            max_residual = 0.05 + 0.5 * np.sqrt(2.0 * np.pi * max(grid.N, 1))
        if bnorm > max_residual:
            raise ReconstructError(
                f"self-dual residual {bnorm:.3e} exceeds {max_residual:.3e}; "
                "refine the grid (the residual contracts at second order)"
            )
    return state


def solve_vortex(grid, zeros, mu=1.0, sigma=0, tol=1e-10, branch="gauss",
                 workspace=None):
    """Convenience wrapper: scalar solve plus reconstruction.

    workspace, when given, is a mutable dict reused across calls with
    nearby zero sets; it warm starts both the Newton iteration and the
    holomorphic-section sweeps (the moduli frame and the reduced
    integrator lean on this heavily).
    """
    v0 = None if workspace is None else workspace.get("v")
    kw = solve_kw(grid, zeros, tol=tol, v0=v0)
    if workspace is not None and kw.regular is not None:
        workspace["v"] = kw.regular
    state = reconstruct(grid, kw, zeros, mu=mu, sigma=sigma, branch=branch,
                        workspace=workspace)
    return state, kw


def verify_zeros(grid, state, pts, tol_cells=1.0):
    """Check that the reconstructed zeros match the request within tol cells."""
    found = locate_zeros(grid, state.higgs.phi, state.gauge.a)
    from .zeros import match_zero_sets

    dist = match_zero_sets(grid, _as_points(grid, pts), found.zeros)
    return dist, dist <= tol_cells * max(grid.ax, grid.ay)
