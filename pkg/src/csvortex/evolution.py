"""Time integration of the rescaled gauged Schroedinger flow.

The semi-discrete system is the exact Hamiltonian flow of the discrete
energy mu*V + U under the pointwise complex structure,

    psi_dot = -J (mu V'(psi) + U'(psi)) + (grad A0, i A0 Phi),

with the last term present only in gauge1 mode, where A0 solves the
screened Poisson equation that makes the discrete gauge-slice residual
div Adot - <i Phi, Phidot> vanish identically:

    (-lap + |Phi|^2) A0 = curl_minus(G_A) + <Phi, G_Phi>,   G = mu V' + U'.

(The continuum limit of that right side is 4 mu |eta|^2 - sigma B |Phi|^2
on the constraint surface; the exact form is used so the slice residual is
solver-tolerance small at every evaluation.)

Because the gradients are exact and the gauge action leaves the discrete
energy invariant, three quantities are conserved by the semi-discrete
flow to roundoff: the energy mu*V + U, the L2 norm of Phi, and - in
temporal mode - the pointwise Gauss/moment-map density
b + curl_minus(A) - (1 - |Phi|^2)/2.  Fully discrete drift is set by the
integrator order only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .energetics import energy, gauss_residual, potential_correction
from .fields import FieldState, GaugeField, HiggsField, re_inner
from .zeros import locate_zeros

RK4_STABILITY = 2.8


class BlowupError(RuntimeError):
    """Field magnitudes exceeded the blow-up threshold or became non-finite."""


class CFLError(ValueError):
    """Requested RK4 step exceeds the stability limit."""


def default_dt(grid, mu):
    """Conservative default step 0.5 / (mu (pi^2 (nx^2/Lx^2 + ny^2/Ly^2) + 1))."""
    k2 = np.pi**2 * (grid.nx**2 / grid.Lx**2 + grid.ny**2 / grid.Ly**2)
    return 0.5 / (mu * (k2 + 1.0))


def rk4_dt_limit(grid, mu):
    """Stability bound for the classical RK4 scheme on the stiffest mode."""
    lam_max = float(np.max(grid.lap_eigs)) + 1.0
    return RK4_STABILITY / (mu * lam_max)


def force_arrays(grid, a, phi, mu, sigma):
    """G = mu V' + U' as raw arrays (ga, gphi), fused for the hot path."""
    theta0 = grid.omega[0] + grid.ax * a[0]
    theta1 = grid.omega[1] + grid.ay * a[1]
    U0 = np.exp(-1j * theta0)
    U1 = np.exp(-1j * theta1)

    B = grid.b + (np.roll(a[1], -1, 0) - a[1]) / grid.ax - (
        np.roll(a[0], -1, 1) - a[0]
    ) / grid.ay
    ga = np.empty((2,) + grid.shape)
    ga[0] = (B - np.roll(B, 1, 1)) / grid.ay
    ga[1] = -(B - np.roll(B, 1, 0)) / grid.ax

    d0 = (U0 * np.roll(phi, -1, 0) - phi) / grid.ax
    d1 = (U1 * np.roll(phi, -1, 1) - phi) / grid.ay
    ga[0] -= np.real(np.conj(1j * phi) * d0)
    ga[1] -= np.real(np.conj(1j * phi) * d1)
    ga *= mu

    lap = (d0 - np.conj(np.roll(U0, 1, 0)) * np.roll(d0, 1, 0)) / grid.ax
    lap += (d1 - np.conj(np.roll(U1, 1, 1)) * np.roll(d1, 1, 1)) / grid.ay
    one_minus = 1.0 - np.abs(phi) ** 2
    gphi = -mu * lap - (0.5 * (mu + sigma)) * one_minus * phi
    return ga, gphi


def solve_A0(state, ga=None, gphi=None, rhs_form="exact", tol=1e-10, x0=None):
    """Temporal component of the connection in gauge1 mode.

    rhs_form="exact" builds the right side from the discrete force so the
    gauge-slice residual of the assembled flow vanishes identically;
    "constrained" uses the continuum form 4 mu |eta|^2 - sigma B |Phi|^2,
    which agrees with the exact form to O(h^2) on the constraint surface.
    """
    grid = state.grid
    phi = state.higgs.phi
    if rhs_form == "exact":
        if ga is None or gphi is None:
            ga, gphi = force_arrays(grid, state.gauge.a, phi, state.mu, state.sigma)
        rhs = ops.curl_minus(grid, ga) + re_inner(phi, gphi)
    elif rhs_form == "constrained":
        U = state.link_phases()
        eta = ops.dbar_site(grid, U, phi)
        B = ops.curvature(grid, state.gauge.a)
        rhs = 4.0 * state.mu * np.abs(eta) ** 2 - state.sigma * B * np.abs(phi) ** 2
    else:
        raise ValueError(f"unknown rhs_form {rhs_form!r}")
    return ops.solve_helmholtz(grid, np.abs(phi) ** 2, rhs, tol=tol, x0=x0)


def _rhs_arrays(grid, a, phi, mu, sigma, mode, a0_prev=None, a0_tol=1e-10):
    """psi_dot = (adot, phidot) plus the A0 used (gauge1) or None."""
    ga, gphi = force_arrays(grid, a, phi, mu, sigma)
    adot = np.empty_like(ga)
    adot[0] = ga[1]
    adot[1] = -ga[0]
    phidot = -1j * gphi
    a0 = None
    if mode == "gauge1":
        rhs = ops.curl_minus(grid, ga) + re_inner(phi, gphi)
        a0 = ops.solve_helmholtz(grid, np.abs(phi) ** 2, rhs, tol=a0_tol, x0=a0_prev)
        adot[0] += (np.roll(a0, -1, 0) - a0) / grid.ax
        adot[1] += (np.roll(a0, -1, 1) - a0) / grid.ay
        phidot += 1j * a0 * phi
    return adot, phidot, a0


def rhs(state, mode="temporal", a0_prev=None):
    """Public flow evaluation returning a TangentField and A0 (or None)."""
    from .fields import TangentField

    adot, phidot, a0 = _rhs_arrays(
        state.grid, state.gauge.a, state.higgs.phi, state.mu, state.sigma, mode, a0_prev
    )
    return TangentField(state.grid, adot, phidot), a0


def gauge_slice_residual_of_flow(state, mode="temporal"):
    """|| div Adot - <i Phi, Phidot> || of the instantaneous flow (L2)."""
    grid = state.grid
    zeta, _ = rhs(state, mode)
    r = ops.div_minus(grid, zeta.a_dot) - re_inner(1j * state.higgs.phi, zeta.phi_dot)
    return grid.l2_norm(r)


class _IMEXFactors:
    """FFT factors for the Crank-Nicolson half of the IMEX scheme.

    The implicit operator is the constant-coefficient stiff part
    T = (mu rot curl+* curl+  on A,  i mu laplacian  on Phi); the gauge
    couplings, potential and A0 terms stay explicit.
    """

    def __init__(self, grid, mu, dt):
        from .grid import _forward_symbols

        s1, s2 = _forward_symbols(grid)
        g = 0.5 * dt * mu
        # (I - g T_A) as a 2x2 block per mode; T_A v = (s1b c, s2b c),
        # c = s1 v2 - s2 v1 times mu with s_b = conj(s)
        self.m11 = 1.0 + g * np.conj(s1) * s2
        self.m12 = -g * np.conj(s1) * s1
        self.m21 = g * np.conj(s2) * s2
        self.m22 = 1.0 - g * np.conj(s2) * s1
        self.det = self.m11 * self.m22 - self.m12 * self.m21
        self.p11 = 1.0 - g * np.conj(s1) * s2
        self.p12 = g * np.conj(s1) * s1
        self.p21 = -g * np.conj(s2) * s2
        self.p22 = 1.0 + g * np.conj(s2) * s1
        lam = grid.lap_eigs
        self.phi_solve = 1.0 / (1.0 + 1j * g * lam)
        self.phi_apply = 1.0 - 1j * g * lam
        self.grid = grid
        self.mu = mu
        self.dt = dt

    def apply_T(self, a, phi):
        """T y for the explicit-residual split N(y) = f(y) - T y."""
        grid = self.grid
        c = self.mu * ops.curl_plus(grid, a)
        ta = np.empty_like(a)
        # rot(curl_plus_star(c)) = (-D-_x c, -D-_y c)
        ta[0] = -(c - np.roll(c, 1, 0)) / grid.ax
        ta[1] = -(c - np.roll(c, 1, 1)) / grid.ay
        tphi = 1j * self.mu * ops.laplacian(grid, phi)
        return ta, tphi

    def solve(self, ra, rphi):
        """(I - dt/2 T)^{-1} applied to (ra, rphi)."""
        f1 = np.fft.fft2(ra[0])
        f2 = np.fft.fft2(ra[1])
        v1 = (self.m22 * f1 - self.m12 * f2) / self.det
        v2 = (-self.m21 * f1 + self.m11 * f2) / self.det
        out_a = np.empty_like(ra)
        out_a[0] = np.fft.ifft2(v1).real
        out_a[1] = np.fft.ifft2(v2).real
        out_phi = np.fft.ifft2(np.fft.fft2(rphi) * self.phi_solve)
        return out_a, out_phi

    def apply_plus(self, a, phi):
        """(I + dt/2 T) applied spectrally."""
        f1 = np.fft.fft2(a[0])
        f2 = np.fft.fft2(a[1])
        out_a = np.empty_like(a)
        out_a[0] = np.fft.ifft2(self.p11 * f1 + self.p12 * f2).real
        out_a[1] = np.fft.ifft2(self.p21 * f1 + self.p22 * f2).real
        out_phi = np.fft.ifft2(np.fft.fft2(phi) * self.phi_apply)
        return out_a, out_phi


@dataclass
class EvolutionState:
    """Owned, mutable integration state (single writer)."""

    state: FieldState
    mode: str = "temporal"
    scheme: str = "rk4"
    dt: float = None
    steps: int = 0
    rejects: int = 0
    a0: np.ndarray = None
    _imex: _IMEXFactors = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("temporal", "gauge1"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.scheme not in ("rk4", "imex"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        grid = self.state.grid
        if self.dt is None:
            self.dt = default_dt(grid, self.state.mu) * (4.0 if self.scheme == "imex" else 1.0)
        if self.scheme == "rk4" and self.dt > rk4_dt_limit(grid, self.state.mu):
            raise CFLError(
                f"dt = {self.dt:.3e} exceeds the RK4 limit "
                f"{rk4_dt_limit(grid, self.state.mu):.3e}"
            )

    @property
    def tau(self):
        return self.state.tau


def step(ev):
    """Advance one accepted step in place; returns the EvolutionState."""
    st = ev.state
    grid = st.grid
    a, phi = st.gauge.a, st.higgs.phi
    mu, sigma = st.mu, st.sigma
    dt = ev.dt

    if ev.scheme == "rk4":
        k1a, k1p, a0 = _rhs_arrays(grid, a, phi, mu, sigma, ev.mode, ev.a0)
        k2a, k2p, a0 = _rhs_arrays(
            grid, a + 0.5 * dt * k1a, phi + 0.5 * dt * k1p, mu, sigma, ev.mode, a0
        )
        k3a, k3p, a0 = _rhs_arrays(
            grid, a + 0.5 * dt * k2a, phi + 0.5 * dt * k2p, mu, sigma, ev.mode, a0
        )
        k4a, k4p, a0 = _rhs_arrays(
            grid, a + dt * k3a, phi + dt * k3p, mu, sigma, ev.mode, a0
        )
        a_new = a + (dt / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        phi_new = phi + (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        ev.a0 = a0
    else:
        if ev._imex is None or ev._imex.dt != dt or ev._imex.mu != mu:
            ev._imex = _IMEXFactors(grid, mu, dt)
        fx = ev._imex

        def explicit(aa, pp):
            fa, fp, _ = _rhs_arrays(grid, aa, pp, mu, sigma, ev.mode, ev.a0)
            ta, tp = fx.apply_T(aa, pp)
            return fa - ta, fp - tp

        na1, np1 = explicit(a, phi)
        ra, rp = fx.apply_plus(a, phi)
        a_star, phi_star = fx.solve(ra + dt * na1, rp + dt * np1)
        na2, np2 = explicit(a_star, phi_star)
        a_new, phi_new = fx.solve(
            ra + 0.5 * dt * (na1 + na2), rp + 0.5 * dt * (np1 + np2)
        )

    if (
        not np.all(np.isfinite(a_new))
        or not np.all(np.isfinite(phi_new))
        or np.max(np.abs(a_new)) > 1e6
        or np.max(np.abs(phi_new)) > 1e6
    ):
        raise BlowupError(f"field blow-up detected at tau = {st.tau:.6g}")

    ev.state = FieldState(
        GaugeField(grid, a_new), HiggsField(grid, phi_new), mu, sigma, st.tau + dt
    )
    ev.steps += 1
    return ev


@dataclass
class DiagnosticsRecord:
    """Per-sample conserved and monitored quantities."""

    tau: float
    energy: float
    V: float
    U: float
    l2phi: float
    constraint_l2: float
    constraint_inf: float
    gauge_res: float
    a0_l2: float
    a0_l4: float
    mu_eta_inf: float
    zeros: list
    dt: float
    rejects: int

    CSV_COLUMNS = (
        "tau,energy,V,U,l2phi,constraint_l2,constraint_inf,gauge_res,"
        "a0_l2,a0_l4,mu_eta_inf,zeros,dt,rejects"
    )

    def csv_row(self):
        zs = ";".join(f"{x:.17g},{y:.17g}" for x, y in self.zeros)
        vals = [
            self.tau, self.energy, self.V, self.U, self.l2phi,
            self.constraint_l2, self.constraint_inf, self.gauge_res,
            self.a0_l2, self.a0_l4, self.mu_eta_inf,
        ]
        nums = ",".join(f"{v:.17g}" for v in vals)
        return f"{nums},{zs},{self.dt:.17g},{self.rejects}"


def diagnostics(ev, track_zeros=True):
    """Measure the DiagnosticsRecord quantities at the current state."""
    st = ev.state
    grid = st.grid
    V = energy(st, 1.0)
    Ucorr = potential_correction(st)
    gr = gauss_residual(st)
    zeta, a0 = rhs(st, ev.mode, ev.a0)
    gres = grid.l2_norm(
        ops.div_minus(grid, zeta.a_dot)
        - re_inner(1j * st.higgs.phi, zeta.phi_dot)
    )
    if a0 is None:
        a0_l2 = a0_l4 = 0.0
    else:
        a0_l2 = grid.l2_norm(a0)
        a0_l4 = float(grid.quadrature(np.abs(a0) ** 4) ** 0.25)
    eta = ops.dbar_site(grid, st.link_phases(), st.higgs.phi)
    zeros = []
    if track_zeros and grid.N > 0:
        try:
            zeros = [tuple(z) for z in locate_zeros(grid, st.higgs.phi, st.gauge.a).zeros]
        except Exception:
            zeros = []
    return DiagnosticsRecord(
        tau=st.tau,
        energy=st.mu * V + Ucorr,
        V=V,
        U=Ucorr,
        l2phi=grid.quadrature(np.abs(st.higgs.phi) ** 2),
        constraint_l2=grid.l2_norm(gr),
        constraint_inf=float(np.max(np.abs(gr))),
        gauge_res=gres,
        a0_l2=a0_l2,
        a0_l4=a0_l4,
        mu_eta_inf=float(st.mu * np.max(np.abs(eta))),
        zeros=zeros,
        dt=ev.dt,
        rejects=ev.rejects,
    )


@dataclass
class Trajectory:
    """Recorded run: diagnostics samples plus the final state."""

    records: list
    final: FieldState
    halted: bool = False

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(DiagnosticsRecord.CSV_COLUMNS + "\n")
            for rec in self.records:
                fh.write(rec.csv_row() + "\n")


def evolve(ev, tau_end, diag_every=None, observer=None, track_zeros=True,
           snapshot_every=None, snapshot_sink=None):
    """Advance to tau_end, emitting diagnostics at the requested cadence.

    observer(ev, record) is called at each sample; snapshot_sink(ev, k)
    at every snapshot_every-th step when given.  On blow-up the last good
    state is returned with halted=True.
    """
    if tau_end <= ev.tau:
        raise ValueError("tau_end must exceed the current time")
    n_steps = int(np.ceil((tau_end - ev.tau) / ev.dt - 1e-12))
    if diag_every is None:
        diag_every = max(1, n_steps // 50)
    records = [diagnostics(ev, track_zeros)]
    if observer is not None:
        observer(ev, records[-1])
    halted = False
    for k in range(n_steps):
        try:
            step(ev)
        except BlowupError:
            halted = True
            break
        if snapshot_every and snapshot_sink and (k + 1) % snapshot_every == 0:
            snapshot_sink(ev, k + 1)
        if (k + 1) % diag_every == 0 or k == n_steps - 1:
            records.append(diagnostics(ev, track_zeros))
            if observer is not None:
                observer(ev, records[-1])
    return Trajectory(records, ev.state, halted)


def coulomb_project(state, phase_ref=None):
    """Gauge-transform onto the Coulomb branch div A = 0 (plus phase lock).

    Solves laplacian(chi) = -div A and applies (A + d chi, Phi e^{i chi});
    with phase_ref given the residual constant phase is fixed by making
    <phase_ref, Phi> real positive.  Used to compare trajectories evolved
    in different gauges through a common branch.
    """
    from .fields import gauge_transform

    grid = state.grid
    d = ops.div_minus(grid, state.gauge.a)
    chi = ops.solve_poisson(grid, -(d - np.mean(d)))
    out = gauge_transform(state, chi)
    if phase_ref is not None:
        align = np.sum(np.conj(phase_ref) * out.higgs.phi)
        if abs(align) > 0:
            out = out.with_fields(phi=out.higgs.phi * (np.conj(align) / abs(align)))
    return out
