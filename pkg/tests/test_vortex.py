import numpy as np
import pytest

from csvortex import operators as ops
from csvortex.energetics import bogomolny, energy
from csvortex.grid import make_grid
from csvortex.vortex import (
    BradlowViolation,
    deposit_charges,
    reconstruct,
    singular_part,
    solve_kw,
    solve_vortex,
)
from csvortex.zeros import locate_zeros, match_zero_sets

FOUR_PI = 4 * np.pi


def test_bradlow_gate_hard_error():
    # area exactly 4 pi N and below must fail
    L = np.sqrt(FOUR_PI)
    g = make_grid(L, L, 16, 16, 1)
    with pytest.raises(BradlowViolation):
        solve_kw(g, [(0.5 * L, 0.5 * L)])
    g2 = make_grid(0.9 * L, 0.9 * L, 16, 16, 1)
    with pytest.raises(BradlowViolation):
        solve_kw(g2, [(0.4, 0.4)])


def test_bradlow_gate_just_above():
    L = np.sqrt(4.5 * np.pi)  # area = 4.5 pi N, N = 1
    g = make_grid(L, L, 48, 48, 1)
    kw = solve_kw(g, [(0.5 * L, 0.5 * L)], tol=1e-10)
    assert kw.final_residual <= 1e-10
    assert kw.flux(g) == pytest.approx(FOUR_PI, abs=1e-8)


def test_vacuum_sector_trivial():
    g = make_grid(2 * np.pi, 2 * np.pi, 16, 16, 0)
    kw = solve_kw(g, np.zeros((0, 2)))
    assert kw.newton_iters == 0
    assert np.all(kw.u == 0.0)
    st = reconstruct(g, kw, np.zeros((0, 2)))
    assert np.max(np.abs(st.higgs.phi - 1.0)) < 1e-14


def test_singular_part_structure(grid_n1):
    g = grid_n1
    zeros = np.array([(0.5 * g.Lx, 0.5 * g.Ly)])
    u0 = singular_part(g, zeros)
    assert abs(np.mean(u0)) < 1e-12
    # local log asymptotics: u0 - 2 log r bounded on rings around the zero
    X, Y = g.sites()
    r = np.hypot(g.min_image(X - zeros[0, 0], 0), g.min_image(Y - zeros[0, 1], 1))
    ring = (r > 3 * g.ax) & (r < 8 * g.ax)
    vals = (u0 - 2.0 * np.log(r + 1e-300))[ring]
    assert np.max(vals) - np.min(vals) < 0.35


def test_deposit_conserves_charge(grid_n2):
    g = grid_n2
    pts = np.array([(1.234, 2.345), (5.4321, 3.21)])
    w = deposit_charges(g, pts)
    assert np.sum(w) == pytest.approx(2.0, abs=1e-13)


def test_kw_flux_and_max_principle(vortex1, grid_n1):
    kw = vortex1["kw"]
    assert kw.flux(grid_n1) == pytest.approx(FOUR_PI, abs=1e-9)
    assert np.max(np.exp(kw.u)) <= 1.0 + 1e-9
    assert kw.bradlow_margin == pytest.approx(grid_n1.area - FOUR_PI)


def test_reconstruct_roundtrip_zeros(grid_n1, vortex1):
    st = vortex1["gauss"]
    loc = locate_zeros(grid_n1, st.higgs.phi, st.gauge.a)
    assert match_zero_sets(grid_n1, vortex1["zeros"], loc.zeros) <= grid_n1.ax


def test_reconstruct_two_vortex_roundtrip(grid_n2, vortex2):
    st = vortex2["plaquette"]
    loc = locate_zeros(grid_n2, st.higgs.phi, st.gauge.a)
    assert match_zero_sets(grid_n2, vortex2["zeros"], loc.zeros) <= grid_n2.ax


def test_constraint_branches_exact(grid_n1, vortex1):
    g = grid_n1
    stg = vortex1["gauss"]
    dens = np.abs(stg.higgs.phi) ** 2
    gauss = g.b + ops.curl_minus(g, stg.gauge.a) - 0.5 * (1 - dens)
    assert np.max(np.abs(gauss)) < 1e-11
    stp = vortex1["plaquette"]
    dens_c = ops.plaquette_average(g, np.abs(stp.higgs.phi) ** 2)
    plaq = ops.curvature(g, stp.gauge.a) - 0.5 * (1 - dens_c)
    assert np.max(np.abs(plaq)) < 1e-11


def test_flux_normalisation_exact(grid_n1, vortex1):
    g = grid_n1
    st = vortex1["gauss"]
    assert g.quadrature(1.0 - np.abs(st.higgs.phi) ** 2) == pytest.approx(
        FOUR_PI, abs=1e-10)


def test_energy_second_order_to_piN():
    L = np.sqrt(8 * np.pi)
    zeros = np.array([(0.5 * L, 0.5 * L)])
    err = {}
    for n in (48, 96):
        g = make_grid(L, L, n, n, 1)
        st, _ = solve_vortex(g, zeros, branch="plaquette")
        err[n] = abs(energy(st, 1.0) - np.pi)
    assert np.log2(err[48] / err[96]) > 1.7


def test_symmetry_of_magnitude(grid_n2, vortex2):
    # two zeros symmetric about the centre: |Phi| has the point symmetry
    g = grid_n2
    m = np.abs(vortex2["gauss"].higgs.phi)
    # centre is at site (nx/2, ny/2); point reflection x -> 2c - x
    flipped = np.roll(np.flip(m, axis=(0, 1)), (1, 1), axis=(0, 1))
    assert np.max(np.abs(m - flipped)) < 1e-8


def test_translation_equivariance(grid_n1):
    g = grid_n1
    z0 = np.array([(0.5 * g.Lx, 0.5 * g.Ly)])
    z1 = z0 + np.array([[g.ax, 0.0]])
    st0, _ = solve_vortex(g, z0, branch="gauss")
    st1, _ = solve_vortex(g, z1, branch="gauss")
    m0 = np.abs(st0.higgs.phi)
    m1 = np.abs(st1.higgs.phi)
    assert np.max(np.abs(m1 - np.roll(m0, 1, axis=0))) < 5e-4
    B0 = ops.curvature(g, st0.gauge.a)
    B1 = ops.curvature(g, st1.gauge.a)
    assert np.max(np.abs(B1 - np.roll(B0, 1, axis=0))) < 5e-4


def test_bradlow_monotonicity():
    # solver succeeds across the admissible area family
    zeros_frac = np.array([(0.5, 0.5)])
    for factor in (6.0, 8.0, 16.0):
        L = np.sqrt(factor * np.pi)
        g = make_grid(L, L, 32, 32, 1)
        kw = solve_kw(g, zeros_frac * L, tol=1e-9)
        assert kw.final_residual <= 1e-9
