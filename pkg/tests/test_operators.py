import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csvortex import operators as ops
from csvortex.fields import gauge_transform, random_state
from csvortex.grid import make_grid


@pytest.fixture(scope="module")
def g16():
    return make_grid(2 * np.pi, 3.0, 16, 12, 1)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_summation_by_parts(g16):
    r = rng(1)
    f = r.standard_normal(g16.shape)
    v = r.standard_normal((2,) + g16.shape)
    s = r.standard_normal(g16.shape)
    lhs = np.sum(ops.grad_plus(g16, f) * v)
    rhs = -np.sum(f * ops.div_minus(g16, v))
    assert abs(lhs - rhs) < 1e-11
    assert abs(np.sum(ops.curl_plus(g16, v) * s) - np.sum(v * ops.curl_plus_star(g16, s))) < 1e-11
    assert abs(np.sum(ops.curl_minus(g16, v) * s) - np.sum(v * ops.curl_minus_star(g16, s))) < 1e-11


def test_curl_of_gradient_vanishes(g16):
    chi = rng(2).standard_normal(g16.shape)
    assert np.max(np.abs(ops.curl_plus(g16, ops.grad_plus(g16, chi)))) < 1e-12
    # adjoint-compatible Hodge pairs
    s = rng(3).standard_normal(g16.shape)
    assert np.max(np.abs(ops.div_minus(g16, ops.curl_plus_star(g16, s)))) < 1e-12
    assert np.max(np.abs(ops.div_plus(g16, ops.curl_minus_star(g16, s)))) < 1e-12


def test_curvature_flux_and_gauge_invariance(g16):
    r = rng(4)
    a = r.standard_normal((2,) + g16.shape)
    B = ops.curvature(g16, a)
    assert g16.quadrature(B) == pytest.approx(2 * np.pi * g16.N, abs=1e-10)
    chi = r.standard_normal(g16.shape)
    B2 = ops.curvature(g16, a + ops.grad_plus(g16, chi))
    assert np.max(np.abs(B2 - B)) < 1e-11
    # a pure lattice gradient leaves B identically at b
    assert np.max(np.abs(ops.curvature(g16, ops.grad_plus(g16, chi)) - g16.b)) < 1e-11


def test_cov_diff_constant_section_flat_bundle():
    g = make_grid(2 * np.pi, 2 * np.pi, 16, 16, 0)
    U = ops.link_phases(g, np.zeros((2,) + g.shape))
    phi = np.ones(g.shape, dtype=complex)
    for j in (0, 1):
        assert np.max(np.abs(ops.cov_diff(g, U, phi, j))) == 0.0


def test_cov_diff_plane_wave():
    g = make_grid(2 * np.pi, 2 * np.pi, 32, 32, 0)
    U = ops.link_phases(g, np.zeros((2,) + g.shape))
    X, _ = g.sites()
    phi = np.exp(1j * 2 * np.pi * X / g.Lx)
    d = ops.cov_diff(g, U, phi, 0)
    expected = abs(np.exp(1j * 2 * np.pi * g.ax / g.Lx) - 1.0) / g.ax
    assert np.max(np.abs(np.abs(d) - expected)) < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_gauge_covariance_of_cov_diff(seed):
    g = make_grid(5.0, 5.0, 12, 12, 1)
    st_ = random_state(g, seed=seed)
    chi = np.random.default_rng(seed + 1).standard_normal(g.shape)
    st2 = gauge_transform(st_, chi)
    U1 = st_.link_phases()
    U2 = st2.link_phases()
    for j in (0, 1):
        d1 = ops.cov_diff(g, U1, st_.higgs.phi, j)
        d2 = ops.cov_diff(g, U2, st2.higgs.phi, j)
        assert np.max(np.abs(np.abs(d2) - np.abs(d1))) < 1e-12


def test_dbar_trivial_cases():
    g = make_grid(2 * np.pi, 2 * np.pi, 16, 16, 0)
    U = ops.link_phases(g, np.zeros((2,) + g.shape))
    zero = np.zeros(g.shape, dtype=complex)
    assert np.max(np.abs(ops.dbar_site(g, U, zero))) == 0.0
    const = np.full(g.shape, 2.0 - 1.0j)
    assert np.max(np.abs(ops.dbar_site(g, U, const))) < 1e-14


def test_helmholtz_constant_coefficient(g16):
    x = ops.solve_helmholtz(g16, 1.0, np.full(g16.shape, 3.5))
    assert np.max(np.abs(x - 3.5)) < 1e-9


def test_poisson_roundtrip(g16):
    f = rng(7).standard_normal(g16.shape)
    f -= f.mean()
    x = ops.solve_helmholtz(g16, 0.0, -ops.laplacian(g16, f))
    assert np.max(np.abs(x - f)) < 1e-9


def test_helmholtz_rejects_nonzero_mean_with_zero_m(g16):
    with pytest.raises(ops.HelmholtzError):
        ops.solve_helmholtz(g16, 0.0, np.ones(g16.shape))


def test_helmholtz_dense_oracle():
    g = make_grid(2 * np.pi, 2 * np.pi, 8, 8, 0)
    r = rng(11)
    m = 0.2 + r.random(g.shape)
    rhs = r.standard_normal(g.shape)
    x = ops.solve_helmholtz(g, m, rhs, tol=1e-13)
    n = g.nx * g.ny
    dense = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        dense[:, k] = (-ops.laplacian(g, e.reshape(g.shape)) + m * e.reshape(g.shape)).ravel()
    ref = np.linalg.solve(dense, rhs.ravel()).reshape(g.shape)
    assert np.max(np.abs(x - ref)) < 1e-10


def test_helmholtz_complex_rhs(g16):
    r = rng(13)
    m = 0.5 + r.random(g16.shape)
    rhs = r.standard_normal(g16.shape) + 1j * r.standard_normal(g16.shape)
    x = ops.solve_helmholtz(g16, m, rhs, tol=1e-12)
    res = -ops.laplacian(g16, x) + m * x
    assert np.max(np.abs(res - rhs)) < 1e-9


def test_hodge_branches_exact(g16):
    r = rng(17)
    gdens = r.standard_normal(g16.shape)
    gdens -= gdens.mean()
    a_g = ops.hodge_gauge_from_curl(g16, gdens, branch="gauss")
    assert np.max(np.abs(ops.curl_minus(g16, a_g) - gdens)) < 1e-9
    assert np.max(np.abs(ops.div_plus(g16, a_g))) < 1e-9
    a_p = ops.hodge_gauge_from_curl(g16, gdens, branch="plaquette")
    assert np.max(np.abs(ops.curl_plus(g16, a_p) - gdens)) < 1e-9
    assert np.max(np.abs(ops.div_minus(g16, a_p))) < 1e-9
