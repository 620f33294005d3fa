"""Kernel identities: normalization, scaling, stability of the Green difference."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynbc.kernels import (
    KernelConstants,
    ctilde,
    elementary_bound_probe,
    gauss_nodes,
    green,
    green_r2,
    kernel_bound_probe,
    poisson,
    poisson_height_integral,
    poisson_lq_xn_norm,
    poisson_mass_in_ball,
    poisson_r2,
    riesz_kernel,
)


def test_constants_dimension_three():
    c = KernelConstants.for_dim(3)
    assert c.c_n == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-14)
    assert c.cbar_n == pytest.approx(1.0 / (4.0 * math.pi), rel=1e-14)
    assert c.sphere_area_tan == pytest.approx(2.0 * math.pi, rel=1e-14)


def test_box_quadrature_normalization_n3():
    # Midpoint quadrature over [-200, 200]^2 at height 1, against exact mass 1.
    m, half = 2000, 200.0
    dx = 2.0 * half / m
    axis = -half + (np.arange(m) + 0.5) * dx
    r2 = axis[:, None] ** 2 + axis[None, :] ** 2
    total = float(np.sum(poisson_r2(r2, 1.0, 3)) * dx * dx)
    assert abs(total - 1.0) < 5e-3


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_full_mass_identity(n):
    # c_n * area(S^(n-2)) * int_0^(pi/2) sin^(n-2) = 1, exactly.
    mass = poisson_mass_in_ball(1.0, 1e12, n)
    assert float(mass) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("n", [3, 4])
def test_mass_in_ball_against_radial_quadrature(n):
    consts = KernelConstants.for_dim(n)
    rng = np.random.default_rng(7)
    for _ in range(10):
        h = 10.0 ** rng.uniform(-1, 1)
        radius = 10.0 ** rng.uniform(-1, 1.5)
        r, w = gauss_nodes(0.0, radius, 400)
        oracle = consts.sphere_area_tan * float(
            np.sum(r ** (n - 2) * poisson_r2(r * r, h, n) * w)
        )
        got = float(poisson_mass_in_ball(h, radius, n))
        assert got == pytest.approx(oracle, rel=1e-9)


@given(
    lam=st.floats(min_value=1e-3, max_value=1e3),
    r=st.floats(min_value=1e-3, max_value=1e3),
    h=st.floats(min_value=1e-3, max_value=1e3),
)
@settings(max_examples=300, deadline=None)
def test_poisson_scaling(lam, r, h):
    n = 3
    lhs = poisson_r2((lam * r) ** 2, lam * h, n)
    rhs = lam ** (1 - n) * poisson_r2(r * r, h, n)
    assert float(lhs) == pytest.approx(float(rhs), rel=1e-12)


def test_poisson_shape_and_symmetric_extension():
    zp = np.array([[0.3, -0.4], [1.0, 2.0]])
    vals = poisson(zp, 0.7, 3)
    assert vals.shape == (2,)
    r2 = np.sum(zp * zp, axis=-1)
    assert np.allclose(vals, poisson_r2(r2, 0.7, 3), rtol=1e-15)
    from dynbc.kernels import poisson_sym

    up = poisson_sym(zp, 0.5, 0.2, 3)
    down = poisson_sym(zp, -0.5, 0.2, 3)
    assert np.array_equal(up, down)


def test_height_integral_against_quadrature():
    rng = np.random.default_rng(11)
    for n in (3, 4, 5):
        for _ in range(8):
            r2 = (10.0 ** rng.uniform(-1, 1)) ** 2
            h_lo = 10.0 ** rng.uniform(-2, 1)
            h_hi = h_lo + 10.0 ** rng.uniform(-2, 1)
            x, w = gauss_nodes(h_lo, h_hi, 200)
            oracle = float(np.sum(poisson_r2(r2, x, n) * w))
            got = float(poisson_height_integral(r2, h_lo, h_hi, n))
            assert got == pytest.approx(oracle, rel=1e-11)


def test_green_boundary_row_is_exactly_zero():
    rng = np.random.default_rng(3)
    y = rng.uniform(0.1, 5.0, size=(1000, 3))
    x = rng.uniform(-5.0, 5.0, size=(1000, 3))
    x[:, 2] = 0.0
    vals = green(x, y, 3)
    assert np.all(vals == 0.0)


def test_green_positive_and_dominated():
    rng = np.random.default_rng(4)
    m = 100000
    x = np.column_stack(
        [rng.uniform(-5, 5, m), rng.uniform(-5, 5, m), 10.0 ** rng.uniform(-6, 1, m)]
    )
    y = np.column_stack(
        [rng.uniform(-5, 5, m), rng.uniform(-5, 5, m), 10.0 ** rng.uniform(-6, 1, m)]
    )
    g = green(x, y, 3)
    assert np.all(g >= 0.0)
    diff = x - y
    direct = KernelConstants.for_dim(3).cbar_n / np.sqrt(np.sum(diff * diff, axis=-1))
    assert np.all(g <= direct * (1.0 + 1e-14))


def test_green_symmetry():
    rng = np.random.default_rng(5)
    x = rng.uniform(0.01, 4.0, size=(500, 3))
    y = rng.uniform(0.01, 4.0, size=(500, 3))
    assert np.array_equal(green(x, y, 3), green(y, x, 3))


def test_green_literal_formula_safe_regime():
    rng = np.random.default_rng(6)
    x = np.column_stack([rng.uniform(-2, 2, 200), rng.uniform(-2, 2, 200), rng.uniform(0.5, 3, 200)])
    y = np.column_stack([rng.uniform(-2, 2, 200), rng.uniform(-2, 2, 200), rng.uniform(0.5, 3, 200)])
    ybar = y.copy()
    ybar[:, 2] *= -1.0
    d = np.sqrt(np.sum((x - y) ** 2, axis=-1))
    dt = np.sqrt(np.sum((x - ybar) ** 2, axis=-1))
    literal = (1.0 / (4.0 * math.pi)) * (1.0 / d - 1.0 / dt)
    assert np.allclose(green(x, y, 3), literal, rtol=1e-12)


def test_green_cancellation_regime_against_mpmath():
    import mpmath

    mpmath.mp.dps = 60
    rng = np.random.default_rng(8)
    for n in (3, 5):
        cbar = KernelConstants.for_dim(n).cbar_n
        for _ in range(20):
            r = 10.0 ** rng.uniform(-0.5, 0.5)
            xn = 10.0 ** rng.uniform(-9, -5)
            yn = 10.0 ** rng.uniform(-9, -5)
            d2 = mpmath.mpf(r) ** 2 + (mpmath.mpf(xn) - mpmath.mpf(yn)) ** 2
            dt2 = mpmath.mpf(r) ** 2 + (mpmath.mpf(xn) + mpmath.mpf(yn)) ** 2
            expo = mpmath.mpf(2 - n) / 2
            oracle = float(mpmath.mpf(cbar) * (d2**expo - dt2**expo))
            got = float(green_r2(r * r, xn, yn, n))
            assert got == pytest.approx(oracle, rel=1e-9)


@given(
    lam=st.floats(min_value=1e-2, max_value=1e2),
    r=st.floats(min_value=1e-2, max_value=1e2),
    xn=st.floats(min_value=1e-4, max_value=1e2),
    yn=st.floats(min_value=1e-4, max_value=1e2),
)
@settings(max_examples=300, deadline=None)
def test_green_homogeneity(lam, r, xn, yn):
    n = 3
    lhs = float(green_r2((lam * r) ** 2, lam * xn, lam * yn, n))
    rhs = float(lam ** (2 - n) * green_r2(r * r, xn, yn, n))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_riesz_kernel_values():
    x = np.array([[3.0, 4.0]])
    assert riesz_kernel(x, 1.0, 2) == pytest.approx(1.0 / 5.0)
    assert riesz_kernel(np.array([[0.0, 2.0, 0.0]]), 1.5, 3) == pytest.approx(2.0**-1.5)


def test_ctilde_known_case():
    # n = 3, q = 2: integral of cos^2 over [0, pi/2] is pi/4.
    expected = (1.0 / (2.0 * math.pi)) * (math.pi / 4.0) ** 0.5
    assert ctilde(3, 2.0) == pytest.approx(expected, rel=1e-10)


def test_lq_norm_oracle_consistency():
    # The angular substitution agrees with brute quadrature in u-space and
    # connects continuously to the r = 0 closed form.
    for n, q in ((3, 2.0), (3, 8.0), (4, 3.0)):
        for r, t in ((0.5, 0.2), (2.0, 1.0), (10.0, 0.05)):
            u, w = gauss_nodes(t, t + 400.0 * (t + r), 4000)
            brute = float(np.sum(poisson_r2(r * r, u, n) ** q * w)) ** (1.0 / q)
            got = poisson_lq_xn_norm(r, t, n, q)
            assert got == pytest.approx(brute, rel=1e-5)
        closed = poisson_lq_xn_norm(0.0, 1.0, n, q)
        near = poisson_lq_xn_norm(1e-9, 1.0, n, q)
        assert near == pytest.approx(closed, rel=1e-6)


@pytest.mark.parametrize("n,q", [(3, 2.0), (3, 8.0), (4, 3.0)])
def test_kernel_bound_probes(n, q):
    lq, pw = kernel_bound_probe(n, q, trials=200, seed=123)
    assert lq.passed and lq.max_ratio <= 1.0 + 1e-6
    assert pw.passed and pw.max_ratio <= 1.0 + 1e-6
    assert lq.max_ratio > 0.05  # the bound is exercised, not vacuous
    assert 0 <= lq.argmax_input_id < lq.trials


def test_elementary_bound_probe():
    rep = elementary_bound_probe(trials=100000, seed=2)
    assert rep.passed
    assert rep.max_ratio <= 1.0 + 1e-12
    assert rep.max_ratio > 0.999  # attained (equality when a = b)


@given(
    a=st.floats(min_value=1e-3, max_value=1e3),
    b=st.floats(min_value=1e-3, max_value=1e3),
    q=st.floats(min_value=0.05, max_value=4.0),
    theta=st.floats(min_value=0.0, max_value=1.0),
)
@settings(max_examples=500, deadline=None)
def test_elementary_bound_property(a, b, q, theta):
    lhs = (a * a + b * b) ** -q
    rhs = (a ** (2 * theta) * b ** (2 * (1 - theta))) ** -q
    assert lhs <= rhs * (1.0 + 1e-12)
