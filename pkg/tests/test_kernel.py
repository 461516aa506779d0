import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinlab.gridfn import Axis, GridFunction
from kinlab import kernel as ker


def test_gamma_value_at_center():
    # closed form at t=1, x=v=0: (3 / (4 pi^2))^{1/2} = sqrt(3) / (2 pi)
    assert ker.gamma(1.0, [0.0], [0.0], d=1) == pytest.approx(
        math.sqrt(3.0) / (2.0 * math.pi), rel=1e-14)


def test_gamma_vanishes_for_nonpositive_time():
    assert ker.gamma(0.0, [0.1], [0.2], d=1) == 0.0
    assert ker.gamma(-1.0, [0.1], [0.2], d=1) == 0.0


def test_gamma_scaling_relation():
    rng = np.random.default_rng(0)
    for _ in range(30):
        t = rng.uniform(0.2, 3.0)
        x, v = rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1)
        lhs = ker.gamma(t, x, v, d=1)
        rhs = t ** -2 * ker.gamma1(x * t ** -1.5, v * t ** -0.5, d=1)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_unit_mass_quadrature():
    L, n = 8.0, 400
    ax = np.linspace(-L, L, n)
    h = ax[1] - ax[0]
    X, V = np.meshgrid(ax, ax, indexing="ij")
    mass = float(ker.gamma1(X[..., None], V[..., None], d=1).sum()) * h * h
    assert mass + ker.gamma_tail_mass(L, 1) == pytest.approx(1.0, abs=1e-7)


def test_gradients_match_finite_differences():
    eps = 1e-6
    t, x, v = 0.7, np.array([0.3]), np.array([-0.4])
    gx = ker.gamma_x(t, x, v, d=1)[0] / t  # stored scaled by t
    fd = (ker.gamma(t, x + eps, v, 1) - ker.gamma(t, x - eps, v, 1)) / (2 * eps)
    assert gx == pytest.approx(fd, rel=1e-5)
    gv = ker.gamma_v(t, x, v, d=1)[0]
    fd = (ker.gamma(t, x, v + eps, 1) - ker.gamma(t, x, v - eps, 1)) / (2 * eps)
    assert gv == pytest.approx(fd, rel=1e-5)


def test_kolmogorov_residual_small_and_shrinking():
    reps = []
    for h in (0.08, 0.04):
        axes = [Axis("t", 1.0, 1.5, round(0.5 / h)),
                Axis("x", -2.5, 2.5, round(5.0 / h)),
                Axis("v", -2.5, 2.5, round(5.0 / h))]
        T, X, V = np.meshgrid(*[a.centers() for a in axes], indexing="ij")
        g = GridFunction(axes, ker.gamma(T, X[..., None], V[..., None], d=1))
        reps.append(ker.kolmogorov_residual(g))
    assert reps[0].l2_residual < 0.05
    assert reps[1].l2_residual < reps[0].l2_residual / 2.5


def test_fourier_symbol_solves_transport_ode():
    # d_t m = -|t phi - xi|^2 m along the characteristic in Fourier variables
    phi, xi = np.array([0.7]), np.array([-0.3])
    t, eps = 0.9, 1e-6
    m1 = ker.fourier_symbol(t + eps, phi, xi)
    m0 = ker.fourier_symbol(t - eps, phi, xi)
    dm = (m1 - m0) / (2 * eps)
    expect = -float(np.sum((t * phi - xi) ** 2)) * ker.fourier_symbol(t, phi, xi)
    assert dm == pytest.approx(expect, rel=1e-5)


@given(st.floats(min_value=1.0, max_value=4.0), st.integers(min_value=0, max_value=10))
@settings(max_examples=30, deadline=None)
def test_weak_norm_below_strong_norm(p, seed):
    axes = [Axis("t", 0, 1, 4), Axis("x", -1, 1, 12), Axis("v", -1, 1, 12)]
    vals = np.random.default_rng(seed).normal(size=(4, 12, 12)) ** 2
    g = GridFunction(axes, vals)
    assert ker.weak_lp_norm(g, p).value <= g.norm_lp(p) * (1 + 1e-12)


def test_young_inequality_random_pairs():
    rng = np.random.default_rng(7)
    axes = [Axis("t", 0, 1, 5), Axis("x", -2, 2, 16), Axis("v", -2, 2, 16)]
    shape = tuple(a.n for a in axes)
    for _ in range(5):
        f = GridFunction(axes, rng.random(shape))
        g = GridFunction(axes, rng.random(shape))
        rep = ker.young_check(f, g, 1.5, 1.2)
        assert rep.passed, (rep.lhs, rep.rhs)


def test_convolution_is_bilinear():
    rng = np.random.default_rng(8)
    axes = [Axis("t", 0, 1, 4), Axis("x", -1, 1, 10), Axis("v", -1, 1, 10)]
    shape = tuple(a.n for a in axes)
    f = GridFunction(axes, rng.random(shape))
    g = GridFunction(axes, rng.random(shape))
    h = GridFunction(axes, rng.random(shape))
    a = ker.kin_convolve(f, GridFunction(axes, 2 * g.values + h.values)).out
    b = ker.kin_convolve(f, g).out
    c = ker.kin_convolve(f, h).out
    assert np.allclose(a.values, 2 * b.values + c.values, atol=1e-12)


def test_x_regularity_exponents_monotone():
    p0, q0 = ker.x_regularity_exponents(0.3, 1)
    p1, q1 = ker.x_regularity_exponents(0.1, 1)
    assert p1 >= p0 and q1 >= q0


def test_frac_laplacian_on_fourier_mode():
    n = 64
    axes = [Axis("x", 0.0, 1.0, n), Axis("v", -1, 1, 4)]
    x = axes[0].centers()
    vals = np.cos(2 * math.pi * 3 * x)[:, None] * np.ones((1, 4))
    g = GridFunction(axes, vals)
    out = ker.frac_laplacian_x(g, 0.5)
    expect = (2 * math.pi * 3) ** 0.5 * vals
    assert np.allclose(out.values, expect, atol=1e-9)
    with pytest.raises(ValueError):
        ker.frac_laplacian_x(g, 1.5)
