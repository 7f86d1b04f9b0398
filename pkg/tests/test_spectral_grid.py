import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmlab.spectral_grid import (
    GridError, GridSpec, TailedField, abs_d, derivative, hilbert, inner_r, modulate,
    norm_adapted, norm_hs, norm_l2, pi_plus, trig_interpolate,
)


def pv_hilbert(f, x0):
    # principal value (1/pi) int f(y)/(x0 - y) dy by symmetric subtraction
    g = lambda t: (f(x0 - t) - f(x0 + t)) / t
    return float(mpmath.quad(g, [0, 1, 10, mpmath.inf])) / np.pi


def test_grid_validation():
    with pytest.raises(GridError):
        GridSpec(1000, 10.0)
    with pytest.raises(GridError):
        GridSpec(64, -1.0)
    with pytest.raises(GridError):
        GridSpec(64, 1.0, "sphere")


def test_torus_multipliers_on_modes(torus):
    x = torus.x
    k = 2 * np.pi * 3 / torus.box_len
    c, s = np.cos(k * x), np.sin(k * x)
    assert np.allclose(derivative(torus, s), k * c, atol=1e-11)
    assert np.allclose(derivative(torus, s, 3), -k**3 * c, atol=1e-9)
    assert np.allclose(hilbert(torus, c), s, atol=1e-13)
    assert np.allclose(abs_d(torus, c), k * c, atol=1e-12)
    assert np.abs(hilbert(torus, np.ones(torus.n))).max() < 1e-15


def test_pi_plus_on_modes(torus):
    x = torus.x
    e = np.exp(2j * np.pi * 5 * x / torus.box_len)
    assert np.allclose(pi_plus(torus, e), e, atol=1e-13)
    assert np.abs(pi_plus(torus, np.conj(e))).max() < 1e-13
    assert np.allclose(pi_plus(torus, np.ones(torus.n)), 0.5)


def test_line_hilbert_against_quadrature(line):
    f = lambda y: 1 / (1 + y * y)
    h = hilbert(line, f(line.x))
    for x0 in (-3.0, 0.5, 7.25):
        i = np.argmin(np.abs(line.x - x0))
        assert abs(h[i] - pv_hilbert(f, line.x[i])) < 1e-9


def test_line_hilbert_of_q_squared(line):
    x = line.x
    q2 = 2 / (1 + x * x)
    m = np.abs(x) <= 64
    assert np.abs(hilbert(line, q2) - x * q2)[m].max() < 1e-10


def test_line_derivative_of_q(line):
    x = line.x
    q = np.sqrt(2) / np.sqrt(1 + x * x)
    m = np.abs(x) <= 64
    assert np.abs(derivative(line, q) + np.sqrt(2) * x / (1 + x * x) ** 1.5)[m].max() < 1e-10


def test_torus_q_squared_misses_by_truncation():
    g = GridSpec(4096, 256.0, "torus")
    x = g.x
    q2 = 2 / (1 + x * x)
    m = np.abs(x) <= 64
    miss = np.abs(hilbert(g, q2) - x * q2)[m].max()
    assert 1e-3 < miss < 1e-1


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20))
def test_product_rule_on_torus(m1, m2):
    g = GridSpec(256, 2 * np.pi, "torus")
    f, h = np.cos(m1 * g.x), np.sin(m2 * g.x)
    Hf, Hh = hilbert(g, f), hilbert(g, h)
    assert np.abs(f * h - (Hf * Hh - hilbert(g, f * Hh + Hf * h))).max() < 1e-12


def test_hilbert_squared_is_minus_identity_on_mean_zero(torus):
    # band-limited, since the Nyquist mode has no real Hilbert partner
    rng = np.random.default_rng(1)
    kk = 2 * np.pi * np.arange(1, 30) / torus.box_len
    f = rng.normal(size=kk.size) @ np.cos(np.outer(kk, torus.x) + rng.uniform(0, 6, (kk.size, 1)))
    assert np.allclose(hilbert(torus, hilbert(torus, f)), -f, atol=1e-12)


def test_inner_and_norms(torus):
    x = torus.x
    f = np.exp(-x**2) + 0j
    assert abs(norm_l2(torus, f) ** 2 - np.sqrt(np.pi / 2)) < 1e-12
    assert abs(inner_r(torus, f, 1j * f)) < 1e-15
    k = 2 * np.pi * 2 / torus.box_len
    e = np.exp(1j * k * torus.x)
    ref = np.sqrt(torus.box_len) * (1 + k * k) ** 0.5
    assert abs(norm_hs(torus, e, 1) - ref) < 1e-10
    assert abs(norm_adapted(torus, f, 0) - norm_l2(torus, f)) < 1e-15


@settings(max_examples=15, deadline=None)
@given(st.floats(0.75, 2.0), st.floats(-3.0, 3.0))
def test_modulate_keeps_l2(lam, gamma):
    g = GridSpec(1024, 64.0, "torus")
    f = np.exp(-(g.x**2) / 2) * (1 + 0.3j * g.x)
    assert abs(norm_l2(g, modulate(g, f, lam, gamma)) - norm_l2(g, f)) < 1e-8


def test_trig_interpolate_is_exact_on_band_limited(torus):
    k = 2 * np.pi * 4 / torus.box_len
    pts = np.linspace(-10, 10, 37) + 0.013
    val = trig_interpolate(torus, np.cos(k * torus.x), pts)
    assert np.allclose(val, np.cos(k * pts), atol=1e-12)


def test_tailed_field_derivative_is_exact(line):
    x = line.x
    q = np.sqrt(2) / np.sqrt(1 + x * x)
    f = TailedField(line, q=[0.0, 0.0, np.sqrt(2)])  # y^2 Q
    exact = np.sqrt(2) * (2 * x / np.sqrt(1 + x * x) - x**3 / (1 + x * x) ** 1.5)
    m = np.abs(x) <= 64
    assert np.allclose(f.values(), x**2 * q)
    assert np.abs(f.derivative().values() - exact)[m].max() < 1e-10


def test_tailed_field_refuses_growing_hilbert(line):
    with pytest.raises(GridError):
        TailedField(line, p=[0.0, 1.0]).hilbert()


def test_field_checks(torus):
    with pytest.raises(GridError):
        derivative(torus, np.zeros(10))
    bad = np.zeros(torus.n)
    bad[3] = np.nan
    with pytest.raises(GridError):
        hilbert(torus, bad)
