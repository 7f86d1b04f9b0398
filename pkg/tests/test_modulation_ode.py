import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmlab import modulation_ode as mo


@pytest.mark.parametrize("L", [1, 2, 3, 5])
def test_special_solution_solves_the_system(L):
    # central differences in s as an independent check of the vector field
    s, h = 7.0, 1e-4
    lo, mid, hi = (mo.special_solution(L, x) for x in (s - h, s, s + h))
    r = mo.rhs(mid)
    assert np.abs((hi.b - lo.b) / (2 * h) - r["b"]).max() < 1e-8
    assert abs((hi.lam - lo.lam) / (2 * h) - r["lam"]) < 1e-8
    assert abs((hi.t - lo.t) / (2 * h) - r["t"]) < 1e-8


def test_special_c_values():
    assert mo.special_c(1)[0] == pytest.approx(2 / 3)
    c = mo.special_c(2)
    assert c == pytest.approx([4 / 7, -4 / 49])


@pytest.mark.parametrize("L", [1, 2, 3])
def test_integration_follows_special_solution(L):
    tr = mo.integrate(mo.special_solution(L, 10.0), 1e4, n_out=32)
    end = mo.special_solution(L, 1e4)
    assert tr.lam[-1] == pytest.approx(end.lam, rel=1e-7)
    assert tr.b[-1] == pytest.approx(end.b, rel=1e-6)
    assert tr.t[-1] == pytest.approx(end.t, abs=1e-7)


@pytest.mark.parametrize("L", range(1, 9))
def test_linearized_spectra(L):
    eu, ev = mo.eigenvalue_errors(L)
    assert max(eu, ev) < 1e-10
    assert mo.positive_count(L) == 2 * L - 1
    assert max(mo.matrices(L).diag_errors()) < 1e-10


def test_linearization_is_second_order():
    slope, _ = mo.fluctuation_rhs_check(2)
    assert slope == pytest.approx(2.0, abs=0.15)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.floats(0.5, 3.0), st.floats(-1, 1), st.floats(-1, 1))
def test_closed_form_is_read_back_with_zero_closure(L, T, c, d):
    cc = np.full(L - 1, c)
    dd = np.full(L, d)
    tau = np.linspace(0.05, 0.5, 7) * T
    if mo.first_zero(T, L, cc, dd) is not None and mo.first_zero(T, L, cc, dd) <= tau.max():
        return
    lam, gam = mo.closed_form_jets(T, L, cc, dd, T - tau, L + 1)
    _, _, closure = mo.hierarchy_from_lambda_gamma(lam, gam, L)
    scale = 1 + np.abs(lam).max() ** 2
    assert np.all(closure < 1e-8 * scale ** (L + 1))


def test_closed_form_matches_integration():
    L, T = 2, 1.0
    c, d = np.array([0.3]), np.array([0.1, -0.2])
    st0 = mo.initial_from_closed_form(T, L, c, d)
    tr = mo.integrate(st0, 3.0, n_out=16)
    lam, gam = mo.closed_form_lambda_gamma(T, L, c, d, tr.t)
    assert np.abs(tr.lam / lam - 1).max() < 1e-7
    assert np.abs(tr.gamma - gam).max() < 1e-7


def test_jets_from_samples_recovers_polynomial():
    t = np.linspace(0, 1, 41)
    y = 1 + 2 * t - t**3
    jet = mo.jets_from_samples(t, y, 3)
    i = 20
    assert jet[i] == pytest.approx([1 + 2 * t[i] - t[i] ** 3, 2 - 3 * t[i] ** 2, -3 * t[i], -1], abs=1e-9)


def test_estimate_T_on_special_solution():
    tr = mo.integrate(mo.special_solution(1, 10.0, T=2.0), 1e6, n_out=200)
    T, _ = mo.estimate_T(tr)
    assert T == pytest.approx(2.0, abs=1e-6)


def test_argument_checks():
    with pytest.raises(ValueError):
        mo.special_c(9)
    with pytest.raises(ValueError):
        mo.check_kappa(0.5, 1)
    with pytest.raises(ValueError):
        mo.integrate(mo.special_solution(1, 10.0), 5.0)
    assert 0 < mo.kappa_default(8) < 1 / (8 * 31)


def test_shooting_stays_trapped():
    out = mo.shoot_trapped(1, s0=10.0, horizon=100.0)
    assert out["horizon"] >= 100.0
