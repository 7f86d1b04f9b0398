import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmlab import extract as ex
from cmlab import modulation_ode as mo
from cmlab import profiles as pr
from cmlab.operators import soliton_q
from cmlab.spectral_grid import GridSpec


def exact_soliton(grid, lam, gamma):
    return np.exp(1j * gamma) * lam**-0.5 * np.sqrt(2) / np.sqrt(1 + (grid.x / lam) ** 2)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.7, 1.4), st.floats(-3, 3))
def test_decompose_recovers_scale_and_phase(lam, gamma):
    g = GridSpec(4096, 256.0, "line")
    v = exact_soliton(g, lam, gamma)
    lam_e, gam_e, eps_hat, _ = ex.decompose_l2(g, v, (1.05 * lam, gamma - 0.05))
    assert lam_e == pytest.approx(lam, rel=1e-10)
    assert gam_e == pytest.approx(gamma, abs=1e-10)
    assert np.abs(eps_hat).max() < 1e-9


def test_frame_grid_is_exact(line):
    yg, w = ex.renormalize(line, exact_soliton(line, 0.5, 0.2), 0.5, 0.2)
    assert yg.box_len == pytest.approx(2 * line.box_len)
    assert np.abs(w - soliton_q(yg)).max() < 1e-10


def test_weighted_split_reads_t1(line):
    chi = pr.cutoff_chi(20.0, line)
    w = soliton_q(line) + pr.t_profile(1, 0.02, -0.01, line) * chi
    b, eta, _ = ex.weighted_split(line, w - soliton_q(line), ex.default_zbasis(1))
    assert b == pytest.approx(0.02, abs=1e-12)
    assert eta == pytest.approx(-0.01, abs=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_projections_read_pure_profiles(line, k):
    p = pr.p_profile(k, 0.3, -0.2, line)
    assert ex.bk_from_odd(line, p, k) == pytest.approx((0.3, -0.2), abs=1e-12)
    assert ex.refined_from_odd(line, p, 0.05, k) == pytest.approx((0.3, -0.2), abs=1e-10)


def test_refined_area():
    # A = -sqrt(2)/2 times the integral of the unit cutoff
    assert -ex.refined_area() / (np.sqrt(2) / 2) > 2.0


def test_decompose_bundle(line):
    cfg = pr.init_from_mapping({"L": 1, "lambda0": 1.0, "b": [0.01], "delta_ring": 8.0})
    v = pr.initial_data(cfg, line)
    dec = ex.decompose(line, v, 1, (1.0, 0.0))
    assert abs(dec.conditions["eps_hat_Z1"]) < 1e-12
    assert abs(dec.params.b[0] - 0.01) < 1e-3
    assert dec.weighted[0] == pytest.approx(0.01, rel=1e-2)
    assert set(dec.residual_norms) >= {"eps_hat_H1", "eps_H2", "w1_L2"}


def test_outside_tube_raises(line):
    v = exact_soliton(line, 1.0, 0.0) + 3.0 * np.exp(-line.x**2)
    with pytest.raises(ex.ExtractionError):
        ex.decompose_l2(line, v, (1.0, 0.0), delta_dec=0.3)


def test_modulation_residuals_vanish_on_ode_data():
    tr = mo.integrate(mo.special_solution(2, 10.0), 40.0, n_out=200)
    res = ex.modulation_residuals(tr.s, tr.lam, tr.gamma, tr.b, tr.eta)
    assert res["lam_res"].max() < 1e-8
    assert res["b1_res"].max() < 1e-8 and res["b2_res"].max() < 1e-8


def test_modulation_residuals_checks():
    s = np.linspace(1, 2, 10)
    with pytest.raises(ValueError):
        ex.modulation_residuals(s[:4], s[:4], s[:4], s[:4], s[:4])
    with pytest.raises(ValueError):
        ex.modulation_residuals(s, np.exp(-s * 10), s, s, s)


def test_tracker_follows_guess(line):
    tr = ex.Tracker(line, 1, (1.1, 0.0))
    p = tr(exact_soliton(line, 1.0, 0.4), 0.0)
    assert p.lam == pytest.approx(1.0, rel=1e-10)
    assert tr.guess == (p.lam, p.gamma) and len(tr.history) == 1
