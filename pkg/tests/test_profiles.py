import numpy as np
import pytest

from cmlab import profiles as pr
from cmlab.operators import b_q, cal_l, soliton_q
from cmlab.spectral_grid import GridSpec, inner_r, norm_l2


def test_p_poly_parity(line):
    y = line.x
    assert np.allclose(pr.p_poly(2, line), 1 + y**2)
    assert np.allclose(pr.p_poly(1, line), y**2)


def test_t1_closed_form(line):
    b, eta = 0.3, -0.2
    y = line.x
    want = -0.25 * (1j * b * y**2 + eta * (1 + y**2)) * soliton_q(line)
    assert np.abs(pr.t_profile(1, b, eta, line) - want).max() < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3])
def test_ladder_top_rung(line, k):
    b, eta = 0.4, 0.9
    lhs = cal_l(line, 2 * k - 1, pr.t_profile_tailed(k, b, eta, line))
    rhs = b_q(line, pr.p_profile(k, b, eta, line))
    m = np.abs(line.x) <= 32
    assert np.abs(lhs - rhs)[m].max() < 1e-6 * max(np.abs(rhs).max(), 1)


def test_p_profile_is_odd(line):
    p = pr.p_profile(2, 0.1, 0.2, line)
    # grid points pair up as x[j] = -x[n - j], with x[0] the unpaired edge
    assert np.abs(p[1:] + p[1:][::-1]).max() < 1e-12


def test_cutoff_profile():
    y = np.linspace(-30, 30, 6001)
    chi = pr.cutoff_at(5.0, y)
    assert np.all(chi[np.abs(y) <= 5.0] == 1.0)
    assert np.all(chi[np.abs(y) >= 10.0] == 0.0)
    assert np.all((chi >= 0) & (chi <= 1))


def test_zk_duality(line):
    zb = pr.zk_solve(line, L=2)
    z = zb.on(line)
    kern = pr.kernel_elements(line)
    gram = np.array([[inner_r(line, kern[f"K{j}"], z[f"Z{k}"]) for k in range(1, 5)]
                     for j in range(1, 5)])
    assert np.abs(gram - np.eye(4)).max() < 1e-8
    y, q = line.x, soliton_q(line)
    for k in range(1, 5):
        assert abs(inner_r(line, 1j * y**4 * q, z[f"Z{k}"])) < 1e-8
        assert np.all(z[f"Z{k}"][np.abs(y) > pr.ZK_SUPPORT] == 0)


def test_zbasis_is_grid_independent(line):
    zb = pr.zk_solve(line, L=1)
    other = GridSpec(1024, 32.0, "line")
    assert np.allclose(zb.on(other)["Z3"], zb.at(other.x, 3))


def test_initial_data_mass_and_validation(line):
    cfg = pr.init_from_mapping({"L": 1, "lambda0": 1.0, "b": [0.0], "delta_ring": 8.0})
    v0 = pr.initial_data(cfg, line)
    # Q^2 carries 8/box of its mass outside the box
    assert norm_l2(line, v0) ** 2 == pytest.approx(2 * np.pi - 8 / line.box_len, rel=1e-5)
    with pytest.raises(ValueError):
        pr.init_from_mapping({"L": 1, "bogus": 1})
    with pytest.raises(ValueError):
        pr.init_from_mapping({"L": 1, "lambda0": 1.0, "delta_ring": 1.0})
    with pytest.raises(ValueError):
        pr.ModParams(2, 1.0, 0.0, [0.1], [0.0, 0.0])


def test_initial_data_scaling(line):
    cfg = pr.init_from_mapping({"L": 1, "lambda0": 0.5, "gamma0": 0.3, "b": [0.1], "delta_ring": 4.0})
    v0 = pr.initial_data(cfg, line)
    inner = pr.renormalized_initial(cfg, np.array([0.0]))
    assert v0[line.n // 2] == pytest.approx(np.exp(0.3j) * 0.5**-0.5 * inner[0])
