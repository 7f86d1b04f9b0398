import numpy as np
import pytest

from cmlab import conserved as cs
from cmlab.evolve import gauge, gauge_inverse
from cmlab.operators import d_tilde_v, d_v, soliton_chiral, soliton_q
from cmlab.spectral_grid import GridSpec, derivative, modulate, norm_l2, pi_plus


def test_soliton_invariants(line):
    q = soliton_q(line)
    assert abs(cs.mass(line, q) - (2 * np.pi - 8 / line.box_len)) < 1e-3
    assert cs.energy_gauge(line, q) < 1e-8
    assert cs.momentum(line, q) == pytest.approx(0.0, abs=1e-14)


def test_energy_operator_form(line):
    v = (1 + 0.3j * line.x) * np.exp(-line.x**2 / 4)
    assert abs(cs.energy_gauge(line, v) - 0.5 * norm_l2(line, d_v(line, v, v)) ** 2) < 1e-12


def test_hierarchy_signs(line):
    v = 1.3 * (1 + 0.3j * line.x) * np.exp(-line.x**2 / 5)
    hier = cs.hierarchy(line, v, 4)
    assert hier[0] == pytest.approx(cs.mass(line, v), rel=1e-12)
    dv = d_tilde_v(line, v, v)
    assert -hier[2] == pytest.approx(norm_l2(line, dv) ** 2, rel=1e-8)
    assert hier[4] == pytest.approx(norm_l2(line, d_tilde_v(line, v, dv)) ** 2, rel=1e-8)


def test_hierarchy_scaling_law():
    # periodic images spoil the law at O(box^-2)
    g = GridSpec(16384, 512.0, "torus")
    v = 1.3 * (1 + 0.3j * g.x) * np.exp(-g.x**2 / 5)
    lam = 1.5
    a, b = cs.hierarchy(g, v, 3), cs.hierarchy(g, modulate(g, v, lam), 3)
    for j in range(4):
        assert b[j] == pytest.approx(lam**-j * a[j], rel=1e-4, abs=1e-12)


def test_hierarchy_range(line):
    with pytest.raises(ValueError):
        cs.hierarchy(line, soliton_q(line), 13)


def test_chirality_deficit():
    g = GridSpec(256, 2 * np.pi, "torus")
    assert cs.chirality_deficit(g, np.exp(1j * g.x)) < 1e-14
    u = np.cos(3 * g.x) + np.sin(g.x)
    assert cs.chirality_deficit(g, u) == pytest.approx(norm_l2(g, u) / np.sqrt(2), rel=1e-12)


def test_chiral_soliton_energy(line):
    r = soliton_chiral(line)
    m = np.abs(line.x) <= 64
    # the energy density vanishes pointwise away from the box edge
    dens = np.abs(derivative(line, r) - 1j * pi_plus(line, np.abs(r) ** 2) * r) ** 2
    assert dens[m].max() < 1e-8


def test_gauge_energy_consistency(line):
    g = line
    u = pi_plus(g, (1 + 0.2j * g.x) * np.exp(-g.x**2 / 3 + 2j * g.x))
    assert cs.energy_chiral(g, u) == pytest.approx(cs.energy_gauge(g, gauge(g, u)), rel=1e-8)


def test_gauge_round_trip(torus):
    u = (1 + 0.2j * torus.x) * np.exp(-torus.x**2 / 3)
    assert np.abs(gauge_inverse(torus, gauge(torus, u)) - u).max() < 1e-14


def test_drift_floor():
    assert cs.relative_drift(1e-20, 0.0) == pytest.approx(1e-6)
