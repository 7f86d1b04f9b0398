import numpy as np
from hypothesis import given, settings, strategies as st

from cmlab import operators as op
from cmlab.spectral_grid import GridSpec, derivative, inner_r, modulate


def window_max(grid, f, half=64.0):
    return float(np.abs(np.asarray(f)[np.abs(grid.x) <= half]).max())


def packet(grid, c=0.0, w=2.0, phase=0.0):
    return (1 + 0.4j * (grid.x - c)) * np.exp(-((grid.x - c) / w) ** 2 + 1j * phase)


def test_soliton_is_stationary_for_the_lax_derivative(line):
    q = op.soliton_q(line)
    assert window_max(line, op.d_tilde_v(line, q, q)) < 1e-10
    assert window_max(line, op.h_v(line, q, q)) < 1e-9
    assert window_max(line, op.d_v(line, q, q)) < 1e-10


def test_chiral_soliton_modulus(line):
    assert np.allclose(np.abs(op.soliton_chiral(line)), op.soliton_q(line))


def test_b_q_of_yq_is_constant(line):
    q = op.soliton_q(line)
    assert window_max(line, op.b_q(line, line.x * q) - np.sqrt(2)) < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(0, 6))
def test_l_v_star_is_the_real_adjoint(c1, c2, ph):
    g = GridSpec(2048, 128.0, "line")
    v = op.soliton_q(g)
    f, h = packet(g, c1), packet(g, c2, 1.5, ph)
    lhs = inner_r(g, op.l_v(g, v, f), h)
    rhs = inner_r(g, f, op.l_v_star(g, v, h))
    assert abs(lhs - rhs) < 1e-9


def test_d_tilde_is_antisymmetric(line):
    v = 2 * packet(line, 0.5)
    f, h = packet(line, -1.0), packet(line, 1.0, 3.0)
    a = inner_r(line, op.d_tilde_v(line, v, f), h)
    b = inner_r(line, f, op.d_tilde_v(line, v, h))
    assert abs(a + b) < 1e-10


def test_scaling_generator_matches_finite_difference():
    g = GridSpec(2048, 128.0, "torus")
    f = packet(g)
    h = 1e-4
    # d/dh at 0 of (1 + h)^(1/2) f((1 + h) x) is Lambda f
    fd = (modulate(g, f, 1 / (1 + h)) - modulate(g, f, 1 / (1 - h))) / (2 * h)
    assert np.abs(fd - op.scaling_gen(g, f)).max() < 1e-6


def test_nonlinear_part_is_quadratic(line):
    v = op.soliton_q(line)
    eps = packet(line)
    ts = np.array([1e-1, 1e-2, 1e-3])
    sizes = [np.abs(op.n_v(line, v, t * eps)).max() for t in ts]
    slope = np.polyfit(np.log(ts), np.log(sizes), 1)[0]
    assert abs(slope - 2) < 0.05


def test_repulsivity(line):
    f = packet(line)
    lhs = op.a_q(line, op.a_q_star(line, f))
    rhs = -derivative(line, f, 2)
    assert window_max(line, lhs - rhs) < 1e-9


def test_coercivity_probe_is_positive(line):
    assert op.coercivity_probe(line, n_dirs=4, seed=0) > 0


def test_residual_report_scale(line):
    rep = op.residual_report(line, "zero", np.zeros(line.n), np.zeros(line.n))
    assert rep.residual_l2 == 0.0 and rep.window == (-64.0, 64.0)
