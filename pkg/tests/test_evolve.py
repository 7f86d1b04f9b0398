import numpy as np
import pytest

from cmlab import evolve as ev
from cmlab.conserved import energy_gauge, mass
from cmlab.operators import soliton_q
from cmlab.spectral_grid import GridSpec, modulate, norm_l2


@pytest.fixture
def small():
    return GridSpec(512, 32.0, "torus")


def packet(grid):
    return 1.2 * (1 + 0.3j * grid.x) * np.exp(-grid.x**2 / 2 + 0.5j * grid.x)


def test_soliton_is_nearly_stationary():
    g = GridSpec(2048, 128.0, "torus")
    q = soliton_q(g)
    out = ev.GcmStepper(g, 1e-3).advance(q, 500)
    # the residual motion is the periodic images of the slow tail
    assert np.abs(out - q).max() < 1e-3


def test_mass_is_conserved_to_rounding(small):
    v = packet(small)
    out = ev.GcmStepper(small, 1e-3, "yoshida4", extended=True).advance(v, 200)
    assert abs(mass(small, out) / mass(small, v) - 1) < 1e-13


@pytest.mark.parametrize("scheme,order", [("strang", 2), ("yoshida4", 4)])
def test_splitting_order(small, scheme, order):
    v = packet(small)
    t = 0.2
    ref = ev.GcmStepper(small, t / 800, "yoshida4").advance(v, 800)
    errs = []
    for n in (20, 40):
        out = ev.GcmStepper(small, t / n, scheme).advance(v, n)
        errs.append(norm_l2(small, out - ref))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.25)


def test_energy_drift_is_small(small):
    v = packet(small)
    e0 = energy_gauge(small, v)
    out = ev.GcmStepper(small, 2e-4, "yoshida4", extended=True).advance(v, 1000)
    assert abs(energy_gauge(small, np.asarray(out, complex)) / e0 - 1) < 1e-8


def test_step_gcm_matches_stepper(small):
    v = packet(small)
    assert np.allclose(ev.step_gcm(small, v, 1e-3), ev.GcmStepper(small, 1e-3).advance(v, 1))


def test_run_samples_and_stops(small):
    cfg = ev.evolve_from_mapping({"dt0": 1e-3, "t_max": 0.05, "sample_stride": 10, "tail_tol": 1.0})
    tr = ev.run(small, packet(small), cfg)
    assert tr.stop_reason == "t_max"
    assert len(tr.samples) == 6
    assert tr.column("t")[-1] == pytest.approx(0.05)


def test_run_min_lambda_stop(small):
    cfg = ev.EvolveConfig(dt0=1e-3, t_max=1.0, sample_stride=5, min_lambda=0.5, tail_tol=1.0)

    class P:
        def __init__(self, lam):
            self.lam, self.gamma = lam, 0.0

    tr = ev.run(small, packet(small), cfg, tracker=lambda v, t: P(1.0 - t * 50))
    assert tr.stop_reason == "min_lambda"


def test_config_validation():
    with pytest.raises(ValueError):
        ev.evolve_from_mapping({"dt": 1e-3})
    with pytest.raises(ValueError):
        ev.EvolveConfig(scheme="euler")
    with pytest.raises(ValueError):
        ev.EvolveConfig(dt0=1e-3, min_dt=1e-2)


def test_thread_count(monkeypatch):
    monkeypatch.setenv("CMLAB_THREADS", "3")
    assert ev.fft_workers() == 3
    monkeypatch.setenv("CMLAB_THREADS", "lots")
    assert ev.fft_workers() == 1


def test_renormalized_snapshot_inverts_modulation():
    g = GridSpec(2048, 64.0, "torus")
    w = packet(g)
    v = modulate(g, w, 0.8, 0.4)
    assert np.abs(ev.renormalized_snapshot(g, v, 0.8, 0.4) - w).max() < 1e-10


def test_nonlinear_variables_of_soliton(line):
    w1, w2 = ev.nonlinear_variables(line, soliton_q(line), 2)
    m = np.abs(line.x) <= 64
    assert np.abs(w1[m]).max() < 1e-10 and np.abs(w2[m]).max() < 1e-9
