import numpy as np
import pytest

from cmlab import suites as su
from cmlab.spectral_grid import GridSpec


@pytest.mark.parametrize("name", sorted(su.SUITES))
def test_suite_rows_pass(line, name):
    rows = su.run_suite(name, line, seed=3)
    assert rows
    bad = [(r.name, r.residual) for r in rows if not r.passed]
    assert not bad


def test_suites_are_deterministic(line):
    a = [r.as_dict() for r in su.run_suite("operators", line, 5)]
    b = [r.as_dict() for r in su.run_suite("operators", line, 5)]
    assert a == b


def test_bump_field_is_resolved_and_local(line):
    f = su.bump_field(line, np.random.default_rng(0))
    assert np.abs(f[np.abs(line.x) > su.WINDOW]).max() < 1e-12
    spec = np.abs(np.fft.fft(f))
    assert spec[np.abs(line.k) > 0.5 * line.k_max].max() < 1e-12 * spec.max()


def test_box_decay_rules():
    mk = lambda res: su.Row("s", "r", 1, 1.0, res, 1.0)
    assert su.box_decay([mk(1e-3)], [mk(4e-4)])[0]["pass"]
    assert not su.box_decay([mk(1e-3)], [mk(8e-4)])[0]["pass"]
    assert su.box_decay([mk(1e-12)], [mk(2e-12)])[0]["at_floor"]


def test_operator_residuals_shrink_with_box():
    small = su.run_suite("operators", GridSpec(2048, 128.0, "line"))
    large = su.run_suite("operators", GridSpec(4096, 256.0, "line"))
    assert all(d["pass"] for d in su.box_decay(small, large))


def test_unknown_suite(line):
    with pytest.raises(ValueError):
        su.run_suite("bogus", line)
