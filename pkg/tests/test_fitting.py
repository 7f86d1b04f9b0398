import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmlab.fitting import fit_power_law, loglog_slope


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_exact_power_law(p, a):
    x = np.geomspace(1, 1e3, 40)
    fit = fit_power_law(x, a * x**p)
    assert fit.exponent == pytest.approx(p, abs=1e-9)
    assert fit.prefactor == pytest.approx(a, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0)


def test_window_and_checks():
    x = np.geomspace(1, 1e4, 100)
    y = np.where(x < 100, x, x**2 / 100)
    assert fit_power_law(x, y, window=(200, 1e4)).exponent == pytest.approx(2.0)
    with pytest.raises(ValueError):
        fit_power_law(x[:5], y[:5])
    with pytest.raises(ValueError):
        fit_power_law(np.linspace(1, 2, 30), np.linspace(1, 2, 30))
    with pytest.raises(ValueError):
        fit_power_law(x, -y)


def test_loglog_slope():
    assert loglog_slope([1, 2, 4], [3, 12, 48]) == pytest.approx(2.0)
