import math

import numpy as np
import pytest

from kmat.slopes import fit_slope, nan_slope


def test_exact_line():
    x = np.arange(5.0)
    est = fit_slope(x, 2 - 0.5 * x)
    assert est.slope == pytest.approx(-0.5)
    assert est.intercept == pytest.approx(2)
    assert est.stderr == pytest.approx(0, abs=1e-12)
    assert est.within(-0.45, 0.05)


def test_non_finite_dropped():
    est = fit_slope([0, 1, 2, 3, 4], [0, 1, math.nan, 3, 4])
    assert len(est.points) == 4
    with pytest.raises(ValueError):
        fit_slope([0, 1, 2, 3], [0, 1, -math.inf, 3])


def test_shape_mismatch():
    with pytest.raises(ValueError):
        fit_slope([0, 1, 2, 3], [0, 1, 2])


def test_nan_slope():
    assert math.isnan(nan_slope().slope)
    assert not nan_slope().within(0, 1)
