import math

import numpy as np
import pytest

from pilotwave.quadrature import QuadratureError, adaptive_simpson, gauss_legendre_panels


def test_simpson_gaussian():
    f = lambda x: math.exp(-x * x)  # noqa: E731
    assert adaptive_simpson(f, -10, 10, tol=1e-12) == pytest.approx(math.sqrt(math.pi), abs=1e-11)


def test_simpson_complex_oscillatory():
    f = lambda x: np.exp(-x * x / 2 + 3j * x)  # noqa: E731
    exact = math.sqrt(2 * math.pi) * math.exp(-4.5)
    assert abs(adaptive_simpson(f, -12, 12, tol=1e-12) - exact) < 1e-11


def test_simpson_reports_nonconvergence():
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: 1.0 / x if x else 0.0, -1.0, 2.0, tol=1e-14, max_evals=2000)


def test_simpson_rejects_empty_interval():
    with pytest.raises(ValueError):
        adaptive_simpson(math.sin, 1.0, 1.0)


def test_gauss_legendre_panels_polynomial_exact():
    x, w = gauss_legendre_panels(-1.0, 3.0, 5, 4)
    assert np.sum(w * x**7) == pytest.approx((3.0**8 - 1.0) / 8, rel=1e-13)
