from math import factorial

import numpy as np
import pytest

from dgnse.quadrature import assembly_rule, collapsed_gauss, dunavant6, error_rule, gauss_interval


def exact(i, j):
    return factorial(i) * factorial(j) / factorial(i + j + 2)


@pytest.mark.parametrize("rule", [dunavant6(), collapsed_gauss(10), collapsed_gauss(12), collapsed_gauss(5)])
def test_exactness(rule):
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-15)
    assert np.allclose(rule.points.sum(axis=1), 1.0)
    xi, eta = rule.xi.T
    for d in range(rule.exact_degree + 1):
        for i in range(d + 1):
            val = rule.weights @ (xi**i * eta ** (d - i))
            assert abs(val - exact(i, d - i)) <= 1e-14 * exact(i, d - i)


def test_degree_is_sharp_for_dunavant():
    rule = dunavant6()
    xi, eta = rule.xi.T
    errs = [abs(rule.weights @ (xi**i * eta ** (7 - i)) - exact(i, 7 - i)) / exact(i, 7 - i) for i in range(8)]
    assert max(errs) > 1e-8


def test_rule_choice():
    assert assembly_rule().exact_degree == 6 and len(assembly_rule()) == 12
    assert error_rule().exact_degree == 10


def test_gauss_interval():
    x, w = gauss_interval(3, 1.0, 3.0)
    assert w.sum() == pytest.approx(2.0)
    assert w @ x**5 == pytest.approx((3.0**6 - 1.0) / 6)
