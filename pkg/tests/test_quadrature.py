import numpy as np
import pytest

from ddfem.quadrature import (
    UnsupportedDegreeError,
    edge_rule,
    monomial_integral_triangle,
    triangle_rule,
)


@pytest.mark.parametrize("degree", range(11))
def test_triangle_monomial_exactness(degree):
    rule = triangle_rule(degree)
    x, y = rule.points[:, 0], rule.points[:, 1]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = rule.weights @ (x**a * y**b)
            assert approx == pytest.approx(
                monomial_integral_triangle(a, b), abs=1e-14
            )


@pytest.mark.parametrize("degree", range(11))
def test_triangle_weights_positive_and_points_inside(degree):
    rule = triangle_rule(degree)
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - 0.5) < 1e-14
    x, y = rule.points[:, 0], rule.points[:, 1]
    assert np.all(x >= -1e-15)
    assert np.all(y >= -1e-15)
    assert np.all(x + y <= 1 + 1e-15)
    assert rule.exact_degree >= degree


def test_triangle_examples():
    rule = triangle_rule(4)
    assert rule.integrate(lambda p: np.ones(len(p))) == pytest.approx(0.5)
    assert rule.integrate(lambda p: p[:, 0]) == pytest.approx(1 / 6)
    assert triangle_rule(4).integrate(
        lambda p: p[:, 0] ** 2 * p[:, 1] ** 2
    ) == pytest.approx(1 / 180, abs=1e-15)


def test_triangle_degree_out_of_range():
    with pytest.raises(UnsupportedDegreeError):
        triangle_rule(11)


@pytest.mark.parametrize("degree", range(12))
def test_edge_monomial_exactness(degree):
    rule = edge_rule(degree)
    s = rule.points[:, 0]
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - 1.0) < 1e-14
    for a in range(degree + 1):
        assert rule.weights @ s**a == pytest.approx(1 / (a + 1), abs=1e-14)


def test_edge_examples():
    rule = edge_rule(5)
    s = rule.points[:, 0]
    assert rule.weights @ np.ones_like(s) == pytest.approx(1.0)
    assert rule.weights @ s == pytest.approx(0.5)
    assert rule.weights @ s**5 == pytest.approx(1 / 6)
