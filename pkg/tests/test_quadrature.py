from math import factorial

import numpy as np
import pytest

from crstokes.quadrature import composite_rule, physical_points, triangle_rule


def exact_monomial(a, b, c):
    """Mean of l1^a l2^b l3^c over a triangle: 2 a! b! c! / (a+b+c+2)!."""
    return 2.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)


def monomials(degree):
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            yield a, b, degree - a - b


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6, 7, 8, 10, 12])
def test_exact_up_to_degree(degree):
    pts, w = triangle_rule(degree)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    tol = 1e-13 if degree in (1, 2, 3, 5) or degree > 6 else 2e-12
    for d in range(degree + 1):
        for a, b, c in monomials(d):
            approx = np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c)
            assert approx == pytest.approx(exact_monomial(a, b, c), abs=tol), (a, b, c)


@pytest.mark.parametrize("degree", [2, 4, 5, 6])
def test_symmetric_rules_are_symmetric(degree):
    pts, w = triangle_rule(degree)
    key = sorted(zip(map(tuple, np.round(np.sort(pts, axis=1), 12)), np.round(w, 12)))
    perm = pts[:, [1, 2, 0]]
    key2 = sorted(zip(map(tuple, np.round(np.sort(perm, axis=1), 12)), np.round(w, 12)))
    assert key == key2
    assert np.all(pts >= 0)


def test_default_rule_is_seven_points():
    pts, w = triangle_rule(5)
    assert len(w) == 7 and w[0] == pytest.approx(9 / 40)


def test_rejects_bad_degree():
    with pytest.raises(ValueError):
        triangle_rule(-1)
    with pytest.raises(ValueError):
        triangle_rule(99)


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_composite_rule_exact(m):
    pts, w = composite_rule(4, m)
    assert len(w) == 6 * m * m
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    for a, b, c in monomials(4):
        approx = np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c)
        assert approx == pytest.approx(exact_monomial(a, b, c), abs=1e-12)


def test_composite_rule_converges_on_nonpolynomial():
    exact = 2 * (np.e - 2.0)  # mean of exp(l1) over the triangle
    errs = []
    for m in (1, 2, 4):
        pts, w = composite_rule(2, m)
        errs.append(abs(np.sum(w * np.exp(pts[:, 1])) - exact))
    assert errs[2] < errs[1] < errs[0]


def test_physical_points():
    verts = np.array([[[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]]])
    x = physical_points(verts, np.array([[1.0, 0, 0], [0, 1.0, 0], [1 / 3, 1 / 3, 1 / 3]]))
    np.testing.assert_allclose(x[0], [[0, 0], [2, 0], [2 / 3, 1 / 3]])
