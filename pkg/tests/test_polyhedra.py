from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from latentforest import newton_facets, one_distance_mult
from latentforest.errors import DimensionTooLarge
from latentforest.polyhedra import rational_rank


def lp_member(generators, point) -> bool:
    """LP oracle: point in conv(generators) + nonnegative orthant."""
    d = len(point)
    k = len(generators)
    # point = sum mu_i g_i + s, mu >= 0 summing to 1, s >= 0
    a_eq = np.zeros((d + 1, k + d))
    for i, g in enumerate(generators):
        a_eq[:d, i] = g
        a_eq[d, i] = 1.0
    a_eq[:d, k:] = np.eye(d)
    b_eq = np.concatenate([np.array(point, dtype=float), [1.0]])
    res = linprog(
        np.zeros(k + d), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * (k + d)
    )
    return res.status == 0


def lp_one_distance(generators) -> float:
    """LP oracle: smallest t with t*(1,..,1) in the polyhedron."""
    d = len(generators[0])
    k = len(generators)
    # variables: mu (k), s (d), t
    a_eq = np.zeros((d + 1, k + d + 1))
    for i, g in enumerate(generators):
        a_eq[:d, i] = g
        a_eq[d, i] = 1.0
    a_eq[:d, k : k + d] = np.eye(d)
    a_eq[:d, -1] = -1.0
    b_eq = np.concatenate([np.zeros(d), [1.0]])
    c = np.zeros(k + d + 1)
    c[-1] = 1.0
    res = linprog(c, A_eq=a_eq, b_eq=b_eq,
                  bounds=[(0, None)] * (k + d) + [(None, None)])
    assert res.status == 0
    return float(res.x[-1])


def random_exponents(rng, d, k):
    return [tuple(int(x) for x in rng.integers(0, 5, size=d))
            for _ in range(k)]


class TestNewtonFacets:
    def test_empty_input(self):
        assert newton_facets([], 3) is None

    def test_single_generator(self):
        poly = newton_facets([(2,)], 1)
        assert poly.contains((Fraction(2),))
        assert poly.contains((Fraction(3),))
        assert not poly.contains((Fraction(1),))

    def test_membership_matches_lp(self):
        rng = np.random.default_rng(0)
        for trial in range(60):
            d = int(rng.integers(1, 5))
            k = int(rng.integers(1, 6))
            gens = random_exponents(rng, d, k)
            poly = newton_facets(gens, d)
            for _ in range(12):
                pt = tuple(
                    Fraction(int(rng.integers(0, 9)), int(rng.integers(1, 4)))
                    for _ in range(d)
                )
                ours = poly.contains(pt)
                lp = lp_member(gens, [float(x) for x in pt])
                assert ours == lp, (gens, pt)

    def test_generators_inside(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            d = int(rng.integers(1, 6))
            gens = random_exponents(rng, d, int(rng.integers(1, 7)))
            poly = newton_facets(gens, d)
            for g in gens:
                assert poly.contains(tuple(Fraction(x) for x in g))

    def test_dimension_bound(self):
        with pytest.raises(DimensionTooLarge):
            newton_facets([tuple([1] * 21)], 21)


class TestOneDistance:
    def test_single_axis(self):
        poly = newton_facets([(1,)], 1)
        t, mult = one_distance_mult(poly)
        assert (t, mult) == (Fraction(1), 1)

    def test_product_monomial(self):
        # single generator (1,1): t*(1,1) enters at t = 1; two tight
        # facets x >= 1 and y >= 1 meet there
        poly = newton_facets([(1, 1)], 2)
        t, mult = one_distance_mult(poly)
        assert t == 1
        assert mult == 2

    def test_three_cycle(self):
        # (1,1,0), (1,0,1), (0,1,1): facet x+y+z >= 2, so t = 2/3
        poly = newton_facets([(1, 1, 0), (1, 0, 1), (0, 1, 1)], 3)
        t, mult = one_distance_mult(poly)
        assert t == Fraction(2, 3)
        assert mult == 1

    def test_matches_lp(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            d = int(rng.integers(1, 5))
            gens = random_exponents(rng, d, int(rng.integers(1, 6)))
            if any(not any(g) for g in gens):
                continue  # a zero exponent vector puts the origin inside
            poly = newton_facets(gens, d)
            t, _ = one_distance_mult(poly)
            assert abs(float(t) - lp_one_distance(gens)) < 1e-7


class TestRationalRank:
    def test_rank(self):
        rows = [
            (Fraction(1), Fraction(2)),
            (Fraction(2), Fraction(4)),
            (Fraction(0), Fraction(1)),
        ]
        assert rational_rank(rows) == 2

    def test_matches_numpy(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            r = int(rng.integers(1, 5))
            c = int(rng.integers(1, 5))
            m = rng.integers(-3, 4, size=(r, c))
            ours = rational_rank(
                [tuple(Fraction(int(x)) for x in row) for row in m]
            )
            assert ours == np.linalg.matrix_rank(m.astype(float))
