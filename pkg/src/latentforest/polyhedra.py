"""Exact Newton polyhedra over the rationals.

The Newton polyhedron of a set of exponent vectors is
``conv(points) + R_{>=0}^d``.  Facets are computed exactly by the
double description method applied to the homogenization cone

    C = cone{(1, v_i)} + cone{(0, e_j)}  in  R^{1+d},

whose dual cone's extreme rays are the facet normals of C.  A dual ray
``(y0, a)`` other than the homogenization facet ``x0 >= 0`` gives the
polyhedron facet ``a.x >= -y0``.  All arithmetic is integer (primitive
vectors), so tightness tests are decidable.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd

from .errors import DimensionTooLarge

#: Refuse exact hulls above this ambient dimension.
HULL_DIM_BOUND = 20


def _dot(a, b) -> int:
    return sum(x * y for x, y in zip(a, b))


def _primitive(v: tuple[int, ...]) -> tuple[int, ...]:
    g = 0
    for x in v:
        g = gcd(g, abs(x))
    return v if g in (0, 1) else tuple(x // g for x in v)


def _combine(g, p, n) -> tuple[int, ...]:
    """Positive combination of p and n lying on the hyperplane g.y = 0."""
    gp, gn = _dot(g, p), _dot(g, n)
    return _primitive(tuple(gp * y - gn * x for x, y in zip(p, n)))


def dual_extreme_rays(constraints: list[tuple[int, ...]]) -> list[tuple[int, ...]]:
    """Extreme rays of the cone {y : g . y >= 0 for all g}.

    Standard double description with explicit lineality handling and
    the combinatorial adjacency test.  Assumes the result is a pointed
    cone (true whenever the constraint vectors span the space).
    """
    dim = len(constraints[0])
    lineality: list[tuple[int, ...]] = [
        tuple(1 if i == j else 0 for j in range(dim)) for i in range(dim)
    ]
    rays: list[tuple[int, ...]] = []
    active: list[int] = []  # bitmask of processed constraints tight at ray i

    for ci, g in enumerate(constraints):
        pidx = next((i for i, l in enumerate(lineality) if _dot(g, l) != 0), None)
        if pidx is not None:
            # slice the lineality space: the pivot becomes a ray and
            # everything else is projected onto the hyperplane g.y = 0
            pivot = lineality.pop(pidx)
            if _dot(g, pivot) < 0:
                pivot = tuple(-x for x in pivot)
            lineality = [_combine(g, pivot, l) for l in lineality]
            rays = [
                _combine(g, pivot, r) if _dot(g, r) != 0 else r for r in rays
            ]
            # processed constraints vanish on the old lineality space, so
            # active sets carry over; every adjusted ray is tight at g and
            # the pivot is tight at everything before g
            active = [a | (1 << ci) for a in active]
            rays.append(pivot)
            active.append((1 << ci) - 1)
            continue

        vals = [_dot(g, r) for r in rays]
        if all(v >= 0 for v in vals):
            active = [
                a | (1 << ci) if v == 0 else a for a, v in zip(active, vals)
            ]
            continue

        pos = [i for i, v in enumerate(vals) if v > 0]
        zero = [i for i, v in enumerate(vals) if v == 0]
        neg = [i for i, v in enumerate(vals) if v < 0]
        keep_rays = [rays[i] for i in pos + zero]
        keep_active = [
            active[i] | (0 if i in pos else 1 << ci) for i in pos + zero
        ]
        for ip in pos:
            for im in neg:
                common = active[ip] & active[im]
                adjacent = not any(
                    k not in (ip, im) and (active[k] & common) == common
                    for k in range(len(rays))
                )
                if adjacent:
                    keep_rays.append(_combine(g, rays[ip], rays[im]))
                    keep_active.append(common | (1 << ci))
        rays, active = keep_rays, keep_active

    assert not lineality, "dual cone is not pointed"
    return rays


@dataclass(frozen=True)
class NewtonPolyhedron:
    """H-representation of conv(generators) + nonnegative orthant.

    Each facet is a pair (a, b) of an integer normal and offset with
    the meaning a . x >= b; normals are componentwise nonnegative.
    """

    ambient_dim: int
    generators: tuple[tuple[int, ...], ...]
    facets: tuple[tuple[tuple[int, ...], int], ...]

    def contains(self, point) -> bool:
        x = [Fraction(p) for p in point]
        return all(
            sum(ai * xi for ai, xi in zip(a, x)) >= b for a, b in self.facets
        )


def newton_facets(zero_terms, ambient_dim: int) -> NewtonPolyhedron | None:
    """Exact facets of the Newton polyhedron of the given exponents.

    ``zero_terms`` is an iterable of length-``ambient_dim`` nonnegative
    integer exponent vectors.  Returns None when no terms are given.
    """
    if ambient_dim > HULL_DIM_BOUND:
        raise DimensionTooLarge(
            f"ambient dimension {ambient_dim} exceeds bound {HULL_DIM_BOUND}"
        )
    gens = sorted({tuple(int(x) for x in u) for u in zero_terms})
    if not gens:
        return None
    for u in gens:
        if len(u) != ambient_dim or any(x < 0 for x in u):
            raise ValueError(f"bad exponent vector {u}")

    # dual description of the homogenization cone: axis rays first, they
    # empty the lineality space quickly
    constraints = [
        tuple(1 if i == j + 1 else 0 for i in range(ambient_dim + 1))
        for j in range(ambient_dim)
    ]
    constraints += [(1, *u) for u in gens]
    facets = []
    for ray in dual_extreme_rays(constraints):
        y0, a = ray[0], ray[1:]
        if all(x == 0 for x in a):
            continue  # homogenization facet x0 >= 0
        facets.append((a, -y0))
    facets.sort()
    poly = NewtonPolyhedron(
        ambient_dim=ambient_dim, generators=tuple(gens), facets=tuple(facets)
    )
    for u in gens:  # cheap exactness backstop
        assert poly.contains(u), "generator violates a computed facet"
    return poly


def one_distance_mult(p: NewtonPolyhedron) -> tuple[Fraction, int]:
    """Smallest t with t*(1,...,1) in the polyhedron, and the rank of
    the facet normals tight there (the codimension of the minimal face
    containing that point)."""
    t = max(Fraction(b, sum(a)) for a, b in p.facets)
    tight = [a for a, b in p.facets if t * sum(a) == b]
    return t, rational_rank(tight)


def rational_rank(rows) -> int:
    """Rank over Q of a sequence of rational row vectors."""
    mat = [[Fraction(x) for x in r] for r in rows]
    if not mat:
        return 0
    rank = 0
    for col in range(len(mat[0])):
        piv = next((i for i in range(rank, len(mat)) if mat[i][col] != 0), None)
        if piv is None:
            continue
        mat[rank], mat[piv] = mat[piv], mat[rank]
        prow = mat[rank]
        for i in range(rank + 1, len(mat)):
            if mat[i][col] != 0:
                f = mat[i][col] / prow[col]
                mat[i] = [x - f * y for x, y in zip(mat[i], prow)]
        rank += 1
        if rank == len(mat):
            break
    return rank
