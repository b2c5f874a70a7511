"""Real log canonical thresholds of monomial sum-of-squares functions.

A phase function here is H(w) = sum_i (w^{u_i} - c_i)^2 on a box domain.
Its RLCT splits into two independent parts:

  * the terms with c_i != 0 cut out a smooth fiber; they contribute the
    rank of their exponent matrix, provided the fiber meets the interior
    of the domain (checked per sign orthant with an exact GF(2) solve
    for the signs and a linear program for the log-magnitudes), and

  * the terms with c_i = 0, restricted to the coordinates not touched
    by the nonzero part, contribute through the Newton polyhedron of
    their exponents: lambda = 1/t and the multiplicity is the
    codimension of the face where t*(1,...,1) first enters.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from .errors import EmptyFiber, EmptyZeroSet, NoInteriorSolution
from .polyhedra import newton_facets, one_distance_mult, rational_rank

#: margin below which an LP interior slack counts as boundary contact
INTERIOR_TOL = 1e-7


@dataclass(frozen=True)
class Rlct:
    """A threshold: asymptotically log Z_n ~ -(lam/2) log n + (mult-1) loglog n."""

    lam: Fraction
    mult: int

    def __str__(self) -> str:
        return f"lambda={self.lam} mult={self.mult}"

    def as_tuple(self) -> tuple[Fraction, int]:
        return (self.lam, self.mult)


@dataclass(frozen=True)
class MonomialSos:
    """H(w) = sum of (w^u - c)^2 over a product of intervals.

    terms are (exponent tuple, constant) pairs; exponents are
    nonnegative integers of length dim.  Unbounded interval ends are
    +-inf (serialized as null).
    """

    dim: int
    terms: tuple[tuple[tuple[int, ...], float], ...]
    domain: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "terms",
            tuple((tuple(int(x) for x in u), float(c)) for u, c in self.terms),
        )
        object.__setattr__(
            self, "domain", tuple((float(a), float(b)) for a, b in self.domain)
        )
        if len(self.domain) != self.dim:
            raise ValueError("domain length does not match dim")
        for u, _ in self.terms:
            if len(u) != self.dim:
                raise ValueError(f"exponent {u} has wrong length")
            if any(x < 0 for x in u):
                raise ValueError(f"exponent {u} has a negative entry")
        for lo, hi in self.domain:
            if not lo < hi:
                raise ValueError(f"empty domain interval ({lo}, {hi})")

    def __call__(self, w) -> float:
        w = np.asarray(w, dtype=float)
        total = 0.0
        for u, c in self.terms:
            total += (np.prod(w ** np.array(u)) - c) ** 2
        return float(total)

    def to_json(self) -> str:
        def end(x):
            return None if math.isinf(x) else x

        return json.dumps(
            {
                "dim": self.dim,
                "terms": [{"u": list(u), "c": c} for u, c in self.terms],
                "domain": [[end(a), end(b)] for a, b in self.domain],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "MonomialSos":
        data = json.loads(text)

        def end(x, sign):
            return sign * math.inf if x is None else float(x)

        return cls(
            dim=data["dim"],
            terms=tuple((tuple(t["u"]), t["c"]) for t in data["terms"]),
            domain=tuple(
                (end(a, -1), end(b, +1)) for a, b in data["domain"]
            ),
        )


@dataclass(frozen=True)
class PartSplit:
    """Separation of a MonomialSos into its nonzero and zero parts.

    support/complement partition the coordinate indices; zero_terms are
    the c = 0 exponents projected onto the complement coordinates.
    """

    nonzero_terms: tuple[tuple[tuple[int, ...], float], ...]
    zero_terms: tuple[tuple[int, ...], ...]
    support: tuple[int, ...]
    complement: tuple[int, ...]

    @property
    def support_split(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return (self.support, self.complement)


def split_parts(m: MonomialSos) -> PartSplit:
    """Split terms by constant and project the zero part.

    Raises EmptyZeroSet when some c = 0 term is supported entirely on
    the coordinates of the nonzero part (including constant terms):
    such a term cannot vanish on the fiber of the nonzero part, so H
    has no zero on the domain closure worth localizing at.
    """
    nonzero = tuple((u, c) for u, c in m.terms if c != 0.0)
    zero_raw = [u for u, c in m.terms if c == 0.0]
    touched = set()
    for u, _ in nonzero:
        touched.update(i for i, x in enumerate(u) if x != 0)
    support = tuple(sorted(touched))
    complement = tuple(i for i in range(m.dim) if i not in touched)
    projected = []
    for u in zero_raw:
        if all(u[i] == 0 for i in complement):
            raise EmptyZeroSet(
                "a zero-constant term is supported on the nonzero-part "
                "coordinates; H has no interior zero"
            )
        projected.append(tuple(u[i] for i in complement))
    return PartSplit(
        nonzero_terms=nonzero,
        zero_terms=tuple(projected),
        support=support,
        complement=complement,
    )


def _gf2_sign_solutions(rows: list[int], rhs: list[int], width: int):
    """Solutions s in GF(2)^width of the system rows[i].s = rhs[i].

    rows are column bitmasks.  Yields solutions as bitmasks; raises
    EmptyFiber if the system is inconsistent.  Systems here are tiny,
    but cap the free-variable enumeration defensively.
    """
    pivots: dict[int, tuple[int, int]] = {}  # col -> reduced (row, rhs)
    for row, r in zip(rows, rhs):
        for col, (prow, pr) in pivots.items():
            if row >> col & 1:
                row ^= prow
                r ^= pr
        if row == 0:
            if r:
                raise EmptyFiber("no sign orthant is consistent with the constants")
            continue
        col = row.bit_length() - 1
        pivots[col] = (row, r)
    free = [c for c in range(width) if c not in pivots]
    if len(free) > 20:
        raise EmptyFiber(f"too many sign orthants to enumerate (2^{len(free)})")
    # a pivot row only involves columns below its own pivot, so back
    # substitution in increasing column order sees assigned values only
    order = sorted(pivots)
    for bits in itertools.product((0, 1), repeat=len(free)):
        s = 0
        for c, b in zip(free, bits):
            s |= b << c
        for col in order:
            prow, pr = pivots[col]
            if ((prow & s & ~(1 << col)).bit_count() & 1) ^ pr:
                s |= 1 << col
        yield s


def nonzero_codim(split: PartSplit, domain) -> int:
    """Codimension contributed by the nonzero part on the given domain.

    Returns the rank of the exponent matrix when the fiber
    {w : w^{u_i} = c_i} meets the interior of the domain projected to
    the support coordinates.  Raises NoInteriorSolution when the fiber
    only touches the domain boundary and EmptyFiber when it misses the
    domain entirely.
    """
    terms = split.nonzero_terms
    if not terms:
        return 0
    sup = split.support
    s = len(sup)
    umat = [[u[i] for i in sup] for u, _ in terms]
    logc = [math.log(abs(c)) for _, c in terms]
    rows = []
    rhs = []
    for urow, (_, c) in zip(umat, terms):
        mask = 0
        for j, x in enumerate(urow):
            if x & 1:
                mask |= 1 << j
        rows.append(mask)
        rhs.append(1 if c < 0 else 0)
    rank = rational_rank(umat)

    # log-magnitude system, shared by all orthants
    a_np = np.array(umat, dtype=float)
    b_np = np.array(logc, dtype=float)
    x0, *_ = np.linalg.lstsq(a_np, b_np, rcond=None)
    scale = max(1.0, float(np.max(np.abs(b_np))))
    if float(np.max(np.abs(a_np @ x0 - b_np))) > 1e-8 * scale:
        raise EmptyFiber("the magnitude system w^u = |c| has no solution")

    best = -math.inf
    for signs in _gf2_sign_solutions(rows, rhs, s):
        # interval of |w_j| inside this orthant, in log coordinates
        finite_ub: list[tuple[int, float]] = []
        finite_lb: list[tuple[int, float]] = []
        ok = True
        for j, i in enumerate(sup):
            lo, hi = domain[i]
            if signs >> j & 1:  # negative sign
                if lo >= 0:
                    ok = False
                    break
                if not math.isinf(lo):
                    finite_ub.append((j, math.log(-lo)))
                if hi < 0:
                    finite_lb.append((j, math.log(-hi)))
            else:
                if hi <= 0:
                    ok = False
                    break
                if not math.isinf(hi):
                    finite_ub.append((j, math.log(hi)))
                if lo > 0:
                    finite_lb.append((j, math.log(lo)))
        if not ok:
            continue
        if not finite_ub and not finite_lb:
            return rank
        # maximize the margin delta: u.x = log|c|, x_j + delta <= ub,
        # x_j - delta >= lb; delta capped so the LP stays bounded
        nvar = s + 1
        a_ub = []
        b_ub = []
        for j, ub in finite_ub:
            row = [0.0] * nvar
            row[j] = 1.0
            row[s] = 1.0
            a_ub.append(row)
            b_ub.append(ub)
        for j, lb in finite_lb:
            row = [0.0] * nvar
            row[j] = -1.0
            row[s] = 1.0
            a_ub.append(row)
            b_ub.append(-lb)
        cost = [0.0] * nvar
        cost[s] = -1.0
        a_eq = np.hstack([a_np, np.zeros((len(terms), 1))])
        res = linprog(
            cost,
            A_ub=np.array(a_ub),
            b_ub=np.array(b_ub),
            A_eq=a_eq,
            b_eq=b_np,
            bounds=[(None, None)] * s + [(None, 1.0)],
            method="highs",
        )
        if not res.success:
            continue
        delta = -res.fun
        best = max(best, delta)
        if delta > INTERIOR_TOL:
            return rank
    if best >= -INTERIOR_TOL:
        raise NoInteriorSolution(
            "the fiber of the nonzero part only touches the domain boundary"
        )
    raise EmptyFiber("the fiber of the nonzero part misses the domain")


def rlct_monomial_sos(m: MonomialSos) -> Rlct:
    """RLCT of H at its zero set within the domain.

    The nonzero part contributes its codimension with multiplicity 1;
    the zero part contributes via its Newton polyhedron.  A term list
    with no zero part yields multiplicity 1; no terms at all means
    H = 0 and the threshold is (0, 1).
    """
    split = split_parts(m)
    lam1 = nonzero_codim(split, m.domain)
    if not split.zero_terms:
        return Rlct(Fraction(lam1), 1)
    poly = newton_facets(split.zero_terms, len(split.complement))
    t, mult = one_distance_mult(poly)
    return Rlct(Fraction(lam1) + 1 / t, mult)
