"""Numeric RLCT estimates from Laplace integrals.

Evaluates Z_n = integral of exp(-n H) over a box for a grid of sample
sizes and regresses log Z_n on {1, log n, log log n}.  In the
convention used throughout, log Z_n = -(lambda/2) log n +
(mult - 1) log log n + O(1), so the slope in log n recovers lambda and
the log log n coefficient recovers the multiplicity.  This is a slow,
approximate route that serves as an independent check on the exact
polyhedral computations, not a replacement for them.

Sum of squares systems are split into independent blocks of variables
(no term couples two blocks), which keeps each integral low
dimensional.  Blocks of dimension up to two are integrated by adaptive
quadrature seeded with the near-zero points of the phase function;
larger blocks use stratified Monte Carlo with points shared across the
whole n grid, so the regression sees a smooth function of n rather
than independent noise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .engine import MonomialSos
from .errors import IntegrationFailure

DEFAULT_N_GRID = tuple(
    int(round(v)) for v in np.geomspace(1e2, 1e6, 13)
)


@dataclass(frozen=True)
class LaplaceConfig:
    mc_points: int = 10**6
    seed: int = 0
    quad_max_dim: int = 2
    max_dim: int = 10
    m_candidates: tuple[int, ...] = (1, 2, 3, 4)


@dataclass(frozen=True)
class LaplaceEstimate:
    """Regression readout of a Laplace integral experiment.

    ``residuals`` are per grid point for the chosen multiplicity;
    ``rss_by_mult`` records the competition that picked it.
    ``mc_std_err`` is the worst relative standard error of any Monte
    Carlo block value entering the regression (None for quadrature).
    """

    lambda_hat: float
    mult_hat: int
    n_grid: tuple[int, ...]
    residuals: tuple[float, ...]
    method: str
    log_z: tuple[float, ...]
    rss_by_mult: tuple[tuple[int, float], ...]
    mc_std_err: float | None = None

    def __post_init__(self):
        if self.lambda_hat < 0:
            raise ValueError("lambda_hat must be nonnegative")


def _blocks(terms: list[tuple[tuple[int, ...], float]], dim: int):
    """Connected components of coordinates under shared term support."""
    parent = list(range(dim))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for u, _ in terms:
        sup = [i for i, e in enumerate(u) if e]
        for a, b in zip(sup, sup[1:]):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    groups: dict[int, list[int]] = {}
    for i in range(dim):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


def _restrict(terms, coords):
    pos = {c: j for j, c in enumerate(coords)}
    out = []
    for u, c in terms:
        if any(u[i] for i in coords):
            out.append((tuple(u[i] for i in coords), c))
    return out


def _eval_terms(terms, pts: np.ndarray) -> np.ndarray:
    """Vectorized H(pts) for pts of shape (N, d)."""
    total = np.zeros(pts.shape[0])
    for u, c in terms:
        mon = np.ones(pts.shape[0])
        for j, e in enumerate(u):
            if e:
                mon = mon * pts[:, j] ** e
        total += (mon - c) ** 2
    return total


def _scan_minima(f, lo: float, hi: float, k: int = 2049) -> list[float]:
    """Interior near-minimum points of f on [lo, hi], for quad hints."""
    xs = np.linspace(lo, hi, k)
    vals = f(xs)
    cut = vals.min() + 1e-12 + 1e-6 * (vals.max() - vals.min())
    hits = np.flatnonzero(vals <= cut)
    out: list[float] = []
    for i in hits:
        x = float(xs[i])
        if lo < x < hi and (not out or x - out[-1] > (hi - lo) / 64):
            out.append(x)
    return out[:40]


def _quad_block(h, box, n: int) -> float:
    """exp(-n h) integrated over a 1 or 2 dimensional box."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if len(box) == 1:
            (lo, hi), = box

            def f(xs):
                return h(np.column_stack([np.atleast_1d(xs)]))

            pts = _scan_minima(lambda xs: f(xs), lo, hi)
            val, _ = integrate.quad(
                lambda x: math.exp(-n * float(f(x)[0])),
                lo, hi, points=pts or None, limit=300,
            )
            return val

        (xlo, xhi), (ylo, yhi) = box

        def inner(x: float) -> float:
            def fy(ys):
                ys = np.atleast_1d(ys)
                return h(np.column_stack([np.full(ys.shape, x), ys]))

            pts = _scan_minima(fy, ylo, yhi)
            val, _ = integrate.quad(
                lambda y: math.exp(-n * float(fy(y)[0])),
                ylo, yhi, points=pts or None, limit=200,
            )
            return val

        def fx(xs):
            xs = np.atleast_1d(xs)
            best = np.full(xs.shape, np.inf)
            for y in np.linspace(ylo, yhi, 65):
                best = np.minimum(
                    best, h(np.column_stack([xs, np.full(xs.shape, y)]))
                )
            return best

        pts = _scan_minima(fx, xlo, xhi, k=513)
        val, _ = integrate.quad(inner, xlo, xhi, points=pts or None, limit=200)
        return val


def _mc_points(box, count: int, rng) -> np.ndarray:
    d = len(box)
    lo = np.array([b[0] for b in box])
    wid = np.array([b[1] - b[0] for b in box])
    if d <= 3:
        k = max(2, int(round(count ** (1.0 / d))))
        grids = np.meshgrid(*[np.arange(k)] * d, indexing="ij")
        base = np.column_stack([g.ravel() for g in grids]).astype(float)
        u = (base + rng.random(base.shape)) / k
    else:
        u = rng.random((count, d))
    return lo + u * wid


def laplace_rlct_estimate(
    h,
    domain=None,
    n_grid=None,
    cfg: LaplaceConfig | None = None,
) -> LaplaceEstimate:
    """Estimate (lambda, mult) of a phase function from Z_n regressions.

    ``h`` is either a :class:`MonomialSos` (its domain is used unless
    one is passed) or a plain callable mapping an (N, d) array of
    points to H values, in which case ``domain`` is required and the
    function is treated as one block.  The zero set of H must meet the
    box, the box must be bounded, and every grid n must be at least 2.
    """
    cfg = cfg or LaplaceConfig()
    grid = tuple(int(n) for n in (n_grid if n_grid is not None else DEFAULT_N_GRID))
    if len(grid) < 3 or sorted(set(grid)) != list(grid) or grid[0] < 2:
        raise ValueError("n grid must be at least 3 increasing integers >= 2")

    if isinstance(h, MonomialSos):
        box = list(h.domain if domain is None else domain)
        terms = [(tuple(u), float(c)) for u, c in h.terms]
        dim = h.dim
    else:
        if domain is None:
            raise ValueError("a callable phase function needs a domain")
        box = list(domain)
        terms = None
        dim = len(box)

    if dim > cfg.max_dim:
        raise IntegrationFailure(
            f"dimension {dim} exceeds the numeric bound {cfg.max_dim}"
        )
    for lo, hi in box:
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise IntegrationFailure("integration box must be bounded")

    if terms is not None:
        const = sum(
            (1.0 - c) ** 2 for u, c in terms if not any(u)
        )
        live = [(u, c) for u, c in terms if any(u)]
        blocks = _blocks(live, dim)
    else:
        const = 0.0
        blocks = [list(range(dim))]

    rng = np.random.default_rng(cfg.seed)
    log_z = np.zeros(len(grid))
    log_z += -np.asarray(grid, dtype=float) * const
    used_mc = False
    worst_se = 0.0

    for coords in blocks:
        sub_box = [box[i] for i in coords]
        if terms is not None:
            sub_terms = _restrict(terms, coords)
            if not sub_terms:
                log_z += sum(math.log(hi - lo) for lo, hi in sub_box)
                continue
            hb = lambda pts, t=sub_terms: _eval_terms(t, pts)
        else:
            hb = lambda pts: np.asarray(h(pts), dtype=float)

        if len(coords) <= cfg.quad_max_dim:
            for gi, n in enumerate(grid):
                val = _quad_block(hb, sub_box, n)
                if not val > 0 or not math.isfinite(val):
                    raise IntegrationFailure(
                        f"quadrature underflow at n={n} (block {coords})"
                    )
                log_z[gi] += math.log(val)
        else:
            used_mc = True
            pts = _mc_points(sub_box, cfg.mc_points, rng)
            vals = hb(pts)
            vol = float(np.prod([hi - lo for lo, hi in sub_box]))
            for gi, n in enumerate(grid):
                w = np.exp(-n * vals)
                mean = float(w.mean())
                if mean <= 0.0:
                    raise IntegrationFailure(
                        f"Monte Carlo mass underflow at n={n} (block {coords})"
                    )
                se = float(w.std()) / math.sqrt(len(w)) / mean
                worst_se = max(worst_se, se)
                log_z[gi] += math.log(vol * mean)

    logn = np.log(np.asarray(grid, dtype=float))
    loglogn = np.log(logn)
    best = None
    rss_table = []
    for mc in cfg.m_candidates:
        y = log_z - (mc - 1) * loglogn
        design = np.column_stack([np.ones_like(logn), logn])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        rss = float(resid @ resid)
        rss_table.append((int(mc), rss))
        if best is None or rss < best[0]:
            best = (rss, int(mc), float(coef[1]), resid)
    _, mult_hat, slope, resid = best
    return LaplaceEstimate(
        lambda_hat=max(0.0, -2.0 * slope),
        mult_hat=mult_hat,
        n_grid=grid,
        residuals=tuple(float(r) for r in resid),
        method="monte_carlo" if used_mc else "quadrature",
        log_z=tuple(float(v) for v in log_z),
        rss_by_mult=tuple(rss_table),
        mc_std_err=worst_se if used_mc else None,
    )
