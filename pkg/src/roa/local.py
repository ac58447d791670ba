"""Local exponential stability from the linearization.

With ``V(x) = x^T P x`` and ``P A + A^T P = -Q`` the derivative along
``x' = A x + g(x)`` satisfies, on a star-shaped sublevel set,

    V'(x) <= -(lambda_min(Q) - 2 sup ||P Dg||) ||x||^2

so the set is a region of attraction once ``2 ||P Dg(x)||_F <= r`` holds on
it, where ``r = lambda_min(Q) - eps``.  The verifiers below search for the
largest such level.
"""

from __future__ import annotations

import math
import time
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from . import linalg
from .interval import Box
from .prover import (
    DEFAULT_DELTA, DEFAULT_REL_MIN_WIDTH, NoLevel, Query, as_constraint, bisect_level, check,
)
from .results import StageResult
from .system import DynamicalSystem, NotHurwitz

DEFAULT_TOL = 1e-5
#: relative safety factor applied to closed-form containment levels
_SAFETY = 1e-12


def containment_margin(domain: Box) -> float:
    return DEFAULT_REL_MIN_WIDTH * float(np.max(domain.widths))


def ellipsoid_containment_level(P, domain: Box, margin: float) -> float:
    """Largest ``c`` with ``{x^T P x <= c}`` inside ``domain`` shrunk by ``margin``.

    The extent of the ellipsoid along axis ``k`` is ``sqrt(c (P^-1)_kk)``.
    """
    Pinv = np.linalg.inv(np.asarray(P, float))
    best = math.inf
    for k, ivl in enumerate(domain):
        room = min(ivl.hi, -ivl.lo) - margin
        if room <= 0:
            return 0.0
        best = min(best, room * room / Pinv[k, k])
    return best * (1.0 - _SAFETY)


def frobenius_entries(P, Dg) -> list:
    """Entries of ``P Dg`` as expressions (zeros included)."""
    n = len(Dg)
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            terms = [ex.Const(float(P[i, k])) * Dg[k][j]
                     for k in range(n) if P[i, k] != 0.0 and not ex.is_zero(Dg[k][j])]
            row.append(ex.sum_exprs(terms))
        out.append(row)
    return out


def frobenius_goal(entries, r: float) -> ex.Expr:
    """``2 ||M||_F - r`` for a matrix of expressions ``M``."""
    squares = [e ** 2 for row in entries for e in row if not ex.is_zero(e)]
    if not squares:
        return ex.Const(-r)
    return ex.Const(2.0) * ex.sqrt(ex.sum_exprs(squares)) - ex.Const(r)


def global_check(sys: DynamicalSystem, entries=None, **kw):
    """Try to prove the local condition on all of R^n.

    Every state variable in ``P Dg`` must sit under a sin/cos/tanh; those
    subterms are replaced by fresh variables ranging over [-1, 1], which
    covers every x in R^n at once.  Returns the verdict, or ``None`` when the
    boundedness screen fails.
    """
    if entries is None:
        entries = frobenius_entries(sys.P, sys.Dg)
    flat = [e for row in entries for e in row]
    abstracted = ex.abstract_bounded(flat)
    if abstracted is None:
        return None
    exprs, fresh = abstracted
    n = len(sys.Dg)
    rows = [exprs[i * n:(i + 1) * n] for i in range(n)]
    goal = frobenius_goal(rows, sys.r)
    names = fresh or ["_s0"]
    q = Query.build([(-1.0, 1.0)] * len(names), names, goal, **kw)
    return check(q)


def local_stability_verifier(sys: DynamicalSystem, tol: float = DEFAULT_TOL,
                             delta: float = DEFAULT_DELTA, min_width: Optional[float] = None,
                             budget: Optional[int] = None, jobs: int = 1) -> StageResult:
    """Largest level ``c1_P`` of ``x^T P x`` certified by the local condition.

    A successful whole-space check sets ``globally_stable``; the level is then
    the largest sublevel set contained in the domain.
    """
    if not sys.hurwitz:
        raise NotHurwitz(f"{sys.name}: linearization is not Hurwitz")
    t0 = time.perf_counter()
    res = StageResult("local", None)
    kw = {"delta": delta}
    if budget is not None:
        kw["budget"] = budget
    entries = frobenius_entries(sys.P, sys.Dg)
    goal = frobenius_goal(entries, sys.r)
    margin = containment_margin(sys.domain)
    c_hi = ellipsoid_containment_level(sys.P, sys.domain, margin)
    res.details["containment_level"] = c_hi

    glob = global_check(sys, entries, **kw)
    if glob is not None:
        res.record(math.inf, glob)
        if glob.verified:
            res.globally_stable = True
            res.level = c_hi
            res.wall_time = time.perf_counter() - t0
            return res

    V = sys.V_P()
    goal_c = as_constraint(goal, sys.variables)
    on_domain = check(Query(sys.domain, (), goal_c, min_width=min_width, **kw), jobs=jobs)
    res.record(c_hi, on_domain)
    if on_domain.verified:
        res.level = c_hi
        res.wall_time = time.perf_counter() - t0
        return res

    def verify(c):
        prem = as_constraint(V - ex.Const(c), sys.variables)
        return check(Query(sys.domain, (prem,), goal_c, min_width=min_width, **kw), jobs=jobs)

    def traced(c):
        v = verify(c)
        res.record(c, v)
        return v

    try:
        res.level = bisect_level(traced, c_hi * 1e-6, c_hi, tol)
    except NoLevel:
        res.wall_time = time.perf_counter() - t0
        raise
    res.wall_time = time.perf_counter() - t0
    return res


def _sup_square_sum(exprs, lo, hi, variables) -> float:
    """``sum sup e^2`` over one box, rounded upward."""
    total = 0.0
    for e in exprs:
        if ex.is_zero(e):
            continue
        l, h = ex.interval_bounds(e, lo[None, :], hi[None, :], variables)
        s = max(abs(float(l[0])), abs(float(h[0])))
        total += s * s
    return total * (1.0 + 1e-12) + 1e-300


def compositional_local_stability_verifier(sys: DynamicalSystem, decomposition,
                                           tol: float = DEFAULT_TOL) -> StageResult:
    """Level certified by entrywise bounds over an enclosing hyperrectangle.

    Each entry of ``P Dg`` is bounded independently by interval evaluation
    over the box ``|x_k| <= sqrt(c / lambda_min)``, so no branch-and-prune
    is needed.

    If ``A`` couples the blocks, the decomposition only shapes that box and
    the monolithic condition ``4 sum sup (P Dg)_ij^2 <= r^2`` certifies the
    ellipsoid ``x^T P x <= c``.  If ``A`` is block diagonal, each block is a
    subsystem with its own ``P_i`` and the per-block condition

        4 kappa_i^2 sum_{rows of i} sup (P_i Dg_i)^2 <= r_i^2,
        kappa_i^2 = lambda_max(P_i) sum_{blocks j read by Dg_i} 1/lambda_min(P_j)

    certifies the max-form set ``{max_i x_i^T P_i x_i <= c}``.
    """
    t0 = time.perf_counter()
    d = decomposition
    res = StageResult("compositional_local", None)
    variables = sys.variables
    margin = containment_margin(sys.domain)
    room = np.minimum(sys.domain.hi, -sys.domain.lo) - margin
    per_block = d.block_diagonal and len(d.blocks) > 1

    if per_block:
        res.certificate = "max-form"
        lam_min = np.empty(sys.dim)
        for b, blk in zip(d.blocks, d.subsystems):
            lam_min[b] = linalg.min_eigenvalue_sym(blk.P)
        checks = []
        for i, blk in enumerate(d.subsystems):
            rows = frobenius_entries_block(blk.P, sys.Dg, d.blocks[i])
            cols = set()
            for row in rows:
                for j, e in enumerate(row):
                    if not ex.is_zero(e):
                        cols.add(d.block_of[j])
            kappa2 = linalg.max_eigenvalue_sym(blk.P) * sum(
                1.0 / linalg.min_eigenvalue_sym(d.subsystems[j].P) for j in sorted(cols))
            r_i = linalg.min_eigenvalue_sym(blk.Q) - sys.eps
            checks.append(([e for row in rows for e in row], 4.0 * kappa2, r_i * r_i))
    else:
        if not sys.hurwitz:
            raise NotHurwitz(f"{sys.name}: linearization is not Hurwitz")
        lam_min = np.full(sys.dim, linalg.min_eigenvalue_sym(sys.P))
        entries = frobenius_entries(sys.P, sys.Dg)
        checks = [([e for row in entries for e in row], 4.0, sys.r ** 2)]

    c_hi = float(np.min(room ** 2 * lam_min)) * (1.0 - _SAFETY)
    res.details["containment_level"] = c_hi
    res.details["mode"] = "per-block" if per_block else "monolithic"

    def verify(c):
        half = np.sqrt(c / lam_min)
        if np.any(half > room):
            return False
        lo, hi = -half, half
        for exprs, scale, bound in checks:
            if scale * _sup_square_sum(exprs, lo, hi, variables) > bound:
                return False
        return True

    def traced(c):
        v = verify(c)
        res.record(c, v)
        return v

    if c_hi <= 0:
        raise NoLevel("domain leaves no room around the origin")
    res.level = bisect_level(traced, c_hi * 1e-6, c_hi, tol)
    res.wall_time = time.perf_counter() - t0
    return res


def frobenius_entries_block(P_i, Dg, rows: Sequence[int]) -> list:
    """Rows ``rows`` of ``P_i Dg[rows, :]`` as expressions."""
    n = len(Dg)
    out = []
    for a in range(len(rows)):
        row = []
        for j in range(n):
            terms = [ex.Const(float(P_i[a, b])) * Dg[rows[b]][j]
                     for b in range(len(rows))
                     if P_i[a, b] != 0.0 and not ex.is_zero(Dg[rows[b]][j])]
            row.append(ex.sum_exprs(terms))
        out.append(row)
    return out
