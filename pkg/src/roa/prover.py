"""Interval branch-and-prune prover for universally quantified implications.

A :class:`Query` asks whether

    for all x in domain:  premises(x) <= 0  ==>  goal(x) <= 0

The search keeps a depth-first stack of boxes.  Each box is first narrowed
by constraint propagation on the premises, then pruned when some premise is
provably above ``delta`` or the goal is provably non-positive; otherwise its
midpoint is tested for a genuine counterexample and the box is bisected.
Boxes are processed in vectorized batches, which does not change the set of
boxes visited.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import expr as ex
from .interval import Box, iadd, imul

VERIFIED = "verified"
REFUTED = "refuted"
UNKNOWN = "delta-unknown"

DEFAULT_DELTA = 1e-4
DEFAULT_REL_MIN_WIDTH = 1e-6
DEFAULT_BUDGET = 5_000_000
DEFAULT_BATCH = 2048


class ResourceExhausted(RuntimeError):
    def __init__(self, budget: int):
        super().__init__(f"box budget of {budget} exhausted")
        self.budget = budget


class NoLevel(RuntimeError):
    """Even the smallest candidate level could not be verified."""

    def __init__(self, message: str, verdict: "Optional[Verdict]" = None):
        super().__init__(message)
        self.verdict = verdict


class Constraint:
    """Something with an interval enclosure over batches of boxes.

    Subclasses implement :meth:`bounds` and :meth:`values`; :meth:`contract`
    and :meth:`centered_bounds` are optional refinements.
    """

    #: boolean mask of the state dimensions the constraint depends on
    var_mask: np.ndarray

    def bounds(self, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def values(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contract(self, lo, hi, bound: float):
        return lo, hi, np.ones(lo.shape[0], dtype=bool)

    def centered_bounds(self, lo, hi):
        return None


class ExprConstraint(Constraint):
    """Constraint given by a symbolic expression over ``variables``."""

    def __init__(self, e: ex.Expr, variables: Sequence[str]):
        self.expr = e
        self.variables = tuple(variables)
        used = ex.free_vars(e)
        unknown = used - set(self.variables)
        if unknown:
            raise ex.UnknownSymbol(sorted(unknown)[0])
        self.var_mask = np.array([v in used for v in self.variables])
        self._fn = None
        self._grad = None

    def __getstate__(self):
        return {"expr": self.expr, "variables": self.variables, "var_mask": self.var_mask}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._fn = None
        self._grad = None

    def __repr__(self):
        return f"ExprConstraint({ex.to_text(self.expr)!r})"

    def bounds(self, lo, hi):
        return ex.interval_bounds(self.expr, lo, hi, self.variables)

    def values(self, X):
        if self._fn is None:
            self._fn = ex.lambdify(self.expr, self.variables)
        with np.errstate(all="ignore"):
            v = self._fn(np.asarray(X, float))
        return np.where(np.isfinite(v), v, np.nan)

    def contract(self, lo, hi, bound):
        return ex.contract(self.expr, bound, lo, hi, self.variables)

    def _gradient(self):
        if self._grad is None:
            try:
                self._grad = [
                    (j, ex.differentiate(self.expr, v))
                    for j, v in enumerate(self.variables) if self.var_mask[j]
                ]
            except ex.DomainError:
                self._grad = []
        return self._grad

    def centered_bounds(self, lo, hi):
        """Refined enclosure from the gradient enclosure over the box.

        Dimensions where the gradient has a fixed sign are collapsed to the
        endpoint that maximizes the goal (monotonicity test); on the reduced
        box the mean-value form  g(c) + sum_j dg/dx_j(B) (B_j - c_j)  is
        intersected with the natural extension.  Only the upper bound is
        tightened by the collapse, so the lower bound returned is -inf.
        """
        grad = self._gradient()
        if not grad:
            return None
        lo = lo.copy()
        hi = hi.copy()
        dbounds = []
        for j, dexpr in grad:
            dl, dh = ex.interval_bounds(dexpr, lo, hi, self.variables)
            inc = dl >= 0
            dec = dh <= 0
            lo[:, j] = np.where(inc, hi[:, j], lo[:, j])
            hi[:, j] = np.where(dec, lo[:, j], hi[:, j])
            dbounds.append((j, np.where(inc | dec, 0.0, dl), np.where(inc | dec, 0.0, dh)))
        c = 0.5 * (lo + hi)
        cl, ch = ex.interval_bounds(self.expr, c, c, self.variables)
        for j, dl, dh in dbounds:
            pl, ph = imul(dl, dh, lo[:, j] - c[:, j], hi[:, j] - c[:, j])
            cl, ch = iadd(cl, ch, pl, ph)
        nl, nh = ex.interval_bounds(self.expr, lo, hi, self.variables)
        return np.full_like(ch, -np.inf), np.minimum(ch, nh)


def as_constraint(c, variables: Sequence[str]) -> Constraint:
    if isinstance(c, Constraint):
        return c
    if isinstance(c, str):
        c = ex.parse(c, variables)
    if isinstance(c, ex.Expr):
        return ExprConstraint(c, variables)
    raise TypeError(f"cannot use {type(c).__name__} as a constraint")


@dataclass(frozen=True)
class Query:
    domain: Box
    premises: Tuple[Constraint, ...]
    goal: Constraint
    delta: float = DEFAULT_DELTA
    min_width: Optional[float] = None
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "domain", Box(self.domain))
        object.__setattr__(self, "premises", tuple(self.premises))
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.min_width is None:
            w = float(np.max(self.domain.widths)) or 1.0
            object.__setattr__(self, "min_width", DEFAULT_REL_MIN_WIDTH * w)
        if not self.min_width > 0:
            raise ValueError("min_width must be positive")

    @classmethod
    def build(cls, domain, variables, goal, premises=(), **kw) -> "Query":
        """Convenience constructor accepting text or :class:`Expr` constraints."""
        return cls(
            Box(domain),
            tuple(as_constraint(p, variables) for p in premises),
            as_constraint(goal, variables),
            **kw,
        )


@dataclass
class Verdict:
    status: str
    boxes_processed: int = 0
    wall_time: float = 0.0
    witness: Optional[np.ndarray] = None
    goal_value: Optional[float] = None
    box: Optional[Box] = None
    exhausted: bool = False

    @property
    def verified(self) -> bool:
        return self.status == VERIFIED

    def __bool__(self):
        return self.verified

    def to_dict(self) -> dict:
        d = {"status": self.status, "boxes_processed": self.boxes_processed,
             "wall_time": self.wall_time}
        if self.witness is not None:
            d["witness"] = [float(x) for x in self.witness]
            d["goal_value"] = self.goal_value
        if self.box is not None:
            d["box"] = self.box.to_list()
        if self.exhausted:
            d["exhausted"] = True
        return d


def _split_dims(lo, hi, q: Query, entailed: np.ndarray) -> np.ndarray:
    """Dimension to bisect per box: the widest dimension among those the goal
    or a not-yet-entailed premise depends on (lowest index on ties)."""
    rel = np.broadcast_to(q.goal.var_mask, lo.shape).copy()
    for k, p in enumerate(q.premises):
        rel |= (~entailed[:, k])[:, None] & p.var_mask[None, :]
    w = hi - lo
    wr = np.where(rel, w, -1.0)
    none = wr.max(axis=1) <= 0
    wr[none] = w[none]
    dims = np.argmax(wr, axis=1)
    return dims, wr[np.arange(len(dims)), dims]


def _search(q: Query, lo0: np.ndarray, hi0: np.ndarray, mean_value: str,
            batch: int) -> Verdict:
    n = lo0.shape[1]
    stack: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = [
        (lo0.copy(), hi0.copy(), np.zeros(lo0.shape[0], dtype=np.int64))
    ]
    processed = 0
    delta = q.delta
    npre = len(q.premises)
    while stack:
        lo, hi, fails = stack.pop()
        if lo.shape[0] > batch:
            stack.append((lo[:-batch], hi[:-batch], fails[:-batch]))
            lo, hi, fails = lo[-batch:], hi[-batch:], fails[-batch:]
        processed += lo.shape[0]
        if processed > q.budget:
            raise ResourceExhausted(q.budget)

        keep = np.ones(lo.shape[0], dtype=bool)
        for p in q.premises:
            lo, hi, feas = p.contract(lo, hi, delta)
            keep &= feas
        entailed = np.zeros((lo.shape[0], npre), dtype=bool)
        for k, p in enumerate(q.premises):
            pl, ph = p.bounds(lo, hi)
            keep &= ~(pl > delta)
            entailed[:, k] = ph <= 0
        if not keep.any():
            continue
        lo, hi, fails, entailed = lo[keep], hi[keep], fails[keep], entailed[keep]

        gl, gh = q.goal.bounds(lo, hi)
        use_mv = np.zeros(lo.shape[0], dtype=bool)
        if mean_value == "always":
            use_mv[:] = True
        elif mean_value == "auto":
            use_mv = fails >= 2
        if use_mv.any():
            cb = q.goal.centered_bounds(lo[use_mv], hi[use_mv])
            if cb is not None:
                gh = gh.copy()
                gh[use_mv] = np.minimum(gh[use_mv], cb[1])
        open_ = ~(gh <= 0)
        if not open_.any():
            continue
        lo, hi, fails, entailed = lo[open_], hi[open_], fails[open_] + 1, entailed[open_]

        # genuine counterexample at a midpoint?
        mid = 0.5 * (lo + hi)
        ok = np.ones(mid.shape[0], dtype=bool)
        for p in q.premises:
            with np.errstate(invalid="ignore"):
                ok &= p.values(mid) <= delta
        gv = q.goal.values(mid)
        with np.errstate(invalid="ignore"):
            bad = ok & (gv > 0)
        if bad.any():
            i = int(np.argmax(bad))
            return Verdict(REFUTED, processed, witness=mid[i].copy(), goal_value=float(gv[i]))

        dims, widths = _split_dims(lo, hi, q, entailed)
        small = widths < q.min_width
        if small.any():
            i = int(np.argmax(small))
            return Verdict(UNKNOWN, processed, box=Box.from_arrays(lo[i], hi[i]))

        rows = np.arange(lo.shape[0])
        cut = mid[rows, dims]
        lo_r = lo.copy()
        hi_l = hi.copy()
        hi_l[rows, dims] = cut
        lo_r[rows, dims] = cut
        # left halves end up on top of the stack
        stack.append((np.concatenate([lo_r, lo]), np.concatenate([hi, hi_l]),
                      np.concatenate([fails, fails])))
    return Verdict(VERIFIED, processed)


def _presplit(domain: Box, pieces: int):
    lo = domain.lo[None, :]
    hi = domain.hi[None, :]
    while lo.shape[0] < pieces:
        w = hi - lo
        d = np.argmax(w, axis=1)
        rows = np.arange(lo.shape[0])
        m = 0.5 * (lo[rows, d] + hi[rows, d])
        hl = hi.copy()
        hl[rows, d] = m
        lr = lo.copy()
        lr[rows, d] = m
        lo = np.concatenate([lo, lr])
        hi = np.concatenate([hl, hi])
    return lo, hi


def _search_one(args):
    q, lo, hi, mean_value, batch = args
    try:
        return _search(q, lo[None, :], hi[None, :], mean_value, batch)
    except ResourceExhausted:
        return Verdict(UNKNOWN, q.budget, exhausted=True)


def check(q: Query, mean_value: str = "auto", jobs: int = 1,
          batch: int = DEFAULT_BATCH) -> Verdict:
    """Decide ``q``.

    ``mean_value`` selects the goal enclosure: ``"never"`` (natural
    extension), ``"always"`` (also intersect with the centered form) or
    ``"auto"`` (centered form once a lineage failed to prune twice).
    With ``jobs > 1`` the domain is cut into a fixed number of pieces per
    worker and the verdicts are merged with precedence
    refuted > delta-unknown > verified.
    """
    t0 = time.perf_counter()
    if jobs <= 1:
        v = _search(q, q.domain.lo[None, :], q.domain.hi[None, :], mean_value, batch)
    else:
        lo, hi = _presplit(q.domain, 4 * jobs)
        work = [(q, lo[i], hi[i], mean_value, batch) for i in range(lo.shape[0])]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_search_one, work))
        v = merge_verdicts(parts)
        if v.exhausted:
            raise ResourceExhausted(q.budget)
    v.wall_time = time.perf_counter() - t0
    return v


def merge_verdicts(parts: Sequence[Verdict]) -> Verdict:
    """Combine verdicts of disjoint pieces, first offender in piece order."""
    total = sum(p.boxes_processed for p in parts)
    for rank in (REFUTED, UNKNOWN):
        for v in parts:
            if v.status == rank:
                return Verdict(v.status, total, witness=v.witness, goal_value=v.goal_value,
                               box=v.box, exhausted=v.exhausted)
    return Verdict(VERIFIED, total)


def check_with_mean_value(q: Query, jobs: int = 1) -> Verdict:
    return check(q, mean_value="always", jobs=jobs)


def bisect_level(verify: Callable[[float], object], lo: float, hi: float, tol: float,
                 trace: Optional[list] = None) -> float:
    """Largest level in ``[lo, hi]`` (to ``tol``) for which ``verify`` succeeds.

    ``verify(c)`` returns a :class:`Verdict` or a bool and is assumed
    monotone (success at ``c`` implies success below ``c``).  Anything but a
    verified outcome, including an exhausted budget, counts as failure.
    The upper end ``hi`` itself is never tested.
    """

    def attempt(c):
        try:
            out = verify(c)
        except ResourceExhausted as exc:
            out = Verdict(UNKNOWN, exc.budget, exhausted=True)
        if trace is not None:
            trace.append((c, out))
        return out

    first = attempt(lo)
    if not bool(first):
        raise NoLevel(f"level {lo} does not verify", first if isinstance(first, Verdict) else None)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bool(attempt(mid)):
            lo = mid
        else:
            hi = mid
    return lo
