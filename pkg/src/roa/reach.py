"""Enlarge a verified quadratic ROA by reachability on an annulus.

If every point with ``c1 <= V_P(x) <= c2`` has ``V_P'(x) < 0`` and the set
``{V_P <= c2}`` sits inside the domain, every trajectory starting in it
enters ``{V_P <= c1}``, so ``{V_P <= c2}`` is a region of attraction as well.
"""

from __future__ import annotations

import time
from typing import Optional

from . import expr as ex
from .local import DEFAULT_TOL, containment_margin, ellipsoid_containment_level
from .prover import DEFAULT_DELTA, NoLevel, Query, as_constraint, bisect_level, check
from .results import StageResult
from .system import DynamicalSystem, NotHurwitz

#: decrease margin on the annulus, relative to the outer level
REACH_EPS_RATIO = 1e-4


def quadratic_reach_verifier(sys: DynamicalSystem, c1: float, tol: float = DEFAULT_TOL,
                             delta: float = DEFAULT_DELTA, min_width: Optional[float] = None,
                             budget: Optional[int] = None, jobs: int = 1) -> StageResult:
    """Largest ``c2 >= c1`` for which the annulus decrease condition verifies.

    When not even a thin annulus verifies, ``c2 = c1`` is returned and the
    failure is noted in ``details``.
    """
    if not sys.hurwitz:
        raise NotHurwitz(f"{sys.name}: linearization is not Hurwitz")
    if not c1 > 0:
        raise ValueError("c1 must be positive")
    t0 = time.perf_counter()
    res = StageResult("reach", None)
    V = sys.V_P()
    Vdot = sys.V_P_dot()
    c_hi = ellipsoid_containment_level(sys.P, sys.domain, containment_margin(sys.domain))
    res.details["containment_level"] = c_hi
    kw = {"delta": delta, "min_width": min_width}
    if budget is not None:
        kw["budget"] = budget
    inner = as_constraint(ex.Const(c1) - V, sys.variables)

    def verify(c2):
        prems = (inner, as_constraint(V - ex.Const(c2), sys.variables))
        goal = as_constraint(Vdot + ex.Const(REACH_EPS_RATIO * c2), sys.variables)
        return check(Query(sys.domain, prems, goal, **kw), jobs=jobs)

    def traced(c):
        v = verify(c)
        res.record(c, v)
        return v

    if c_hi <= c1:
        res.level = c1
        res.details["skipped"] = "c1 already reaches the containment limit"
    else:
        try:
            res.level = bisect_level(traced, c1, c_hi, tol)
        except NoLevel as exc:
            res.level = c1
            res.details["no_level"] = str(exc)
    res.wall_time = time.perf_counter() - t0
    return res
