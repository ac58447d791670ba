"""Subsystem decompositions and max-form quadratic certificates.

A decomposition partitions the state into blocks.  Block ``i`` is read as a
linear subsystem ``x_i' = A_i x_i + g_i(x)`` whose interconnection term
``g_i`` collects everything else, including couplings to other blocks.
With ``V_i = x_i^T P_i x_i`` the max-form function ``V = max_i V_i`` has
sublevel sets that are products of block ellipsoids, so each face
``V_i = c`` can be checked on its own.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import expr as ex
from . import linalg
from .interval import Box
from .local import DEFAULT_TOL, _SAFETY, containment_margin
from .prover import DEFAULT_DELTA, Query, as_constraint, bisect_level, check
from .results import StageResult
from .system import DynamicalSystem, NotHurwitz, quadratic_form, tidy

#: face decrease margin relative to the level
FACE_EPS_RATIO = 1e-4
#: cap on the face band half width relative to the level
FACE_BAND_RATIO = 1e-2


@dataclass
class Subsystem:
    indices: tuple
    A: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    g: tuple

    def variables(self, all_vars) -> tuple:
        return tuple(all_vars[k] for k in self.indices)


@dataclass
class Decomposition:
    system: DynamicalSystem
    blocks: List[List[int]]
    subsystems: List[Subsystem]
    block_of: np.ndarray
    block_diagonal: bool

    @property
    def block_spec(self) -> list:
        """Blocks with 1-based indices, as written in configs."""
        return [[k + 1 for k in b] for b in self.blocks]

    def interconnections(self) -> list:
        return [[ex.to_text(gi) for gi in s.g] for s in self.subsystems]

    def block_function(self, i: int) -> ex.Expr:
        s = self.subsystems[i]
        return quadratic_form(s.P, s.variables(self.system.variables))

    def reconstruct(self, X) -> np.ndarray:
        """Evaluate ``A_i x_i + g_i(x)`` for every block, stacked as ``f``."""
        X = np.atleast_2d(np.asarray(X, float))
        out = np.empty_like(X)
        for s in self.subsystems:
            idx = list(s.indices)
            lin = X[:, idx] @ s.A.T
            for a, gi in enumerate(s.g):
                fn = ex.lambdify(gi, self.system.variables)
                out[:, idx[a]] = lin[:, a] + fn(X)
        return out

    def describe(self) -> dict:
        return {
            "blocks": self.block_spec,
            "block_diagonal": self.block_diagonal,
            "A": [s.A.tolist() for s in self.subsystems],
            "P": [s.P.tolist() for s in self.subsystems],
            "interconnections": self.interconnections(),
        }


def decompose(sys: DynamicalSystem, block_spec: Sequence[Sequence[int]]) -> Decomposition:
    """Split ``sys`` along ``block_spec`` (1-based state indices)."""
    n = sys.dim
    blocks = [[int(k) - 1 for k in b] for b in block_spec]
    flat = sorted(k for b in blocks for k in b)
    if flat != list(range(n)):
        raise ValueError(f"block spec {list(map(list, block_spec))} does not partition 1..{n}")
    block_of = np.empty(n, dtype=int)
    for i, b in enumerate(blocks):
        block_of[b] = i
    subsystems = []
    for i, b in enumerate(blocks):
        A_i = sys.A[np.ix_(b, b)]
        Q_i = sys.Q[np.ix_(b, b)]
        try:
            P_i = tidy(linalg.lyapunov_solve(A_i, Q_i))
        except linalg.SingularSystem as exc:
            raise NotHurwitz(f"block {[k + 1 for k in b]} is not Hurwitz", block=i) from exc
        bvars = [sys.variables[k] for k in b]
        g_i = tuple(ex.collect(sys.f[k], dict(zip(bvars, A_i[a]))) for a, k in enumerate(b))
        subsystems.append(Subsystem(tuple(b), A_i, P_i, Q_i, g_i))
    off = sys.A.copy()
    for b in blocks:
        off[np.ix_(b, b)] = 0.0
    return Decomposition(sys, blocks, subsystems, block_of, bool(np.all(off == 0.0)))


def _half_widths(d: Decomposition, c: float) -> np.ndarray:
    """Extent of each block ellipsoid ``{x_i^T P_i x_i <= c}`` per coordinate."""
    half = np.empty(d.system.dim)
    for s in d.subsystems:
        Pinv = np.linalg.inv(s.P)
        half[list(s.indices)] = np.sqrt(c * np.diag(Pinv))
    return half


def compositional_quadratic_verifier(d: Decomposition, domain: Optional[Box] = None,
                                     tol: float = DEFAULT_TOL, delta: float = DEFAULT_DELTA,
                                     jobs: int = 1, budget: Optional[int] = None) -> StageResult:
    """Largest ``c`` such that ``{max_i V_i <= c}`` is a verified invariant ROA.

    For each candidate ``c``: the product region must sit inside the domain,
    and on every face ``V_i = c`` (a band of width ``delta``) with the other
    blocks at most ``c``, ``V_i' + 1e-4 c <= 0`` under the full dynamics.
    """
    t0 = time.perf_counter()
    sys = d.system
    domain = sys.domain if domain is None else Box(domain)
    variables = sys.variables
    res = StageResult("compositional_quadratic", None, certificate="max-form")
    margin = containment_margin(domain)
    room = np.minimum(domain.hi, -domain.lo) - margin
    if np.any(room <= 0):
        raise ValueError("domain leaves no room around the origin")
    unit = _half_widths(d, 1.0)
    c_hi = float(np.min((room / unit) ** 2)) * (1.0 - _SAFETY)
    res.details["containment_level"] = c_hi

    V = [d.block_function(i) for i in range(len(d.blocks))]
    Vdot = [ex.sum_exprs(ex.differentiate(V[i], variables[k]) * sys.f[k]
                         for k in d.blocks[i]) for i in range(len(d.blocks))]
    # blocks whose variables each face condition reads
    reads = []
    for i, vd in enumerate(Vdot):
        used = ex.free_vars(vd)
        reads.append(sorted({int(d.block_of[variables.index(v)]) for v in used} - {i}))
    kw = {}
    if budget is not None:
        kw["budget"] = budget

    def verify(c):
        half = _half_widths(d, c)
        if np.any(half > room):
            return False
        box = Box(zip(-half, half))
        eps = FACE_EPS_RATIO * c
        # the band must stay thin next to the level itself
        kw["delta"] = min(delta, FACE_BAND_RATIO * c)
        total = None
        for i in range(len(d.blocks)):
            prem = [V[i] - ex.Const(c), ex.Const(c) - V[i]]
            prem += [V[j] - ex.Const(c) for j in reads[i]]
            q = Query(box, tuple(as_constraint(p, variables) for p in prem),
                      as_constraint(Vdot[i] + ex.Const(eps), variables), **kw)
            v = check(q, jobs=jobs)
            if total is None:
                total = v
            else:
                total.boxes_processed += v.boxes_processed
            if not v.verified:
                v.boxes_processed = total.boxes_processed
                return v
        return total

    def traced(c):
        v = verify(c)
        res.record(c, v)
        return v

    res.level = bisect_level(traced, c_hi * 1e-6, c_hi, tol)
    res.details["region_half_widths"] = _half_widths(d, res.level).tolist()
    res.wall_time = time.perf_counter() - t0
    return res
