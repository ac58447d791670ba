"""Dynamical systems with a linearization and a quadratic Lyapunov certificate.

All internal math is centered at the origin: a system built around a
non-zero equilibrium ``x*`` is rewritten in the shifted coordinates
``x - x*`` and its domain is shifted accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from . import linalg
from .interval import Box

#: half width of the box standing in for R^n in global checks
WHOLE_SPACE = 1e6
#: r = lambda_min(Q) - eps with eps = EPS_RATIO * lambda_min(Q)
EPS_RATIO = 1e-3
EQ_TOL = 1e-9


class NotEquilibrium(ValueError):
    pass


class NotHurwitz(ValueError):
    def __init__(self, message: str, block=None):
        super().__init__(message)
        self.block = block


def default_variables(n: int):
    return tuple(f"x{i + 1}" for i in range(n))


def quadratic_form(P, variables: Sequence[str]) -> ex.Expr:
    """``x^T P x`` as an expression, with zero entries of ``P`` skipped."""
    P = np.asarray(P, float)
    xs = [ex.Var(v) for v in variables]
    terms = []
    n = len(xs)
    for i in range(n):
        if P[i, i] != 0.0:
            terms.append(ex.Const(float(P[i, i])) * xs[i] ** 2)
        for j in range(i + 1, n):
            pij = P[i, j] + P[j, i]
            if pij != 0.0:
                terms.append(ex.Const(float(pij)) * xs[i] * xs[j])
    return ex.sum_exprs(terms)


def linear_form(row, variables: Sequence[str]) -> ex.Expr:
    return ex.sum_exprs(
        ex.Const(float(a)) * ex.Var(v) for a, v in zip(row, variables) if a != 0.0
    )


def tidy(P, rel: float = 1e-13) -> np.ndarray:
    """Symmetrize and flush entries that are pure rounding noise.

    The certificate used downstream is exactly the tidied matrix, so this
    changes which function is verified, never the soundness of a verdict.
    """
    P = 0.5 * (P + P.T)
    scale = np.max(np.abs(P)) if P.size else 0.0
    return np.where(np.abs(P) <= rel * scale, 0.0, P)


def lie_derivative(V: ex.Expr, sys: "DynamicalSystem") -> ex.Expr:
    """``sum_i dV/dx_i * f_i`` symbolically."""
    return ex.sum_exprs(
        ex.differentiate(V, v) * fi for v, fi in zip(sys.variables, sys.f)
    )


@dataclass
class DynamicalSystem:
    name: str
    variables: tuple
    f: tuple
    domain: Box
    equilibrium: np.ndarray
    Q: np.ndarray
    A: np.ndarray
    g: tuple
    Dg: tuple
    P: Optional[np.ndarray]
    eps: float
    whole_space: bool = False
    f_text: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def hurwitz(self) -> bool:
        return self.P is not None

    @property
    def r(self) -> float:
        """Decay margin ``lambda_min(Q) - eps`` of the local condition."""
        return linalg.min_eigenvalue_sym(self.Q) - self.eps

    def V_P(self) -> ex.Expr:
        if "V_P" not in self._cache:
            if self.P is None:
                raise NotHurwitz(f"{self.name}: linearization is not Hurwitz")
            self._cache["V_P"] = quadratic_form(self.P, self.variables)
        return self._cache["V_P"]

    def V_P_dot(self) -> ex.Expr:
        if "V_P_dot" not in self._cache:
            self._cache["V_P_dot"] = lie_derivative(self.V_P(), self)
        return self._cache["V_P_dot"]

    def rhs(self):
        """Vectorized vector field ``X (m, n) -> F (m, n)``."""
        if "rhs" not in self._cache:
            fns = [ex.lambdify(fi, self.variables) for fi in self.f]

            def rhs(X):
                X = np.asarray(X, float)
                return np.stack([fn(X) for fn in fns], axis=-1)

            self._cache["rhs"] = rhs
        return self._cache["rhs"]

    def f_bounds(self, lo, hi):
        """Interval enclosure of each component of ``f`` over boxes."""
        return [ex.interval_bounds(fi, lo, hi, self.variables) for fi in self.f]

    def __getstate__(self):
        # the cache holds closures; workers rebuild it on demand
        state = dict(self.__dict__)
        state["_cache"] = {}
        return state

    def to_original(self, X) -> np.ndarray:
        return np.asarray(X, float) + self.equilibrium

    def describe(self) -> dict:
        return {
            "name": self.name,
            "variables": list(self.variables),
            "f": [ex.to_text(fi) for fi in self.f],
            "domain": self.domain.to_list(),
            "equilibrium": self.equilibrium.tolist(),
            "Q": self.Q.tolist(),
            "A": self.A.tolist(),
            "P": None if self.P is None else self.P.tolist(),
            "eps": self.eps,
            "hurwitz": self.hurwitz,
        }


def build_system(name: str, f_texts: Sequence, domain, variables=None, equilibrium=None,
                 Q=None, eps: Optional[float] = None, whole_space: bool = False) -> DynamicalSystem:
    """Parse the vector field and derive ``A``, ``g``, ``Dg`` and ``P``.

    ``f_texts`` may mix strings and :class:`~roa.expr.Expr` values.  When
    the linearization is not Hurwitz ``P`` is ``None`` and the quadratic
    stages refuse to run.
    """
    n = len(f_texts)
    if n == 0:
        raise ValueError("empty vector field")
    variables = tuple(variables) if variables is not None else default_variables(n)
    if len(variables) != n:
        raise ValueError("need one variable per component of f")
    f = [ex.parse(t, variables) if isinstance(t, str) else t for t in f_texts]
    for fi in f:
        unknown = ex.free_vars(fi) - set(variables)
        if unknown:
            raise ex.UnknownSymbol(sorted(unknown)[0])
    x_star = np.zeros(n) if equilibrium is None else np.asarray(equilibrium, float)
    box = Box(domain)
    if box.dim != n:
        raise ValueError("domain dimension does not match f")
    if not box.contains_strictly(x_star):
        raise ValueError("the equilibrium must lie strictly inside the domain")
    at_eq = np.array([ex.evaluate(fi, x_star, variables) for fi in f])
    if np.linalg.norm(at_eq) > EQ_TOL:
        raise NotEquilibrium(f"|f(x*)| = {np.linalg.norm(at_eq):.3g} at x* = {x_star.tolist()}")
    if np.any(x_star != 0.0):
        shift = {v: ex.Var(v) + ex.Const(float(c)) for v, c in zip(variables, x_star) if c != 0.0}
        f = [ex.substitute(fi, shift) for fi in f]
        box = box.shifted(-x_star)

    origin = np.zeros(n)
    Df = [[ex.differentiate(fi, v) for v in variables] for fi in f]
    A = np.array([[ex.evaluate(d, origin, variables) for d in row] for row in Df])
    g = tuple(ex.collect(fi, dict(zip(variables, A[i]))) for i, fi in enumerate(f))
    Dg = tuple(
        tuple(ex.collect(ex.sub(Df[i][j], ex.Const(float(A[i, j])))) for j in range(n))
        for i in range(n)
    )
    Q = np.eye(n) if Q is None else np.asarray(Q, float)
    if Q.shape != (n, n):
        raise ValueError("Q has the wrong shape")
    if not linalg.is_positive_definite(Q):
        raise ValueError("Q must be symmetric positive definite")
    try:
        P = tidy(linalg.lyapunov_solve(A, Q))
    except linalg.SingularSystem:
        P = None
    if eps is None:
        eps = EPS_RATIO * linalg.min_eigenvalue_sym(Q)
    return DynamicalSystem(
        name=name, variables=variables, f=tuple(f), domain=box, equilibrium=x_star,
        Q=Q, A=A, g=g, Dg=Dg, P=P, eps=float(eps), whole_space=whole_space,
        f_text=tuple(ex.to_text(fi) for fi in f),
    )


@dataclass(frozen=True)
class LevelCertificate:
    """A verified sublevel set ``{V <= level}``.

    ``name`` is one of ``c1_P``, ``c2_P``, ``c1_V``, ``c2_V``.
    """

    kind: str
    name: str
    level: float
    verified_by: str
    function: str = ""

    def __post_init__(self):
        if self.kind not in ("quadratic", "neural"):
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        if not self.level > 0:
            raise ValueError("a certified level must be positive")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.name, "level": self.level,
                "verified_by": self.verified_by, "function": self.function}
