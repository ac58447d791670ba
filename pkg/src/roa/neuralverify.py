"""Verified sublevel sets of a trained network.

Two level constants are searched for.  ``c1`` is the largest level with
``{W_N <= c1}`` inside a verified quadratic region ``{V_P <= c}``; ``c2`` is
the largest level such that ``W_N`` decreases on ``c1 <= W_N <= c2`` and
``{W_N <= c2}`` stays away from the boundary of the domain.  Then
``{W_N <= c2}`` is a region of attraction.

The network enters the prover as opaque constraints with interval
enclosures computed layer by layer, never as a symbolic expression.
"""

from __future__ import annotations

import math
import time
from typing import Optional

import numpy as np

from . import expr as ex
from .interval import Box, iadd, imul
from .learner import MlpNet
from .prover import (
    DEFAULT_DELTA, Constraint, NoLevel, Query, as_constraint, bisect_level, check,
)
from .results import StageResult
from .system import DynamicalSystem

DEFAULT_TOL = 1e-3
#: decrease margin on the band, relative to its height
BAND_EPS_RATIO = 1e-4
_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny


def _center_radius(lo, hi):
    c = 0.5 * (lo + hi)
    r = np.nextafter(np.maximum(hi - c, c - lo), np.inf)
    return c, r


def _affine(lo, hi, W, b=None, absW=None):
    """Enclosure of ``x W^T + b`` for ``x`` in rows of boxes, rounding included."""
    c, r = _center_radius(lo, hi)
    if absW is None:
        absW = np.abs(W)
    yc = c @ W.T
    yr = r @ absW.T
    k = W.shape[1]
    slack = (k + 2) * _EPS * (np.abs(c) @ absW.T + yr)
    if b is not None:
        yc = yc + b
        slack = slack + _EPS * np.abs(yc)
    rad = yr + slack + _TINY
    return yc - rad, yc + rad


def _tanh(lo, hi):
    tl = np.tanh(lo)
    th = np.tanh(hi)
    s = 2 * _EPS * np.maximum(np.abs(tl), np.abs(th)) + _TINY
    return np.maximum(tl - s, -1.0), np.minimum(th + s, 1.0)


def _layers(net: MlpNet, lo, hi):
    """Interval hidden activations per layer and the output enclosure."""
    lo = np.atleast_2d(np.asarray(lo, float))
    hi = np.atleast_2d(np.asarray(hi, float))
    acts = []
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        lo, hi = _tanh(*_affine(lo, hi, W, b))
        acts.append((lo, hi))
    ol, oh = _affine(lo, hi, net.weights[-1], net.biases[-1])
    return acts, ol[:, 0], oh[:, 0]


def net_interval(net: MlpNet, lo, hi):
    """Sound enclosure of ``W_N`` over each box (rows of ``lo``/``hi``)."""
    _, ol, oh = _layers(net, lo, hi)
    return ol, oh


def _gradient_interval(net: MlpNet, acts, m: int):
    """Interval enclosure of the input gradient from hidden activation enclosures."""
    gl = np.broadcast_to(net.weights[-1], (m, net.weights[-1].shape[1]))
    gh = gl
    for W, (al, ah) in zip(reversed(net.weights[:-1]), reversed(acts)):
        # 1 - h^2 over [al, ah]
        sq_hi = np.maximum(al * al, ah * ah)
        sq_lo = np.where((al <= 0) & (ah >= 0), 0.0, np.minimum(al * al, ah * ah))
        dl = np.maximum(1.0 - sq_hi - 2 * _EPS, 0.0)
        dh = np.minimum(1.0 - sq_lo + 2 * _EPS, 1.0)
        gl, gh = imul(gl, gh, dl, dh)
        gl, gh = _affine(gl, gh, W.T)
    return gl, gh


def net_gradient_interval(net: MlpNet, lo, hi):
    acts, _, _ = _layers(net, lo, hi)
    return _gradient_interval(net, acts, np.shape(lo)[0])


def net_lie_interval(net: MlpNet, sys: DynamicalSystem, lo, hi):
    """Sound enclosure of ``grad W_N . f`` over each box."""
    lo = np.atleast_2d(np.asarray(lo, float))
    hi = np.atleast_2d(np.asarray(hi, float))
    gl, gh = net_gradient_interval(net, lo, hi)
    fb = sys.f_bounds(lo, hi)
    sl = np.zeros(lo.shape[0])
    sh = np.zeros(lo.shape[0])
    for i, (fl, fh) in enumerate(fb):
        pl, ph = imul(gl[:, i], gh[:, i], np.broadcast_to(fl, sl.shape),
                      np.broadcast_to(fh, sl.shape))
        sl, sh = iadd(sl, sh, pl, ph)
    return sl, sh


class NetLevel(Constraint):
    """``sign * (W_N(x) - level) <= 0``."""

    def __init__(self, net: MlpNet, level: float, sign: float = 1.0):
        self.net = net
        self.level = float(level)
        self.sign = 1.0 if sign > 0 else -1.0
        self.var_mask = np.ones(net.n_inputs, dtype=bool)
        self._memo = None

    def _out(self, lo, hi):
        memo = self._memo
        if memo is not None and memo[0] is lo and memo[1] is hi:
            return memo[2]
        res = net_interval(self.net, lo, hi)
        self._memo = (lo, hi, res)
        return res

    def bounds(self, lo, hi):
        ol, oh = self._out(lo, hi)
        if self.sign > 0:
            return ol - self.level, oh - self.level
        return self.level - oh, self.level - ol

    def values(self, X):
        return self.sign * (self.net.forward(np.atleast_2d(X)) - self.level)


class NetDecrease(Constraint):
    """``grad W_N . f + eps <= 0``."""

    def __init__(self, net: MlpNet, sys: DynamicalSystem, eps: float):
        self.net = net
        self.sys = sys
        self.eps = float(eps)
        self.var_mask = np.ones(net.n_inputs, dtype=bool)

    def bounds(self, lo, hi):
        sl, sh = net_lie_interval(self.net, self.sys, lo, hi)
        return sl + self.eps, sh + self.eps

    def values(self, X):
        X = np.atleast_2d(X)
        g = self.net.input_gradient(X)
        return np.einsum("ij,ij->i", g, self.sys.rhs()(X)) + self.eps


def _faces(domain: Box):
    for k in range(domain.dim):
        for side in (domain.lo[k], domain.hi[k]):
            lo = domain.lo.copy()
            hi = domain.hi.copy()
            lo[k] = hi[k] = side
            yield k, side, Box.from_arrays(lo, hi)


def _grid(domain: Box, per_dim: int) -> np.ndarray:
    axes = [np.linspace(a, b, per_dim) for a, b in zip(domain.lo, domain.hi)]
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


def _boundary_samples(domain: Box, per_face: int) -> np.ndarray:
    pts = []
    for _, _, face in _faces(domain):
        pts.append(_grid(face, per_face) if domain.dim <= 3 else
                   face.sample(per_face ** 2, np.random.default_rng(0)))
    return np.concatenate(pts)


def neural_verifier(sys: DynamicalSystem, net: MlpNet, c_target: float,
                    tol: float = DEFAULT_TOL, delta: float = DEFAULT_DELTA,
                    min_width: Optional[float] = None, budget: Optional[int] = None,
                    jobs: int = 1):
    """Return ``(c1_V, c2_V, stage)`` for the network ``net``.

    ``c_target`` is a verified quadratic level; ``{W_N <= c1_V}`` is proved
    to lie inside ``{V_P <= c_target}``.
    """
    if net.n_inputs != sys.dim:
        raise ValueError("network input width does not match the system")
    t0 = time.perf_counter()
    res = StageResult("neural_verify", None, certificate="neural")
    kw = {"delta": delta, "min_width": min_width}
    if budget is not None:
        kw["budget"] = budget
    dom = sys.domain
    V = sys.V_P()
    grid = _grid(dom, 201) if sys.dim <= 2 else dom.sample(100_000, np.random.default_rng(0))
    Wg = net.forward(grid)
    w_min = float(min(Wg.min(), net.forward(np.zeros(sys.dim))))
    w_bdry = float(net.forward(_boundary_samples(dom, 201)).min())
    res.details["sampled_min"] = w_min
    res.details["sampled_boundary_min"] = w_bdry

    inside = as_constraint(V - ex.Const(float(c_target)), sys.variables)

    def verify_c1(c1):
        return check(Query(dom, (NetLevel(net, c1),), inside, **kw), jobs=jobs)

    trace1 = []

    def traced1(c):
        v = verify_c1(c)
        res.record(c, v)
        trace1.append(c)
        return v

    c1_lo = w_min
    c1_hi = float(Wg.max())
    c1 = bisect_level(traced1, c1_lo, c1_hi, tol)
    res.details["c1_V"] = c1

    def verify_c2(c2):
        # {W_N <= c2} must stay off the boundary of the domain
        for _, _, face in _faces(dom):
            # W_N > c2 on the face, with a sliver of room
            goal = NetLevel(net, c2 + 1e-9 * max(1.0, abs(c2)), sign=-1.0)
            v = check(Query(face, (), goal, **kw))
            if not v.verified:
                return v
        eps = BAND_EPS_RATIO * max(c2 - c1, tol)
        prem = (NetLevel(net, c1, sign=-1.0), NetLevel(net, c2))
        return check(Query(dom, prem, NetDecrease(net, sys, eps), **kw), jobs=jobs)

    def traced2(c):
        v = verify_c2(c)
        res.record(c, v)
        return v

    hi = w_bdry
    if hi <= c1:
        c2 = c1
        res.details["no_band"] = "the sampled boundary minimum is below c1_V"
    else:
        try:
            c2 = bisect_level(traced2, c1, hi, tol)
        except NoLevel as exc:
            c2 = c1
            res.details["no_level"] = str(exc)
    res.level = c2
    res.details["c2_V"] = c2
    res.wall_time = time.perf_counter() - t0
    return c1, c2, res
