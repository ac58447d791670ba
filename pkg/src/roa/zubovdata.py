"""Labelled samples of the Zubov value function by forward simulation.

Each initial state is integrated together with ``z' = |x|^2``.  A
trajectory that reaches a small ball around the origin has value ``z`` and
label ``tanh(alpha z)``; one that escapes gets label 1.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ode import STOPPED, UNDERFLOW, StepUnderflow, dopri45
from .system import DynamicalSystem

log = logging.getLogger(__name__)

CONVERGED = "converged"
DIVERGED = "diverged"
UNDETERMINED = "undetermined"

DEFAULT_ALPHA = 0.1
HORIZON = 40.0
RTOL = 1e-8
ATOL = 1e-10
CONV_RATIO = 1e-3
BLOW_RATIO = 10.0

_CODES = {0: CONVERGED, 1: DIVERGED, 2: UNDETERMINED, 3: "underflow"}


@dataclass
class Trajectory:
    x0: np.ndarray
    classification: str
    value_v: float
    label_w: float
    t_end: float = 0.0


def _limits(sys: DynamicalSystem):
    diam = sys.domain.diameter
    outer = sys.domain.scaled(2.0)
    return CONV_RATIO * diam, BLOW_RATIO * diam, outer.lo, outer.hi


def simulate(sys: DynamicalSystem, X0, horizon: float = HORIZON, rtol: float = RTOL,
             atol: float = ATOL, with_value: bool = True):
    """Classify a batch of initial states.

    Returns ``(code, value, t_end)`` where ``code`` is 0 converged,
    1 diverged, 2 undetermined, 3 step underflow.
    """
    X0 = np.array(X0, dtype=float, ndmin=2)
    n = sys.dim
    r_conv, r_blow, olo, ohi = _limits(sys)
    f = sys.rhs()

    if with_value:
        def rhs(Y):
            x = Y[:, :n]
            return np.column_stack([f(x), np.einsum("ij,ij->i", x, x)])

        Y0 = np.column_stack([X0, np.zeros(len(X0))])
    else:
        rhs = f
        Y0 = X0

    def radius(Y):
        return np.linalg.norm(Y[:, :n], axis=1)

    def stop(Y):
        x = Y[:, :n]
        r = radius(Y)
        with np.errstate(invalid="ignore"):
            out = np.any(x < olo, axis=1) | np.any(x > ohi, axis=1)
        return (r <= r_conv) | (r >= r_blow) | out | ~np.isfinite(r)

    Y, t, flag = dopri45(rhs, Y0, horizon, rtol=rtol, atol=atol, stop=stop)
    r = radius(Y)
    code = np.full(len(X0), 2)
    code[(flag == STOPPED) & (r <= r_conv)] = 0
    code[(flag == STOPPED) & ~(r <= r_conv)] = 1
    code[flag == UNDERFLOW] = 3
    value = Y[:, n] if with_value else np.full(len(X0), np.nan)
    return code, value, t


def integrate(sys: DynamicalSystem, x0, horizon: float = HORIZON,
              alpha: float = DEFAULT_ALPHA) -> Trajectory:
    x0 = np.asarray(x0, float)
    code, value, t = simulate(sys, x0[None, :], horizon)
    c = int(code[0])
    if c == 3:
        raise StepUnderflow(f"step size collapsed at t={t[0]:g} from x0={x0.tolist()}")
    v = float(value[0])
    return Trajectory(x0, _CODES[c], v, label(_CODES[c], v, alpha), float(t[0]))


def label(classification: str, value: float, alpha: float) -> float:
    if classification == CONVERGED:
        return math.tanh(alpha * value)
    if classification == DIVERGED:
        return 1.0
    return math.nan


def labels(code: np.ndarray, value: np.ndarray, alpha: float) -> np.ndarray:
    out = np.full(code.shape, np.nan)
    out[code == 0] = np.tanh(alpha * value[code == 0])
    out[code == 1] = 1.0
    return out


@dataclass
class Dataset:
    points: np.ndarray
    labels: np.ndarray
    alpha: float
    seed: Optional[int] = None
    discarded: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    def save(self, path) -> None:
        n = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(n)] + ["w"])
            for x, y in zip(self.points, self.labels):
                w.writerow([repr(float(v)) for v in x] + [repr(float(y))])

    @classmethod
    def load(cls, path, alpha: float = DEFAULT_ALPHA, seed: Optional[int] = None) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[-1] != "w":
            raise ValueError(f"{path}: expected a header ending in 'w'")
        arr = np.array(body, dtype=float).reshape(len(body), len(header))
        return cls(arr[:, :-1], arr[:, -1], alpha, seed)


def _chunk(args):
    sys, X = args
    return simulate(sys, X)


def generate_data(sys: DynamicalSystem, n_samples: int, alpha: float = DEFAULT_ALPHA,
                  seed: int = 0, jobs: int = 1) -> Dataset:
    """Sample ``n_samples`` states uniformly in the domain and label them.

    Chunks are cut by sample index, so ``jobs`` never changes the result.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    X = sys.domain.sample(n_samples, rng)
    if jobs > 1:
        parts = np.array_split(X, jobs)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            res = list(pool.map(_chunk, [(sys, p) for p in parts]))
        code = np.concatenate([r[0] for r in res])
        value = np.concatenate([r[1] for r in res])
    else:
        code, value, _ = simulate(sys, X)
    keep = code <= 1
    discarded = {"undetermined": int(np.sum(code == 2)), "underflow": int(np.sum(code == 3))}
    if discarded["underflow"]:
        log.warning("%d samples discarded after step underflow", discarded["underflow"])
    return Dataset(X[keep], labels(code[keep], value[keep], alpha), alpha, seed, discarded)


def simulated_doa(sys: DynamicalSystem, X, horizon: float = HORIZON) -> np.ndarray:
    """Boolean membership of each row of ``X`` in the simulated domain of attraction."""
    code, _, _ = simulate(sys, X, horizon, with_value=False)
    return code == 0
