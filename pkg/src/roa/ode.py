"""Vectorized Dormand-Prince 4(5) integration with per-trajectory steps.

Every row of the state batch carries its own step size and clock, so a
batch of trajectories advances exactly as the same trajectories integrated
one at a time would.  Rows leave the active set once an event classifies
them.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

#: smallest step the controller may take before giving up on a row
MIN_STEP = 1e-14

RUNNING = 0
STOPPED = 1
UNDERFLOW = 2


class StepUnderflow(RuntimeError):
    """The adaptive step collapsed below :data:`MIN_STEP`."""


def dopri45(rhs: Callable[[np.ndarray], np.ndarray], Y0, t_end: float,
            rtol: float = 1e-8, atol: float = 1e-10,
            stop: Optional[Callable[[np.ndarray], np.ndarray]] = None,
            h0: Optional[float] = None, max_steps: int = 1_000_000):
    """Integrate ``y' = rhs(y)`` for a batch of rows from ``t = 0``.

    ``stop(Y)`` returns a boolean per row; rows are frozen after the first
    accepted step at which it is true.  Returns ``(Y, t, flag)`` with
    ``flag`` one of RUNNING (reached ``t_end``), STOPPED or UNDERFLOW.
    """
    Y = np.array(Y0, dtype=float, ndmin=2)
    m, n = Y.shape
    t = np.zeros(m)
    flag = np.full(m, RUNNING)
    if stop is not None:
        flag[stop(Y)] = STOPPED
    h = np.full(m, h0 if h0 is not None else min(1e-2, t_end))
    active = np.flatnonzero(flag == RUNNING)
    K1 = np.zeros_like(Y)
    if active.size:
        K1[active] = rhs(Y[active])
    steps = 0
    while active.size and steps < max_steps:
        steps += 1
        y = Y[active]
        ha = np.minimum(h[active], t_end - t[active])[:, None]
        k = [K1[active]]
        for s in range(1, 7):
            ys = y + ha * sum(a * kk for a, kk in zip(_A[s], k) if a != 0.0)
            k.append(rhs(ys))
        y5 = ys  # stage 7 is evaluated at the fifth-order solution
        err = ha * sum(e * kk for e, kk in zip(_E, k) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        with np.errstate(invalid="ignore", over="ignore"):
            en = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        en = np.where(np.isfinite(en), en, np.inf)
        ok = en <= 1.0
        with np.errstate(divide="ignore"):
            fac = np.where(en > 0, 0.9 * en ** -0.2, 5.0)
        fac = np.clip(fac, 0.2, 5.0)
        fac = np.where(ok, fac, np.minimum(fac, 1.0))
        acc = active[ok]
        if acc.size:
            Y[acc] = y5[ok]
            K1[acc] = k[6][ok]
            t[acc] = t[acc] + ha[ok, 0]
        h[active] = ha[:, 0] * fac
        if stop is not None and acc.size:
            hit = stop(Y[acc])
            flag[acc[hit]] = STOPPED
        flag[active[h[active] < MIN_STEP]] = UNDERFLOW
        done = t[active] >= t_end * (1.0 - 1e-15)
        # finished rows keep flag RUNNING, meaning "reached t_end"
        keep = (flag[active] == RUNNING) & ~done
        active = active[keep]
    return Y, t, flag
