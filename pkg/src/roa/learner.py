"""Physics-informed training of a tanh network on Zubov's equation.

The network ``W_N(x)`` is trained so that

    grad W_N(x) . f(x) + Psi(x) (1 - W_N(x)) = 0,   Psi = alpha (1 + W_N) |x|^2

on collocation points, with ``W_N(0) = 0`` and, optionally, simulated values
of ``W`` as data.  Parameter gradients come from the tape in
:mod:`roa.autodiff`; the input gradient inside the residual is written as an
explicit layer-by-layer computation on that tape.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .system import DynamicalSystem

log = logging.getLogger(__name__)

MODES = ("Zubov", "Data", "Lyapunov")
FORMAT_TAG = "zubovnet v1"
#: decrease and positivity rates of the Lyapunov loss mode
LYAP_DECAY = 0.01
LYAP_POS = 0.001


class DivergedTraining(RuntimeError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


class MlpNet:
    """Fully connected network with tanh hidden layers and a linear output."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
                 alpha: Optional[float] = None):
        self.weights = [np.array(W, dtype=float, ndmin=2) for W in weights]
        self.biases = [np.array(b, dtype=float, ndmin=1) for b in biases]
        self.alpha = alpha
        for W, b in zip(self.weights, self.biases):
            if W.shape[0] != b.shape[0]:
                raise ValueError("bias length must match weight rows")
        for W0, W1 in zip(self.weights, self.weights[1:]):
            if W1.shape[1] != W0.shape[0]:
                raise ValueError("layer widths do not chain")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("the output layer must be scalar")

    @classmethod
    def init(cls, dims: Sequence[int], rng: np.random.Generator,
             alpha: Optional[float] = None) -> "MlpNet":
        """Glorot-uniform weights, zero biases."""
        Ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            Ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(Ws, bs, alpha)

    @property
    def dims(self) -> List[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    def params(self) -> List[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def set_params(self, flat: Sequence[np.ndarray]) -> None:
        flat = list(flat)
        self.weights = [np.array(a, float) for a in flat[0::2]]
        self.biases = [np.array(a, float) for a in flat[1::2]]

    def copy(self) -> "MlpNet":
        return MlpNet([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                      self.alpha)

    def hidden(self, X) -> List[np.ndarray]:
        h = np.atleast_2d(np.asarray(X, float))
        hs = []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ W.T + b)
            hs.append(h)
        return hs

    def forward(self, X) -> np.ndarray:
        """``W_N`` at each row of ``X``; a 1-D input gives a scalar."""
        X = np.asarray(X, float)
        hs = self.hidden(X)
        h = hs[-1] if hs else np.atleast_2d(X)
        out = (h @ self.weights[-1].T + self.biases[-1])[:, 0]
        return float(out[0]) if X.ndim == 1 else out

    __call__ = forward

    def input_gradient(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        hs = self.hidden(X)
        g = np.broadcast_to(self.weights[-1], (len(hs[0]) if hs else np.atleast_2d(X).shape[0],
                                               self.weights[-1].shape[1]))
        for W, h in zip(reversed(self.weights[:-1]), reversed(hs)):
            g = (g * (1.0 - h * h)) @ W
        return g[0] if X.ndim == 1 else g

    def save(self, path) -> None:
        lines = [FORMAT_TAG, " ".join(str(d) for d in self.dims),
                 f"alpha {_fmt(self.alpha if self.alpha is not None else float('nan'))}"]
        for W, b in zip(self.weights, self.biases):
            lines += [" ".join(_fmt(v) for v in row) for row in W]
            lines.append(" ".join(_fmt(v) for v in b))
        text = "\n".join(lines) + "\n"
        with open(path, "w") as fh:
            fh.write(text)

    @classmethod
    def load(cls, path) -> "MlpNet":
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines or lines[0] != FORMAT_TAG:
            raise ValueError(f"{path}: not a '{FORMAT_TAG}' file")
        dims = [int(t) for t in lines[1].split()]
        key, val = lines[2].split()
        if key != "alpha":
            raise ValueError(f"{path}: expected an alpha line")
        alpha = float(val)
        pos = 3
        Ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            W = np.array([[float(t) for t in lines[pos + i].split()] for i in range(fan_out)])
            pos += fan_out
            b = np.array([float(t) for t in lines[pos].split()])
            pos += 1
            if W.shape != (fan_out, fan_in) or b.shape != (fan_out,):
                raise ValueError(f"{path}: layer shape mismatch")
            Ws.append(W)
            bs.append(b)
        return cls(Ws, bs, None if math.isnan(alpha) else alpha)


# ---------------------------------------------------------------------------
# loss on the tape


@dataclass
class TrainConfig:
    lr: float = 1e-3
    layer: int = 2
    width: int = 30
    num_colloc_pts: int = 300_000
    max_epoch: int = 20
    batch_size: int = 32
    loss_mode: str = "Zubov"
    alpha: float = 0.1
    sandwich: Optional[Tuple[float, float]] = None
    seed: int = 0
    weights: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    data_batch_size: Optional[int] = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.loss_mode not in MODES:
            raise ValueError(f"loss_mode must be one of {MODES}")
        if self.sandwich is not None:
            c1, c2 = self.sandwich
            if not (0 <= c1 <= c2):
                raise ValueError("sandwich needs 0 <= c1 <= c2")
            self.sandwich = (float(c1), float(c2))
        self.weights = tuple(float(w) for w in self.weights)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sandwich"] = None if self.sandwich is None else list(self.sandwich)
        d["weights"] = list(self.weights)
        return d


def _tape_net(nodes, X, with_grad: bool):
    """Output (m, 1) and, if asked, input gradient (m, n) on the tape."""
    Ws, bs = nodes[0::2], nodes[1::2]
    h = ad.const(X)
    hs = []
    for W, b in zip(Ws[:-1], bs[:-1]):
        h = ad.tanh(ad.matmul(h, ad.transpose(W)) + b)
        hs.append(h)
    out = ad.matmul(h, ad.transpose(Ws[-1])) + bs[-1]
    if not with_grad:
        return out, None
    g = Ws[-1]
    for W, h in zip(reversed(Ws[:-1]), reversed(hs)):
        g = ad.matmul(g * (1.0 - ad.square(h)), W)
    return out, g


def zubov_residual(W, lie, r2, alpha: float):
    """Pointwise ``grad W . f + Psi (1 - W)`` with ``Psi = alpha (1 + W) |x|^2``.

    Works on arrays and on tape nodes alike.
    """
    return lie + alpha * (1.0 + W) * r2 * (1.0 - W)


@dataclass
class LossValue:
    residual: float
    boundary: float
    data: float
    total: float
    grads: List[np.ndarray] = field(default_factory=list, repr=False)


def loss(net: MlpNet, sys_or_rhs, colloc, data_x=None, data_w=None,
         cfg: Optional[TrainConfig] = None, need_grad: bool = True) -> LossValue:
    """Total loss and its parameter gradient for one pair of batches.

    ``sys_or_rhs`` is a system or a vectorized right-hand side; passing the
    precomputed ``f(colloc)`` as an array is also accepted.
    """
    cfg = cfg or TrainConfig()
    X = np.atleast_2d(np.asarray(colloc, float))
    n = X.shape[1]
    m = X.shape[0]
    mode = cfg.loss_mode
    use_data = mode in ("Zubov", "Data") and data_x is not None and len(data_x) > 0
    parts = [X]
    if use_data:
        parts.append(np.atleast_2d(np.asarray(data_x, float)))
    parts.append(np.zeros((1, n)))
    stacked = np.concatenate(parts)

    nodes = [ad.param(p) for p in net.params()]
    needs_pde = mode in ("Zubov", "Lyapunov")
    out, grad = _tape_net(nodes, stacked, needs_pde)
    W = ad.rows(out, slice(0, m))
    w_res, w_bnd, w_dat = cfg.weights
    total = ad.const(0.0)
    zero = ad.const(0.0)
    r2 = np.sum(X * X, axis=1, keepdims=True)

    residual = zero
    if needs_pde:
        if isinstance(sys_or_rhs, np.ndarray):
            F = sys_or_rhs
        elif isinstance(sys_or_rhs, DynamicalSystem):
            F = sys_or_rhs.rhs()(X)
        else:
            F = sys_or_rhs(X)
        lie = ad.sum_(ad.rows(grad, slice(0, m)) * F, axis=1, keepdims=True)
        if mode == "Zubov":
            residual = ad.mean(ad.square(zubov_residual(W, lie, r2, cfg.alpha)))
        else:
            residual = ad.mean(ad.square(ad.relu(lie + LYAP_DECAY * r2)))
            residual = residual + ad.mean(ad.square(ad.relu(LYAP_POS * r2 - W)))
        total = total + w_res * residual

    w0 = ad.rows(out, slice(stacked.shape[0] - 1, stacked.shape[0]))
    boundary = ad.sum_(ad.square(w0))
    if cfg.sandwich is not None:
        c1, c2 = cfg.sandwich
        lo_b = np.tanh(c1 * r2)
        hi_b = np.tanh(c2 * r2)
        boundary = boundary + ad.mean(ad.square(ad.relu(lo_b - W)))
        boundary = boundary + ad.mean(ad.square(ad.relu(W - hi_b)))
    total = total + w_bnd * boundary

    data = zero
    if use_data:
        k = len(data_x)
        Wd = ad.rows(out, slice(m, m + k))
        target = np.asarray(data_w, float).reshape(-1, 1)
        data = ad.mean(ad.square(Wd - target))
        total = total + w_dat * data

    grads = []
    if need_grad:
        ad.backward(total)
        grads = [nd.grad if nd.grad is not None else np.zeros_like(nd.value) for nd in nodes]
    return LossValue(float(residual.value), float(boundary.value), float(data.value),
                     float(total.value), grads)


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: List[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        """Update ``params`` in place."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(sys: DynamicalSystem, data=None, cfg: Optional[TrainConfig] = None,
          progress: Optional[Callable[[dict], None]] = None):
    """Train a fresh network; returns ``(net, log)`` with one log row per epoch."""
    cfg = cfg or TrainConfig()
    if cfg.loss_mode == "Data" and (data is None or len(data) == 0):
        raise ValueError("loss mode 'Data' needs a dataset")
    rng = np.random.default_rng(cfg.seed)
    dims = [sys.dim] + [cfg.width] * cfg.layer + [1]
    net = MlpNet.init(dims, rng, alpha=cfg.alpha)
    colloc = sys.domain.sample(cfg.num_colloc_pts, rng)
    F = sys.rhs()(colloc) if cfg.loss_mode != "Data" else None
    dx = dw = None
    if data is not None and len(data) > 0 and cfg.loss_mode != "Lyapunov":
        dx, dw = np.asarray(data.points, float), np.asarray(data.labels, float)
    dbs = cfg.data_batch_size or cfg.batch_size
    params = net.params()
    opt = Adam(params, cfg.lr)
    history = []
    dperm = rng.permutation(len(dw)) if dw is not None else None
    dpos = 0
    for epoch in range(1, cfg.max_epoch + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(cfg.num_colloc_pts)
        sums = np.zeros(4)
        nb = 0
        for start in range(0, cfg.num_colloc_pts, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            bx = bw = None
            if dw is not None:
                if dpos + dbs > len(dperm):
                    dperm = rng.permutation(len(dw))
                    dpos = 0
                didx = dperm[dpos:dpos + dbs]
                dpos += dbs
                bx, bw = dx[didx], dw[didx]
            lv = loss(net, F[idx] if F is not None else None, colloc[idx], bx, bw, cfg)
            if not math.isfinite(lv.total) or not all(np.all(np.isfinite(g)) for g in lv.grads):
                raise DivergedTraining(f"non-finite loss in epoch {epoch}")
            opt.step(params, lv.grads)
            sums += (lv.residual, lv.boundary, lv.data, lv.total)
            nb += 1
        row = dict(zip(("residual", "boundary", "data", "total"), sums / max(nb, 1)))
        row["epoch"] = epoch
        row["seconds"] = time.perf_counter() - t0
        history.append(row)
        log.info("epoch %d total %.3e", epoch, row["total"])
        if progress is not None:
            progress(row)
    return net, history


def save_log(history: Sequence[dict], path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,residual,boundary,data,total\n")
        for r in history:
            fh.write(f"{r['epoch']},{_fmt(r['residual'])},{_fmt(r['boundary'])},"
                     f"{_fmt(r['data'])},{_fmt(r['total'])}\n")
