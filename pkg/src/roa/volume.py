"""Monte Carlo volume of a certified region relative to the simulated DOA."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from .learner import MlpNet
from .system import DynamicalSystem
from .zubovdata import simulated_doa

DEFAULT_MC = 100_000
Z95 = 1.959963984540054


class DegenerateReference(RuntimeError):
    """No sample landed in the reference set."""


@dataclass
class VolumeEstimate:
    fraction: float
    half_width: float
    reference: str
    n_mc: int
    n_reference: int
    n_region: int
    n_region_outside_reference: int
    domain_fraction: float

    def to_dict(self) -> dict:
        return asdict(self)


_DOA_CACHE: Dict[Tuple, Tuple[np.ndarray, np.ndarray]] = {}


def _key(sys: DynamicalSystem, n_mc: int, seed: int) -> tuple:
    f = tuple(str(fi) for fi in sys.f)
    return (f, tuple(map(tuple, sys.domain.to_list())), int(n_mc), int(seed))


def reference_samples(sys: DynamicalSystem, n_mc: int = DEFAULT_MC, seed: int = 0):
    """Uniform samples of the domain and their simulated DOA membership (cached)."""
    key = _key(sys, n_mc, seed)
    if key not in _DOA_CACHE:
        X = sys.domain.sample(int(n_mc), np.random.default_rng(seed))
        _DOA_CACHE[key] = (X, simulated_doa(sys, X))
    return _DOA_CACHE[key]


def estimate_volume(member: Callable[[np.ndarray], np.ndarray], sys: DynamicalSystem,
                    reference: str = "doa", n_mc: int = DEFAULT_MC, seed: int = 0) -> VolumeEstimate:
    """Fraction of the reference set covered by ``{x : member(x)}``.

    ``reference`` is ``"doa"`` (simulated domain of attraction) or
    ``"domain"`` (the whole box).  The half width is the 95% normal
    approximation for a binomial proportion over the reference samples.
    """
    if n_mc < 10_000:
        raise ValueError("n_mc must be at least 1e4")
    if reference not in ("doa", "domain"):
        raise ValueError("reference must be 'doa' or 'domain'")
    X, doa = reference_samples(sys, n_mc, seed)
    inside = np.asarray(member(X), dtype=bool)
    ref = doa if reference == "doa" else np.ones(len(X), dtype=bool)
    n_ref = int(ref.sum())
    if n_ref == 0:
        raise DegenerateReference("no sample falls in the reference set")
    n_reg = int(inside.sum())
    p = n_reg / n_ref
    hw = Z95 * math.sqrt(max(p * (1.0 - p), 0.0) / n_ref)
    return VolumeEstimate(p, hw, reference, int(n_mc), n_ref, n_reg,
                          int(np.sum(inside & ~ref)), n_reg / len(X))


def quadratic_region(P, level: float) -> Callable[[np.ndarray], np.ndarray]:
    P = np.asarray(P, float)
    return lambda X: np.einsum("ij,jk,ik->i", X, P, X) <= level


def neural_region(net: MlpNet, level: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda X: net.forward(X) <= level
