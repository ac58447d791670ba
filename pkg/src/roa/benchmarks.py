"""The benchmark systems used in the demos and acceptance tests."""

from __future__ import annotations

import math

from .system import DynamicalSystem, build_system

PENDULUM_GAINS = (4.4142, 2.3163)
POWER_DELTA = math.pi / 3

TEN_DIM_F = (
    "-x1 + 0.5*x2 - 0.1*x9^2",
    "-0.5*x1 - x2",
    "-x3 + 0.5*x4 - 0.1*x1^2",
    "-0.5*x3 - x4",
    "-x5 + 0.5*x6 + 0.1*x7^2",
    "-0.5*x5 - x6",
    "-x7 + 0.5*x8",
    "-0.5*x7 - x8",
    "-x9 + 0.5*x10",
    "-0.5*x9 - x10 + 0.1*x2^2",
)


def van_der_pol_f(mu: float):
    """Reversed Van der Pol oscillator: the origin is stable and its domain
    of attraction is bounded by the unstable limit cycle."""
    return ["-x2", f"x1 - {mu!r}*(1 - x1^2)*x2"]


VDP_DOMAINS = {
    1.0: [(-2.5, 2.5), (-3.5, 3.5)],
    3.0: [(-3.0, 3.0), (-6.0, 6.0)],
}


def van_der_pol(mu: float = 1.0, domain=None) -> DynamicalSystem:
    if domain is None:
        domain = VDP_DOMAINS.get(float(mu), [(-2.5, 2.5), (-3.5, 3.5)])
    return build_system(f"van_der_pol_mu{mu:g}", van_der_pol_f(mu), domain)


def power_f(delta: float = POWER_DELTA):
    return ["x2", f"-0.5*x2 - (sin(x1 + {delta!r}) - {math.sin(delta)!r})"]


POWER_DOMAIN = [(-2.0, 3.0), (-3.0, 1.5)]


def power_system(domain=None) -> DynamicalSystem:
    """Two-machine power system; stable at the origin, saddle at (pi/3, 0)."""
    return build_system("two_machine_power", power_f(), domain or POWER_DOMAIN)


def pendulum_f(gains=PENDULUM_GAINS):
    k1, k2 = gains
    return ["x2", f"sin(x1) - x2 - ({k1!r}*x1 + {k2!r}*x2)"]


def pendulum(domain=None) -> DynamicalSystem:
    return build_system("inverted_pendulum", pendulum_f(),
                        domain or [(-4.0, 4.0), (-4.0, 4.0)], whole_space=True)


def ten_dim(half_width: float = 1.0) -> DynamicalSystem:
    return build_system(f"ten_dim_{half_width:g}", list(TEN_DIM_F),
                        [(-half_width, half_width)] * 10)


BLOCKS_5x2 = [[1, 2], [3, 4], [5, 6], [7, 8], [9, 10]]
BLOCKS_10x1 = [[k] for k in range(1, 11)]
