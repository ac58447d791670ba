import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from roa import expr as ex
from roa.benchmarks import pendulum, power_system, van_der_pol
from roa.local import ellipsoid_containment_level, local_stability_verifier
from roa.prover import NoLevel
from roa.reach import quadratic_reach_verifier
from roa.system import NotHurwitz, build_system


def ellipsoid_samples(P, c, n, rng):
    """Uniform samples of {x^T P x <= c}."""
    d = P.shape[0]
    u = rng.normal(size=(n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    u *= rng.uniform(size=(n, 1)) ** (1.0 / d)
    L = np.linalg.cholesky(P)
    return np.sqrt(c) * np.linalg.solve(L.T, u.T).T


@pytest.fixture(scope="module")
def vdp_levels():
    s = van_der_pol(1.0)
    loc = local_stability_verifier(s)
    rea = quadratic_reach_verifier(s, loc.level)
    return s, loc, rea


def test_pendulum_global():
    s = pendulum()
    t0 = time.perf_counter()
    r = local_stability_verifier(s)
    assert time.perf_counter() - t0 < 1.0
    assert r.globally_stable


def test_linear_is_global():
    s = build_system("lin", ["-x1 + 0.5*x2", "-x2"], [(-1, 1), (-1, 1)], whole_space=True)
    assert local_stability_verifier(s).globally_stable


def test_not_hurwitz():
    with pytest.raises(NotHurwitz):
        local_stability_verifier(build_system("u", ["x1"], [(-1, 1)]))


def test_containment_level_scalar():
    # {0.5 x^2 <= c} inside [-1, 1] needs c <= 0.5
    c = ellipsoid_containment_level(np.array([[0.5]]), build_system("l", ["-x1"], [(-1, 1)]).domain, 0.0)
    assert c == pytest.approx(0.5, rel=1e-9) and c <= 0.5


def test_vdp_levels(vdp_levels):
    _, loc, rea = vdp_levels
    assert 0.25 < loc.level < 0.35
    assert loc.level <= rea.level
    assert 2.0 < rea.level < 2.5


def test_local_level_validity(vdp_levels):
    # sampling oracle: V_P decreases everywhere on the certified ellipsoid
    s, loc, _ = vdp_levels
    X = ellipsoid_samples(s.P, loc.level, 100_000, np.random.default_rng(0))
    vd = ex.lambdify(s.V_P_dot(), s.variables)(X)
    nz = np.linalg.norm(X, axis=1) > 0
    assert np.all(vd[nz] < 0)


def test_reach_simulation(vdp_levels):
    # 200 starts in {V <= c2} enter {V <= c1} without leaving the domain
    s, loc, rea = vdp_levels
    X0 = ellipsoid_samples(s.P, rea.level, 200, np.random.default_rng(1))
    rhs = s.rhs()
    P = s.P
    for x0 in X0:
        sol = solve_ivp(lambda t, x: rhs(x[None])[0], (0, 30), x0, rtol=1e-8, atol=1e-10,
                        dense_output=False, max_step=0.1)
        Y = sol.y.T
        assert all(s.domain.contains(y) for y in Y)
        V = np.einsum("ij,jk,ik->i", Y, P, Y)
        assert V.min() <= loc.level


def test_reach_scalar_containment_limited():
    s = build_system("lin", ["-x1"], [(-1, 1)])
    r = quadratic_reach_verifier(s, 0.1)
    assert r.level == pytest.approx(0.5, abs=1e-4) and r.level < 0.5


def test_reach_bad_c1():
    with pytest.raises(ValueError):
        quadratic_reach_verifier(van_der_pol(1.0), 0.0)


def test_reach_no_level_degenerates():
    s = van_der_pol(1.0)
    # starting far beyond the verifiable annulus keeps c2 = c1
    r = quadratic_reach_verifier(s, 2.4)
    assert r.level == pytest.approx(2.4)


def test_power_levels():
    s = power_system()
    loc = local_stability_verifier(s)
    rea = quadratic_reach_verifier(s, loc.level)
    assert 0 < loc.level <= rea.level
    X = ellipsoid_samples(s.P, rea.level, 20_000, np.random.default_rng(2))
    assert np.all(np.abs(X) < 1.5)
