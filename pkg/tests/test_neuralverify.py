import math

import numpy as np
import pytest

from roa import expr as ex
from roa.benchmarks import van_der_pol
from roa.learner import MlpNet
from roa.neuralverify import (
    DEFAULT_TOL, net_gradient_interval, net_interval, net_lie_interval, neural_verifier,
)
from roa.prover import NoLevel
from roa.system import build_system


def bump_net():
    """W(x) = tanh(x - 1) + tanh(-x - 1) - 2 tanh(-1): even, zero at 0,
    strictly increasing in |x|."""
    W0 = np.array([[1.0], [-1.0]])
    b0 = np.array([-1.0, -1.0])
    W1 = np.array([[1.0, 1.0]])
    b1 = np.array([-2.0 * math.tanh(-1.0)])
    return MlpNet([W0, W1], [b0, b1])


def bump(x):
    return math.tanh(x - 1) + math.tanh(-x - 1) - 2 * math.tanh(-1.0)


def random_boxes(rng, n_boxes, dim, spread=2.0):
    c = rng.uniform(-spread, spread, size=(n_boxes, dim))
    w = rng.uniform(0, 0.8, size=(n_boxes, dim))
    return c - w, c + w


def test_single_neuron_interval():
    net = MlpNet([np.array([[1.0]]), np.array([[1.0]])], [np.array([0.0]), np.array([0.0])])
    lo, hi = net_interval(net, np.array([[-1.0]]), np.array([[1.0]]))
    assert lo[0] == pytest.approx(math.tanh(-1)) and hi[0] == pytest.approx(math.tanh(1))
    assert lo[0] <= math.tanh(-1) and hi[0] >= math.tanh(1)


def test_zero_weight_interval():
    net = MlpNet([np.zeros((3, 2)), np.zeros((1, 3))], [np.zeros(3), np.array([0.7])])
    lo, hi = net_interval(net, np.array([[-1.0, -1.0]]), np.array([[1.0, 1.0]]))
    assert lo[0] == pytest.approx(0.7) and hi[0] == pytest.approx(0.7)


def test_net_interval_sampling():
    rng = np.random.default_rng(0)
    net = MlpNet.init([2, 8, 8, 1], rng)
    lo, hi = random_boxes(rng, 1000, 2)
    L, H = net_interval(net, lo, hi)
    for i in range(len(lo)):
        y = net.forward(rng.uniform(lo[i], hi[i], size=(1000, 2)))
        assert np.all(y >= L[i]) and np.all(y <= H[i])


def test_gradient_interval_sampling():
    rng = np.random.default_rng(1)
    net = MlpNet.init([2, 8, 8, 1], rng)
    lo, hi = random_boxes(rng, 1000, 2)
    GL, GH = net_gradient_interval(net, lo, hi)
    for i in range(len(lo)):
        G = net.input_gradient(rng.uniform(lo[i], hi[i], size=(1000, 2)))
        assert np.all(G >= GL[i]) and np.all(G <= GH[i])


def test_lie_interval_sampling():
    rng = np.random.default_rng(2)
    sysm = van_der_pol(1.0)
    net = MlpNet.init([2, 8, 8, 1], rng)
    lo, hi = random_boxes(rng, 1000, 2)
    L, H = net_lie_interval(net, sysm, lo, hi)
    f = sysm.rhs()
    for i in range(len(lo)):
        X = rng.uniform(lo[i], hi[i], size=(1000, 2))
        lie = np.sum(net.input_gradient(X) * f(X), axis=1)
        assert np.all(lie >= L[i]) and np.all(lie <= H[i])


def test_linear_net_lie_is_f_interval():
    sysm = van_der_pol(1.0)
    w = np.array([[0.3, -0.7]])
    net = MlpNet([w], [np.array([0.1])])
    lo, hi = np.array([[0.2, -0.5]]), np.array([[0.6, 0.4]])
    L, H = net_lie_interval(net, sysm, lo, hi)
    e = ex.parse("0.3*(-x2) - 0.7*(x1 - 1.0*(1 - x1^2)*x2)", sysm.variables)
    el, eh = ex.interval_bounds(e, lo, hi, sysm.variables)
    assert L[0] <= el[0] + 1e-9 and H[0] >= eh[0] - 1e-9
    X = np.random.default_rng(3).uniform(lo[0], hi[0], size=(2000, 2))
    vals = ex.lambdify(e, sysm.variables)(X)
    assert L[0] <= vals.min() and H[0] >= vals.max()


def test_lie_at_equilibrium_is_zero():
    sysm = build_system("lin", ["-x1"], [(-1, 1)])
    L, H = net_lie_interval(bump_net(), sysm, np.zeros((1, 1)), np.zeros((1, 1)))
    assert L[0] == 0.0 and H[0] == 0.0


def test_neural_verifier_bump():
    sysm = build_system("lin", ["-x1"], [(-1, 1)])
    net = bump_net()
    c_target = 0.3
    c1, c2, res = neural_verifier(sysm, net, c_target)
    # {W <= c1} inside {0.5 x^2 <= c_target}
    w_star = bump(math.sqrt(2 * c_target))
    assert w_star - 2 * DEFAULT_TOL <= c1 <= w_star
    # containment limited: W(1) is the boundary value
    assert bump(1.0) - 2 * DEFAULT_TOL <= c2 < bump(1.0)
    assert c1 <= c2
    assert res.level == c2 and res.certificate == "neural"


def test_neural_verifier_dimension_mismatch():
    with pytest.raises(ValueError):
        neural_verifier(van_der_pol(1.0), bump_net(), 0.3)


def test_neural_verifier_no_level():
    # W = -x^2-like: sublevel sets are never inside a small ellipse
    sysm = build_system("lin", ["-x1"], [(-1, 1)])
    net = bump_net()
    W1 = net.params()[2]
    W1 *= -1.0
    net.params()[3][...] *= -1.0
    with pytest.raises(NoLevel):
        neural_verifier(sysm, net, 0.01)
