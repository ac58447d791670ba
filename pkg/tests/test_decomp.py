import numpy as np
import pytest

from roa import expr as ex
from roa.benchmarks import BLOCKS_5x2, BLOCKS_10x1, ten_dim
from roa.decomp import compositional_quadratic_verifier, decompose
from roa.local import compositional_local_stability_verifier, local_stability_verifier
from roa.system import NotHurwitz, build_system


@pytest.fixture(scope="module")
def sys4():
    return ten_dim(4.0)


def test_decompose_10x1(sys4):
    d = decompose(sys4, BLOCKS_10x1)
    assert len(d.subsystems) == 10
    assert d.block_diagonal is False  # A couples x1 and x2
    for s in d.subsystems:
        assert np.allclose(s.A, [[-1.0]]) and np.allclose(s.P, [[0.5]])
    assert d.block_spec == BLOCKS_10x1


def test_decompose_5x2(sys4):
    d = decompose(sys4, BLOCKS_5x2)
    assert d.block_diagonal
    for s in d.subsystems:
        assert np.allclose(s.P, 0.5 * np.eye(2))


def test_interconnection_reconstructs_f(sys4):
    d = decompose(sys4, BLOCKS_10x1)
    X = sys4.domain.sample(500, np.random.default_rng(0))
    F = sys4.rhs()(X)
    for s in d.subsystems:
        k = s.indices[0]
        gi = ex.lambdify(s.g[0], sys4.variables)(X)
        assert np.allclose(F[:, k], s.A[0, 0] * X[:, k] + gi, atol=1e-12)


def test_bad_partition(sys4):
    with pytest.raises(ValueError):
        decompose(sys4, [[1, 2], [2, 3]])


def test_block_not_hurwitz():
    # A is Hurwitz (trace -3, det 2) but its first diagonal block is +1
    s = build_system("mixed", ["x1 - 2*x2", "3*x1 - 4*x2"], [(-1, 1), (-1, 1)])
    assert s.hurwitz
    with pytest.raises(NotHurwitz):
        decompose(s, [[1], [2]])


def test_compositional_local_10x1(sys4):
    r = compositional_local_stability_verifier(sys4, decompose(sys4, BLOCKS_10x1))
    assert r.level == pytest.approx(3.121, abs=0.01)


def test_compositional_not_above_monolithic():
    s = ten_dim(1.0)
    mono = local_stability_verifier(s).level
    comp = compositional_local_stability_verifier(s, decompose(s, BLOCKS_10x1)).level
    assert comp <= mono + 1e-9


def test_max_form_10x1(sys4):
    r = compositional_quadratic_verifier(decompose(sys4, BLOCKS_10x1))
    assert r.level == pytest.approx(8.0, abs=1e-3)
    assert r.certificate == "max-form"


def test_max_form_region_invariant_by_sampling(sys4):
    # on the boundary faces of the max-form set each active block decreases
    d = decompose(sys4, BLOCKS_10x1)
    c = 7.9
    rng = np.random.default_rng(1)
    half = np.sqrt(c / 0.5)
    X = rng.uniform(-half, half, size=(20_000, 10))
    i = rng.integers(0, 10, size=len(X))
    X[np.arange(len(X)), i] = np.where(rng.uniform(size=len(X)) < 0.5, -half, half)
    F = sys4.rhs()(X)
    # V_i = 0.5 x_i^2 so V_i' = x_i f_i
    rate = X[np.arange(len(X)), i] * F[np.arange(len(X)), i]
    assert np.all(rate < 0)
