import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roa import linalg

VDP_A = [[0.0, -1.0], [1.0, -1.0]]
VDP_P = [[1.5, -0.5], [-0.5, 1.0]]


def test_lyapunov_vdp():
    P = linalg.lyapunov_solve(VDP_A, np.eye(2))
    assert np.allclose(P, VDP_P, atol=1e-12)


@pytest.mark.parametrize("n", [1, 3, 7])
def test_lyapunov_minus_identity(n):
    assert np.allclose(linalg.lyapunov_solve(-np.eye(n), np.eye(n)), 0.5 * np.eye(n), atol=1e-14)


def test_lyapunov_ten_dim_block():
    A = [[-1.0, 0.5], [-0.5, -1.0]]
    assert np.allclose(linalg.lyapunov_solve(A), 0.5 * np.eye(2), atol=1e-14)


def test_lyapunov_not_hurwitz():
    with pytest.raises(linalg.SingularSystem):
        linalg.lyapunov_solve(np.eye(2))
    with pytest.raises(linalg.SingularSystem):
        linalg.lyapunov_solve([[0.0, 1.0], [-1.0, 0.0]])


def test_lyapunov_shape_errors():
    with pytest.raises(linalg.DimensionError):
        linalg.lyapunov_solve(np.ones((2, 3)))
    with pytest.raises(linalg.DimensionError):
        linalg.lyapunov_solve(-np.eye(2), np.eye(3))


def test_hurwitz_examples():
    assert linalg.is_hurwitz(VDP_A)
    assert linalg.is_hurwitz([[0.0, 1.0], [-3.4142, -3.3163]])
    assert not linalg.is_hurwitz(np.eye(2))


def test_min_eigenvalue_examples():
    assert linalg.min_eigenvalue_sym(np.eye(4)) == pytest.approx(1.0, abs=1e-10)
    assert linalg.min_eigenvalue_sym(VDP_P) == pytest.approx((2.5 - math.sqrt(1.25)) / 2, abs=1e-10)
    assert linalg.min_eigenvalue_sym(np.diag([3.0, 0.5, 2.0])) == pytest.approx(0.5, abs=1e-10)


def test_cholesky_examples():
    assert np.allclose(linalg.cholesky(np.eye(3)), np.eye(3))
    assert np.allclose(linalg.cholesky([[4.0, 2.0], [2.0, 2.0]]), [[2.0, 0.0], [1.0, 1.0]])
    assert linalg.cholesky([[1.0, 2.0], [2.0, 1.0]]) is None


def test_block_diag():
    M = linalg.block_diag(np.eye(2), [[3.0]])
    assert M.shape == (3, 3) and M[2, 2] == 3.0 and M[0, 2] == 0.0


def _stable(n, draw):
    # shifted random matrices are Hurwitz by construction
    M = np.asarray(draw, float).reshape(n, n)
    shift = np.max(np.real(np.linalg.eigvals(M))) + 0.5
    return M - shift * np.eye(n)


small = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@given(st.integers(1, 5).flatmap(lambda n: st.tuples(st.just(n), st.lists(small, min_size=n * n, max_size=n * n))))
@settings(max_examples=150, deadline=None)
def test_lyapunov_residual_and_hurwitz(args):
    n, entries = args
    A = _stable(n, entries)
    assert linalg.is_hurwitz(A)
    P = linalg.lyapunov_solve(A)
    Q = np.eye(n)
    res = np.linalg.norm(P @ A + A.T @ P + Q)
    assert res < 1e-10 * np.linalg.norm(Q) * max(1.0, np.linalg.norm(P))
    assert np.allclose(P, P.T)
    assert linalg.cholesky(P) is not None


@given(arrays(float, (4, 4), elements=small))
@settings(max_examples=150, deadline=None)
def test_min_eigenvalue_bracket(M):
    S = (M + M.T) / 2
    lam = linalg.min_eigenvalue_sym(S)
    # numpy as the independent oracle
    assert lam == pytest.approx(np.linalg.eigvalsh(S)[0], abs=1e-9)
    tol = 1e-8
    assert linalg.cholesky(S - (lam - tol) * np.eye(4)) is not None
    assert linalg.cholesky(S - (lam + tol) * np.eye(4)) is None


@given(arrays(float, (3, 3), elements=small))
@settings(max_examples=100, deadline=None)
def test_cholesky_reconstructs(M):
    S = M @ M.T + 0.1 * np.eye(3)
    L = linalg.cholesky(S)
    assert L is not None
    assert np.allclose(L @ L.T, S, atol=1e-10)
    assert np.allclose(L, np.tril(L))
