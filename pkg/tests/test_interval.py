import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roa import interval as iv
from roa.interval import Box, Interval

finite = st.floats(-50, 50, allow_nan=False)


def pair(draw_a, draw_b):
    return min(draw_a, draw_b), max(draw_a, draw_b)


def test_interval_basics():
    a = Interval(-1.0, 3.0)
    assert a.width == 4.0 and a.mid == 1.0
    assert a.contains(0.0) and not a.contains(3.5)
    assert Interval(0, 1).subset_of(a)
    with pytest.raises(ValueError):
        Interval(2.0, 1.0)


def test_box():
    b = Box([(-2.5, 2.5), (-3.5, 3.5)])
    assert b.dim == 2
    assert np.allclose(b.widths, [5, 7])
    assert b.contains_strictly([0, 0]) and not b.contains_strictly([2.5, 0])
    s = b.sample(1000, np.random.default_rng(0))
    assert s.shape == (1000, 2) and all(b.contains(x) for x in s)
    assert Box.cube(1.0, 3).to_list() == [[-1.0, 1.0]] * 3


def test_widen_keeps_exact_zero():
    lo, hi = iv.widen(np.array([0.0, 1.0]), np.array([0.0, 2.0]))
    assert lo[0] == 0.0 and hi[0] == 0.0
    assert lo[1] < 1.0 and hi[1] > 2.0


OPS = {
    "add": (iv.iadd, lambda x, y: x + y),
    "sub": (iv.isub, lambda x, y: x - y),
    "mul": (iv.imul, lambda x, y: x * y),
}


@pytest.mark.parametrize("name", sorted(OPS))
@given(finite, finite, finite, finite, st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_binary_enclosure(name, a, b, c, d, s, t):
    op, fn = OPS[name]
    al, ah = pair(a, b)
    bl, bh = pair(c, d)
    # the convex combination can round outside the interval, so clamp it
    x = min(max(al + s * (ah - al), al), ah)
    y = min(max(bl + t * (bh - bl), bl), bh)
    lo, hi = op(np.array([al]), np.array([ah]), np.array([bl]), np.array([bh]))
    assert lo[0] <= fn(x, y) <= hi[0]


UNARY = {
    "sin": (iv.isin, np.sin, finite),
    "cos": (iv.icos, np.cos, finite),
    "tanh": (iv.itanh, np.tanh, finite),
    "exp": (iv.iexp, np.exp, st.floats(-30, 30)),
    "sqrt": (iv.isqrt, np.sqrt, st.floats(0, 100)),
    "abs": (iv.iabs, np.abs, finite),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@given(st.data())
@settings(max_examples=200, deadline=None)
def test_unary_enclosure(name, data):
    op, fn, dom = UNARY[name]
    al, ah = pair(data.draw(dom), data.draw(dom))
    lo, hi = op(np.array([al]), np.array([ah]))
    xs = np.clip(np.linspace(al, ah, 101), al, ah)
    y = fn(xs)
    assert np.all(y >= lo[0]) and np.all(y <= hi[0])


@given(finite, finite, st.integers(0, 7))
@settings(max_examples=200, deadline=None)
def test_pow_enclosure(a, b, k):
    al, ah = pair(a, b)
    lo, hi = iv.ipow(np.array([al]), np.array([ah]), k)
    y = np.clip(np.linspace(al, ah, 101), al, ah) ** k
    assert np.all(y >= lo[0]) and np.all(y <= hi[0])


def test_sin_peak_inside():
    lo, hi = iv.isin(np.array([1.0]), np.array([2.0]))
    assert hi[0] >= 1.0 and lo[0] <= math.sin(1.0)


def test_division_by_interval_containing_zero():
    lo, hi = iv.idiv(np.array([1.0]), np.array([2.0]), np.array([-1.0]), np.array([1.0]))
    assert not (np.isfinite(lo[0]) and np.isfinite(hi[0]))
