import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roa import expr as ex
from roa.interval import Box

V2 = ["x1", "x2"]

# smooth expressions used for derivative and enclosure checks
CORPUS = [
    "x1 - (1 - x1^2)*x2",
    "-x2",
    "sin(x1 + 0.5)",
    "x1*x2 + cos(x2)^2",
    "tanh(2*x1 - x2) * exp(0.3*x2)",
    "sqrt(1 + x1^2) - x2/3",
    "-0.5*x2 - (sin(x1 + 1.0471975511965976) - 0.8660254037844386)",
    "(x1 - x2)^3 / (2 + x1^2)",
    "x1^4 - 3*x1^2*x2 + x2^5",
]


def test_parse_negation():
    e = ex.parse("-x2", V2)
    assert e.op == "neg"
    assert ex.to_text(e) == "-x2"


def test_parse_van_der_pol_component():
    e = ex.parse("x1 - 1.0*(1 - x1^2)*x2", V2)
    for x in [(0.3, -1.2), (2.0, 1.5)]:
        assert ex.evaluate(e, x, V2) == pytest.approx(x[0] - (1 - x[0] ** 2) * x[1])


def test_unknown_symbol():
    with pytest.raises(ex.UnknownSymbol) as info:
        ex.parse("x1 + y", ["x1"])
    assert "y" in str(info.value)


@pytest.mark.parametrize("text", ["x1 +", "(x1", "x1 ^", "2 x1", "sin()"])
def test_syntax_errors(text):
    with pytest.raises(SyntaxError):
        ex.parse(text, V2)


def test_double_star_alias():
    assert ex.parse("x1 ** 2", V2) == ex.parse("x1^2", V2)


def test_precedence():
    # ^ binds tighter than unary minus, and is right associative
    assert ex.evaluate(ex.parse("-x1^2", V2), (3.0, 0.0), V2) == -9.0
    assert ex.evaluate(ex.parse("2^3^2", V2), (0.0, 0.0), V2) == 512.0
    assert ex.evaluate(ex.parse("1 - 2 - 3", V2), (0.0, 0.0), V2) == -4.0
    assert ex.evaluate(ex.parse("8 / 4 / 2", V2), (0.0, 0.0), V2) == 1.0


def test_derivative_examples():
    d = ex.differentiate(ex.parse("x1 - (1 - x1^2)*x2", V2), "x1")
    for x in np.random.default_rng(0).uniform(-2, 2, size=(20, 2)):
        assert ex.evaluate(d, x, V2) == pytest.approx(1 + 2 * x[0] * x[1])
    assert ex.is_zero(ex.differentiate(ex.parse("x2", V2), "x1"))
    d = ex.differentiate(ex.parse("sin(x1 + 0.5)", V2), "x1")
    assert ex.evaluate(d, (0.2, 0.0), V2) == pytest.approx(math.cos(0.7))


@pytest.mark.parametrize("text", CORPUS)
def test_derivatives_match_finite_differences(text):
    e = ex.parse(text, V2)
    rng = np.random.default_rng(1)
    h = 1e-6
    for v_idx, v in enumerate(V2):
        d = ex.differentiate(e, v)
        for x in rng.uniform(-1.5, 1.5, size=(100, 2)):
            step = np.zeros(2)
            step[v_idx] = h
            fd = (ex.evaluate(e, x + step, V2) - ex.evaluate(e, x - step, V2)) / (2 * h)
            exact = ex.evaluate(d, x, V2)
            assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


def test_differentiate_abs_is_domain_error():
    with pytest.raises(ex.DomainError):
        ex.differentiate(ex.parse("abs(x1)", V2), "x1")


def test_evaluate():
    assert ex.evaluate(ex.parse("x1^2 + x2^2", V2), (3, 4), V2) == 25.0
    assert ex.evaluate(ex.parse("tanh(0)", V2), (1, 1), V2) == 0.0
    with pytest.raises(ex.EvalError):
        ex.evaluate(ex.parse("1/x1", V2), (0.0, 1.0), V2)
    with pytest.raises(ex.EvalError):
        ex.evaluate(ex.parse("sqrt(x1)", V2), (-1.0, 1.0), V2)


def test_interval_examples():
    iv = ex.eval_interval(ex.parse("x1*x2", V2), Box([(1, 2), (-3, 4)]), V2)
    assert iv.lo == pytest.approx(-6) and iv.hi == pytest.approx(8)
    assert iv.lo <= -6 and iv.hi >= 8
    iv = ex.eval_interval(ex.parse("sin(x1)", ["x1"]), Box([(0, math.pi)]), ["x1"])
    assert iv.lo == pytest.approx(0, abs=1e-12) and iv.hi == pytest.approx(1)
    iv = ex.eval_interval(ex.parse("tanh(x1)", ["x1"]), Box([(-0.3, 0.9)]), ["x1"])
    assert iv.lo == pytest.approx(math.tanh(-0.3)) and iv.hi == pytest.approx(math.tanh(0.9))
    iv = ex.eval_interval(ex.parse("x1^2", ["x1"]), Box([(-1, 2)]), ["x1"])
    assert iv.lo == 0.0 and iv.hi == pytest.approx(4)


def test_interval_pole_is_error():
    with pytest.raises(ex.EvalError):
        ex.eval_interval(ex.parse("1/x1", ["x1"]), Box([(-1, 1)]), ["x1"])


@pytest.mark.parametrize("text", CORPUS)
def test_interval_enclosure_by_sampling(text):
    e = ex.parse(text, V2)
    fn = ex.lambdify(e, V2)
    rng = np.random.default_rng(2)
    c = rng.uniform(-1.5, 1.5, size=(200, 2))
    w = rng.uniform(0, 1.0, size=(200, 2))
    lo, hi = c - w, c + w
    bl, bh = ex.interval_bounds(e, lo, hi, V2)
    for i in range(len(lo)):
        X = rng.uniform(lo[i], hi[i], size=(1000, 2))
        y = fn(X)
        assert np.all(y >= bl[i]) and np.all(y <= bh[i])


@given(st.sampled_from(CORPUS),
       st.lists(st.floats(-2, 2), min_size=2, max_size=2),
       st.lists(st.floats(0, 1), min_size=2, max_size=2),
       st.lists(st.floats(0, 1), min_size=4, max_size=4))
@settings(max_examples=200, deadline=None)
def test_inclusion_monotone(text, centre, width, shrink):
    e = ex.parse(text, V2)
    c, w = np.array(centre), np.array(width)
    lo, hi = c - w, c + w
    # a sub-box built from the shrink fractions
    a = lo + (hi - lo) * np.minimum(shrink[:2], shrink[2:])
    b = lo + (hi - lo) * np.maximum(shrink[:2], shrink[2:])
    L, H = ex.interval_bounds(e, lo[None], hi[None], V2)
    l, h = ex.interval_bounds(e, a[None], b[None], V2)
    assert L[0] <= l[0] and h[0] <= H[0]


@given(st.sampled_from(CORPUS))
def test_print_parse_roundtrip(text):
    e = ex.parse(text, V2)
    again = ex.parse(ex.to_text(e), V2)
    assert again == e


def test_constant_folding():
    e = ex.parse("2*3 + x1*(4 - 4)", V2)
    assert ex.to_text(e) in ("6", "6.0")


def test_lambdify_matches_evaluate():
    e = ex.parse(CORPUS[4], V2)
    X = np.random.default_rng(3).uniform(-1, 1, size=(50, 2))
    vals = ex.lambdify(e, V2)(X)
    assert np.allclose(vals, [ex.evaluate(e, x, V2) for x in X], rtol=1e-14)


def test_substitute_and_free_vars():
    e = ex.parse("x1*x2", V2)
    s = ex.substitute(e, {"x1": ex.parse("x2 + 1", V2)})
    assert ex.free_vars(s) == {"x2"}
    assert ex.evaluate(s, (0.0, 2.0), V2) == 6.0


def test_abstract_bounded():
    es = [ex.parse("0.2*sin(x1)*cos(x2)", V2), ex.parse("cos(x1)", V2)]
    out = ex.abstract_bounded(es)
    assert out is not None
    exprs, fresh = out
    assert all(ex.free_vars(e) <= set(fresh) for e in exprs)
    assert ex.abstract_bounded([ex.parse("x1*sin(x2)", V2)]) is None
