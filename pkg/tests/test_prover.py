import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roa import expr as ex
from roa import prover as pv
from roa.interval import Box

X1 = ["x1"]
V2 = ["x1", "x2"]


def q1(goal, premises=(), domain=((-1.0, 1.0),), **kw):
    return pv.Query.build(domain, X1, goal, premises, **kw)


def test_verified_square():
    assert pv.check(q1("x1^2 - 2")).verified


def test_refuted_square():
    v = pv.check(q1("x1^2 - 0.5"))
    assert v.status == pv.REFUTED
    assert abs(v.witness[0]) > 0.7071
    assert v.goal_value > 0


def test_vacuous_premise():
    assert pv.check(q1("x1 + 100", premises=["x1 + 2"])).verified


def test_mean_value_examples():
    q = q1("x1^2 - x1 - 0.26", domain=((0.4, 0.6),))
    assert pv.check(q, mean_value="never").verified
    assert pv.check_with_mean_value(q).verified
    assert pv.check(q1("sin(x1) - x1", domain=((0.0, 1.0),))).verified


def test_budget():
    q = q1("x1^2 - 1", budget=50)  # holds with equality at the corners
    with pytest.raises(pv.ResourceExhausted):
        pv.check(q)


def test_delta_unknown_box_is_small():
    # tangent to zero at x1 = 0: only midpoints prove nothing
    q = q1("-(x1^2) + 1e-30", delta=1e-4, min_width=1e-3)
    v = pv.check(q)
    assert v.status in (pv.UNKNOWN, pv.REFUTED)
    if v.status == pv.UNKNOWN:
        assert np.max(v.box.widths) < 1e-3


def test_query_validation():
    with pytest.raises(ValueError):
        q1("x1", delta=0.0)
    with pytest.raises(ValueError):
        q1("x1", min_width=-1.0)


def test_bisect_level_containment():
    # sublevel {0.5 |x|^2 <= c} of [-1,1]^10 has level 0.5
    n = 10
    dom = Box.cube(1.0, n)

    def verify(c):
        r = np.sqrt(2 * c)
        return bool(r < 1.0)

    c = pv.bisect_level(verify, 1e-3, 8.0, 1e-5)
    assert c == pytest.approx(0.49999, abs=1e-5)
    assert c < 0.5
    assert dom.dim == n


def test_bisect_level_always_verified():
    c = pv.bisect_level(lambda c: True, 0.0, 8.0, 1e-5)
    assert 8.0 - 1e-5 <= c < 8.0
    assert f"{c:.5f}" == "7.99999"


def test_bisect_level_no_level():
    with pytest.raises(pv.NoLevel):
        pv.bisect_level(lambda c: False, 0.1, 1.0, 1e-3)


def test_bisect_counts_exhaustion_as_failure():
    def verify(c):
        if c > 0.5:
            raise pv.ResourceExhausted(10)
        return True

    assert pv.bisect_level(verify, 0.0, 1.0, 1e-4) <= 0.5


def test_merge_precedence():
    parts = [pv.Verdict(pv.VERIFIED, 3), pv.Verdict(pv.UNKNOWN, 2, box=Box([(0, 1e-9)])),
             pv.Verdict(pv.REFUTED, 1, witness=np.array([0.3]), goal_value=1.0)]
    m = pv.merge_verdicts(parts)
    assert m.status == pv.REFUTED and m.boxes_processed == 6
    assert pv.merge_verdicts(parts[:2]).status == pv.UNKNOWN
    assert pv.merge_verdicts(parts[:1]).verified


# a small corpus of 2-d queries with a sampling oracle
CORPUS = [
    ("x1^2 + x2^2 - 2.01", [], ((-1, 1), (-1, 1))),
    ("x1*x2 - 0.3", ["x1^2 + x2^2 - 0.5"], ((-1, 1), (-1, 1))),
    ("sin(x1)*cos(x2) - 0.9", [], ((-1, 1), (-1, 1))),
    ("x1^3 - x2 - 3", ["x2 + 0.5"], ((-1, 1), (-1, 1))),
    ("tanh(x1 + x2) - 0.99", [], ((-1, 1), (-1, 1))),
    ("x1^2 - x2^2", [], ((-1, 1), (-1, 1))),
    ("-2*x1*x2*(1 - x1^2) + 0.001", ["x1^2 + x2^2 - 1", "0.1 - x1^2 - x2^2"], ((-1, 1), (-1, 1))),
]


@pytest.mark.parametrize("goal,premises,domain", CORPUS)
def test_soundness_and_replay(goal, premises, domain):
    q = pv.Query.build(domain, V2, goal, premises)
    v = pv.check(q)
    g = ex.lambdify(ex.parse(goal, V2), V2)
    ps = [ex.lambdify(ex.parse(p, V2), V2) for p in premises]
    if v.verified:
        X = Box(domain).sample(100_000, np.random.default_rng(0))
        ok = np.ones(len(X), bool)
        for p in ps:
            ok &= p(X) <= q.delta
        assert np.all(g(X[ok]) <= 0)
    elif v.status == pv.REFUTED:
        w = v.witness[None, :]
        assert g(w)[0] > 0
        assert all(p(w)[0] <= q.delta for p in ps)


@pytest.mark.parametrize("goal,premises,domain", CORPUS)
def test_mean_value_agrees(goal, premises, domain):
    q = pv.Query.build(domain, V2, goal, premises)
    a = pv.check(q, mean_value="never").status
    b = pv.check(q, mean_value="always").status
    if pv.UNKNOWN not in (a, b):
        assert a == b


@pytest.mark.parametrize("goal,premises,domain", CORPUS[:4])
def test_determinism(goal, premises, domain):
    q = pv.Query.build(domain, V2, goal, premises)
    a, b = pv.check(q), pv.check(q)
    assert a.status == b.status and a.boxes_processed == b.boxes_processed


@given(st.sampled_from(CORPUS), st.floats(1e-6, 1e-2), st.floats(1.0, 100.0))
@settings(max_examples=25, deadline=None)
def test_delta_monotone(case, delta, factor):
    # a larger delta relaxes the premises, so it can only admit more violations
    goal, premises, domain = case
    small = pv.check(pv.Query.build(domain, V2, goal, premises, delta=delta))
    big = pv.check(pv.Query.build(domain, V2, goal, premises, delta=delta * factor))
    if big.verified:
        assert small.status != pv.REFUTED
    if not premises:
        assert small.status == big.status


@given(st.floats(-0.9, 0.9), st.floats(0.05, 1.0))
@settings(max_examples=40, deadline=None)
def test_square_threshold(center, thresh):
    # x^2 <= t on [c - 0.1, c + 0.1] iff the farther endpoint squared is <= t
    lo, hi = center - 0.1, center + 0.1
    far = max(lo * lo, hi * hi)
    v = pv.check(q1(f"x1^2 - {thresh!r}", domain=((lo, hi),)))
    if far < thresh - 1e-6:
        assert v.verified
    elif far > thresh + 1e-6:
        assert v.status == pv.REFUTED


def test_parallel_matches_serial():
    goal, premises, domain = CORPUS[1]
    q = pv.Query.build(domain, V2, goal, premises)
    assert pv.check(q, jobs=2).status == pv.check(q).status
