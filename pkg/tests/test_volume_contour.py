import csv

import numpy as np
import pytest

from roa.contour import export_contours, level_curves
from roa.interval import Box
from roa.linalg import DimensionError
from roa.system import build_system
from roa.volume import (
    DegenerateReference, estimate_volume, neural_region, quadratic_region, reference_samples,
)
from roa.learner import MlpNet

N = 20_000


@pytest.fixture(scope="module")
def cubic():
    # x' = -x + x^3: the DOA of 0 is (-1, 1), half of [-2, 2]
    return build_system("cubic", ["-x1 + x1^3"], [(-2, 2)])


def test_reference_doa_is_interval(cubic):
    X, doa = reference_samples(cubic, N, 0)
    inner = np.abs(X[:, 0]) < 0.99
    outer = np.abs(X[:, 0]) > 1.01
    assert np.all(doa[inner]) and not np.any(doa[outer])


def test_quadratic_region_fraction(cubic):
    # P = 1/2, so x P x <= 1/8 is |x| <= 1/2
    assert cubic.P[0, 0] == pytest.approx(0.5)
    member = quadratic_region(cubic.P, 0.125)
    v = estimate_volume(member, cubic, "doa", N, 0)
    assert abs(v.fraction - 0.5) <= 3 * v.half_width + 1e-3
    assert v.n_region_outside_reference == 0
    assert v.domain_fraction == pytest.approx(0.25, abs=0.02)
    d = estimate_volume(member, cubic, "domain", N, 0)
    assert d.fraction == pytest.approx(v.domain_fraction)
    assert d.n_reference == N


def test_volume_deterministic(cubic):
    member = quadratic_region(cubic.P, 0.3)
    assert estimate_volume(member, cubic, n_mc=N, seed=4) == \
        estimate_volume(member, cubic, n_mc=N, seed=4)


def test_region_covering_everything(cubic):
    v = estimate_volume(lambda X: np.ones(len(X), bool), cubic, "doa", N, 0)
    assert v.fraction > 1.0 and v.n_region_outside_reference > 0


def test_neural_region_matches_forward():
    net = MlpNet([np.array([[1.0, -1.0]])], [np.array([0.0])])
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert neural_region(net, 0.5)(X).tolist() == [True, False, True]


def test_small_n_mc_rejected(cubic):
    with pytest.raises(ValueError):
        estimate_volume(quadratic_region(cubic.P, 0.1), cubic, n_mc=9_999)


def test_degenerate_reference(monkeypatch):
    # samples near 0 always count as converged, so stub the simulator
    import roa.volume as vol

    monkeypatch.setattr(vol, "simulated_doa", lambda sys, X: np.zeros(len(X), bool))
    sysm = build_system("unstable", ["x1"], [(-1, 1)])
    with pytest.raises(DegenerateReference):
        estimate_volume(lambda X: np.zeros(len(X), bool), sysm, "doa", 10_000, 99)


# --- contours -------------------------------------------------------------------

def circle(X):
    return np.sum(X * X, axis=1)


def test_unit_circle_contour():
    dom = Box([(-2, 2), (-2, 2)])
    res = 400
    curves = level_curves(circle, dom, [1.0], resolution=res)[1.0]
    assert len(curves) == 1
    poly = curves[0]
    assert np.allclose(poly[0], poly[-1])
    cell = 4.0 / (res - 1)
    assert np.max(np.abs(np.hypot(poly[:, 0], poly[:, 1]) - 1.0)) < 2 * np.hypot(cell, cell)


def test_level_above_max_empty():
    dom = Box([(-1, 1), (-1, 1)])
    assert level_curves(circle, dom, [5.0], resolution=50) == {5.0: []}


def test_contours_not_planar():
    with pytest.raises(DimensionError):
        level_curves(circle, Box([(-1, 1)] * 3), [1.0])


def test_export_files(tmp_path):
    dom = Box([(-2, 2), (-2, 2)])
    c, s = tmp_path / "c.csv", tmp_path / "c.svg"
    curves = export_contours({"V_P": (circle, [0.5, 1.0])}, dom, c, s, resolution=100)
    rows = list(csv.DictReader(open(c)))
    assert {r["level"] for r in rows} == {"0.5", "1.0"}
    n = sum(len(p) for polys in curves["V_P"].values() for p in polys)
    assert len(rows) == n
    svg = s.read_text()
    assert svg.startswith("<svg") and svg.count("<path") == 2 and "<rect" in svg
