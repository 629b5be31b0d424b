import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pilotwave import ensemble as ens
from pilotwave.detection import (
    CoincidenceResult,
    DetectorWindow,
    bm_coincidence_fraction,
    coincidence_indicators,
    compare,
    ghose_p_star,
    ks_critical,
    marginal_cdf,
    marginal_density,
    marginal_ks_statistic,
    mean_estimate,
    ordered_window_probability,
    sqm_window_probability,
    verdict_record,
)
from pilotwave.quadrature import gauss_legendre_panels
from pilotwave.wavepacket import PhysicalParams, joint_density

P = PhysicalParams()
FULL = DetectorWindow(-200.0, 400.0)


def brute_rect(wa, wb, t, p):
    xa, wa_ = gauss_legendre_panels(wa.lo, wa.hi, 200, 8)
    xb, wb_ = gauss_legendre_panels(wb.lo, wb.hi, 200, 8)
    return float(np.sum(joint_density(xa[:, None], xb[None, :], t, p) * wa_[:, None] * wb_[None, :]))


def brute_unordered(w1, w2, t, p):
    both = brute_rect(w1, w2, t, p) + brute_rect(w2, w1, t, p)
    common = w1.intersect(w2)
    return both - (brute_rect(common, common, t, p) if common else 0.0)


def test_window_basics():
    w = DetectorWindow(1.0, 2.0)
    assert list(w.contains([0.99, 1.0, 2.5, 3.0])) == [False, True, True, False]
    assert w.mirrored() == DetectorWindow(-3.0, 2.0)
    assert w.intersect(DetectorWindow(2.0, 5.0)) == DetectorWindow(2.0, 1.0)
    assert w.intersect(DetectorWindow(3.0, 1.0)) is None
    with pytest.raises(ValueError):
        DetectorWindow(0.0, 0.0)


def test_full_line_probability_is_one():
    for t in (0.0, 5.0, P.t0):
        assert sqm_window_probability(FULL, FULL, t, P) == pytest.approx(1.0, abs=1e-8)
        assert ordered_window_probability(FULL, FULL, t, P) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("w1, w2", [
    (DetectorWindow(1.0, 3.0), DetectorWindow(-12.0, 6.0)),
    (DetectorWindow(0.0, 3.0), DetectorWindow(3.0, 5.0)),
    (DetectorWindow(-2.0, 4.0), DetectorWindow(-1.0, 8.0)),
    (DetectorWindow(0.5, 5.5), DetectorWindow(6.0, 10.0)),
])
@pytest.mark.parametrize("ky", [0.0, 0.4])
def test_window_probability_matches_brute_force(w1, w2, ky):
    p = PhysicalParams(ky=ky)
    for t in (0.0, p.t0):
        assert sqm_window_probability(w1, w2, t, p) == pytest.approx(brute_unordered(w1, w2, t, p), abs=1e-9)


window = st.builds(DetectorWindow, st.floats(-15, 15), st.floats(0.1, 10))


@settings(max_examples=40, deadline=None)
@given(window, window)
def test_mirror_and_exchange_symmetry(w1, w2):
    p = sqm_window_probability(w1, w2, P.t0, P)
    assert sqm_window_probability(w2, w1, P.t0, P) == pytest.approx(p, abs=1e-12)
    assert sqm_window_probability(w1.mirrored(), w2.mirrored(), P.t0, P) == pytest.approx(p, abs=1e-9)
    assert 0.0 <= p <= 1.0 + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10), st.floats(0.1, 5), st.floats(0.1, 5), window)
def test_additivity_and_monotonicity(lo, a, b, w2):
    left, right = DetectorWindow(lo, a), DetectorWindow(lo + a, b)
    joined = DetectorWindow(lo, a + b)
    whole = ordered_window_probability(joined, w2, P.t0, P)
    parts = ordered_window_probability(left, w2, P.t0, P) + ordered_window_probability(right, w2, P.t0, P)
    assert whole == pytest.approx(parts, abs=1e-9)
    assert whole >= ordered_window_probability(left, w2, P.t0, P) - 1e-12


def test_coincidences_full_line_and_same_side():
    pts = ens.PointSet(np.array([1.0, -2.0, 7.0]), np.array([-1.0, 2.0, -7.0]))
    assert bm_coincidence_fraction(pts, FULL, FULL).hits == 3
    above1, above2 = DetectorWindow(0.5, 5.5), DetectorWindow(6.0, 10.0)
    assert bm_coincidence_fraction(pts, above1, above2).hits == 0
    # unordered: either particle may be the one in w1
    ind = coincidence_indicators(pts, DetectorWindow(1.5, 1.0), DetectorWindow(-2.5, 1.0))
    assert list(ind) == [False, True, False]


def test_compare_edge_cases():
    r = CoincidenceResult(0, 1000, 0.0, 0.0)
    assert compare(0.0, r).z == 0.0 and compare(0.0, r).agrees
    v = compare(0.05, r)
    assert v.z == -math.inf and not v.agrees
    ok = CoincidenceResult(50, 1000, 0.05, math.sqrt(0.05 * 0.95 / 1000))
    assert compare(0.05, ok).z == 0.0
    assert compare(0.05 - 3.5 * ok.se, ok).agrees is False
    with pytest.raises(ValueError):
        compare(0.1, CoincidenceResult(1, 99, 1 / 99, 0.1))
    rec = verdict_record(FULL, FULL, v)
    assert rec["z"] == "-inf"
    json.dumps(rec)


def test_mean_estimate():
    m = mean_estimate([1.0, 2.0, 3.0, 4.0])
    assert m.value == 2.5 and m.n == 4
    assert m.se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


def test_ghose_p_star_is_density_average():
    y = np.array([4.0, 5.0, -6.0])
    pts = ens.PointSet(y, -y, P.t0)
    est = ghose_p_star(pts, P)
    assert est.value == pytest.approx(np.mean(joint_density(y, -y, P.t0, P)), rel=1e-14)
    # linear in the ensemble: mean of the union is the weighted mean of the parts
    a = ghose_p_star(ens.PointSet(y[:2], -y[:2], P.t0), P).value
    assert est.value == pytest.approx((2 * a + joint_density(-6.0, 6.0, P.t0, P)) / 3, rel=1e-14)
    far = ens.PointSet(np.array([60.0, -60.0]), np.array([-60.0, 60.0]), P.t0)
    assert ghose_p_star(far, P).value < 1e-40 * joint_density(P.centre(P.t0), -P.centre(P.t0), P.t0, P)
    with pytest.raises(ValueError):
        ghose_p_star(ens.PointSet(y, y, P.t0), P)


def test_marginal_density_matches_direct_integral():
    x, w = gauss_legendre_panels(-120, 120, 600, 8)
    for t in (0.0, P.t0):
        for y in (-6.0, 0.0, 2.5, 9.0):
            direct = float(np.sum(joint_density(y, x, t, P) * w))
            assert marginal_density(y, t, P) == pytest.approx(direct, rel=1e-9, abs=1e-15)


def test_marginal_cdf_limits_and_monotone():
    y = np.linspace(-60, 60, 2001)
    c = marginal_cdf(y, P.t0, P)
    assert c[0] < 1e-15 and c[-1] == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(c) >= 0)
    assert marginal_cdf(0.0, P.t0, P) == pytest.approx(0.5, abs=1e-9)


def test_ks_accepts_model_samples_and_rejects_shifted(rng):
    y = np.linspace(-60, 60, 400_001)
    c = marginal_cdf(y, P.t0, P)
    draws = np.interp(rng.random(20_000), c, y)
    pts = ens.PointSet(draws[:10_000], draws[10_000:], P.t0)
    ks = marginal_ks_statistic(pts, P)
    assert ks.n == 20_000 and ks.critical == ks_critical(20_000)
    assert not ks.rejects
    shifted = ens.PointSet(pts.y1 + 1.0, pts.y2 + 1.0, P.t0)
    assert marginal_ks_statistic(shifted, P).rejects
