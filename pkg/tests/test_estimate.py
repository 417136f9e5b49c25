import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splinesketch.estimate import (
    EstimationError,
    argmax_component,
    circular_error,
    coarse_argmax,
    cross_correlation,
    default_exclusion,
    estimate_background,
    lme_closed_form,
    matching_pursuit,
    sketch_loss,
)
from splinesketch.model import EmpiricalIrf, GaussianIrf, PixelModel, sample_photons
from splinesketch.sketch import SketchVector, accumulate, expected_sketch, feature_vector

T, M = 600, 8
D = T / M
POINT = EmpiricalIrf([1.0])


def vec(values, p=1):
    values = np.asarray(values, dtype=float)
    return SketchVector("spline", p, values.size, 4.0 * values.size, values, 1)


def test_argmax_and_ties():
    assert argmax_component(vec([0.1, 0.7, 0.1, 0.1])) == 1
    assert argmax_component(vec([0.5, 0.5, 0, 0])) == 0


def test_argmax_of_point_mass():
    for m in range(M):
        x = m * D + 20.0
        z = SketchVector("spline", 1, M, T, feature_vector(1, M, T, x), 1)
        assert argmax_component(z) in ((m - 1) % M, m)


def test_empty_sketch_rejected():
    with pytest.raises(EstimationError):
        argmax_component(SketchVector("spline", 1, 4, 8, np.zeros(4), 0))


def test_background_estimates():
    assert estimate_background(expected_sketch(PixelModel(T), 1, M)) == pytest.approx(0, abs=1e-12)
    m = PixelModel(T, (3.5 * D,), (0.8,), 0.2, GaussianIrf(4.0))
    z = expected_sketch(m, 1, M)
    assert estimate_background(z, default_exclusion(argmax_component(z), 1, M)) == pytest.approx(0.8, abs=1e-9)
    s = sample_photons(PixelModel(T, (3.5 * D,), (0.5,), 0.5, GaussianIrf(4.0)), 10_000, 1)
    assert abs(estimate_background(accumulate(s, 1, M)) - 0.5) < 0.05
    with pytest.raises(EstimationError):
        estimate_background(z, set(range(M)))


def _noiseless(depth, sigma=None, alpha=1.0, p=1):
    irf = POINT if sigma is None else GaussianIrf(sigma)
    return expected_sketch(PixelModel(T, (depth,), (alpha,), 1 - alpha, irf), p, M)


def test_lme_examples():
    mid = 2.5 * D
    assert lme_closed_form(_noiseless(mid), 1.0).depth == pytest.approx(mid, abs=1e-9)
    x = 4 * D + 13.37
    z = SketchVector("spline", 1, M, T, feature_vector(1, M, T, x), np.inf)
    assert lme_closed_form(z, 1.0).depth == pytest.approx(x, abs=1e-9)
    # candidate models use the known pulse shape
    est = lme_closed_form(_noiseless(3 * D, sigma=D / 8), 1.0, GaussianIrf(D / 8))
    assert est.scenario == "3"
    assert abs(est.depth - 3 * D) < 0.05 * D


def test_lme_scenario_has_smallest_loss():
    rng = np.random.default_rng(4)
    for _ in range(30):
        z = _noiseless(rng.uniform(0, T), sigma=rng.uniform(2, 12))
        best = lme_closed_form(z, 1.0, GaussianIrf(1.0))
        assert best.loss <= sketch_loss(z, PixelModel(T, (best.local_mean % T,), (1.0,), 0.0, GaussianIrf(1.0))) + 1e-12


def test_lme_contract():
    with pytest.raises(EstimationError):
        lme_closed_form(_noiseless(100.0, p=2), 1.0)
    with pytest.raises(EstimationError):
        lme_closed_form(_noiseless(100.0), 0.0)


def test_sketch_loss():
    m = PixelModel(T, (200.0,), (1.0,), 0.0, GaussianIrf(5.0))
    assert sketch_loss(expected_sketch(m, 1, M), m) == pytest.approx(0, abs=1e-14)
    bg = accumulate(sample_photons(PixelModel(T), 100_000, 2), 1, M)
    assert sketch_loss(bg, PixelModel(T)) < 0.01
    assert sketch_loss(bg, m) > 0.1
    z = expected_sketch(m, 2, M)
    losses = [sketch_loss(z, m.with_depths([d])) for d in np.arange(150, 201, 5)]
    assert np.all(np.diff(losses) < 0)
    with pytest.raises(EstimationError):
        sketch_loss(expected_sketch(m, 1, M), PixelModel(T + 1))


@pytest.mark.parametrize("p", [0, 1, 2, "fourier"])
def test_mp_noiseless_single(p):
    irf = GaussianIrf(16.0)
    for depth in (0.0, 123.4, 301.7, 599.0):
        z = expected_sketch(PixelModel(T, (depth,), (0.6,), 0.4, irf), p, M)
        est = matching_pursuit(z, 1, irf)[0]
        assert abs(circular_error(est.depth, depth, T)) <= 1


def test_mp_two_targets():
    irf = POINT
    m = PixelModel(T, (110.0, 410.0), (0.4, 0.4), 0.2, irf)
    z = expected_sketch(m, 1, 16)
    ests = sorted(matching_pursuit(z, 2, irf), key=lambda e: e.depth)
    assert abs(ests[0].depth - 110) <= 1 and abs(ests[1].depth - 410) <= 1
    assert ests[0].intensity == pytest.approx(ests[1].intensity, rel=0.05)
    assert sum(e.intensity for e in ests) + ests[0].background == pytest.approx(1, abs=1e-12)


def test_mp_on_background_and_residuals():
    irf = GaussianIrf(8.0)
    est = matching_pursuit(expected_sketch(PixelModel(T), 1, M), 1, irf)[0]
    assert est.intensity < 1e-9
    rng = np.random.default_rng(5)
    s = sample_photons(PixelModel(T, (100.0, 380.0), (0.3, 0.3), 0.4, irf), 2000, rng)
    ests = matching_pursuit(accumulate(s, 2, 16), 3, irf)
    res = [e.loss for e in ests]
    assert all(b <= a + 1e-12 for a, b in zip(res, res[1:]))
    with pytest.raises(EstimationError):
        matching_pursuit(accumulate(s, 2, 16), 0, irf)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, M - 1))
def test_equivariance_under_knot_shift(seed, k):
    irf = GaussianIrf(16.0)
    rng = np.random.default_rng(seed)
    s = sample_photons(PixelModel.single(T, rng.uniform(0, T), 1.0, irf), 1000, rng)
    sh = s.shifted(k * D)
    for p in (1, 2):
        a = matching_pursuit(accumulate(s, p, M), 1, irf)[0].depth
        b = matching_pursuit(accumulate(sh, p, M), 1, irf)[0].depth
        assert abs(circular_error(b, a + k * D, T)) < 1e-6
    za, zb = accumulate(s, 1, M), accumulate(sh, 1, M)
    a = lme_closed_form(za, estimate_background(za)).depth
    b = lme_closed_form(zb, estimate_background(zb)).depth
    assert abs(circular_error(b, a + k * D, T)) < 1e-6


def test_coarse_argmax():
    est = coarse_argmax(_noiseless(3 * D + 10, p=0))
    assert est.depth == pytest.approx(3.5 * D)
    # for p=1 the centre is the hat peak
    assert coarse_argmax(_noiseless(3 * D + 10)).depth == pytest.approx(3 * D)
    with pytest.raises(EstimationError):
        coarse_argmax(_noiseless(10.0, p="fourier"))


def test_cross_correlation():
    irf = GaussianIrf(6.0)
    counts = 1e4 * irf.pmf(222.3, T)
    assert abs(cross_correlation(counts, irf) - 222.3) < 0.1
    out = cross_correlation(np.stack([counts, np.zeros(T)]), irf)
    assert np.isnan(out[1]) and abs(out[0] - 222.3) < 0.1
