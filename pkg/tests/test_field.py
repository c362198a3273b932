import math

import numpy as np
import pytest

from toralnodal.curve import CurveSpec, build_unit_speed
from toralnodal.field import (
    RestrictedBasis,
    covariance_bundle,
    curve_grid,
    evaluate_restricted,
    sample_batch,
    sample_coefficients,
    trial_rng,
)


def test_coefficients_standard_complex(levels):
    lv = levels[65]
    a = sample_batch(lv, 3, range(12500))  # 8 half points -> 1e5 draws
    assert np.mean(np.abs(a) ** 2) == pytest.approx(1.0, abs=0.02)
    assert abs(np.mean(a.real * a.imag)) < 0.01
    assert np.var(a.real) == pytest.approx(0.5, abs=0.01)


def test_determinism(levels):
    lv = levels[25]
    a = sample_coefficients(lv, 11, 4).coeffs
    b = sample_coefficients(lv, 11, 4).coeffs
    assert np.array_equal(a, b)
    batch = sample_batch(lv, 11, [7, 4, 9])
    assert np.array_equal(batch[1], a)
    assert not np.array_equal(sample_coefficients(lv, 12, 4).coeffs, a)
    x = trial_rng(1, 2).standard_normal(3)
    assert np.array_equal(x, trial_rng(1, 2).standard_normal(3))


def test_field_is_real(levels):
    s = sample_coefficients(levels[325], 0, 0)
    x = np.random.default_rng(0).uniform(size=(100, 2))
    z = s.evaluate_complex(x)
    assert np.max(np.abs(z.imag)) < 1e-12
    assert np.allclose(z.real, s.evaluate(x), atol=1e-12)


def test_restricted_variances(levels, circle):
    lv = levels[65]
    t = np.linspace(0, circle.length, 40, endpoint=False)
    basis = RestrictedBasis(lv, circle, t)
    f, fp = basis.values(sample_batch(lv, 5, range(4000)))
    alpha = 2 * math.pi**2 * lv.n
    assert np.var(f) == pytest.approx(1.0, abs=0.05)
    assert np.var(fp) / alpha == pytest.approx(1.0, abs=0.05)
    corr = np.mean([np.corrcoef(f[i], fp[i])[0, 1] for i in range(len(t))])
    assert abs(corr) < 3 / math.sqrt(4000)


def test_derivative_matches_finite_differences(levels, ellipse):
    s = sample_coefficients(levels[25], 0, 1)
    proc = evaluate_restricted(s, ellipse, 20)
    h = 1e-5
    f1, _ = proc.exact(proc.t[:200] + h)
    f0, _ = proc.exact(proc.t[:200] - h)
    fd = (f1 - f0) / (2 * h)
    assert np.max(np.abs(fd - proc.derivative[:200])) < 1e-5 * np.max(np.abs(proc.derivative))


def test_grid_spacing(levels, circle):
    lv = levels[325]
    t = curve_grid(circle, lv, 20)
    assert np.max(np.diff(t)) <= 1 / (20 * math.sqrt(lv.eigenvalue)) + 1e-15
    assert t[-1] < circle.length
    arc = build_unit_speed(CurveSpec("circle", arc=(0.0, 2.0)))
    assert curve_grid(arc, lv)[-1] == pytest.approx(arc.length)


def test_covariance_bundle_diagonal(levels, ellipse):
    lv = levels[65]
    r, r1, r2, r12, omr = covariance_bundle(lv, ellipse, 0.3, 0.3)
    assert r == pytest.approx(1.0)
    assert r1 == pytest.approx(0.0, abs=1e-12) and r2 == pytest.approx(0.0, abs=1e-12)
    assert r12 == pytest.approx(2 * math.pi**2 * lv.n, rel=1e-12)
    assert omr == 0


def test_covariance_bundle_finite_differences(levels, ellipse):
    lv = levels[25]
    rng = np.random.default_rng(2)
    h = 1e-5
    for t1, t2 in rng.uniform(0, ellipse.length, size=(10, 2)):
        r, r1, r2, r12, omr = covariance_bundle(lv, ellipse, t1, t2)
        fd1 = (covariance_bundle(lv, ellipse, t1 + h, t2)[0] - covariance_bundle(lv, ellipse, t1 - h, t2)[0]) / (2 * h)
        fd2 = (covariance_bundle(lv, ellipse, t1, t2 + h)[0] - covariance_bundle(lv, ellipse, t1, t2 - h)[0]) / (2 * h)
        fd12 = (covariance_bundle(lv, ellipse, t1, t2 + h)[1] - covariance_bundle(lv, ellipse, t1, t2 - h)[1]) / (2 * h)
        scale = math.sqrt(lv.eigenvalue)
        assert r1 == pytest.approx(fd1, abs=1e-6 * scale)
        assert r2 == pytest.approx(fd2, abs=1e-6 * scale)
        assert r12 == pytest.approx(fd12, abs=1e-6 * scale**2)
        assert abs(r) <= 1
        assert omr == pytest.approx(1 - r, abs=1e-14)


def test_covariance_translation_invariant(levels):
    lv = levels[65]
    c0 = build_unit_speed(CurveSpec("ellipse", center=(0.5, 0.5)))
    c1 = build_unit_speed(CurveSpec("ellipse", center=(0.4, 0.55)))
    t1, t2 = np.array([0.1, 0.5, 0.9]), np.array([0.7, 0.2, 1.1])
    for a, b in zip(covariance_bundle(lv, c0, t1, t2), covariance_bundle(lv, c1, t1, t2)):
        assert np.allclose(a, b, atol=1e-12)


def test_covariance_matches_samples(levels, circle):
    lv = levels[25]
    rng = np.random.default_rng(4)
    pairs = rng.uniform(0, circle.length, size=(20, 2))
    trials = 10000
    coeffs = sample_batch(lv, 9, range(trials))
    f1, _ = RestrictedBasis(lv, circle, pairs[:, 0]).values(coeffs)
    f2, _ = RestrictedBasis(lv, circle, pairs[:, 1]).values(coeffs)
    r = covariance_bundle(lv, circle, pairs[:, 0], pairs[:, 1])[0]
    prod = f1 * f2
    emp = prod.mean(axis=1)
    se = prod.std(axis=1) / math.sqrt(trials)
    assert np.all(np.abs(emp - r) < 4 * se + 1e-12)
