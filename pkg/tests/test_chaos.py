import math

import numpy as np
import pytest
from numpy.polynomial import hermite_e
from scipy import integrate, stats

from toralnodal.chaos import (
    ChaosBasis,
    chaos_coefficients,
    chaos_variances,
    closed_form_N_eigenvalues,
    diagonalize_N,
    exact_chaos_variances,
    hermite,
    project_2,
    project_4,
    project_all,
    sample_circle_law,
    sample_limit_I,
    sample_limit_M,
    W_functionals,
    zeroth_chaos,
)
from toralnodal.crossings import ks_distance
from toralnodal.curve import A_functional, B_functional, limit_coefficients
from toralnodal.errors import DegenerateDenominator, RouteDisagreement
from toralnodal.field import sample_batch
from toralnodal.lattice import cilleruelo_measure, spectral_measure, uniform_measure


def var_se(x):
    """Variance estimate and its standard error from the fourth central moment."""
    x = np.asarray(x)
    v = x.var(ddof=1)
    m4 = np.mean((x - x.mean()) ** 4)
    return v, math.sqrt((m4 - v * v) / len(x))


def test_hermite_values():
    assert hermite(2, 0.0) == -1
    assert hermite(4, 2.0) == -5
    x = np.linspace(-3, 3, 13)
    for k in range(9):
        assert np.allclose(hermite(k, x), hermite_e.hermeval(x, [0] * k + [1]))


def test_hermite_orthogonality():
    x, w = hermite_e.hermegauss(30)
    w = w / math.sqrt(2 * math.pi)
    assert abs(np.sum(w * hermite(3, x) * hermite(5, x))) < 1e-10
    assert np.sum(w * hermite(4, x) ** 2) == pytest.approx(24)


def test_chaos_coefficients_closed_forms():
    cc = chaos_coefficients(3)
    s = math.sqrt(2 * math.pi)
    assert cc.b[0] == pytest.approx(1 / s)
    assert cc.a[0] == pytest.approx(math.sqrt(2 / math.pi))
    assert cc.b[2] == pytest.approx(-1 / (2 * s), abs=1e-15)
    assert cc.b[4] == pytest.approx(3 / (24 * s), abs=1e-15)
    assert cc.a[4] == pytest.approx(-math.sqrt(2 / math.pi) / 24, abs=1e-15)
    assert cc.b[2] * cc.a[0] == pytest.approx(-1 / (2 * math.pi), abs=1e-15)
    assert cc.b[0] * cc.a[2] == pytest.approx(1 / (2 * math.pi), abs=1e-15)
    assert cc.b[0] * cc.a[0] == pytest.approx(1 / math.pi)
    signs = [np.sign(cc.a[2 * l]) for l in range(1, 4)]
    assert signs == [1, -1, 1]


def test_chaos_coefficients_by_quadrature():
    cc = chaos_coefficients(3)
    phi = stats.norm.pdf
    for q in range(4):
        k = 2 * q
        assert cc.b[k] == pytest.approx(phi(0) * hermite(k, 0.0) / math.factorial(k), abs=1e-15)
        val, _ = integrate.quad(lambda x: 2 * x * hermite(k, x) * phi(x), 0, np.inf)
        assert cc.a[k] == pytest.approx(val / math.factorial(k), abs=1e-12)


def test_zeroth_chaos(levels, circle):
    assert zeroth_chaos(25, circle.length) == pytest.approx(math.sqrt(50) * circle.length, rel=1e-15)


def test_static_second_chaos_vanishes(levels, circle, flower3):
    lv = levels[65]
    for c in (circle, flower3):
        basis = ChaosBasis(lv, c, with_z2b=False)
        z2a, _ = project_2(basis, sample_batch(lv, 0, range(50)))
        assert np.max(np.abs(z2a)) < 1e-10
        _, _, _, res = W_functionals(basis, sample_batch(lv, 0, range(50)))
        assert np.max(np.abs(res)) < 1e-8


def test_second_chaos_variance_ellipse(levels, ellipse):
    lv = levels[25]
    basis = ChaosBasis(lv, ellipse)
    coeffs = sample_batch(lv, 4, range(10000))
    z2a, z2b = project_2(basis, coeffs)
    v, se = var_se(z2a)
    pred = chaos_variances(lv, ellipse)["z2a"]
    assert abs(v - pred) < 4 * se
    assert exact_chaos_variances(lv, ellipse, basis)["z2a"] == pytest.approx(pred, rel=1e-10)
    tot = z2a + z2b
    assert abs(tot.mean()) < 4 * tot.std() / 100


def test_W_covariance(levels, ellipse):
    lv = levels[25]
    basis = ChaosBasis(lv, ellipse, with_z2b=False)
    W1, _, int_w2, _ = W_functionals(basis, sample_batch(lv, 8, range(10000)))
    C = np.cov(np.stack([W1, int_w2]))
    L = ellipse.length
    B = B_functional(ellipse, spectral_measure(lv))
    assert C[0, 0] == pytest.approx(1, abs=0.05)
    assert C[0, 1] == pytest.approx(L, rel=0.05)
    assert C[1, 1] == pytest.approx(4 * B, rel=0.05)
    assert abs(W1.mean()) < 4 / 100


def test_fourth_chaos_routes_agree(levels, circle):
    lv = levels[65]
    basis = ChaosBasis(lv, circle, with_z2b=False)
    z4a, z4s = project_4(basis, sample_batch(lv, 1, range(200)))
    assert np.max(np.abs(z4a - z4s)) < 1e-8 * max(1, np.max(np.abs(z4a)))
    basis.gram2 = basis.gram2 * (1 + 1e-6)
    with pytest.raises(RouteDisagreement):
        project_4(basis, sample_batch(lv, 1, range(5)))


def test_exact_fourth_chaos_variance_gaussian_part(levels, circle, ellipse):
    for n, c in ((65, circle), (325, circle), (25, ellipse)):
        lv = levels[n]
        ex = exact_chaos_variances(lv, c)
        assert ex["z4a_gaussian_part"] == pytest.approx(chaos_variances(lv, c)["z4a"], rel=1e-10)
        assert ex["z4a"] > ex["z4a_gaussian_part"]


def test_fourth_chaos_variance_matches_finite_N_oracle(levels, circle):
    lv = levels[65]
    basis = ChaosBasis(lv, circle, with_z2b=False)
    z4a, _ = project_4(basis, sample_batch(lv, 6, range(20000)))
    v, se = var_se(z4a)
    assert abs(v - exact_chaos_variances(lv, circle, basis)["z4a"]) < 4 * se
    assert abs(z4a.mean()) < 4 * math.sqrt(v / len(z4a))


def test_chaos_covariances(levels, ellipse):
    lv = levels[25]
    basis = ChaosBasis(lv, ellipse)
    proj = project_all(basis, sample_batch(lv, 2, range(10000)))
    # z2b and z4a are orthogonal exactly
    prod = (proj.z2b - proj.z2b.mean()) * (proj.z4a - proj.z4a.mean())
    assert abs(prod.mean()) < 4 * prod.std() / 100
    # z2a and the leading fourth-chaos term share a third-moment covariance at finite N
    prod = (proj.z2a - proj.z2a.mean()) * (proj.z4a - proj.z4a.mean())
    exact = exact_chaos_variances(lv, ellipse, basis)["cov_z2a_z4a"]
    assert abs(prod.mean() - exact) < 4 * prod.std() / 100
    assert proj.z0 == pytest.approx(math.sqrt(50) * ellipse.length)


def test_limit_M_structure():
    rng = np.random.default_rng(0)
    c, denom = 0.7, 2.0
    q = sample_limit_M((c, c, 0.0), denom, rng, 100000, "printed")
    chi = q * math.sqrt(denom) / c + 2
    assert stats.kstest(chi, stats.chi2(2).cdf).statistic < 0.01
    big = sample_limit_M((c, c, 0.0), denom, rng, 1000000, "printed")
    assert abs(big.mean()) < 0.005
    with pytest.raises(DegenerateDenominator):
        sample_limit_M((1, 1, 0), 0.0, rng)
    with pytest.raises(ValueError):
        sample_limit_M((1, 1, 0), 1.0, rng, 1, "other")


def test_limit_M_normalization_on_circle(circle):
    rng = np.random.default_rng(1)
    L = circle.length
    mu = uniform_measure()
    coeffs = limit_coefficients(circle, 0.0)
    denom = 16 * A_functional(circle, mu) - L * L
    assert denom == pytest.approx(L * L / 8)
    unit = sample_limit_M(coeffs, denom, rng, 100000, "unit")
    printed = sample_limit_M(coeffs, denom, rng, 100000, "printed")
    assert ks_distance(unit, "circle") < 0.01
    assert ks_distance(printed, "circle") > 0.2
    assert np.var(unit) == pytest.approx(1, abs=0.03)


def test_limit_I_circle(circle):
    rng = np.random.default_rng(2)
    x = sample_limit_I(circle, uniform_measure(), rng, 100000)
    assert abs(x.mean()) < 4 * x.std() / math.sqrt(len(x))
    assert np.var(x) == pytest.approx(1, abs=0.03)
    assert ks_distance(x, "circle") < 0.01
    assert ks_distance(x, sample_circle_law(rng, 100000)) < 0.015


def test_limit_I_cilleruelo(circle):
    rng = np.random.default_rng(3)
    x = sample_limit_I(circle, cilleruelo_measure(), rng, 50000)
    assert np.all(np.isfinite(x))
    assert np.var(x) == pytest.approx(1, abs=0.05)


def test_limit_routes_agree_on_flower(flower3, levels):
    rng = np.random.default_rng(5)
    mu = spectral_measure(levels[65])
    mu4 = mu.fourth_coefficient.real
    L = flower3.length
    denom = 16 * A_functional(flower3, mu) - L * L
    m = sample_limit_M(limit_coefficients(flower3, mu4), denom, rng, 100000)
    i = sample_limit_I(flower3, mu, rng, 100000)
    assert ks_distance(m, i) < 0.015


def test_diagonalize_N():
    for mu in (0.0, 1.0, -1.0, 0.3, -0.2288):
        S, vals, vecs = diagonalize_N(mu)
        assert np.allclose(vals, closed_form_N_eigenvalues(mu), atol=1e-12)
        assert np.allclose(vecs @ np.diag(vals) @ vecs.T, S, atol=1e-12)
    assert np.allclose(closed_form_N_eigenvalues(0.0), [1 / 8, 1 / 4, 1 / 2])
    assert np.allclose(closed_form_N_eigenvalues(1.0), [0, 1 / 2, 1 / 2])
    assert np.allclose(closed_form_N_eigenvalues(-1.0), [0, 1 / 4, 1 / 2])
