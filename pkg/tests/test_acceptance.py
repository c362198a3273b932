"""Acceptance criteria 1-13, one test per (sub-)criterion.

Each test prints a PASS/FAIL line (collected in the terminal summary) and
asserts the stated tolerance unchanged.
"""

import itertools
import math

import numpy as np
import pytest

from toralnodal.chaos import (ChaosBasis, chaos_coefficients, chaos_variances, exact_chaos_variances,
                              project_all, sample_circle_law, sample_limit_I, sample_limit_M)
from toralnodal.crossings import circle_law_cdf, expected_count, ks_distance, run_campaign, variance_prediction
from toralnodal.curve import (A_functional, B_functional, CurveSpec, I_gamma, build_unit_speed,
                              limit_coefficients)
from toralnodal.field import sample_batch
from toralnodal.kacrice import alpha_of, moment_integrals, taylor_error_slope, variance_numeric
from toralnodal.lattice import (direction_identity_check, enumerate_level, separation_stats,
                                spectral_correlations, spectral_measure, uniform_measure)

TRIALS = 10_000
LATTICE_LEVELS = (1, 2, 5, 25, 65, 325)
STATIC_LEVELS = (65, 325, 1105)
FLOWERS = {3: 0.05, 4: 0.05, 5: 0.02, 6: 0.02}


@pytest.fixture(scope="module")
def campaigns(circle):
    """Circle campaigns at n = 65 and 1105 with the resolution-doubling check."""
    return {n: run_campaign(enumerate_level(n), circle, TRIALS, seed=1000 + n, check_doubling=True)
            for n in (65, 1105)}


# --- 1: lattice identities -----------------------------------------------------------


def _exhaustive_S4(level):
    p = [tuple(x) for x in level.points]
    return sum(1 for a, b, c, d in itertools.product(p, repeat=4)
               if a[0] + b[0] + c[0] + d[0] == 0 and a[1] + b[1] + c[1] + d[1] == 0)


def test_c01a_fourth_correlation_count(verdict):
    bad = []
    for n in LATTICE_LEVELS:
        lv = enumerate_level(n)
        s4 = spectral_correlations(lv, 4)
        ok = s4 == 3 * lv.count * (lv.count - 1)
        if n <= 25:
            ok = ok and _exhaustive_S4(lv) == s4
        if not ok:
            bad.append(n)
    assert verdict("1a |S4| = 3N(N-1)", not bad, f"levels {LATTICE_LEVELS}, mismatches {bad}")


def test_c01b_direction_identity(verdict):
    rng = np.random.default_rng(1)
    z = rng.normal(size=(100, 2))
    worst = max(abs(direction_identity_check(enumerate_level(n), v)) for n in LATTICE_LEVELS for v in z)
    assert verdict("1b direction identity", worst < 1e-12, f"max error {worst:.2e}")


# --- 2: coefficients -------------------------------------------------------------------


def test_c02a_expansion_coefficients(verdict):
    c = chaos_coefficients(2)
    s = math.sqrt(2 * math.pi)
    k = math.sqrt(2 / math.pi)
    want_b = {0: 1 / s, 2: -1 / (2 * s), 4: 3 / (math.factorial(4) * s)}
    want_a = {0: k, 2: k / 2, 4: -k / (2 * 2**2 * 3)}
    err = max([abs(c.b[q] - v) for q, v in want_b.items()] + [abs(c.a[q] - v) for q, v in want_a.items()])
    assert verdict("2a b, a coefficients", err <= 1e-15, f"max error {err:.1e}")


def test_c02b_zeroth_chaos(verdict, circle):
    worst = 0.0
    for n in (25, 65):
        lv = enumerate_level(n)
        proj = project_all(ChaosBasis(lv, circle, with_z2b=False), sample_batch(lv, 3, range(50)))
        z0 = np.broadcast_to(proj.z0, (50,))
        worst = max(worst, float(np.max(np.abs(z0 - math.sqrt(2 * n) * circle.length))))
    assert verdict("2b Z[0] = sqrt(2n) L", worst <= 4 * np.finfo(float).eps * 30, f"max deviation {worst:.1e}")


# --- 3: mean -------------------------------------------------------------------------------


def test_c03_mean(verdict, circle):
    lv = enumerate_level(25)
    mc = run_campaign(lv, circle, TRIALS, seed=25)
    target = expected_count(25, circle.length)
    sd = math.sqrt(mc.variance)
    gap = abs(mc.mean - target)
    assert verdict("3 mean at n=25", gap <= 3 * sd / 100,
                   f"mean {mc.mean:.4f}, target {target:.4f}, |gap| {gap:.4f}, bound {3 * sd / 100:.4f}")


# --- 4, 5: static geometry ---------------------------------------------------------------------


def test_c04a_static_curves(verdict, circle):
    curves = {"circle": circle}
    curves.update({f"flower{k}": build_unit_speed(CurveSpec("flower", r0=0.2, eps=e, k=k)) for k, e in FLOWERS.items()})
    worst = {}
    ok = True
    for name, c in curves.items():
        L = c.length
        i_rel = abs(I_gamma(c)) / L
        b_rel = abs(4 * B_functional(c, uniform_measure()) - L * L) / L**2
        worst[name] = max(i_rel, b_rel)
        ok = ok and i_rel < 1e-8 and b_rel < 1e-8
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert verdict("4a static |I|/L and |4B-L^2|/L^2", ok, detail)


def test_c04b_ellipse_not_static(verdict, ellipse):
    i = abs(I_gamma(ellipse))
    assert verdict("4b ellipse |I| > 0.01", i > 0.01, f"|I| = {i:.4f}")


def test_c05_circle_constant(verdict, circle):
    L = circle.length
    A = A_functional(circle, uniform_measure())
    err = abs(A - 9 * L * L / 128)
    const = (16 * A - L * L) / 4
    assert verdict("5 A = 9L^2/128", err < 1e-8, f"error {err:.1e}, (16A-L^2)/4 = {const:.6f} vs L^2/32 = {L * L / 32:.6f}")


# --- 6: static variance ---------------------------------------------------------------------------


def test_c06a_delta_separation_scan(verdict):
    deltas = np.linspace(0.01, 0.24, 24)
    found = {}
    for n in STATIC_LEVELS:
        lv = enumerate_level(n)
        ok = [d for d in deltas if separation_stats(lv, d)[1]]
        found[n] = (separation_stats(lv, 0.0)[0], max(ok) if ok else None)
    detail = ", ".join(f"n={n} min_sep {s:.3f} vs n^0.25 {n**0.25:.2f}, best delta {d}" for n, (s, d) in found.items())
    assert verdict("6a delta-separated levels", all(d is not None for _, d in found.values()), detail)


def test_c06b_variance_ratio_n65(verdict, campaigns):
    r = campaigns[65].variance_ratio
    assert verdict("6b variance ratio n=65 in [0.6,1.4]", 0.6 <= r <= 1.4,
                   f"MC {campaigns[65].variance:.4f}, predicted {campaigns[65].theoretical_variance:.5f}, ratio {r:.1f}")


def test_c06c_variance_ratio_n1105(verdict, campaigns):
    r = campaigns[1105].variance_ratio
    assert verdict("6c variance ratio n=1105 in [0.75,1.25]", 0.75 <= r <= 1.25,
                   f"MC {campaigns[1105].variance:.4f}, predicted {campaigns[1105].theoretical_variance:.5f}, ratio {r:.1f}")


def test_c06d_kacrice_vs_mc(verdict, campaigns, circle):
    kr = variance_numeric(enumerate_level(65), circle).variance
    mc = campaigns[65].variance
    rel = abs(kr - mc) / mc
    assert verdict("6d Kac-Rice vs MC at n=65 within 5%", rel <= 0.05, f"Kac-Rice {kr:.4f}, MC {mc:.4f}, rel {rel:.3f}")


# --- 7, 8: limit laws of counts -------------------------------------------------------------------


def test_c07a_static_limit_ks(verdict, campaigns):
    ks = campaigns[1105].ks["circle"]
    assert verdict("7a KS to circle law at n=1105 < 0.1", ks < 0.1, f"KS {ks:.4f}")


def test_c07b_fraction_above_one(verdict, campaigns):
    frac = float(np.mean(campaigns[1105].standardized > 1.0))
    assert verdict("7b fraction of standardized > 1 below 5%", frac < 0.05, f"fraction {frac:.4f}")


def test_c08_generic_clt(verdict, ellipse):
    mc = run_campaign(enumerate_level(1105), ellipse, TRIALS, seed=8)
    ks = ks_distance(mc.standardized, "normal")
    assert verdict("8 ellipse n=1105 KS to N(0,1) < 0.1", ks < 0.1, f"KS {ks:.4f}, flag rate {mc.flag_rate}")


# --- 9: limit samplers ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def limit_draws(circle):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(9)))
    mu = uniform_measure()
    size = 200_000
    L = circle.length
    return {
        "I": sample_limit_I(circle, mu, rng, size),
        "M": sample_limit_M(limit_coefficients(circle, 0.0), 16 * A_functional(circle, mu) - L * L, rng, size),
        "circle": sample_circle_law(rng, size),
    }


def test_c09a_I_route_vs_closed_form(verdict, limit_draws):
    ks = ks_distance(limit_draws["I"], "circle")
    assert verdict("9a I-route vs circle CDF < 0.02", ks < 0.02, f"KS {ks:.4f}")


def test_c09b_M_route_reconciled(verdict, limit_draws):
    ks_c = ks_distance(limit_draws["M"], "circle")
    ks_i = ks_distance(limit_draws["M"], limit_draws["I"])
    ks_s = ks_distance(limit_draws["M"], limit_draws["circle"])
    worst = max(ks_c, ks_i, ks_s)
    assert verdict("9b M-route vs circle CDF and I-route < 0.02", worst < 0.02,
                   f"KS vs CDF {ks_c:.4f}, vs I {ks_i:.4f}, vs closed-form draws {ks_s:.4f}")


# --- 10: chaos variances -------------------------------------------------------------------------


def _var_and_se(x):
    x = np.asarray(x)
    v = float(np.var(x, ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    return v, math.sqrt((m4 - v * v) / len(x))


def _projections(level, curve, seed):
    basis = ChaosBasis(level, curve, with_z2b=False)
    chunks = [project_all(basis, sample_batch(level, seed, range(i, i + 2000))) for i in range(0, TRIALS, 2000)]
    return basis, chunks


def test_c10a_second_chaos_variance(verdict, ellipse):
    lv = enumerate_level(25)
    _, chunks = _projections(lv, ellipse, 10)
    v, se = _var_and_se(np.concatenate([c.z2a for c in chunks]))
    pred = chaos_variances(lv, ellipse)["z2a"]
    assert verdict("10a Var(z2a) within 4 SE", abs(v - pred) <= 4 * se,
                   f"MC {v:.5f} +- {se:.5f}, predicted {pred:.5f}, {abs(v - pred) / se:.1f} SE")


def test_c10b_fourth_chaos_variance(verdict, circle):
    lv = enumerate_level(65)
    basis, chunks = _projections(lv, circle, 11)
    v, se = _var_and_se(np.concatenate([c.z4a for c in chunks]))
    pred = chaos_variances(lv, circle)["z4a"]
    exact = exact_chaos_variances(lv, circle, basis)["z4a"]
    assert verdict("10b Var(z4a) within 4 SE", abs(v - pred) <= 4 * se,
                   f"MC {v:.5f} +- {se:.5f}, predicted {pred:.5f} ({abs(v - pred) / se:.1f} SE); "
                   f"exact finite-N {exact:.5f} ({abs(v - exact) / se:.1f} SE)")


def test_c10c_static_residual(verdict, circle, flower3):
    worst = 0.0
    for curve in (circle, flower3):
        for n in (25, 65):
            lv = enumerate_level(n)
            proj = project_all(ChaosBasis(lv, curve, with_z2b=False), sample_batch(lv, 12, range(500)))
            worst = max(worst, float(np.max(np.abs(proj.residual))))
    assert verdict("10c static residual < 1e-8", worst < 1e-8, f"max residual {worst:.1e}")


# --- 11, 12: Kac-Rice ------------------------------------------------------------------------------


def test_c11_taylor_order(verdict):
    slope, _, _ = taylor_error_slope(alpha_of(65))
    assert verdict("11 Taylor error slope >= 5.5", slope >= 5.5, f"slope {slope:.3f}")


@pytest.fixture(scope="module")
def moments(circle):
    lv = enumerate_level(65)
    tab = moment_integrals(lv, circle, (2, 4, 6))
    L, N = circle.length, lv.count
    return {
        "r2": tab["r^2"]["value"] * N / L**2,
        "r4": tab["r^4"]["value"] * N**2 / (3 * L**2),
        "r6": tab["r^6"]["value"] * N**2 / (3 * L**2),
    }


def test_c12a_second_moment(verdict, moments):
    r = moments["r2"]
    assert verdict("12a int r^2 N/L^2 in [0.85,1.15]", 0.85 <= r <= 1.15, f"ratio {r:.4f}")


def test_c12b_fourth_moment(verdict, moments):
    r = moments["r4"]
    assert verdict("12b int r^4 N^2/(3L^2) in [0.7,1.3]", 0.7 <= r <= 1.3, f"ratio {r:.4f}")


def test_c12c_sixth_below_fourth(verdict, moments):
    assert verdict("12c sixth-moment ratio below fourth", moments["r6"] < moments["r4"],
                   f"sixth {moments['r6']:.4f}, fourth {moments['r4']:.4f}")


# --- 13: robustness -------------------------------------------------------------------------------


def test_c13a_doubling_stability(verdict, campaigns):
    agree = {n: c.doubling_agreement for n, c in campaigns.items()}
    assert verdict("13a resolution doubling agreement >= 99.9%", min(agree.values()) >= 0.999,
                   ", ".join(f"n={n} {a:.4f}" for n, a in agree.items()))


def test_c13b_flag_rate(verdict, campaigns):
    rate = {n: c.flag_rate for n, c in campaigns.items()}
    assert verdict("13b unresolved tangency rate < 0.1%", max(rate.values()) < 1e-3,
                   ", ".join(f"n={n} {r:.4f}" for n, r in rate.items()))
