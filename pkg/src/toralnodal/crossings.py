"""Zero counting for the restricted process and Monte Carlo campaigns."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .curve import UnitSpeedCurve, A_functional, B_functional, is_static
from .errors import CampaignFailed, RegimeMismatch
from .field import DEFAULT_SPW, RestrictedBasis, curve_grid, restricted_at, sample_batch
from .lattice import EnergyLevel, spectral_measure

#: tangency suspicion when min |f| on a cell falls below this fraction of max |f|
NEAR_ZERO = 1e-4
MAX_DEPTH = 60
MAX_FLAG_RATE = 1e-3
_HERMITE_PTS = np.linspace(0.0, 1.0, 9)[1:-1]


@dataclass
class CrossingCount:
    count: int
    suspicious_intervals: list = field(default_factory=list)
    refinement_depth: int = 0
    zeros: np.ndarray | None = None

    @property
    def flagged(self) -> bool:
        return bool(self.suspicious_intervals)


def _hermite_min(f0, f1, d0, d1, h):
    """Min of |cubic Hermite interpolant| over interior sample points of each cell."""
    s = _HERMITE_PTS.reshape((-1,) + (1,) * np.ndim(f0))
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    val = h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1
    return np.min(np.abs(val), axis=0)


def _cells(t: np.ndarray, L: float, closed: bool):
    if closed:
        lo = t
        hi = np.append(t[1:], L)
        j1 = np.append(np.arange(1, len(t)), 0)
    else:
        lo, hi = t[:-1], t[1:]
        j1 = np.arange(1, len(t))
    j0 = np.arange(len(lo))
    return lo, hi, j0, j1


def _derivative_bound(level: EnergyLevel, curve: UnitSpeedCurve, coeffs: np.ndarray) -> tuple[float, float]:
    """Crude bounds (amplitude sum, frequency) for the fourth derivative of f."""
    amp = 2.0 * float(np.sum(np.abs(coeffs))) / math.sqrt(level.count)
    k = 2 * math.pi * math.sqrt(level.n)
    kmax = float(np.max(np.abs(curve.kappa)))
    return amp, k + 2 * kmax


class _Refiner:
    """Subdivides a suspicious cell with exact evaluations until the sign pattern is certain."""

    def __init__(self, level, curve, coeffs):
        self.level, self.curve, self.coeffs = level, curve, coeffs
        self.amp, self.freq = _derivative_bound(level, curve, coeffs)
        self.depth = 0

    def eval(self, t):
        f, fp = restricted_at(self.coeffs, self.level, self.curve, np.array([t]))
        return float(f[0]), float(fp[0])

    def run(self, a, b, fa, fb, da, db, depth=0):
        """Returns (zeros in (a, b], unresolved intervals)."""
        self.depth = max(self.depth, depth)
        if (fa > 0) != (fb > 0):
            return 1, []
        h = b - a
        m = float(_hermite_min(fa, fb, da, db, h))
        # cubic Hermite error bound: h^4/384 * max|f''''|
        err = h**4 / 384 * self.amp * self.freq**4
        if m > 4 * err and m > 0:
            return 0, []
        if depth >= MAX_DEPTH:
            return 0, [(a, b)]
        c = 0.5 * (a + b)
        fc, dc = self.eval(c)
        n1, u1 = self.run(a, c, fa, fc, da, dc, depth + 1)
        n2, u2 = self.run(c, b, fc, fb, dc, db, depth + 1)
        return n1 + n2, u1 + u2


def _count_one(t, f, fp, L, closed, level, curve, coeffs, suspicious_cells):
    """Exact refinement for the suspicious cells of one trial."""
    lo, hi, j0, j1 = _cells(t, L, closed)
    ref = _Refiner(level, curve, coeffs)
    extra = 0
    unresolved = []
    for c in suspicious_cells:
        n, u = ref.run(lo[c], hi[c], f[j0[c]], f[j1[c]], fp[j0[c]], fp[j1[c]])
        extra += n
        unresolved += u
    return extra, unresolved, ref.depth


def count_batch(basis: RestrictedBasis, coeffs: np.ndarray) -> tuple[np.ndarray, list, np.ndarray]:
    """Zero counts for a batch of coefficient rows on a common grid.

    Returns counts, the unresolved intervals per row and the refinement depth per row.
    """
    t = basis.t
    curve = basis.curve
    L, closed = curve.length, curve.closed
    f, fp = basis.values(coeffs)
    lo, hi, j0, j1 = _cells(t, L, closed)
    h = (hi - lo)[:, None]
    pos = f > 0
    change = pos[j0] != pos[j1]
    counts = change.sum(axis=0).astype(np.int64)
    hm = _hermite_min(f[j0], f[j1], fp[j0], fp[j1], h)
    thresh = NEAR_ZERO * np.max(np.abs(f), axis=0)
    susp = (~change) & (hm < thresh[None, :])
    unresolved = [[] for _ in range(f.shape[1])]
    depth = np.zeros(f.shape[1], dtype=np.int64)
    for b in np.flatnonzero(susp.any(axis=0)):
        extra, un, d = _count_one(t, f[:, b], fp[:, b], L, closed, basis.level, curve, coeffs[b], np.flatnonzero(susp[:, b]))
        counts[b] += extra
        unresolved[b] = un
        depth[b] = d
    return counts, unresolved, depth


def count_zeros(process, refine_tol: float = 1e-12, locate: bool = False) -> CrossingCount:
    """Zeros of a restricted process on its grid, with tangency refinement.

    ``process`` needs ``t``, ``values``, ``derivative``, ``closed`` and a
    ``curve`` length; when it also provides ``exact(t)`` suspicious cells are
    subdivided with exact evaluations, otherwise they are flagged.
    With ``locate=True`` sign-change cells are bisected down to ``refine_tol``.
    """
    t = np.asarray(process.t, dtype=float)
    f = np.asarray(process.values, dtype=float)
    fp = np.asarray(process.derivative, dtype=float)
    L = process.curve.length
    closed = process.closed
    lo, hi, j0, j1 = _cells(t, L, closed)
    pos = f > 0
    change = pos[j0] != pos[j1]
    count = int(change.sum())
    hm = _hermite_min(f[j0], f[j1], fp[j0], fp[j1], (hi - lo))
    thresh = NEAR_ZERO * float(np.max(np.abs(f))) if len(f) else 0.0
    susp = np.flatnonzero((~change) & (hm < thresh))
    unresolved = []
    depth = 0
    if len(susp):
        exact = getattr(process, "exact", None)
        if exact is None:
            unresolved = [(float(lo[c]), float(hi[c])) for c in susp]
        else:
            extra, unresolved, depth = _count_one(t, f, fp, L, closed, process.level, process.curve, process.coeffs, susp)
            count += extra
    zeros = None
    if locate:
        exact = getattr(process, "exact", None)
        zs = []
        for c in np.flatnonzero(change):
            a, b = float(lo[c]), float(hi[c])
            fa = f[j0[c]]
            for _ in range(MAX_DEPTH * 2):
                if b - a <= refine_tol:
                    break
                m = 0.5 * (a + b)
                fm = float(exact(np.array([m]))[0][0]) if exact is not None else float(np.interp(m, t, f))
                if (fm > 0) == (fa > 0):
                    a, fa = m, fm
                else:
                    b = m
            zs.append(0.5 * (a + b))
        zeros = np.array(zs)
    return CrossingCount(count, [(float(a), float(b)) for a, b in unresolved], depth, zeros)


# --- predictions -------------------------------------------------------------


def expected_count(n: float, L: float) -> float:
    """Mean number of nodal intersections, sqrt(2 n) L."""
    return math.sqrt(2 * n) * L


def variance_prediction(level: EnergyLevel, curve: UnitSpeedCurve, regime: str = "auto") -> float:
    """Leading-order variance using the level's own angular measure."""
    mu = spectral_measure(level)
    L = curve.length
    N = level.count
    static = is_static(curve)
    if regime == "auto":
        regime = "static" if static else "generic"
    if regime == "generic":
        return (4 * B_functional(curve, mu) - L * L) * level.n / N
    if regime == "static":
        if not static:
            raise RegimeMismatch("static variance requested for a non-static curve")
        return level.n / (4 * N * N) * (16 * A_functional(curve, mu) - L * L)
    raise ValueError(f"unknown regime {regime!r}")


# --- distances ---------------------------------------------------------------


def circle_law_cdf(x):
    """CDF of 1 - W with W ~ Exp(1), i.e. of 1 - (Z1^2 + Z2^2)/2."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= 1.0, np.exp(-(1.0 - np.minimum(x, 1.0))), 1.0)


def ks_distance(samples, reference="normal") -> float:
    """Kolmogorov distance between the empirical law of ``samples`` and ``reference``.

    ``reference`` is ``"normal"``, ``"circle"`` or an array of reference draws.
    """
    x = np.asarray(samples, dtype=float)
    if isinstance(reference, str):
        if reference == "normal":
            return float(stats.kstest(x, stats.norm.cdf).statistic)
        if reference == "circle":
            return float(stats.kstest(x, circle_law_cdf).statistic)
        raise ValueError(f"unknown reference law {reference!r}")
    return float(stats.ks_2samp(x, np.asarray(reference, dtype=float)).statistic)


# --- campaigns ---------------------------------------------------------------


@dataclass
class MonteCarloSummary:
    n: int
    N: int
    curve: str
    trials: int
    seed: int
    resolution: float
    counts: np.ndarray
    mean: float
    variance: float
    theoretical_mean: float
    regime: str
    theoretical_variance: float
    standardized: np.ndarray
    standardized_empirical: np.ndarray
    flag_rate: float
    flagged_trials: list
    even_fraction: float
    ks: dict = field(default_factory=dict)
    doubling_agreement: float | None = None

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.variance / self.trials)

    @property
    def variance_ratio(self) -> float:
        return self.variance / self.theoretical_variance

    def to_dict(self, include_counts: bool = False) -> dict:
        d = {
            "n": self.n, "N": self.N, "curve": self.curve, "trials": self.trials,
            "seed": self.seed, "resolution": self.resolution,
            "mean": self.mean, "variance": self.variance,
            "standard_error": self.standard_error,
            "theoretical_mean": self.theoretical_mean, "regime": self.regime,
            "theoretical_variance": self.theoretical_variance,
            "variance_ratio": self.variance_ratio,
            "flag_rate": self.flag_rate, "even_fraction": self.even_fraction,
            "fraction_above_one": float(np.mean(self.standardized > 1.0)),
            "ks": self.ks, "doubling_agreement": self.doubling_agreement,
        }
        if include_counts:
            d["counts"] = self.counts.tolist()
        return d


def simulate_counts(level, curve, trials, seed, resolution=DEFAULT_SPW, chunk=256, start=0):
    """Per-trial zero counts, unresolved flags and depths for trials start..start+trials-1."""
    basis = RestrictedBasis(level, curve, curve_grid(curve, level, resolution))
    counts = np.empty(trials, dtype=np.int64)
    flagged = []
    for i0 in range(0, trials, chunk):
        idx = range(start + i0, start + min(trials, i0 + chunk))
        coeffs = sample_batch(level, seed, idx)
        c, un, _ = count_batch(basis, coeffs)
        counts[i0:i0 + len(c)] = c
        flagged += [tr for tr, u in zip(idx, un) if u]
    return counts, flagged


def standardize(counts, mean, sd):
    return (np.asarray(counts, dtype=float) - mean) / sd


def run_campaign(
    level: EnergyLevel,
    curve: UnitSpeedCurve,
    trials: int,
    seed: int,
    resolution: float = DEFAULT_SPW,
    regime: str = "auto",
    check_doubling: bool = False,
    limit_sample=None,
    chunk: int = 256,
) -> MonteCarloSummary:
    """Monte Carlo campaign for the nodal intersection count."""
    counts, flagged = simulate_counts(level, curve, trials, seed, resolution, chunk)
    rate = len(flagged) / trials
    if rate > MAX_FLAG_RATE:
        raise CampaignFailed(f"unresolved tangency rate {rate:.4f} exceeds {MAX_FLAG_RATE}")
    L = curve.length
    mean = float(np.mean(counts))
    var = float(np.var(counts, ddof=1))
    sd = math.sqrt(var) if var > 0 else 1.0
    mu0 = expected_count(level.n, L)
    if regime == "auto":
        regime = "static" if is_static(curve) else "generic"
    tv = variance_prediction(level, curve, regime)
    z = standardize(counts, mu0, sd)
    ze = standardize(counts, mean, sd)
    even = float(np.mean(counts % 2 == 0)) if curve.closed else float("nan")
    ks = {"normal": ks_distance(z, "normal"), "circle": ks_distance(z, "circle")}
    if limit_sample is not None:
        ks["limit_sample"] = ks_distance(z, limit_sample)
    agree = None
    if check_doubling:
        c2, _ = simulate_counts(level, curve, trials, seed, 2 * resolution, chunk)
        agree = float(np.mean(c2 == counts))
    return MonteCarloSummary(
        n=level.n, N=level.count, curve=curve.spec.label, trials=trials, seed=seed,
        resolution=resolution, counts=counts, mean=mean, variance=var,
        theoretical_mean=mu0, regime=regime, theoretical_variance=tv,
        standardized=z, standardized_empirical=ze, flag_rate=rate,
        flagged_trials=flagged, even_fraction=even, ks=ks, doubling_agreement=agree,
    )
