"""Arithmetic random waves: sampling, evaluation along curves, covariance data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curve import UnitSpeedCurve
from .lattice import EnergyLevel

DEFAULT_SPW = 20.0


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, trial); independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trial)])))


def standard_complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    z = rng.standard_normal(np.append(size, 2))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class WaveSample:
    """Coefficients on the half lattice; the rest follow from a_{-l} = conj(a_l)."""

    level: EnergyLevel
    coeffs: np.ndarray
    seed: int = 0
    trial: int = 0

    def full_coeffs(self) -> tuple[np.ndarray, np.ndarray]:
        """All lattice points with their coefficients."""
        pts = np.concatenate([self.level.half_points, -self.level.half_points])
        return pts, np.concatenate([self.coeffs, np.conj(self.coeffs)])

    def evaluate_complex(self, x) -> np.ndarray:
        """Direct sum over the full lattice; imaginary part is rounding only."""
        x = np.asarray(x, dtype=float)
        pts, a = self.full_coeffs()
        ph = 2 * np.pi * (x @ pts.T)
        return (np.exp(1j * ph) @ a) / math.sqrt(self.level.count)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ph = 2 * np.pi * (x @ self.level.half_points.T)
        return 2 * np.real(np.exp(1j * ph) @ self.coeffs) / math.sqrt(self.level.count)

    def to_dict(self) -> dict:
        return {
            "n": self.level.n,
            "seed": self.seed,
            "trial": self.trial,
            "half_points": self.level.half_points.tolist(),
            "coeffs": [[c.real, c.imag] for c in self.coeffs],
        }


def sample_coefficients(level: EnergyLevel, seed: int, trial: int) -> WaveSample:
    rng = trial_rng(seed, trial)
    return WaveSample(level, standard_complex_normal(rng, len(level.half_points)), seed, trial)


def sample_batch(level: EnergyLevel, seed: int, trials) -> np.ndarray:
    """Coefficient rows for the given trial indices, each from its own stream."""
    h = len(level.half_points)
    trials = list(trials)
    out = np.empty((len(trials), h), dtype=complex)
    for i, tr in enumerate(trials):
        out[i] = standard_complex_normal(trial_rng(seed, tr), h)
    return out


def curve_grid(curve: UnitSpeedCurve, level: EnergyLevel, spw: float = DEFAULT_SPW) -> np.ndarray:
    """t-grid with spacing at most 1/(spw * sqrt(E)); closed curves omit t = L."""
    k = math.sqrt(level.eigenvalue)
    m = max(8, int(math.ceil(curve.length * spw * k)))
    if curve.closed:
        return np.linspace(0.0, curve.length, m, endpoint=False)
    return np.linspace(0.0, curve.length, m + 1)


class RestrictedBasis:
    """Precomputed trigonometric tables for f(t) = T(gamma(t)) on a grid.

    Values for a batch of coefficient rows are two matrix products.
    """

    def __init__(self, level: EnergyLevel, curve: UnitSpeedCurve, t: np.ndarray):
        self.level = level
        self.curve = curve
        self.t = np.asarray(t, dtype=float)
        pos, tan = curve.evaluate(self.t)
        hp = level.half_points.astype(float)
        ph = 2 * np.pi * (pos @ hp.T)
        self.cos = np.cos(ph)
        self.sin = np.sin(ph)
        self.dot = 2 * np.pi * (tan @ hp.T)  # 2 pi <lambda, gamma'>
        self.scale = 2.0 / math.sqrt(level.count)

    def values(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """f and f' with shape (len(t), batch) for coefficient rows ``coeffs``."""
        coeffs = np.atleast_2d(coeffs)
        re, im = coeffs.real.T, coeffs.imag.T
        f = self.scale * (self.cos @ re - self.sin @ im)
        fp = -self.scale * ((self.dot * self.sin) @ re + (self.dot * self.cos) @ im)
        return f, fp


def restricted_at(sample_coeffs: np.ndarray, level: EnergyLevel, curve: UnitSpeedCurve, t) -> tuple[np.ndarray, np.ndarray]:
    """f and f' at arbitrary t for one coefficient row (exact trigonometric sums)."""
    basis = RestrictedBasis(level, curve, np.atleast_1d(t))
    f, fp = basis.values(sample_coeffs)
    return f[:, 0], fp[:, 0]


@dataclass
class RestrictedProcess:
    curve: UnitSpeedCurve
    level: EnergyLevel
    t: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    coeffs: np.ndarray

    @property
    def closed(self) -> bool:
        return self.curve.closed

    def exact(self, t) -> tuple[np.ndarray, np.ndarray]:
        return restricted_at(self.coeffs, self.level, self.curve, t)


def evaluate_restricted(sample: WaveSample, curve: UnitSpeedCurve, samples_per_wavelength: float = DEFAULT_SPW) -> RestrictedProcess:
    t = curve_grid(curve, sample.level, samples_per_wavelength)
    f, fp = RestrictedBasis(sample.level, curve, t).values(sample.coeffs)
    return RestrictedProcess(curve, sample.level, t, f[:, 0], fp[:, 0], sample.coeffs)


def covariance_bundle(level: EnergyLevel, curve: UnitSpeedCurve, t1, t2) -> tuple[np.ndarray, ...]:
    """Exact r, r1, r2, r12 of the restricted process at (t1, t2) (broadcast).

    ``1 - r`` is returned as a fifth array, computed as a sum of squared sines
    so that it keeps full relative accuracy near the diagonal.
    """
    t1, t2 = np.broadcast_arrays(np.asarray(t1, dtype=float), np.asarray(t2, dtype=float))
    shape = t1.shape
    p1, v1 = curve.evaluate(t1.ravel())
    p2, v2 = curve.evaluate(t2.ravel())
    pts = level.points.astype(float)
    N = level.count
    ph = 2 * np.pi * ((p1 - p2) @ pts.T)
    c, s = np.cos(ph), np.sin(ph)
    d1 = v1 @ pts.T
    d2 = v2 @ pts.T
    r = c.mean(axis=1)
    one_minus_r = 2 * np.mean(np.sin(ph / 2) ** 2, axis=1)
    r1 = -(2 * np.pi / N) * np.sum(s * d1, axis=1)
    r2 = (2 * np.pi / N) * np.sum(s * d2, axis=1)
    r12 = (4 * np.pi**2 / N) * np.sum(c * d1 * d2, axis=1)
    return tuple(x.reshape(shape) for x in (r, r1, r2, r12, one_minus_r))
