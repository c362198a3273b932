"""Lattice points on circles, their angular measures and lattice correlation sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.signal import fftconvolve

from .errors import LevelTooLarge, NotRepresentable

#: largest N for which tuple counts are computed directly
MAX_DIRECT_N = 64

#: equispaced atoms used to represent the uniform measure; exact for
#: trigonometric integrands of degree < UNIFORM_NODES
UNIFORM_NODES = 64


def is_representable(n: int) -> bool:
    """True iff ``n`` is a sum of two squares (trial division)."""
    if n < 0:
        return False
    if n == 0:
        return True
    m = n
    p = 2
    while p * p <= m:
        if m % p == 0:
            e = 0
            while m % p == 0:
                m //= p
                e += 1
            if p % 4 == 3 and e % 2 == 1:
                return False
        p += 1 if p == 2 else 2
    # leftover m is 1 or a prime
    return not (m > 1 and m % 4 == 3)


@dataclass(frozen=True, eq=False)
class EnergyLevel:
    """An admissible n with its lattice points sorted by angle."""

    n: int
    points: np.ndarray  # (N, 2) int
    half_points: np.ndarray  # (N/2, 2) int

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def eigenvalue(self) -> float:
        return 4.0 * math.pi**2 * self.n

    @cached_property
    def angles(self) -> np.ndarray:
        return np.mod(np.arctan2(self.points[:, 1], self.points[:, 0]), 2 * np.pi)

    @cached_property
    def half_angles(self) -> np.ndarray:
        return np.mod(np.arctan2(self.half_points[:, 1], self.half_points[:, 0]), 2 * np.pi)

    @cached_property
    def directions(self) -> np.ndarray:
        return self.points / math.sqrt(self.n)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "N": self.count,
            "points": self.points.tolist(),
            "half_points": self.half_points.tolist(),
        }


def enumerate_level(n: int) -> EnergyLevel:
    if n <= 0 or not is_representable(n):
        raise NotRepresentable(f"{n} is not a positive sum of two squares")
    s = math.isqrt(n)
    pts = []
    for x in range(-s, s + 1):
        y2 = n - x * x
        y = math.isqrt(y2)
        if y * y == y2:
            pts.append((x, y))
            if y:
                pts.append((x, -y))
    pts = np.array(pts, dtype=np.int64)
    ang = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
    pts = pts[np.argsort(ang, kind="stable")]

    half = pts[:, 1] > 0
    if s * s == n:
        half |= (pts[:, 0] == s) & (pts[:, 1] == 0)
    return EnergyLevel(n=n, points=pts, half_points=pts[half])


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Probability measure on the unit circle, stored by its atoms.

    ``kind`` is one of ``atomic``, ``uniform``, ``cilleruelo`` or
    ``tilted-cilleruelo``.  The uniform measure is represented by
    ``UNIFORM_NODES`` equispaced atoms, which integrates every trigonometric
    polynomial of degree below that exactly.
    """

    kind: str
    angles: np.ndarray
    weights: np.ndarray
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def fourth_coefficient(self) -> complex:
        if "mu4" not in self._cache:
            self._cache["mu4"] = mu_hat(self, 4)
        return self._cache["mu4"]

    def describe(self) -> str:
        return self.label or self.kind


def atomic_measure(angles, weights=None, label: str = "") -> SpectralMeasure:
    angles = np.mod(np.asarray(angles, dtype=float), 2 * np.pi)
    if weights is None:
        weights = np.full(len(angles), 1.0 / len(angles))
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    return SpectralMeasure("atomic", angles, weights, label)


def uniform_measure() -> SpectralMeasure:
    ang = 2 * np.pi * np.arange(UNIFORM_NODES) / UNIFORM_NODES
    return SpectralMeasure("uniform", ang, np.full(UNIFORM_NODES, 1.0 / UNIFORM_NODES), "uniform")


def cilleruelo_measure(tilted: bool = False) -> SpectralMeasure:
    ang = np.pi / 2 * np.arange(4) + (np.pi / 4 if tilted else 0.0)
    kind = "tilted-cilleruelo" if tilted else "cilleruelo"
    return SpectralMeasure(kind, ang, np.full(4, 0.25), kind)


def spectral_measure(level: EnergyLevel) -> SpectralMeasure:
    N = level.count
    return SpectralMeasure("atomic", level.angles.copy(), np.full(N, 1.0 / N), f"level:{level.n}")


def mu_hat(measure: SpectralMeasure, k: int) -> complex:
    """k-th Fourier coefficient ``sum_j w_j exp(-i k theta_j)``."""
    if measure.kind == "uniform":
        return complex(1.0 if k == 0 else 0.0)
    val = np.sum(measure.weights * np.exp(-1j * k * measure.angles))
    # kill rounding noise so that symmetric measures return exact zeros/reals
    re = 0.0 if abs(val.real) < 1e-14 else float(val.real)
    im = 0.0 if abs(val.imag) < 1e-14 else float(val.imag)
    return complex(re, im)


def separation_stats(level: EnergyLevel, delta: float) -> tuple[float, bool]:
    """Minimal distance between distinct lattice points and the delta-separation flag.

    The implied constant in the separation condition is fixed to 1.
    """
    p = level.points.astype(float)
    d = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    min_sep = float(d.min())
    return min_sep, bool(min_sep >= level.n ** (0.25 + delta))


def _check_cap(level: EnergyLevel, cap: int) -> None:
    if level.count > cap:
        raise LevelTooLarge(f"N={level.count} exceeds the cap {cap}")


def _encode(v: np.ndarray, off: int) -> np.ndarray:
    w = 2 * off + 1
    return (v[..., 0] + off) * w + (v[..., 1] + off)


def _sum_counts(level: EnergyLevel, m: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Distinct m-fold sums (encoded) and how many ordered tuples hit each."""
    pts = level.points
    s = math.isqrt(level.n) + 1
    acc = pts
    for _ in range(m - 1):
        acc = (acc[:, None, :] + pts[None, :, :]).reshape(-1, 2)
    off = m * s
    keys, counts = np.unique(_encode(acc, off), return_counts=True)
    return keys, counts, off


def spectral_correlations(level: EnergyLevel, order: int, cap: int = MAX_DIRECT_N) -> int:
    """Number of ordered ``order``-tuples of lattice points summing to zero.

    Uses sum-hashing: |S_{2m}| = sum_v c_m(v) c_m(-v).
    """
    if order not in (4, 6):
        raise ValueError("order must be 4 or 6")
    _check_cap(level, cap)
    keys, counts, off = _sum_counts(level, order // 2)
    w = 2 * off + 1
    x = keys // w - off
    y = keys % w - off
    neg = _encode(np.stack([-x, -y], axis=-1), off)
    idx = np.searchsorted(keys, neg)
    idx = np.clip(idx, 0, len(keys) - 1)
    hit = keys[idx] == neg
    return int(np.sum(counts[hit] * counts[idx[hit]]))


def _sum_grid(level: EnergyLevel, m: int) -> tuple[np.ndarray, int]:
    """Counts of m-fold sums on the grid [-m s, m s]^2 (s = floor sqrt n)."""
    s = math.isqrt(level.n)
    base = np.zeros((2 * s + 1, 2 * s + 1))
    np.add.at(base, (level.points[:, 0] + s, level.points[:, 1] + s), 1.0)
    grid = base
    for _ in range(m - 1):
        grid = np.rint(fftconvolve(grid, base))
    return grid, m * s


def offdiagonal_sums(level: EnergyLevel, order: int, cap: int = MAX_DIRECT_N) -> tuple[float, float]:
    """Minimal nonzero norm of an ``order``-fold sum, and the normalised reciprocal sum.

    The reciprocal sum runs over ordered tuples with nonzero sum and is
    divided by ``N**(order - 2)``.
    """
    if order not in (4, 6):
        raise ValueError("order must be 4 or 6")
    _check_cap(level, cap)
    half, _ = _sum_grid(level, order // 2)
    grid = np.rint(fftconvolve(half, half))
    off = (grid.shape[0] - 1) // 2
    ax = np.arange(-off, off + 1, dtype=float)
    norm = np.hypot(ax[:, None], ax[None, :])
    mask = (grid > 0.5) & (norm > 0)
    min_norm = float(norm[mask].min())
    recip = float(np.sum(grid[mask] / norm[mask])) / level.count ** (order - 2)
    return min_norm, recip


def direction_identity_check(level: EnergyLevel, z) -> float:
    """``(1/N) sum <z, lambda/|lambda|>^2 - |z|^2/2``; vanishes identically."""
    z = np.asarray(z, dtype=float)
    proj = level.directions @ z
    return float(np.mean(proj**2) - 0.5 * (z @ z))


def lattice_report(n: int, delta: float = 0.05, order: int | None = None) -> dict:
    level = enumerate_level(n)
    out = {"n": n, "N": level.count, "points": level.points.tolist()}
    if level.count >= 2:
        min_sep, flag = separation_stats(level, delta)
        out.update(min_sep=min_sep, delta=delta, delta_separated=flag)
    mu4 = mu_hat(spectral_measure(level), 4)
    out["mu_hat4"] = mu4.real if mu4.imag == 0 else [mu4.real, mu4.imag]
    orders = (4, 6) if order is None else (order,)
    if level.count <= MAX_DIRECT_N:
        for o in orders:
            out[f"s{o}"] = spectral_correlations(level, o)
        out["offdiag"] = {}
        for o in orders:
            mn, rs = offdiagonal_sums(level, o)
            out["offdiag"][str(o)] = {"min_nonzero_norm": mn, "reciprocal_sum": rs}
    return out
