"""Wiener chaos projections of the nodal count and the static-regime limit laws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curve import (
    UnitSpeedCurve,
    A_functional,
    directional_energy,
    fourth_power_energy,
    is_static,
)
from .errors import DegenerateDenominator, FourthCoefficientOutOfRange, KernelNotPSD, RouteDisagreement
from .lattice import EnergyLevel, SpectralMeasure, spectral_measure
from .quadrature import gl_panels

ROUTE_RTOL = 1e-8
PSD_CLIP = 1e-10


def hermite(k: int, x):
    """Probabilists' Hermite polynomial H_k by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    h0 = np.ones_like(x)
    if k == 0:
        return h0 if h0.ndim else float(h0)
    h1 = x.copy()
    for j in range(1, k):
        h0, h1 = h1, x * h1 - j * h0
    return h1 if h1.ndim else float(h1)


@dataclass(frozen=True)
class ChaosCoefficients:
    b: dict
    a: dict


def chaos_coefficients(max_q: int = 3) -> ChaosCoefficients:
    """Expansion coefficients of delta(x) (b) and |x| (a) in Hermite polynomials."""
    s2pi = math.sqrt(2 * math.pi)
    b = {2 * q: hermite(2 * q, 0.0) / (math.factorial(2 * q) * s2pi) for q in range(max_q + 1)}
    c = math.sqrt(2 / math.pi)
    a = {2 * l: c * (-1) ** (l + 1) / (2**l * math.factorial(l) * (2 * l - 1)) for l in range(max_q + 1)}
    return ChaosCoefficients(b, a)


def zeroth_chaos(n: float, L: float) -> float:
    """sqrt(alpha) b_0 a_0 L with alpha = 2 pi^2 n, which equals sqrt(2 n) L."""
    cc = chaos_coefficients(0)
    return math.sqrt(2 * math.pi**2 * n) * cc.b[0] * cc.a[0] * L


# --- per-sample projections ----------------------------------------------------


class ChaosBasis:
    """Curve/level data shared by all samples: energies, Gram matrices, oscillatory integrals."""

    def __init__(self, level: EnergyLevel, curve: UnitSpeedCurve, panels: int | None = None, with_z2b: bool = True):
        self.level = level
        self.curve = curve
        L = curve.length
        N = level.count
        self.N = N
        self.L = L
        hp = level.half_points.astype(float)
        self.half_angles = np.arctan2(hp[:, 1], hp[:, 0])
        # 2 E(theta) - L for each half-lattice direction
        self.energy = directional_energy(curve, self.half_angles)
        # cos^2 Gram matrix over half-lattice directions
        dirs = hp / math.sqrt(level.n)
        self.gram2 = curve.integrate(lambda t, p, tan: ((tan @ dirs.T) ** 2)[:, :, None] * ((tan @ dirs.T) ** 2)[:, None, :])
        # (4/N) sum over the full lattice of ∫cos^4, both signs give the same value
        self.c4 = 8.0 / N * float(np.sum(np.diag(self.gram2)))
        if panels is None:
            # resolve the fastest oscillation exp(2 pi i <l - l', gamma>) with several panels per period
            panels = max(64, int(math.ceil(4 * math.sqrt(level.n) * L * 2)))
        self.panels = panels
        t, w, pos, tan = curve.quad_nodes(panels)
        self.t, self.w = t, w
        # 2 cos^2(phi(t) - theta) at the nodes for the W2 profile
        self.w2_basis = 2 * (tan @ dirs.T) ** 2
        self.z2_prefactor = math.sqrt(2 * math.pi**2 * level.n) / (2 * math.pi)
        self.J = self._oscillatory_matrix(pos, tan, w) if with_z2b else None

    def _oscillatory_matrix(self, pos, tan, w):
        pts = self.level.points.astype(float)
        E = np.exp(2j * np.pi * (pos @ pts.T))
        D = tan @ (pts / math.sqrt(self.level.n)).T
        DE = D * E
        J = 2 * (DE.T * w) @ np.conj(DE) - (E.T * w) @ np.conj(E)
        np.fill_diagonal(J, 0.0)
        return J

    def W1(self, coeffs: np.ndarray) -> np.ndarray:
        x = np.abs(np.atleast_2d(coeffs)) ** 2 - 1
        return x.sum(axis=1) / math.sqrt(self.N / 2)

    def _weights(self, coeffs):
        return (np.abs(np.atleast_2d(coeffs)) ** 2 - 1) / math.sqrt(self.N / 2)

    def W2_profile(self, coeffs: np.ndarray) -> np.ndarray:
        """W2 at the quadrature nodes ``self.t``; shape (batch, nodes)."""
        return self._weights(coeffs) @ self.w2_basis.T


@dataclass
class ChaosProjection:
    z0: float
    z2a: np.ndarray
    z2b: np.ndarray | None
    z4a: np.ndarray
    z4a_static: np.ndarray | None
    W1: np.ndarray
    int_W2: np.ndarray
    residual: np.ndarray


def project_2(basis: ChaosBasis, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Second-chaos parts (z2a, z2b) for a batch of coefficient rows."""
    coeffs = np.atleast_2d(coeffs)
    x = np.abs(coeffs) ** 2 - 1
    z2a = basis.z2_prefactor * (2.0 / basis.N) * (x @ (2 * basis.energy - basis.L))
    z2b = None
    if basis.J is not None:
        full = np.concatenate([coeffs, np.conj(coeffs)], axis=1)
        q = np.einsum("bi,ij,bj->b", full, basis.J, np.conj(full))
        z2b = basis.z2_prefactor / basis.N * q.real
    return z2a, z2b


def W_functionals(basis: ChaosBasis, coeffs: np.ndarray):
    """W1, the W2 profile at the quadrature nodes, ∫W2 and the residual (1/L)∫W2 - W1."""
    W1 = basis.W1(coeffs)
    prof = basis.W2_profile(coeffs)
    int_w2 = prof @ basis.w
    return W1, prof, int_w2, int_w2 / basis.L - W1


def project_4(basis: ChaosBasis, coeffs: np.ndarray, check_routes: bool | None = None):
    """Fourth-chaos leading part via the X/Y/Z decomposition.

    For static curves the variance-form route is evaluated on the quadrature
    grid as well and compared; returns (z4a, z4a_static or None).
    """
    coeffs = np.atleast_2d(coeffs)
    N, L = basis.N, basis.L
    x = basis._weights(coeffs)
    W1 = x.sum(axis=1)
    int_w2 = x @ (2 * basis.energy)
    int_w2sq = 4 * np.einsum("bi,ij,bj->b", x, basis.gram2, x)
    X = 6 * L / N * (W1**2 - 1)
    Y = 6.0 / N * (int_w2sq - basis.c4)
    Z = 2.0 / N * (W1 * int_w2 - L)
    z4a = math.sqrt(2 * basis.level.n) / 24 * (3 * X - Y - 6 * Z)
    if check_routes is None:
        check_routes = is_static(basis.curve)
    z4s = None
    if check_routes:
        prof = basis.W2_profile(coeffs)
        mean = (prof @ basis.w) / L
        spread = ((prof - mean[:, None]) ** 2) @ basis.w
        z4s = math.sqrt(2 * basis.level.n) / (4 * N) * (-spread + basis.c4 - L)
        scale = math.sqrt(2 * basis.level.n) / (4 * N) * max(1.0, L)
        gap = np.max(np.abs(z4s - z4a) / (scale * (1 + np.abs(int_w2sq))))
        if gap > ROUTE_RTOL:
            raise RouteDisagreement(f"static and X/Y/Z routes differ by {gap:.3e}")
    return z4a, z4s


def project_all(basis: ChaosBasis, coeffs: np.ndarray) -> ChaosProjection:
    z2a, z2b = project_2(basis, coeffs)
    W1, _, int_w2, res = W_functionals(basis, coeffs)
    z4a, z4s = project_4(basis, coeffs)
    return ChaosProjection(zeroth_chaos(basis.level.n, basis.L), z2a, z2b, z4a, z4s, W1, int_w2, res)


def chaos_variances(level: EnergyLevel, curve: UnitSpeedCurve) -> dict:
    """Leading-order variance predictions for the individual chaoses."""
    from .curve import B_functional

    mu = spectral_measure(level)
    L, N, n = curve.length, level.count, level.n
    A = A_functional(curve, mu)
    B = B_functional(curve, mu)
    return {
        "z2a": n / N * (4 * B - L * L),
        "z4a": n / (4 * N * N) * (16 * A + 24 * B - 7 * L * L),
        "A": A,
        "B": B,
    }


def exact_chaos_variances(level: EnergyLevel, curve: UnitSpeedCurve, basis: ChaosBasis | None = None) -> dict:
    """Finite-N variances of z2a and z4a.

    Both are polynomials in y = |a|^2 - 1, iid centred Exp(1) with
    variance 1, third moment 2 and fourth moment 9, so
    Var(y^T M y) = 2 tr(M^2) + 6 sum M_ii^2 and Cov(y^T M y, c^T y) = 2 sum M_ii c_i.
    The covariance with z2a is nonzero at finite N because the leading
    fourth-chaos term is not an exact chaos projection.
    """
    if basis is None:
        basis = ChaosBasis(level, curve, with_z2b=False)
    N, L = basis.N, basis.L
    e = 2 * basis.energy
    v2 = (basis.z2_prefactor * 2.0 / N) ** 2 * float(np.sum((e - L) ** 2))
    h = len(e)
    one = np.ones(h)
    M = (18 * L / N) * np.outer(one, one) - (24.0 / N) * basis.gram2 - (6.0 / N) * (np.outer(one, e) + np.outer(e, one))
    M = M / (N / 2)
    c = 2 * level.n / 576
    gauss = c * 2 * float(np.sum(M * M))
    v4 = gauss + c * 6 * float(np.sum(np.diag(M) ** 2))
    lin = basis.z2_prefactor * 2.0 / N * (e - L)
    cov = c**0.5 * 2 * float(np.sum(np.diag(M) * lin))
    return {"z2a": v2, "z4a": v4, "z4a_gaussian_part": gauss, "cov_z2a_z4a": cov}


# --- limit laws -------------------------------------------------------------------


def sample_limit_M(coeffs, denom: float, rng: np.random.Generator, size: int = 1, normalization: str = "unit") -> np.ndarray:
    """Draws of the quadratic form a1 (Z1^2 - 1) + a2 (Z2^2 - 1) + a3 Z1 Z2 over sqrt(denom).

    ``normalization="printed"`` returns exactly that; ``"unit"`` returns its
    negative divided by sqrt(2), which is the unit-variance law the
    standardized fourth chaos converges to.
    """
    if not denom > 0:
        raise DegenerateDenominator(f"16A - L^2 = {denom} must be positive")
    a1, a2, a3 = coeffs
    z = rng.standard_normal((size, 2))
    q = (a1 * (z[:, 0] ** 2 - 1) + a2 * (z[:, 1] ** 2 - 1) + a3 * z[:, 0] * z[:, 1]) / math.sqrt(denom)
    if normalization == "printed":
        return q
    if normalization == "unit":
        return -q / math.sqrt(2.0)
    raise ValueError("normalization must be 'unit' or 'printed'")


def sample_circle_law(rng: np.random.Generator, size: int) -> np.ndarray:
    """1 - (Z1^2 + Z2^2)/2."""
    z = rng.standard_normal((size, 2))
    return 1 - 0.5 * np.sum(z * z, axis=1)


def _measure_atoms(measure):
    if isinstance(measure, EnergyLevel):
        measure = spectral_measure(measure)
    return measure.angles, measure.weights


class LimitProcess:
    """Gaussian process W2(mu) on a Gauss-Legendre t-grid, factored by eigendecomposition."""

    def __init__(self, curve: UnitSpeedCurve, measure: SpectralMeasure | EnergyLevel, grid_size: int = 512):
        self.curve = curve
        self.grid_size = grid_size
        L = curve.length
        ang, wmu = _measure_atoms(measure)
        t, w = gl_panels(0.0, L, max(1, grid_size // 8))
        _, tan = curve.evaluate(t)
        C = (tan @ np.stack([np.cos(ang), np.sin(ang)], axis=0)) ** 2
        K = 4 * (C * wmu) @ C.T
        vals, vecs = np.linalg.eigh(K)
        top = float(np.max(vals))
        if np.min(vals) < -PSD_CLIP * max(top, 1.0):
            raise KernelNotPSD(f"kernel eigenvalue {np.min(vals):.3e} below clip threshold")
        keep = vals > PSD_CLIP * max(top, 1.0)
        self.factor = vecs[:, keep] * np.sqrt(vals[keep])
        self.t, self.w = t, w
        self.deterministic = 4 * fourth_power_energy(curve, measure) - L
        self.denom = 16 * A_functional(curve, measure) - L * L
        # exact mean of the spread functional on this grid
        Wc = self.factor - (w @ self.factor)[None, :] / L
        self.mean_spread = float(np.sum(w[:, None] * Wc * Wc))

    def spread(self, z: np.ndarray) -> np.ndarray:
        W = z @ self.factor.T
        m = (W @ self.w) / self.curve.length
        return ((W - m[:, None]) ** 2) @ self.w


def sample_limit_I(
    curve: UnitSpeedCurve,
    measure: SpectralMeasure | EnergyLevel,
    rng: np.random.Generator,
    size: int = 1,
    grid_size: int = 512,
    normalization: str = "unit",
    chunk: int = 20000,
    tol: float = 1e-3,
) -> np.ndarray:
    """Draws of (-∫(W2 - mean W2)^2 + 4∫∫<theta,gamma'>^4 - L) / sqrt(16A - L^2).

    The grid is doubled until the exact mean of the functional moves by less
    than ``tol``.  ``normalization="unit"`` divides by sqrt(2) so the law has
    unit variance.
    """
    proc = LimitProcess(curve, measure, grid_size)
    for _ in range(6):
        finer = LimitProcess(curve, measure, 2 * proc.grid_size)
        if abs(finer.mean_spread - proc.mean_spread) < tol:
            break
        proc = finer
    if not proc.denom > 0:
        raise DegenerateDenominator(f"16A - L^2 = {proc.denom} must be positive")
    out = np.empty(size)
    rank = proc.factor.shape[1]
    for i in range(0, size, chunk):
        m = min(chunk, size - i)
        z = rng.standard_normal((m, rank))
        out[i:i + m] = (-proc.spread(z) + proc.deterministic) / math.sqrt(proc.denom)
    if normalization == "printed":
        return out
    if normalization == "unit":
        return out / math.sqrt(2.0)
    raise ValueError("normalization must be 'unit' or 'printed'")


def diagonalize_N(mu_hat4: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Covariance of (N1, N2, N3) and its eigen-decomposition (ascending eigenvalues)."""
    mu = float(np.real(mu_hat4))
    if abs(mu) > 1 + 1e-12:
        raise FourthCoefficientOutOfRange(f"|mu_hat(4)| = {abs(mu)} > 1")
    S = np.array([
        [(3 + mu) / 8, (1 - mu) / 8, 0.0],
        [(1 - mu) / 8, (3 + mu) / 8, 0.0],
        [0.0, 0.0, (1 - mu) / 8],
    ])
    vals, vecs = np.linalg.eigh(S)
    return S, vals, vecs


def closed_form_N_eigenvalues(mu_hat4: float) -> np.ndarray:
    mu = float(np.real(mu_hat4))
    return np.sort([(1 + mu) / 4, 0.5, (1 - mu) / 8])
