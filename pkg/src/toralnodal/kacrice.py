"""Kac-Rice two-point correlation, its Taylor form, numeric variance and moment integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curve import UnitSpeedCurve, A_functional, B_functional, F_functional, is_static
from .errors import NearDiagonal, NonPositiveDiscriminant, QuadratureNotConverged, RegimeMismatch
from .lattice import EnergyLevel, spectral_measure
from .quadrature import gl_panels

NEAR_DIAGONAL_EPS = 1e-3
SINGULAR_LEVEL = 0.5


def K1(n: float) -> float:
    """First intensity: sqrt(2 n) zeros per unit length."""
    return math.sqrt(2 * n)


def alpha_of(n: float) -> float:
    return 2 * math.pi**2 * n


@dataclass
class CorrelationPoint:
    t1: float
    t2: float
    r: float
    r1: float
    r2: float
    r12: float
    alpha: float
    one_minus_r: float | None = None

    @property
    def normalized(self) -> tuple[float, float, float, float]:
        sa = math.sqrt(self.alpha)
        return self.r, self.r1 / sa, self.r2 / sa, self.r12 / self.alpha


def correlation_point(level: EnergyLevel, curve: UnitSpeedCurve, t1: float, t2: float) -> CorrelationPoint:
    from .field import covariance_bundle

    r, r1, r2, r12, omr = covariance_bundle(level, curve, t1, t2)
    return CorrelationPoint(float(t1), float(t2), float(r), float(r1), float(r2), float(r12), alpha_of(level.n), float(omr))


def k2_exact_arrays(r, r1, r2, r12, alpha, one_minus_r=None):
    """Vectorized two-point correlation without domain checks.

    ``one_minus_r`` (if given) keeps 1 - r^2 accurate near the diagonal.
    """
    r = np.asarray(r, dtype=float)
    omr = (1 - r) if one_minus_r is None else np.asarray(one_minus_r, dtype=float)
    d = omr * (2 - omr)  # 1 - r^2
    q1 = alpha * d - np.asarray(r1) ** 2
    q2 = alpha * d - np.asarray(r2) ** 2
    mu = np.sqrt(np.maximum(q1, 0.0)) * np.sqrt(np.maximum(q2, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = (r12 * d + r * r1 * r2) / mu
    rho = np.clip(np.nan_to_num(rho), -1.0, 1.0)
    return mu * (np.sqrt(1 - rho * rho) + rho * np.arcsin(rho)) / (math.pi**2 * d**1.5)


def K2_exact(point: CorrelationPoint | None = None, alpha: float | None = None, *, r=None, r1=None, r2=None, r12=None,
             eps: float = NEAR_DIAGONAL_EPS) -> float:
    """Two-point correlation of zeros from covariance data at one point."""
    if point is not None:
        r, r1, r2, r12 = point.r, point.r1, point.r2, point.r12
        alpha = point.alpha if alpha is None else alpha
    if abs(r) > 1 - eps:
        raise NearDiagonal(f"|r| = {abs(r)} exceeds 1 - {eps}")
    d = 1 - r * r
    if alpha * d - r1 * r1 <= 0 or alpha * d - r2 * r2 <= 0:
        raise NonPositiveDiscriminant("conditional derivative variance is not positive")
    return float(k2_exact_arrays(r, r1, r2, r12, alpha))


def k2_taylor_arrays(r, r1, r2, r12, alpha):
    """Fourth-order expansion of the two-point correlation in normalized covariances."""
    sa = math.sqrt(alpha)
    a = np.asarray(r1) / sa
    b = np.asarray(r2) / sa
    c = np.asarray(r12) / alpha
    r = np.asarray(r)
    poly = (
        1
        + 0.5 * c**2 + 0.5 * r**2 - 0.5 * b**2 - 0.5 * a**2
        + 3 / 8 * r**4 + c**4 / 24 - b**4 / 8 - a**4 / 8
        + c * r * a * b + a**2 * b**2 / 4
        - 0.75 * r**2 * b**2 - 0.75 * r**2 * a**2
        + 0.25 * c**2 * r**2 + 0.25 * b**2 * c**2 + 0.25 * a**2 * c**2
    )
    return alpha / math.pi**2 * poly


def K2_taylor(point: CorrelationPoint | None = None, alpha: float | None = None, *, r=None, r1=None, r2=None, r12=None) -> float:
    if point is not None:
        r, r1, r2, r12 = point.r, point.r1, point.r2, point.r12
        alpha = point.alpha if alpha is None else alpha
    return float(k2_taylor_arrays(r, r1, r2, r12, alpha))


def taylor_error_slope(alpha: float, direction=(0.8, 0.5, -0.6, 0.7), scales=None) -> tuple[float, np.ndarray, np.ndarray]:
    """Log-log slope of |K2_exact - K2_taylor| when the normalized covariances are scaled by s."""
    if scales is None:
        scales = np.geomspace(0.05, 0.3, 12)
    s = np.asarray(scales, dtype=float)
    r0, a0, b0, c0 = direction
    sa = math.sqrt(alpha)
    r, r1, r2, r12 = s * r0, s * a0 * sa, s * b0 * sa, s * c0 * alpha
    err = np.abs(k2_exact_arrays(r, r1, r2, r12, alpha) - k2_taylor_arrays(r, r1, r2, r12, alpha))
    slope = float(np.polyfit(np.log(s), np.log(err), 1)[0])
    return slope, s, err


def approx_integrand(r, r1, r2, r12, alpha):
    """Fourth-order static integrand of the approximate Kac-Rice variance (without the factor n)."""
    sa = math.sqrt(alpha)
    a = r1 / sa
    b = r2 / sa
    c = r12 / alpha
    return (
        0.75 * r**4 + c**4 / 12 - b**4 / 4 - a**4 / 4
        + 2 * c * r * a * b + a**2 * b**2 / 2
        - 1.5 * r**2 * b**2 - 1.5 * r**2 * a**2
        + 0.5 * c**2 * r**2 + 0.5 * b**2 * c**2 + 0.5 * a**2 * c**2
    )


# --- covariance tables on tensor grids -------------------------------------------------


class _Tables:
    """Lattice phase tables at a set of curve points; tensor products give r and its derivatives."""

    def __init__(self, level: EnergyLevel, pos: np.ndarray, tan: np.ndarray):
        pts = level.points.astype(float)
        ph = 2 * np.pi * (pos @ pts.T)
        self.C = np.cos(ph)
        self.S = np.sin(ph)
        self.D = tan @ pts.T
        self.N = level.count


def tensor_bundle(level: EnergyLevel, pos1, tan1, pos2=None, tan2=None):
    """r, r1, r2, r12 on the grid (points 1) x (points 2) via matrix products."""
    A = _Tables(level, pos1, tan1)
    B = A if pos2 is None else _Tables(level, pos2, tan2)
    N = A.N
    k = 2 * math.pi
    r = (A.C @ B.C.T + A.S @ B.S.T) / N
    r1 = -(k / N) * ((A.S * A.D) @ B.C.T - (A.C * A.D) @ B.S.T)
    r2 = (k / N) * (A.S @ (B.C * B.D).T - A.C @ (B.S * B.D).T)
    r12 = (k * k / N) * ((A.C * A.D) @ (B.C * B.D).T + (A.S * A.D) @ (B.S * B.D).T)
    return r, r1, r2, r12


def _axis_nodes(curve: UnitSpeedCurve, m: int):
    """Periodic trapezoid nodes for closed curves, Gauss-Legendre otherwise."""
    if curve.closed:
        t = np.linspace(0.0, curve.length, m, endpoint=False)
        w = np.full(m, curve.length / m)
    else:
        t, w = gl_panels(0.0, curve.length, max(1, m // 8))
    return t, w


# --- singular squares ------------------------------------------------------------------


@dataclass
class SquarePartition:
    c0: float
    k: int
    delta0: float
    singular: np.ndarray  # (k, k) bool
    halvings: int

    @property
    def singular_fraction(self) -> float:
        return float(self.singular.mean())

    @property
    def singular_area(self) -> float:
        return float(self.singular.sum()) * self.delta0**2

    @property
    def diagonal_singular(self) -> bool:
        return bool(np.all(np.diag(self.singular)))

    def to_dict(self, N: int | None = None) -> dict:
        d = {
            "c0": self.c0, "k": self.k, "delta0": self.delta0, "halvings": self.halvings,
            "singular_fraction": self.singular_fraction, "singular_area": self.singular_area,
        }
        if N is not None:
            d["singular_area_times_N2"] = self.singular_area * N * N
        return d


def _row_blocks(total: int, per_row: int, budget: int = 4_000_000):
    step = max(1, budget // max(1, per_row))
    for i0 in range(0, total, step):
        yield i0, min(total, i0 + step)


def _square_max_abs_r(level, curve, t, group_of):
    """max |r| over the nodes ``t`` grouped into squares by the index map ``group_of``."""
    k = int(group_of.max()) + 1
    pos, tan = curve.evaluate(t)
    tab = _Tables(level, pos, tan)
    out = np.zeros((k, k))
    for i0, i1 in _row_blocks(len(t), len(t)):
        a = np.abs(tab.C[i0:i1] @ tab.C.T + tab.S[i0:i1] @ tab.S.T) / tab.N
        # reduce columns then rows into squares
        cols = np.zeros((i1 - i0, k))
        np.maximum.at(cols.T, group_of, a.T)
        np.maximum.at(out, group_of[i0:i1], cols)
    return out


def _lattice_nodes(L, k, sub):
    """Corner and interior lattice nodes; nodes on square edges belong to both neighbours."""
    t = np.linspace(0.0, L, k * sub + 1)
    idx = np.arange(k * sub + 1)
    inner = np.minimum(idx // sub, k - 1)
    # duplicate shared edge nodes so each square sees its own boundary
    edge = (idx % sub == 0) & (idx > 0) & (idx < k * sub)
    t_all = np.concatenate([t, t[edge]])
    g_all = np.concatenate([inner, idx[edge] // sub - 1])
    return t_all, g_all


def square_partition(level: EnergyLevel, curve: UnitSpeedCurve, c0: float = 0.5, sub: int = 2,
                     q: int = 8, max_halvings: int = 6) -> SquarePartition:
    """Split [0,L]^2 into k x k squares, k = floor(L sqrt(E)/c0) + 1, and flag |r| > 1/2 squares.

    Flags come from a (sub+1)^2 node lattice per square.  c0 is halved until
    no unflagged square has |r| > 1/2 at any of its q x q Gauss-Legendre nodes.
    """
    sqrtE = math.sqrt(level.eigenvalue)
    L = curve.length
    for h in range(max_halvings + 1):
        k = int(math.floor(L * sqrtE / c0)) + 1
        t, g = _lattice_nodes(L, k, sub)
        flags = _square_max_abs_r(level, curve, t, g) > SINGULAR_LEVEL
        tq, _ = gl_panels(0.0, L, k, order=q)
        gq = np.repeat(np.arange(k), q)
        missed = (_square_max_abs_r(level, curve, tq, gq) > SINGULAR_LEVEL) & ~flags
        if not np.any(missed):
            return SquarePartition(c0, k, L / k, flags, h)
        if h < max_halvings:
            c0 /= 2
    return SquarePartition(c0, k, L / k, flags | missed, max_halvings)


# --- numeric Kac-Rice variance -------------------------------------------------------


@dataclass
class KacRiceVariance:
    variance: float
    pair_integral: float
    mean: float
    h_min: float
    band: float
    band_change: float
    resolution: tuple
    converged: bool
    partition: SquarePartition | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "variance": self.variance, "pair_integral": self.pair_integral, "mean": self.mean,
            "h_min": self.h_min, "band_contribution": self.band, "band_change_on_halving": self.band_change,
            "resolution": list(self.resolution), "converged": self.converged,
        }
        if self.partition is not None:
            d["partition"] = self.partition.to_dict(self.diagnostics.get("N"))
        d.update(self.diagnostics)
        return d


def _line_integrals(level, curve, t1, w1, p1, v1, tau, u_nodes=None, chunk_points=400_000):
    """G(tau) = ∫ (K2 - K1^2)(t1, t1 + tau) dt1 for each tau."""
    alpha = alpha_of(level.n)
    k1sq = 2.0 * level.n
    pts = level.points.astype(float)
    N = level.count
    out = np.empty(len(tau))
    per = max(1, chunk_points // max(1, len(t1) if u_nodes is None else len(u_nodes[0])))
    for i0 in range(0, len(tau), per):
        tc = tau[i0:i0 + per]
        if curve.closed:
            t2 = (t1[None, :] + tc[:, None]).ravel()
            P1 = np.broadcast_to(p1, (len(tc),) + p1.shape).reshape(-1, 2)
            V1 = np.broadcast_to(v1, (len(tc),) + v1.shape).reshape(-1, 2)
            W = np.broadcast_to(w1, (len(tc), len(w1)))
        else:
            u, wu = u_nodes
            span = curve.length - tc
            ta = (u[None, :] * span[:, None]).ravel()
            t2 = ta + np.repeat(tc, len(u))
            P1, V1 = curve.evaluate(ta)
            W = wu[None, :] * span[:, None]
        p2, v2 = curve.evaluate(t2)
        ph = 2 * np.pi * ((P1 - p2) @ pts.T)
        c = np.cos(ph)
        s = np.sin(ph)
        d1 = V1 @ pts.T
        d2 = v2 @ pts.T
        r = c.mean(axis=1)
        omr = 2 * np.mean(np.sin(ph / 2) ** 2, axis=1)
        r1 = -(2 * np.pi / N) * np.sum(s * d1, axis=1)
        r2 = (2 * np.pi / N) * np.sum(s * d2, axis=1)
        r12 = (4 * np.pi**2 / N) * np.sum(c * d1 * d2, axis=1)
        k2 = k2_exact_arrays(r, r1, r2, r12, alpha, omr)
        vals = (k2 - k1sq).reshape(len(tc), -1)
        out[i0:i0 + len(tc)] = np.sum(W * vals, axis=1)
    return out


def _band(line, h):
    """∫_0^h G by quadratic extrapolation from G(h), G(2h), G(3h)."""
    taus = np.array([h, 2 * h, 3 * h])
    g = np.asarray(line(taus))
    coef = np.polyfit(taus, g, 2)
    P = np.polyint(coef)
    return float(np.polyval(P, h) - np.polyval(P, 0.0))


def _band_refined(line, h):
    """Same band with the extrapolation edge moved to h/2 and [h/2, h] integrated directly."""
    x, w = gl_panels(h / 2, h, 1)
    return _band(line, h / 2) + float(np.sum(w * np.asarray(line(x))))


def variance_numeric(
    level: EnergyLevel,
    curve: UnitSpeedCurve,
    c0: float | None = 0.5,
    rtol: float = 1e-3,
    max_doublings: int = 4,
    h_min: float | None = None,
) -> KacRiceVariance:
    """Var(Z) = ∫∫ K2 + E[Z] - E[Z]^2 by quadrature in (t1, tau = t2 - t1) coordinates.

    Closed curves use the periodic trapezoid rule in t1 and Gauss-Legendre
    panels in tau on [h_min, L - h_min]; the two bands next to the diagonal are
    filled by quadratic extrapolation.  Open curves use the symmetric form
    2 ∫_0^L dtau ∫_0^{L - tau} dt1.  Resolution is doubled until the variance
    settles to ``rtol``.  With ``c0`` set, the singular-square partition is
    computed as a diagnostic.
    """
    L = curve.length
    sqrtE = math.sqrt(level.eigenvalue)
    if h_min is None:
        h_min = 1e-3 / sqrtE
    mean = K1(level.n) * L
    base = max(16, int(math.ceil(2 * sqrtE * L / math.pi)))

    def estimate(m):
        if curve.closed:
            t1, w1 = _axis_nodes(curve, 2 * m)
            p1, v1 = curve.evaluate(t1)
            u_nodes = None
        else:
            t1 = w1 = p1 = v1 = None
            u_nodes = gl_panels(0.0, 1.0, max(2, m // 4))

        def line(taus):
            if curve.closed:
                return _line_integrals(level, curve, t1, w1, p1, v1, np.asarray(taus), None)
            return _line_integrals(level, curve, None, None, None, None, np.asarray(taus), u_nodes)

        if curve.closed:
            tau, wt = gl_panels(h_min, L - h_min, max(4, m // 4))
            core = float(np.sum(wt * line(tau)))

            def mirrored(x):
                return line(L - np.asarray(x))

            band = _band(line, h_min) + _band(mirrored, h_min)
            band_half = _band_refined(line, h_min) + _band_refined(mirrored, h_min)
        else:
            tau, wt = gl_panels(h_min, L, max(4, m // 4))
            core = 2 * float(np.sum(wt * line(tau)))
            band = 2 * _band(line, h_min)
            band_half = 2 * _band_refined(line, h_min)
        total = core + band
        return total, band, band_half

    m = base
    prev = estimate(m)
    converged = False
    for _ in range(max_doublings):
        m *= 2
        cur = estimate(m)
        var_prev = prev[0] + mean
        var_cur = cur[0] + mean
        if abs(var_cur - var_prev) <= rtol * abs(var_cur):
            converged = True
            prev = cur
            break
        prev = cur
    if not converged:
        raise QuadratureNotConverged(f"Kac-Rice variance did not settle to {rtol} after {max_doublings} doublings")
    total, band, band_half = prev
    part = square_partition(level, curve, c0) if c0 is not None else None
    return KacRiceVariance(
        variance=total + mean,
        pair_integral=total + mean * mean,
        mean=mean,
        h_min=h_min,
        band=band,
        band_change=abs(band - band_half),
        resolution=(m,),
        converged=converged,
        partition=part,
        diagnostics={"N": level.count},
    )


# --- approximate static variance and moments ------------------------------------------


def _masked_tensor_integral(level, curve, t, w, fn, mask_groups=None, mask=None):
    """∫∫ fn(r, r1, r2, r12) with tensor weights w x w, skipping masked square pairs."""
    pos, tan = curve.evaluate(t)
    tab = _Tables(level, pos, tan)
    N = tab.N
    k = 2 * math.pi
    CD, SD = tab.C * tab.D, tab.S * tab.D
    total = 0.0
    for i0, i1 in _row_blocks(len(t), len(t), 1_000_000):
        sl = slice(i0, i1)
        r = (tab.C[sl] @ tab.C.T + tab.S[sl] @ tab.S.T) / N
        r1 = -(k / N) * (SD[sl] @ tab.C.T - CD[sl] @ tab.S.T)
        r2 = (k / N) * (tab.S[sl] @ CD.T - tab.C[sl] @ SD.T)
        r12 = (k * k / N) * (CD[sl] @ CD.T + SD[sl] @ SD.T)
        W = np.outer(w[sl], w)
        if mask is not None:
            W = W * mask[np.ix_(mask_groups[sl], mask_groups)]
        total += float(np.sum(W * fn(r, r1, r2, r12)))
    return total


def variance_approx_static(level: EnergyLevel, curve: UnitSpeedCurve, c0: float = 0.5, q: int = 8,
                           partition: SquarePartition | None = None, exclude_singular: bool = True,
                           require_static: bool = True, rtol: float = 1e-6, max_refinements: int = 3) -> float:
    """n ∫∫ of the fourth-order static integrand over the nonsingular squares.

    Each square carries a q x q Gauss-Legendre tensor rule; all squares are
    split 2 x 2 until the total changes by less than ``rtol``.
    """
    if require_static and not is_static(curve):
        raise RegimeMismatch("the approximate static variance needs a static curve")
    if partition is None:
        partition = square_partition(level, curve, c0, q=q)
    k = partition.k
    alpha = alpha_of(level.n)
    mask = (~partition.singular).astype(float) if exclude_singular else None

    def fn(r, r1, r2, r12):
        return approx_integrand(r, r1, r2, r12, alpha)

    def estimate(split):
        t, w = gl_panels(0.0, curve.length, k * split, order=q)
        groups = np.repeat(np.arange(k), q * split)
        return level.n * _masked_tensor_integral(level, curve, t, w, fn, groups, mask)

    split = 1
    prev = estimate(split)
    for _ in range(max_refinements):
        split *= 2
        cur = estimate(split)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise QuadratureNotConverged(f"approximate variance did not settle to {rtol}")


MOMENT_ROWS = (
    "r^2", "r1^2", "r12^2",
    "r^4", "r1^4", "r12^4", "r12*r*r1*r2", "r1^2*r2^2", "r^2*r2^2", "r^2*r12^2", "r1^2*r12^2",
    "r^6", "r1^6", "r12^6",
)


def _moment_values(r, a, b, c, W):
    """Integrals of the table entries; a, b, c are r1, r2, r12 normalized by sqrt(alpha), alpha."""
    def I(x):
        return float(np.sum(W * x))

    return {
        # second moments use the 4 pi^2 n = 2 alpha normalization
        "r^2": I(r * r),
        "r1^2": I(a * a) / 2,
        "r12^2": I(c * c) / 4,
        "r^4": I(r**4),
        "r1^4": I(a**4),
        "r12^4": I(c**4),
        "r12*r*r1*r2": I(c * r * a * b),
        "r1^2*r2^2": I(a * a * b * b),
        "r^2*r2^2": I(r * r * b * b),
        "r^2*r12^2": I(r * r * c * c),
        "r1^2*r12^2": I(a * a * c * c),
        "r^6": I(r**6),
        "r1^6": I(a**6),
        "r12^6": I(c**6),
    }


def moment_predictions(level: EnergyLevel, curve: UnitSpeedCurve) -> dict:
    mu = spectral_measure(level)
    L, N = curve.length, level.count
    A = A_functional(curve, mu)
    B = B_functional(curve, mu)
    F = F_functional(curve, mu)
    N2 = N * N
    return {
        "r^2": L * L / N,
        "r1^2": L * L / (2 * N),
        "r12^2": B / N,
        "r^4": 3 * L * L / N2,
        "r1^4": 3 * L * L / N2,
        "r12^4": 48 * A / N2,
        "r12*r*r1*r2": -4 * F / N2,
        "r1^2*r2^2": (L * L + 8 * F) / N2,
        "r^2*r2^2": L * L / N2,
        "r^2*r12^2": (4 * B + 8 * F) / N2,
        "r1^2*r12^2": 4 * B / N2,
        "r^6": 0.0,
        "r1^6": 0.0,
        "r12^6": 0.0,
    }


def moment_integrals(level: EnergyLevel, curve: UnitSpeedCurve, orders=(2, 4, 6), rtol: float = 1e-8, max_doublings: int = 5) -> dict:
    """Numeric moment integrals of r and its derivatives with their predicted leading values.

    Returns a dict of rows {value, prediction, ratio}; the sixth-order rows
    are compared with the fourth-moment scale 3 L^2 / N^2 in ``ratio``.
    """
    L = curve.length
    sqrtE = math.sqrt(level.eigenvalue)
    alpha = alpha_of(level.n)
    sa = math.sqrt(alpha)

    def values(m):
        t, w = _axis_nodes(curve, m)
        pos, tan = curve.evaluate(t)
        r, r1, r2, r12 = tensor_bundle(level, pos, tan)
        return _moment_values(r, r1 / sa, r2 / sa, r12 / alpha, np.outer(w, w))

    m = max(64, 8 * int(math.ceil(sqrtE * L / math.pi)))
    prev = values(m)
    ok = False
    for _ in range(max_doublings):
        m *= 2
        cur = values(m)
        diff = max(abs(cur[key] - prev[key]) for key in cur)
        scale = max(abs(v) for v in cur.values())
        prev = cur
        if diff <= rtol * scale:
            ok = True
            break
    if not ok:
        raise QuadratureNotConverged("moment integrals did not settle")
    pred = moment_predictions(level, curve)
    N = level.count
    fourth_scale = 3 * L * L / (N * N)
    want = {2: MOMENT_ROWS[:3], 4: MOMENT_ROWS[3:11], 6: MOMENT_ROWS[11:]}
    table = {}
    for o in orders:
        for key in want[o]:
            p = pred[key]
            denom = p if p != 0 else fourth_scale
            table[key] = {"value": prev[key], "prediction": p, "ratio": prev[key] / denom}
    return table


def lipschitz_ratio(level: EnergyLevel, curve: UnitSpeedCurve, m: int = 512) -> float:
    """max |dr/dt1| / sqrt(E) over a tensor grid."""
    t, _ = _axis_nodes(curve, m)
    pos, tan = curve.evaluate(t)
    _, r1, _, _ = tensor_bundle(level, pos, tan)
    return float(np.max(np.abs(r1)) / math.sqrt(level.eigenvalue))
