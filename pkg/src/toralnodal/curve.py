"""Smooth toral curves in unit-speed parametrization and their geometric functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import CurvatureVanishes, CurveExceedsDomain, FourthCoefficientOutOfRange
from .lattice import EnergyLevel, SpectralMeasure, spectral_measure
from .quadrature import converge, gl_on_intervals, gl_panels

FAMILIES = ("circle", "ellipse", "flower")

#: start and refinement policy for the t-quadrature of curve functionals
QUAD_PANELS = 512
QUAD_RTOL = 1e-10

#: knots of the quintic spline for the arc-length inverse, and its accepted error
INVERSE_KNOTS = 8192
INVERSE_TOL = 1e-13


@dataclass(frozen=True)
class CurveSpec:
    """Geometry of a reference curve in torus units.

    ``angle`` rotates the shape about its center.  ``arc`` restricts the
    native parameter to ``[start, stop]`` (radians) and yields an open curve.
    """

    family: str = "circle"
    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.2
    a: float = 0.25
    b: float = 0.15
    r0: float = 0.2
    eps: float = 0.05
    k: int = 3
    phase: float = 0.0
    angle: float = 0.0
    arc: tuple[float, float] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown curve family {self.family!r}")

    @property
    def closed(self) -> bool:
        return self.arc is None

    @property
    def label(self) -> str:
        if self.family == "circle":
            s = f"circle(r={self.radius:g})"
        elif self.family == "ellipse":
            s = f"ellipse(a={self.a:g},b={self.b:g})"
        else:
            s = f"flower(r0={self.r0:g},eps={self.eps:g},k={self.k})"
        if self.arc is not None:
            s += f"[{self.arc[0]:g},{self.arc[1]:g}]"
        return s

    def to_dict(self) -> dict:
        d = {"family": self.family, "center": list(self.center), "angle": self.angle}
        if self.family == "circle":
            d["radius"] = self.radius
        elif self.family == "ellipse":
            d.update(a=self.a, b=self.b)
        else:
            d.update(r0=self.r0, eps=self.eps, k=self.k, phase=self.phase)
        if self.arc is not None:
            d["arc"] = list(self.arc)
        return d

    # native parametrization c(s) and its first two derivatives
    def native(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        cs, sn = np.cos(s), np.sin(s)
        if self.family == "circle":
            R = self.radius
            p = np.stack([R * cs, R * sn], axis=-1)
            d1 = np.stack([-R * sn, R * cs], axis=-1)
            d2 = -p
        elif self.family == "ellipse":
            p = np.stack([self.a * cs, self.b * sn], axis=-1)
            d1 = np.stack([-self.a * sn, self.b * cs], axis=-1)
            d2 = -p
        else:
            arg = self.k * s + self.phase
            rho = self.r0 * (1 + self.eps * np.cos(arg))
            rho1 = -self.r0 * self.eps * self.k * np.sin(arg)
            rho2 = -self.r0 * self.eps * self.k**2 * np.cos(arg)
            u = np.stack([cs, sn], axis=-1)
            up = np.stack([-sn, cs], axis=-1)
            p = rho[..., None] * u
            d1 = rho1[..., None] * u + rho[..., None] * up
            d2 = (rho2 - rho)[..., None] * u + 2 * rho1[..., None] * up
        if self.angle:
            c, s_ = math.cos(self.angle), math.sin(self.angle)
            rot = np.array([[c, -s_], [s_, c]])
            p, d1, d2 = p @ rot.T, d1 @ rot.T, d2 @ rot.T
        return p + np.asarray(self.center, dtype=float), d1, d2

    @property
    def param_range(self) -> tuple[float, float]:
        return (0.0, 2 * math.pi) if self.arc is None else (float(self.arc[0]), float(self.arc[1]))


def _speed(spec: CurveSpec, s: np.ndarray) -> np.ndarray:
    return np.linalg.norm(spec.native(s)[1], axis=-1)


@dataclass(frozen=True, eq=False)
class UnitSpeedCurve:
    """Arc-length parametrized curve with tabulated position, tangent angle and curvature.

    ``t`` runs over [0, length].  Arbitrary ``t`` values are resolved through
    a quintic spline of the arc-length inverse, verified against Newton
    inversion of the cumulative arc length at build time.
    """

    spec: CurveSpec
    length: float
    closed: bool
    t: np.ndarray
    position: np.ndarray
    phi: np.ndarray
    kappa: np.ndarray
    speed_residual: float
    inverse_error: float
    _panel_s: np.ndarray = field(repr=False)
    _panel_len: np.ndarray = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def resolution(self) -> float:
        return len(self.t) / self.length

    def _arc_to(self, s: np.ndarray, order: int = 16) -> np.ndarray:
        """Cumulative arc length at native parameter values ``s``."""
        edges = self._panel_s
        j = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, len(edges) - 2)
        x, w = gl_on_intervals(edges[j], s, order)
        return self._panel_len[j] + np.sum(w * _speed(self.spec, x), axis=-1)

    def native_param(self, t, exact: bool = False) -> np.ndarray:
        """Native parameter values at arc length ``t`` (wrapped for closed curves).

        Uses the verified spline of the inverse unless ``exact`` is set or the
        spline failed its accuracy check, in which case Newton steps on the
        cumulative arc length are taken.
        """
        t = np.asarray(t, dtype=float)
        if self.closed:
            t = np.mod(t, self.length)
        else:
            t = np.clip(t, 0.0, self.length)
        spline = self._cache.get("inverse")
        if spline is not None and not exact:
            return spline(t)
        s = np.interp(t, self._panel_len, self._panel_s)
        lo, hi = self._panel_s[0], self._panel_s[-1]
        for _ in range(30):
            step = (self._arc_to(s) - t) / _speed(self.spec, s)
            s = np.clip(s - step, lo, hi)
            if np.max(np.abs(step), initial=0.0) < 1e-15:
                break
        return s

    def evaluate(self, t, exact: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Position and unit tangent at arc length ``t``."""
        p, d1, _ = self.spec.native(self.native_param(t, exact))
        return p, d1 / np.linalg.norm(d1, axis=-1, keepdims=True)

    def curvature(self, t) -> np.ndarray:
        _, d1, d2 = self.spec.native(self.native_param(t))
        return (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]) / np.linalg.norm(d1, axis=-1) ** 3

    def quad_nodes(self, panels: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Gauss-Legendre nodes in t with weights, positions and unit tangents (cached)."""
        key = ("gl", panels)
        if key not in self._cache:
            t, w = gl_panels(0.0, self.length, panels)
            p, tan = self.evaluate(t)
            self._cache[key] = (t, w, p, tan)
        return self._cache[key]

    def integrate(self, fn, panels: int | None = None, rtol: float = QUAD_RTOL):
        """``∫_0^L fn(t, position, tangent) dt`` with panel doubling until settled."""

        def est(m):
            t, w, p, tan = self.quad_nodes(m)
            return np.tensordot(w, fn(t, p, tan), axes=(0, 0))

        if panels is not None:
            return est(panels)
        val, _, _ = converge(est, QUAD_PANELS // 2, rtol=rtol, max_doublings=5, atol=1e-14 * self.length)
        return val


def _check_geometry(spec: CurveSpec) -> None:
    lo, hi = spec.param_range
    s = np.linspace(lo, hi, 20001)
    p, d1, d2 = spec.native(s)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise CurveExceedsDomain(f"{spec.label} leaves the fundamental domain [0,1]^2")
    if spec.family == "flower" and not (0 <= spec.eps < 1):
        raise CurvatureVanishes("flower requires 0 <= eps < 1")
    kap = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / np.linalg.norm(d1, axis=-1) ** 3
    scale = np.max(np.abs(kap))
    if np.min(kap) * np.max(kap) <= 0 or np.min(np.abs(kap)) < 1e-6 * scale:
        raise CurvatureVanishes(f"curvature of {spec.label} vanishes or changes sign")


def build_unit_speed(spec: CurveSpec, nodes: int = 4096) -> UnitSpeedCurve:
    """Reparametrize ``spec`` by arc length and tabulate it on ``nodes`` points."""
    _check_geometry(spec)
    lo, hi = spec.param_range

    def panel_lengths(m):
        x, w = gl_panels(lo, hi, m, order=16)
        return (w * _speed(spec, x)).reshape(m, -1).sum(axis=1)

    def total(m):
        return np.sum(panel_lengths(m))

    L, m, ok = converge(total, 256, rtol=1e-14, max_doublings=6)
    if not ok:
        raise RuntimeError("arc length quadrature did not settle")
    L = float(L)
    panel_s = np.linspace(lo, hi, m + 1)
    cum = np.concatenate([[0.0], np.cumsum(panel_lengths(m))])
    # pin the last edge to the converged total
    cum[-1] = L

    closed = spec.closed
    t = np.linspace(0.0, L, nodes, endpoint=not closed)
    curve = UnitSpeedCurve(
        spec=spec, length=L, closed=closed, t=t,
        position=np.empty((0, 2)), phi=np.empty(0), kappa=np.empty(0),
        speed_residual=0.0, inverse_error=float("inf"), _panel_s=panel_s, _panel_len=cum,
    )
    knots = np.linspace(0.0, L, INVERSE_KNOTS + 1)
    vals = curve.native_param(knots, exact=True)
    vals[-1] = hi  # t = L wraps to 0 on closed curves
    spline = make_interp_spline(knots, vals, k=5)
    mids = 0.5 * (knots[1:] + knots[:-1])
    inv_err = float(np.max(np.abs(spline(mids) - curve.native_param(mids, exact=True))))
    if inv_err < INVERSE_TOL * (hi - lo):
        curve._cache["inverse"] = spline
    object.__setattr__(curve, "inverse_error", inv_err)
    s = curve.native_param(t, exact=True)
    p, d1, d2 = spec.native(s)
    speed = np.linalg.norm(d1, axis=-1)
    phi = np.unwrap(np.arctan2(d1[:, 1], d1[:, 0]))
    kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3
    residual = float(np.max(np.abs(curve._arc_to(s) - t)) / L)
    object.__setattr__(curve, "position", p)
    object.__setattr__(curve, "phi", phi)
    object.__setattr__(curve, "kappa", kappa)
    object.__setattr__(curve, "speed_residual", residual)
    return curve


# --- functionals -----------------------------------------------------------


def I_gamma(curve: UnitSpeedCurve) -> complex:
    """``∫ exp(2 i phi(t)) dt``; zero exactly for static curves."""
    val = curve.integrate(lambda t, p, tan: (tan[:, 0] + 1j * tan[:, 1]) ** 2)
    return complex(val)


def is_static(curve: UnitSpeedCurve, tol: float = 1e-8) -> bool:
    return abs(I_gamma(curve)) < tol * curve.length


def directional_energy(curve: UnitSpeedCurve, theta) -> np.ndarray:
    """``∫ <theta, gamma'(t)>^2 dt`` for one or several directions.

    ``theta`` is an angle (or array of angles) or a 2-vector.
    """
    th = np.asarray(theta, dtype=float)
    if th.shape == (2,):
        th = np.array(math.atan2(th[1], th[0]))
    dirs = np.stack([np.cos(th), np.sin(th)], axis=-1).reshape(-1, 2)
    val = curve.integrate(lambda t, p, tan: (tan @ dirs.T) ** 2)
    return val.reshape(th.shape) if th.shape else float(val[0])


def _measure_atoms(measure: SpectralMeasure | EnergyLevel) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(measure, EnergyLevel):
        measure = spectral_measure(measure)
    return measure.angles, measure.weights


def B_functional(curve: UnitSpeedCurve, measure: SpectralMeasure | EnergyLevel) -> float:
    """``∫ E(gamma; theta)^2 dmu(theta)`` with E the directional energy."""
    ang, w = _measure_atoms(measure)
    E = directional_energy(curve, ang)
    return float(np.sum(w * E**2))


def _cos_power_gram(curve: UnitSpeedCurve, ang: np.ndarray, power: int) -> np.ndarray:
    """Matrix ``G[i, j] = ∫ cos^p(phi - theta_i) cos^p(phi - theta_j) dt``."""
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)

    def fn(t, p, tan):
        c = (tan @ dirs.T) ** power
        return c[:, :, None] * c[:, None, :]

    return curve.integrate(fn)


def A_functional(curve: UnitSpeedCurve, measure: SpectralMeasure | EnergyLevel) -> float:
    """``∫∫ (∫ <theta,gamma'>^2 <theta',gamma'>^2 dt)^2 dmu dmu'``."""
    ang, w = _measure_atoms(measure)
    G = _cos_power_gram(curve, ang, 2)
    return float(w @ (G**2) @ w)


def F_functional(curve: UnitSpeedCurve, measure: SpectralMeasure | EnergyLevel) -> float:
    """``∫∫ (∫ <theta,gamma'> <theta',gamma'> dt)^2 dmu dmu'``."""
    ang, w = _measure_atoms(measure)
    G = _cos_power_gram(curve, ang, 1)
    return float(w @ (G**2) @ w)


@dataclass
class FGProfiles:
    t: np.ndarray
    f: np.ndarray
    g: np.ndarray
    int_f2: float
    int_g2: float
    int_fg: float
    mean_f: float
    mean_g: float


def fg_profiles(curve: UnitSpeedCurve) -> FGProfiles:
    """Centered profiles f = cos^2 phi - mean and g = cos phi sin phi - mean."""
    L = curve.length
    m1 = float(curve.integrate(lambda t, p, tan: tan[:, 0] ** 2)) / L
    m2 = float(curve.integrate(lambda t, p, tan: tan[:, 0] * tan[:, 1])) / L

    def fn(t, p, tan):
        f = tan[:, 0] ** 2 - m1
        g = tan[:, 0] * tan[:, 1] - m2
        return np.stack([f * f, g * g, f * g, f, g], axis=-1)

    f2, g2, fg, fi, gi = curve.integrate(fn)
    tan = np.stack([np.cos(curve.phi), np.sin(curve.phi)], axis=-1)
    return FGProfiles(
        t=curve.t, f=tan[:, 0] ** 2 - m1, g=tan[:, 0] * tan[:, 1] - m2,
        int_f2=float(f2), int_g2=float(g2), int_fg=float(fg),
        mean_f=float(fi) / L, mean_g=float(gi) / L,
    )


def limit_coefficients(curve: UnitSpeedCurve, mu_hat4: float, form: str = "corrected") -> tuple[float, float, float]:
    """Coefficients (a1, a2, a3) of the quadratic form in (Z1, Z2).

    ``form="corrected"`` weights Z2^2 by ``∫g^2``, which is what the
    decomposition of the limiting process gives; ``form="printed"`` uses
    ``∫f^2`` for both squares.  The two agree whenever ``∫cos(4 phi) = 0``,
    e.g. for circles.
    """
    mu = float(np.real(mu_hat4))
    if abs(mu) > 1 + 1e-12:
        raise FourthCoefficientOutOfRange(f"|mu_hat(4)| = {abs(mu)} > 1")
    mu = max(-1.0, min(1.0, mu))
    fg = fg_profiles(curve)
    if form == "corrected":
        second = fg.int_g2
    elif form == "printed":
        second = fg.int_f2
    else:
        raise ValueError("form must be 'corrected' or 'printed'")
    a1 = 2 * (1 + mu) * fg.int_f2
    a2 = 2 * (1 - mu) * second
    a3 = 4 * math.sqrt(max(0.0, 1 - mu * mu)) * fg.int_fg
    return a1, a2, a3


def fourth_power_energy(curve: UnitSpeedCurve, measure: SpectralMeasure | EnergyLevel) -> float:
    """``∫∫ <theta, gamma'(t)>^4 dt dmu(theta)``."""
    ang, w = _measure_atoms(measure)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    E4 = curve.integrate(lambda t, p, tan: (tan @ dirs.T) ** 4)
    return float(np.sum(w * E4))


def curve_report(curve: UnitSpeedCurve, measure: SpectralMeasure) -> dict:
    L = curve.length
    I = I_gamma(curve)
    B = B_functional(curve, measure)
    A = A_functional(curve, measure)
    F = F_functional(curve, measure)
    fg = fg_profiles(curve)
    mu4 = measure.fourth_coefficient
    out = {
        "curve": curve.spec.to_dict(),
        "measure": measure.describe(),
        "length": L,
        "I_gamma": [I.real, I.imag],
        "static": is_static(curve),
        "B": B,
        "A": A,
        "F": F,
        "4B-L2": 4 * B - L * L,
        "16A-L2": 16 * A - L * L,
        "int_f2": fg.int_f2,
        "int_g2": fg.int_g2,
        "int_fg": fg.int_fg,
        "mu_hat4": mu4.real,
        "min_abs_curvature": float(np.min(np.abs(curve.kappa))),
    }
    if abs(mu4.imag) < 1e-12:
        out["a_corrected"] = list(limit_coefficients(curve, mu4.real, "corrected"))
        out["a_printed"] = list(limit_coefficients(curve, mu4.real, "printed"))
    return out
