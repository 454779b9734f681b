"""Pure-scaling geodesics ``r(t) g0`` along rays of metrics.

When ``P_{r g0} g0 = Psi(r) g0`` and the adjoint term restricts to the ray
as ``f(r) g0``, the radial coordinate obeys the scalar ODE

    r'' Psi(r) = r'^2 (f/2 - Psi'(r) + (1 - n/4) Psi(r) / r),

and the length of the path shrinking ``g0`` to zero is

    sqrt(n Vol(g0)) int_0^1 sqrt(Psi(r) r^(n/2 - 2)) dr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .grid import TensorField, integrate_density
from .operators import (OperatorSpec, PhiFunction, op_apply,
                        op_derivative_adjoint)
from .tensors import Geometry

__all__ = [
    "ScalingProfile",
    "ScalingSolution",
    "ScalingError",
    "analytic_profile",
    "extract_psi_f",
    "scaling_ode",
    "closed_form_scaling",
    "scaling_length",
    "curvature_scaling_length",
    "CurvatureLengthReport",
    "totally_geodesic_check",
]

RAY_TOL = 1e-6
R_FLOOR = 1e-8


class ScalingError(ValueError):
    """Invalid input to a scaling computation."""


@dataclass
class ScalingProfile:
    """Coefficients ``Psi`` and ``f`` along the ray through ``g0``.

    ``provenance`` is ``'analytic'`` when exact callables are attached and
    ``'extracted'`` when the samples were measured on a grid; extracted
    profiles are interpolated by cubic splines in ``log r``.
    """

    family: str
    n: int
    r: np.ndarray
    psi: np.ndarray
    f: np.ndarray
    provenance: str
    vol0: float = 1.0
    psi_residual: float = 0.0
    f_residual: float = 0.0
    _psi_fn: object = field(default=None, repr=False)
    _dpsi_fn: object = field(default=None, repr=False)
    _f_fn: object = field(default=None, repr=False)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if np.any(self.psi <= 0):
            raise ScalingError("Psi must be positive on the samples")
        if self.provenance == "extracted":
            order = np.argsort(self.r)
            lr = np.log(self.r[order])
            self._log_psi = CubicSpline(lr, np.log(self.psi[order]))
            self._f_spline = CubicSpline(lr, self.f[order])

    @property
    def restricts_to_ray(self) -> bool:
        return max(self.psi_residual, self.f_residual) <= RAY_TOL

    def psi_at(self, r):
        if self._psi_fn is not None:
            return self._psi_fn(r)
        return np.exp(self._log_psi(np.log(r)))

    def dpsi_at(self, r):
        if self._dpsi_fn is not None:
            return self._dpsi_fn(r)
        lr = np.log(r)
        return np.exp(self._log_psi(lr)) * self._log_psi(lr, 1) / r

    def f_at(self, r):
        if self._f_fn is not None:
            return self._f_fn(r)
        return self._f_spline(np.log(r))

    def to_rows(self):
        return [(float(r), float(p), float(f))
                for r, p, f in zip(self.r, self.psi, self.f)]


def analytic_profile(P: OperatorSpec, n: int, vol0: float,
                     r_samples=None) -> ScalingProfile:
    """Closed-form ``Psi`` and ``f`` for the identity, conformal and Sobolev families.

    The Sobolev family acts as the identity on the ray because the metric is
    parallel, so its profile coincides with the identity one.
    """
    r = np.geomspace(1e-3, 10.0, 41) if r_samples is None else np.asarray(r_samples, float)
    if P.family in ("identity", "sobolev"):
        def psi(x):
            return np.ones_like(np.asarray(x, float))

        def dpsi(x):
            return np.zeros_like(np.asarray(x, float))

        fn = dpsi
    elif P.family == "conformal":
        phi = P.phi
        h = n / 2.0

        def psi(x):
            return phi(np.power(x, h) * vol0)

        def dpsi(x):
            return phi.deriv(np.power(x, h) * vol0) * h * np.power(x, h - 1.0) * vol0

        fn = dpsi
    else:
        raise ScalingError("the curvature family has no ray-independent profile")
    return ScalingProfile(P.family, n, r, psi(r), fn(r), "analytic", vol0,
                          _psi_fn=psi, _dpsi_fn=dpsi, _f_fn=fn)


def _norm(geo: Geometry, A: TensorField) -> float:
    return math.sqrt(max(geo.integrate(A, A), 0.0))


def _projection(geo: Geometry, A: TensorField, g0: TensorField,
                size: float | None = None):
    """Coefficient of ``A`` along ``g0`` and the orthogonal remainder relative to ``size``."""
    c = geo.integrate(A, g0) / geo.integrate(g0, g0)
    rest = A - g0 * c
    size = _norm(geo, A) if size is None else size
    if size == 0.0:
        return 0.0, 0.0
    return c, _norm(geo, rest) / size


def extract_psi_f(P: OperatorSpec, g0: TensorField, r_samples) -> ScalingProfile:
    """Measure ``Psi(r)`` and ``f(r)`` by projecting onto ``g0`` at ``r g0``.

    The largest component orthogonal to ``g0`` is reported in
    ``psi_residual`` and ``f_residual``, relative to ``P_{r g0} g0`` and to
    the larger of the adjoint term and ``P_{r g0} g0 / r`` respectively; the family restricts to the ray
    when both are at most ``1e-6``.
    """
    r_samples = np.asarray(r_samples, dtype=float)
    if np.any(r_samples <= 0):
        raise ScalingError("r samples must be positive")
    psi, f = [], []
    res_psi = res_f = 0.0
    for r in r_samples:
        geo = Geometry(g0 * float(r))
        A = op_apply(P, geo, g0)
        c, res = _projection(geo, A, g0)
        psi.append(c)
        res_psi = max(res_psi, res)
        # f enters the radial equation next to Psi / r, which sets its scale
        B = op_derivative_adjoint(P, geo, g0, g0)
        c, res = _projection(geo, B, g0, max(_norm(geo, B), _norm(geo, A) / r))
        f.append(c)
        res_f = max(res_f, res)
    psi = np.array(psi)
    if np.any(psi <= 0):
        raise ScalingError("extracted Psi is not positive")
    vol0 = integrate_density(Geometry(g0).vol)
    return ScalingProfile(P.family, g0.grid.dim, r_samples, psi, np.array(f),
                          "extracted", vol0, res_psi, res_f)


@dataclass
class ScalingSolution:
    t: np.ndarray
    r: np.ndarray
    rdot: np.ndarray
    halted: bool


def scaling_ode(profile: ScalingProfile, r0: float, rdot0: float, T: float,
                dt: float, r_floor: float = R_FLOOR) -> ScalingSolution:
    """RK4 for the radial equation; stops once ``r <= r_floor``.

    Also stops, with ``halted`` set, when a step would carry ``r`` through
    zero.
    """
    n = profile.n

    def rhs(y):
        r, v = y
        if r <= 0:
            raise ScalingError("radius left the positive half-line")
        psi = float(profile.psi_at(r))
        if not psi > 0:
            raise ScalingError(f"Psi({r:.3e}) = {psi:.3e} is not positive")
        acc = v * v * (0.5 * float(profile.f_at(r)) - float(profile.dpsi_at(r))
                       + (1.0 - n / 4.0) * psi / r) / psi
        return np.array([v, acc])

    y = np.array([float(r0), float(rdot0)])
    ts, rs, vs = [0.0], [y[0]], [y[1]]
    steps = int(math.ceil(T / dt - 1e-9))
    halted = False
    t = 0.0
    for i in range(steps):
        h = min(dt, T - t)
        try:
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
        except ScalingError:
            if y[0] <= 10 * r_floor or y[1] < 0:
                halted = True
                break
            raise
        y_new = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        # r'' is proportional to r'^2, so r' cannot change sign; a flip means
        # the step went through the collapse at r = 0
        if y[1] < 0 <= y_new[1] or y_new[0] <= 0:
            halted = True
            break
        y = y_new
        t = (i + 1) * dt if i + 1 < steps else T
        ts.append(t)
        rs.append(y[0])
        vs.append(y[1])
        if y[0] <= r_floor:
            halted = True
            break
    return ScalingSolution(np.array(ts), np.array(rs), np.array(vs), halted)


def closed_form_scaling(family: str, n: int, k, r0: float, r1: float, t):
    """``r(t) = (t (r1^a - r0^a) + r0^a)^(1/a)``.

    ``a = n/4`` for the ``L2`` metric (and the Sobolev family, which has the
    same radial dynamics), ``a = n (1 + k) / 4`` for the conformal family
    with ``Phi(Vol) = Vol^k``.
    """
    if r0 <= 0 or r1 < 0:
        raise ScalingError("radii must be positive")
    if family in ("identity", "sobolev"):
        a = n / 4.0
    elif family == "conformal":
        if k is None:
            raise ScalingError("conformal family needs the power k")
        a = n * (1.0 + k) / 4.0
    else:
        raise ScalingError(f"no closed form for family {family!r}")
    if a == 0:
        raise ScalingError("degenerate exponent a = 0")
    t = np.asarray(t, dtype=float)
    base = t * (r1 ** a - r0 ** a) + r0 ** a
    return np.power(base, 1.0 / a)


def _tail_slope(fn, points) -> float:
    """Log-log slope of a positive function over the given points."""
    vals = np.array([fn(p) for p in points], dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        return -math.inf
    return float(np.polyfit(np.log(points), np.log(vals), 1)[0])


_TAIL = np.geomspace(1e-9, 1e-6, 7)


def scaling_length(profile: ScalingProfile, n: int | None = None,
                   vol0: float | None = None, tol: float = 1e-8) -> float:
    """Length of the path ``r g0``, ``r`` from 1 down to 0.

    Uses ``r = u^2`` to remove the endpoint singularity.  Returns ``inf``
    when the integrand is not integrable at ``r = 0`` (log-log slope of
    ``Psi(r) r^(n/2-2)`` at most ``-2``).
    """
    n = profile.n if n is None else n
    vol0 = profile.vol0 if vol0 is None else vol0

    def dens(r):
        return float(profile.psi_at(r)) * r ** (n / 2.0 - 2.0)

    if _tail_slope(dens, _TAIL) <= -2.0 + 1e-3:
        return math.inf

    def integrand(u):
        if u == 0.0:
            return 0.0 if n > 2 else 2.0 * math.sqrt(float(profile.psi_at(1e-300)))
        r = u * u
        return 2.0 * u * math.sqrt(dens(r))

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=tol,
                            limit=200)
    return math.sqrt(n * vol0) * val


@dataclass
class CurvatureLengthReport:
    length: float
    finite: bool
    criterion: str
    guaranteed: bool
    tail_slope: float

    def to_dict(self) -> dict:
        return {"length": self.length, "finite": self.finite,
                "criterion": self.criterion, "guaranteed": self.guaranteed,
                "tail_slope": self.tail_slope}


def curvature_scaling_length(P: OperatorSpec, g0: TensorField,
                             tol: float = 1e-8) -> CurvatureLengthReport:
    """Length of shrinking ``g0`` to zero for the curvature-weighted family.

    The inner integral of ``Phi(Scal(g0)/r) vol(g0)`` is taken on the grid;
    the outer one in ``u = r^(n/4)``, where the integrand is
    ``(4/n) sqrt(n) sqrt(inner(r))``.  A growth bound
    ``Phi(u) <= C (1 + |u|^(2k))`` guarantees a finite length when
    ``n > 8k``; otherwise divergence is detected from the integrand's
    log-log slope near ``u = 0``.
    """
    if P.family != "curvature":
        raise ScalingError("curvature_scaling_length needs the curvature family")
    geo = Geometry(g0)
    n = g0.grid.dim
    scal = geo.scal.data
    vol = geo.vol.data
    cell = g0.grid.cell_volume
    phi: PhiFunction = P.phi
    bound = phi.growth_bound
    guaranteed = bound is not None and n > 8 * bound[1]
    if bound is None:
        criterion = "no polynomial growth bound; finiteness not guaranteed"
    elif guaranteed:
        criterion = f"n={n} > 8k={8 * bound[1]:g}: length finite"
    else:
        criterion = (f"n={n} <= 8k={8 * bound[1]:g}: bound does not guarantee "
                     "finiteness")

    def inner(r):
        with np.errstate(over="ignore", invalid="ignore"):
            v = float(np.sum(phi(scal / r) * vol) * cell)
        return v

    def integrand(u):
        if u == 0.0:
            u = 1e-300
        r = u ** (4.0 / n)
        v = inner(r)
        if not (np.isfinite(v) and v >= 0):
            return math.inf
        return (4.0 / n) * math.sqrt(n) * math.sqrt(v)

    slope = _tail_slope(lambda u: integrand(u), _TAIL)
    if slope <= -1.0 + 1e-3:
        return CurvatureLengthReport(math.inf, False, criterion, guaranteed, slope)
    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=tol,
                            limit=200)
    finite = bool(np.isfinite(val))
    return CurvatureLengthReport(float(val), finite, criterion, guaranteed, slope)


@dataclass
class RayReport:
    family: str
    psi_residual: float
    f_residual: float
    off_ray: float
    radial_error: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def totally_geodesic_check(P: OperatorSpec, g0: TensorField, r_samples=None,
                           c: float = 0.5, T: float = 1.0, dt: float = 1e-2,
                           tol: float = RAY_TOL) -> RayReport:
    """Check that the ray through ``g0`` is a geodesic of ``G^P``.

    Measures the orthogonal remainders of ``P_{r g0} g0`` and of the
    adjoint term along the ray, then launches the full geodesic with
    ``u0 = c g0`` and compares it against the radial ODE.
    """
    from .geodesic import integrate_geodesic

    if r_samples is None:
        r_samples = np.geomspace(0.25, 4.0, 9)
    prof = extract_psi_f(P, g0, r_samples)
    off = 0.0
    radial = math.inf
    try:
        tr = integrate_geodesic(P, g0, g0 * c, T, dt)
        g0n = float(np.sum(g0.data * g0.data))
        ts, rho = [], []
        for st in tr.states:
            coef = float(np.sum(st.g.data * g0.data)) / g0n
            rest = st.g.data - coef * g0.data
            off = max(off, math.sqrt(float(np.sum(rest ** 2))
                                     / float(np.sum(st.g.data ** 2))))
            ts.append(st.t)
            rho.append(coef)
        if prof.restricts_to_ray:
            lo = min(min(rho), 1.0) * 0.5
            hi = max(max(rho), 1.0) * 2.0
            dense = extract_psi_f(P, g0, np.geomspace(lo, hi, 25))
            sol = scaling_ode(dense, 1.0, c, tr.final.t, dt)
            rr = np.interp(ts, sol.t, sol.r)
            radial = float(np.max(np.abs(rr - np.array(rho)) / np.abs(rr)))
    except (FloatingPointError, ValueError, RuntimeError):
        off = math.inf
    passed = prof.restricts_to_ray and off <= tol and radial <= tol
    return RayReport(P.family, prof.psi_residual, prof.f_residual, off, radial,
                     passed)
