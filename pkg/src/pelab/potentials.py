"""Radial convex potentials and their constructive companions.

A potential is Phi(z) = phi(|z|) with phi strictly convex, phi(0) = 0 and
phi'(0) = 0.  From phi we derive the ellipticity window (two-sided bounds on
the Hessian of Phi), the scalar entropy nonlinearity gamma with
gamma(phi(z)) = phi'(z)^2 / 2, and the rewrite of the diffusion system as a
strongly coupled system with coefficients a(r) = phi'(r)/r, unit radial
directions c, and H(r) = phi'(r) - integral of phi'(s)/s.

Radial formulas are evaluated with two guards: |z| below 1e-12 is treated as
zero, and phi'(r)/r is replaced by its Taylor value phi''(0) for r < 1e-6 to
avoid catastrophic cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, PPoly

from .errors import ConstructionError, ConvexityError, RangeExcursionError

EPS_ZERO = 1e-12     # |z| below this is the origin
EPS_TAYLOR = 1e-6    # phi'(r)/r switches to phi''(0) below this

CERT_SAMPLES = 10_001   # 1e4 uniform intervals plus endpoints


@dataclass(frozen=True)
class RadialPotential:
    """phi and its first two derivatives as vectorized evaluators on [0, r_max]."""

    phi: Callable[[np.ndarray], np.ndarray]
    phi1: Callable[[np.ndarray], np.ndarray]
    phi2: Callable[[np.ndarray], np.ndarray]
    r_max: float
    id: str = "custom"

    def __post_init__(self):
        if not (self.r_max > 0.0 and math.isfinite(self.r_max)):
            raise ValueError("r_max must be positive and finite")
        if abs(float(self.phi(0.0))) > 1e-12:
            raise ValueError(f"potential '{self.id}' is not normalized: phi(0) != 0")
        if abs(float(self.phi1(0.0))) > 1e-12:
            raise ValueError(f"potential '{self.id}' must have phi'(0) = 0")


@dataclass(frozen=True)
class EllipticityWindow:
    """Certified two-sided Hessian bounds lam <= Lam on [0, r_max].

    `samples` and `spacing` record the certification density so downstream
    checks can tighten it; `margin` is the safety inflation applied (none by
    default, the raw sampled extrema are reported).
    """

    lam: float
    Lam: float
    r_max: float
    samples: int
    spacing: float
    margin: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.lam <= self.Lam < math.inf):
            raise ValueError(f"invalid window: lam={self.lam}, Lam={self.Lam}")


@dataclass(frozen=True)
class EntropyData:
    """Scalar nonlinearity gamma on [0, phi(r_max)] with certified identity residual.

    gamma is strictly increasing, gamma(0) = 0, and
    |gamma(phi(z)) - phi'(z)^2 / 2| <= tol on the sampled range.
    """

    gamma: Callable[[np.ndarray], np.ndarray]
    gamma1: Callable[[np.ndarray], np.ndarray]
    tol: float
    z_max: float
    table: tuple = field(repr=False, default=())


@dataclass(frozen=True)
class CoupledCoefficients:
    """Coefficients (a, c, H) of the strongly coupled form of a radial system.

    `a` maps the pointwise norm field r to the scalar coefficient (times the
    identity in the space indices), `c` maps an (N, ...) state to unit radial
    directions, `H` and `H_z` evaluate the scalar coupling function and its
    gradient on (N, ...) states.  `H_profile`/`dH_profile` expose the radial
    profile for tables.  `bounds` carries sup norms over [0, r_max] plus the
    effective diffusivity used for time-step control.
    """

    a: Callable[[np.ndarray], np.ndarray]
    c: Callable[[np.ndarray], np.ndarray]
    H: Callable[[np.ndarray], np.ndarray]
    H_z: Callable[[np.ndarray], np.ndarray]
    H_profile: Callable[[np.ndarray], np.ndarray]
    dH_profile: Callable[[np.ndarray], np.ndarray]
    bounds: dict
    lam_a: float
    lam_A: float
    r_max: float
    id: str = "coupled"

    def __post_init__(self):
        if not (self.lam_a > 0.0 and self.lam_A > 0.0):
            raise ConvexityError(
                f"coupled coefficients '{self.id}' are not strictly elliptic "
                f"(lam_a={self.lam_a}, lam_A={self.lam_A})")
        for k, v in self.bounds.items():
            if not math.isfinite(v):
                raise ConstructionError(f"bound {k} of '{self.id}' is not finite")


# ---------------------------------------------------------------------------
# built-in potential library (hand-coded derivatives, so consistency is testable)

def quadratic(r_max: float = 2.0) -> RadialPotential:
    """phi(r) = r^2/2; the flow is the componentwise heat equation."""
    return RadialPotential(
        phi=lambda r: 0.5 * np.square(r),
        phi1=lambda r: np.asarray(r, dtype=float) + 0.0,
        phi2=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        r_max=r_max, id="quadratic")


def cosh_potential(r_max: float = 1.0) -> RadialPotential:
    """phi(r) = cosh(r) - 1; the standard smooth non-quadratic example."""
    return RadialPotential(
        phi=lambda r: np.cosh(r) - 1.0,
        phi1=np.sinh,
        phi2=np.cosh,
        r_max=r_max, id="cosh")


def quartic(r_max: float = 1.0) -> RadialPotential:
    """phi(r) = r^2/2 + r^4/4."""
    return RadialPotential(
        phi=lambda r: 0.5 * np.square(r) + 0.25 * np.square(r) ** 2,
        phi1=lambda r: np.asarray(r, dtype=float) + np.asarray(r, dtype=float) ** 3,
        phi2=lambda r: 1.0 + 3.0 * np.square(r),
        r_max=r_max, id="quartic")


def smoothed_porous(eps: float = 0.05, m: int = 6, r_max: float = 1.0) -> RadialPotential:
    """phi(r) = r^2/2 + eps * r^m: a porous-medium-like tail kept strictly convex."""
    if m < 4 or m % 2 != 0:
        raise ValueError("the tail exponent must be an even integer >= 4")
    return RadialPotential(
        phi=lambda r: 0.5 * np.square(r) + eps * np.power(r, m),
        phi1=lambda r: np.asarray(r, dtype=float) + eps * m * np.power(r, m - 1),
        phi2=lambda r: 1.0 + eps * m * (m - 1) * np.power(r, m - 2),
        r_max=r_max, id=f"porous-m{m}")


_BUILTINS: dict[str, Callable[..., RadialPotential]] = {
    "quadratic": quadratic,
    "cosh": cosh_potential,
    "quartic": quartic,
    "porous": smoothed_porous,
}


def builtin_ids() -> tuple[str, ...]:
    return tuple(_BUILTINS)


def get_potential(pid: str, r_max: float | None = None, **params) -> RadialPotential:
    """Look up a built-in potential by id."""
    if pid not in _BUILTINS:
        raise ValueError(f"unknown potential id '{pid}'; known: {sorted(_BUILTINS)}")
    if r_max is not None:
        params["r_max"] = r_max
    return _BUILTINS[pid](**params)


def from_piecewise_poly(breakpoints, coeffs, r_max: float | None = None,
                        pid: str = "table") -> RadialPotential:
    """Potential from a piecewise-polynomial coefficient table.

    `breakpoints` are the k+1 knots of k pieces; `coeffs` has one row of
    descending-power coefficients per piece (scipy PPoly layout transposed).
    Derivatives are exact polynomial derivatives.
    """
    x = np.asarray(breakpoints, dtype=float)
    c = np.asarray(coeffs, dtype=float).T
    if x.ndim != 1 or len(x) < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("breakpoints must be strictly increasing with at least 2 entries")
    if c.ndim != 2 or c.shape[1] != len(x) - 1:
        raise ValueError("one coefficient row per polynomial piece required")
    p = PPoly(c, x)
    p1 = p.derivative()
    p2 = p1.derivative()
    return RadialPotential(
        phi=lambda r: p(np.clip(r, x[0], x[-1])),
        phi1=lambda r: p1(np.clip(r, x[0], x[-1])),
        phi2=lambda r: p2(np.clip(r, x[0], x[-1])),
        r_max=float(r_max) if r_max is not None else float(x[-1]),
        id=pid)


# ---------------------------------------------------------------------------
# radial calculus

def radial_slope(p: RadialPotential, r: np.ndarray) -> np.ndarray:
    """phi'(r)/r with the Taylor extension phi''(0) below EPS_TAYLOR."""
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    out = np.full(r.shape, float(p.phi2(0.0)))
    big = r >= EPS_TAYLOR
    if big.any():
        rb = r[big]
        out[big] = np.asarray(p.phi1(rb), dtype=float) / rb
    return out[0] if scalar else out


def _check_range(p: RadialPotential, r: float) -> None:
    if r > p.r_max * (1.0 + 1e-12):
        raise RangeExcursionError(
            f"|z| = {r} exceeds the certified range r_max = {p.r_max} "
            f"of potential '{p.id}'")


def grad_Phi(p: RadialPotential, z) -> np.ndarray:
    """Gradient of Phi at a single N-vector: phi'(|z|) z/|z|, zero at the origin."""
    z = np.asarray(z, dtype=float)
    r = float(np.sqrt(np.sum(z * z)))
    _check_range(p, r)
    if r < EPS_ZERO:
        return np.zeros_like(z)
    return float(radial_slope(p, r)) * z


def grad_Phi_field(p: RadialPotential, values: np.ndarray) -> np.ndarray:
    """grad_Phi applied pointwise to an (N, *sizes) array (no range check)."""
    r = np.sqrt(np.sum(np.square(values), axis=0))
    g = radial_slope(p, r)
    g = np.where(r < EPS_ZERO, 0.0, g)
    return g[None] * values


def hessian_Phi(p: RadialPotential, z) -> np.ndarray:
    """Hessian of Phi at a single N-vector.

    Eigenvalues are phi''(r) radially and phi'(r)/r tangentially; at the
    origin the matrix is phi''(0) times the identity.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    r = float(np.sqrt(np.sum(z * z)))
    _check_range(p, r)
    if r < EPS_ZERO:
        return float(p.phi2(0.0)) * np.eye(n)
    g = float(radial_slope(p, r))
    zh = z / r
    return g * np.eye(n) + (float(p.phi2(r)) - g) * np.outer(zh, zh)


def certify_window(p: RadialPotential, samples: int = CERT_SAMPLES) -> EllipticityWindow:
    """Sample both Hessian eigenvalue branches densely and report their extrema.

    Raises ConvexityError naming the offending radius when strict convexity
    fails anywhere on [0, r_max].
    """
    rs = np.linspace(0.0, p.r_max, samples)
    branches = np.stack([np.asarray(p.phi2(rs), dtype=float) + np.zeros_like(rs),
                         radial_slope(p, rs)])
    mins = branches.min(axis=0)
    lam = float(mins.min())
    Lam = float(branches.max())
    if lam <= 0.0:
        r_bad = float(rs[int(mins.argmin())])
        raise ConvexityError(
            f"potential '{p.id}' is not strictly convex: Hessian eigenvalue "
            f"{lam} at r = {r_bad}", r=r_bad)
    return EllipticityWindow(lam=lam, Lam=Lam, r_max=p.r_max,
                             samples=samples, spacing=p.r_max / (samples - 1))


# ---------------------------------------------------------------------------
# quadrature and inversion helpers

def invert_phi(p: RadialPotential, targets: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Monotone bisection of phi on [0, r_max] to absolute tolerance in r."""
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    lo = np.zeros_like(t)
    hi = np.full_like(t, p.r_max)
    iters = max(1, math.ceil(math.log2(max(p.r_max / tol, 2.0)))) + 2
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = np.asarray(p.phi(mid), dtype=float) < t
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    return out if np.ndim(targets) else float(out[0])


def cumulative_simpson(f: Callable[[np.ndarray], np.ndarray], x_max: float,
                       segments: int, tol: float, max_doublings: int = 10) -> np.ndarray:
    """Cumulative integral of f on uniform segments of [0, x_max] by composite Simpson.

    The panel count per segment doubles globally until the per-segment
    Richardson error estimate meets the budget tol/segments.  Returns the
    cumulative values at the segment endpoints (length segments + 1).
    """
    m = segments
    panels = 1
    prev = None
    for _ in range(max_doublings):
        pts = 2 * m * panels + 1
        x = np.linspace(0.0, x_max, pts)
        fx = np.asarray(f(x), dtype=float) + np.zeros(pts)
        step = x_max / (pts - 1)
        coef = np.ones(2 * panels + 1)
        coef[1:-1:2] = 4.0
        coef[2:-1:2] = 2.0
        ids = np.arange(m)[:, None] * (2 * panels) + np.arange(2 * panels + 1)[None, :]
        seg = fx[ids] @ coef * (step / 3.0)
        if prev is not None:
            err = np.abs(seg - prev).max() / 15.0
            if err <= tol / m:
                seg = seg + (seg - prev) / 15.0
                return np.concatenate([[0.0], np.cumsum(seg)])
        prev = seg
        panels *= 2
    raise ConstructionError(
        f"composite Simpson quadrature did not reach tolerance {tol} "
        f"within {max_doublings} refinements")


# ---------------------------------------------------------------------------
# entropy construction

def build_entropy(p: RadialPotential, table_size: int = 4096,
                  quad_tol: float = 1e-10, check_samples: int = 1001,
                  max_residual: float = 1e-6) -> EntropyData:
    """Construct gamma with gamma' = phi'' o (inverse of phi) by quadrature.

    The inverse is computed by monotone bisection (1e-12 absolute in r), the
    integral by adaptive composite Simpson to `quad_tol`, and the identity
    gamma(phi(z)) = phi'(z)^2 / 2 is certified on `check_samples` points of
    [0, r_max]; the measured maximum residual is recorded as `tol`.  A residual
    above `max_residual` signals evaluators inconsistent with their stated
    derivatives and raises ConstructionError.
    """
    certify_window(p)
    z_max = float(p.phi(p.r_max))

    def integrand(z):
        return np.asarray(p.phi2(invert_phi(p, z)), dtype=float)

    nodes = np.linspace(0.0, z_max, table_size + 1)
    gamma_nodes = cumulative_simpson(integrand, z_max, table_size, quad_tol)
    if np.any(np.diff(gamma_nodes) <= 0.0):
        raise ConstructionError(f"entropy table for '{p.id}' is not strictly increasing")
    spline = CubicSpline(nodes, gamma_nodes,
                         bc_type=((1, float(integrand(np.array([0.0]))[0])),
                                  (1, float(integrand(np.array([z_max]))[0]))))

    def gamma(z):
        return spline(z)

    def gamma1(z):
        return np.asarray(p.phi2(invert_phi(p, np.asarray(z, dtype=float))), dtype=float)

    rs = np.linspace(0.0, p.r_max, check_samples)
    resid = np.abs(gamma(np.asarray(p.phi(rs), dtype=float))
                   - 0.5 * np.square(np.asarray(p.phi1(rs), dtype=float)))
    tol = float(resid.max())
    if tol > max_residual:
        r_bad = float(rs[int(resid.argmax())])
        raise ConstructionError(
            f"entropy identity residual {tol:.3e} exceeds {max_residual:.1e} at "
            f"z = {r_bad}: evaluators of '{p.id}' are inconsistent with their derivatives")
    return EntropyData(gamma=gamma, gamma1=gamma1, tol=tol, z_max=z_max,
                       table=(nodes, gamma_nodes))


# ---------------------------------------------------------------------------
# strongly coupled decomposition

def coupled_decomposition(p: RadialPotential, table_size: int = 4096,
                          quad_tol: float = 1e-10,
                          samples: int = CERT_SAMPLES) -> CoupledCoefficients:
    """Rewrite the radial diffusion system in strongly coupled form.

    a(r) = phi'(r)/r (times the identity), c = unit radial directions, and
    H(r) = phi'(r) - integral_0^r phi'(s)/s ds with the integrand extended by
    phi''(0) at s = 0.  The reconstruction a*I + c (x) H_z equals the Hessian
    of Phi.
    """
    window = certify_window(p, samples)
    nodes = np.linspace(0.0, p.r_max, table_size + 1)
    integral_nodes = cumulative_simpson(lambda s: radial_slope(p, s),
                                        p.r_max, table_size, quad_tol)
    islope = CubicSpline(nodes, integral_nodes,
                         bc_type=((1, float(radial_slope(p, 0.0))),
                                  (1, float(radial_slope(p, p.r_max)))))

    def a_of_r(r):
        return radial_slope(p, r)

    def H_profile(r):
        r = np.asarray(r, dtype=float)
        return np.asarray(p.phi1(r), dtype=float) - islope(r)

    def dH_profile(r):
        r = np.asarray(r, dtype=float)
        return np.asarray(p.phi2(r), dtype=float) - radial_slope(p, r)

    def c_dirs(values):
        r = np.sqrt(np.sum(np.square(values), axis=0))
        out = np.zeros_like(values)
        np.divide(values, r[None], out=out, where=(r > EPS_ZERO)[None])
        return out

    def H_of_state(values):
        return H_profile(np.sqrt(np.sum(np.square(values), axis=0)))

    def H_z_of_state(values):
        r = np.sqrt(np.sum(np.square(values), axis=0))
        return dH_profile(r)[None] * c_dirs(values)

    rs = np.linspace(0.0, p.r_max, samples)
    a_s = radial_slope(p, rs)
    phi2_s = np.asarray(p.phi2(rs), dtype=float) + np.zeros_like(rs)
    deta = phi2_s - a_s                      # radial derivative of the H profile
    eta2 = np.gradient(deta, rs)             # second derivative, sampled
    tang = np.empty_like(rs)
    tang[0] = eta2[0]                        # limit of eta'(r)/r at the origin
    tang[1:] = deta[1:] / rs[1:]
    H_s = H_profile(rs)
    bounds = {
        "sup_a": float(a_s.max()),
        "sup_c": 1.0,                        # unit radial directions
        "sup_Hzz": float(max(np.abs(eta2).max(), np.abs(tang).max())),
        "inf_H": float(H_s.min()),
        "sup_H": float(H_s.max()),
        "eff_Lambda": float((a_s + np.abs(deta)).max()),
    }
    lam_a = float(a_s.min())
    lam_A = float(np.minimum(a_s, phi2_s).min())
    if abs(lam_A - window.lam) > 1e-9 * window.lam:
        raise ConstructionError(
            f"decomposition ellipticity {lam_A} disagrees with the certified window {window.lam}")
    return CoupledCoefficients(
        a=a_of_r, c=c_dirs, H=H_of_state, H_z=H_z_of_state,
        H_profile=H_profile, dH_profile=dH_profile,
        bounds=bounds, lam_a=lam_a, lam_A=lam_A, r_max=p.r_max,
        id=f"{p.id}-coupled")


def heat_coefficients(r_max: float = 2.0, n_components: int = 1) -> CoupledCoefficients:
    """Degenerate coupled system with a = 1 and H = 0 exactly (pure heat flow)."""

    def zeros_like_state(values):
        return np.zeros(values.shape[1:])

    return CoupledCoefficients(
        a=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        c=lambda values: np.zeros_like(values),
        H=zeros_like_state,
        H_z=lambda values: np.zeros_like(values),
        H_profile=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        dH_profile=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        bounds={"sup_a": 1.0, "sup_c": 0.0, "sup_Hzz": 0.0, "inf_H": 0.0,
                "sup_H": 0.0, "eff_Lambda": 1.0},
        lam_a=1.0, lam_A=1.0, r_max=r_max, id="heat")
