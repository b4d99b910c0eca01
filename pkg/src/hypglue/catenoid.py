"""Rotationally symmetric minimal ends from the flux ODE.

A minimal graph of revolution in the eps-hyperbolic metric has slope

    u_r(r) = (F/pi) / ( cosh(eps r) * sqrt( sinh^2(2 eps r)/eps^2 - (F/pi)^2 ) ),

where the constant F is the flux of the end (conserved integral of the
vertical Killing field against the conormal).  At eps = 1 this is the
unit-curvature equation; the eps -> 0 limit is the euclidean catenoid slope
F/(2 pi r) / sqrt(1 - (F/(2 pi r))^2), reached here through a series branch so
that eps = 0 is an ordinary member of the family.

Conventions.  The flux is stored in the rescaled form above, so a profile
with logarithmic parameter c (u ~ a + c Log r) has flux 2*pi*c; the
unit-picture flux of the same end is eps times that (``EndProfile.unit_flux``).
The slope blows up like an inverse square root at the neck radius
r0 = arcsinh(eps |F| / pi) / (2 eps); evaluation at or inside the neck raises
``AtOrInsideNeck``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad

__all__ = [
    "AtOrInsideNeck",
    "QuadratureFailure",
    "OutOfRange",
    "EndProfile",
    "ode_rhs",
    "ode_rhs_derivs",
    "ode_rhs_dc",
    "sensitivity_dc",
    "neck_radius",
    "integrate_profile",
    "flux_functional",
    "euclidean_end",
    "euclidean_closed_form",
    "log_grid",
    "save_profile",
    "load_profile",
]

_SERIES_CUT = 1e-6  # below eps*r = 1e-6 use the series branch of sinh(2 eps r)/eps


class AtOrInsideNeck(ValueError):
    """Evaluation at or below the neck radius, where the slope is vertical."""


class QuadratureFailure(RuntimeError):
    """Adaptive quadrature could not meet the requested tolerance."""


class OutOfRange(ValueError):
    """Radius outside the sampled range of a profile."""


def _warp(r, epsilon):
    """(sbar, dsbar, h, tau) with sbar = sinh(2 eps r)/eps, dsbar = 2 cosh(2 eps r),
    h = sech(eps r), tau = eps tanh(eps r)."""
    r = np.asarray(r, dtype=float)
    x = 2.0 * epsilon * r
    small = np.abs(x) < _SERIES_CUT
    x2 = x * x
    series = 2.0 * r * (1.0 + x2 / 6.0 * (1.0 + x2 / 20.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        sbar = np.where(small, series, np.sinh(np.where(small, 0.0, x)) / max(epsilon, 1e-300))
    dsbar = 2.0 * np.cosh(x)
    h = 1.0 / np.cosh(epsilon * r)
    tau = epsilon * np.tanh(epsilon * r)
    return sbar, dsbar, h, tau


def neck_radius(flux: float, epsilon: float) -> float:
    """Radius at which the slope becomes vertical: sinh(2 eps r0)/eps = |F|/pi."""
    q = abs(flux) / np.pi
    if q == 0.0:
        return 0.0
    if epsilon * q < 1e-8:
        return q / 2.0
    return float(np.arcsinh(epsilon * q) / (2.0 * epsilon))


def _check_outside_neck(sbar, q):
    if np.any(sbar * sbar <= q * q):
        raise AtOrInsideNeck("requested radius is at or inside the neck")


def ode_rhs(r, flux: float, epsilon: float):
    """Slope u_r of the minimal end with the given flux, at radius r."""
    sbar, _, h, _ = _warp(r, epsilon)
    q = flux / np.pi
    _check_outside_neck(sbar, q)
    return q * h / np.sqrt(sbar * sbar - q * q)


def ode_rhs_derivs(r, flux: float, epsilon: float):
    """(u_r, u_rr, u_rrr) by closed-form differentiation of the slope field."""
    sbar, dsb, h, tau = _warp(r, epsilon)
    q = flux / np.pi
    _check_outside_neck(sbar, q)
    P = sbar * sbar - q * q
    p1 = 1.0 / np.sqrt(P)
    p3 = p1 / P
    p5 = p3 / P
    w = q * h * p1
    w1 = -q * h * (tau * p1 + sbar * dsb * p3)
    dtau = epsilon * epsilon * h * h
    w2 = q * h * (
        (tau * tau - dtau) * p1
        + 2.0 * tau * sbar * dsb * p3
        - (dsb * dsb + 4.0 * epsilon**2 * sbar * sbar) * p3
        + 3.0 * sbar * sbar * dsb * dsb * p5
    )
    return w, w1, w2


def ode_rhs_dc(r, c: float, epsilon: float, order: int = 1):
    """Derivative of the slope in the logarithmic parameter, flux = 2 pi c.

    order 1 returns d u_r / dc = 2 sech(eps r) sbar^2 (sbar^2 - 4c^2)^{-3/2}
    (~ 1/r to leading order); order 2 the second c-derivative.
    """
    sbar, _, h, _ = _warp(r, epsilon)
    q = 2.0 * c
    _check_outside_neck(sbar, q)
    P = sbar * sbar - q * q
    if order == 1:
        return 2.0 * h * sbar * sbar * P**-1.5
    if order == 2:
        return 12.0 * q * h * sbar * sbar * P**-2.5
    raise ValueError("order must be 1 or 2")


def ode_rhs_dc_dr(r, c: float, epsilon: float):
    """Radial derivative of d u_r / dc (flux = 2 pi c convention)."""
    sbar, dsb, h, tau = _warp(r, epsilon)
    q = 2.0 * c
    _check_outside_neck(sbar, q)
    P = sbar * sbar - q * q
    return (
        2.0 * (-tau * h * sbar * sbar + 2.0 * h * sbar * dsb) * P**-1.5
        - 6.0 * h * sbar**3 * dsb * P**-2.5
    )


def sensitivity_dc(r, c: float, epsilon: float, order: int = 1):
    """Sensitivity of the slope to the parameter c in the flux F = 2 pi eps c.

    First order approximates eps/r away from the neck; the second order
    vanishes at c = 0 since the slope is odd in the flux.
    """
    sbar, _, h, _ = _warp(r, epsilon)
    q = 2.0 * epsilon * c
    _check_outside_neck(sbar, q)
    P = sbar * sbar - q * q
    if order == 1:
        return 2.0 * epsilon * h * sbar * sbar * P**-1.5
    if order == 2:
        return 12.0 * epsilon**2 * q * h * sbar * sbar * P**-2.5
    raise ValueError("order must be 1 or 2")


@dataclass(frozen=True)
class EndProfile:
    """Sampled radial profile of a minimal or glued end.

    ``flux`` uses the rescaled convention (2 pi c for logarithmic parameter c);
    ``unit_flux`` is the unit-picture value eps * flux.  ``splice`` carries the
    constituent profiles of a joined end so it can still be evaluated
    analytically.
    """

    grid: np.ndarray
    u: np.ndarray
    ur: np.ndarray
    a: float
    c: float
    flux: float
    epsilon: float
    r_neck: Optional[float] = None
    kind: str = "hyperbolic"
    splice: Optional[tuple] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        object.__setattr__(self, "ur", np.asarray(self.ur, dtype=float))
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.r_neck is not None and self.kind != "joined" and self.grid[0] <= self.r_neck:
            raise AtOrInsideNeck("grid nodes must lie outside the neck")

    @property
    def unit_flux(self) -> float:
        return self.epsilon * self.flux

    def slope(self, r, order: int = 0):
        """Analytic slope derivatives (u_r, ..., d^order u_r / dr^order) at r."""
        if self.kind == "joined":
            raise ValueError("joined profiles are evaluated through surgery.JoinedEnd")
        w, w1, w2 = ode_rhs_derivs(r, self.flux, self.epsilon)
        return (w, w1, w2)[: order + 1] if order else w

    def eval_u(self, r):
        """Height at arbitrary radii, integrating the slope from the nearest node."""
        if self.kind == "joined":
            raise ValueError("joined profiles are evaluated through surgery helpers")
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.c == 0.0:
            out = np.full_like(r, self.a)
            return out if out.size > 1 else float(out[0])
        idx = np.clip(np.searchsorted(self.grid, r), 0, len(self.grid) - 1)
        rn = self.r_neck if self.r_neck is not None else 0.0
        if min(r.min(), self.grid[idx].min()) - rn > 0.1 * max(rn, 1e-300):
            segs = gauss_segments(lambda s: ode_rhs(s, self.flux, self.epsilon),
                                  self.grid[idx], r)
            out = self.u[idx] + segs
        else:
            out = np.empty_like(r)
            for i, (ri, j) in enumerate(zip(r, idx)):
                out[i] = self.u[j] + _slope_integral(self.grid[j], ri, self.flux,
                                                     self.epsilon, 1e-12)
        return out if out.size > 1 else float(out[0])


def log_grid(lo: float, hi: float, nodes_per_decade: int = 64) -> np.ndarray:
    """Log-spaced radii covering [lo, hi] at the given density."""
    if not hi > lo > 0:
        raise ValueError("need 0 < lo < hi")
    n = max(int(np.ceil(np.log10(hi / lo) * nodes_per_decade)) + 1, 2)
    return np.geomspace(lo, hi, n)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(15)


def gauss_segments(fn, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """15-point Gauss-Legendre integrals of a vectorised integrand over a batch
    of segments; effectively exact for analytic integrands on short segments."""
    mid = 0.5 * (left + right)
    half = 0.5 * (right - left)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = fn(pts.ravel()).reshape(pts.shape)
    return half * (vals @ _GL_W)


def cumulative_quadrature(fn, anchor: float, nodes: np.ndarray,
                          anchor_value: float = 0.0) -> np.ndarray:
    """Antiderivative values of fn at sorted nodes, anchored at (anchor, value).

    Composite Gauss-Legendre on the node intervals plus the anchor splice;
    precision follows the node spacing (machine level on log grids).
    """
    nodes = np.asarray(nodes, dtype=float)
    segs = gauss_segments(fn, nodes[:-1], nodes[1:])
    cum = np.concatenate([[0.0], np.cumsum(segs)])
    j0 = int(np.argmin(np.abs(nodes - anchor)))
    splice = gauss_segments(fn, np.array([anchor]), np.array([nodes[j0]]))[0]
    return anchor_value + splice + (cum - cum[j0])


def _slope_integral(r0: float, r1: float, flux: float, epsilon: float, tol: float) -> float:
    """Adaptive quadrature of the slope field over [r0, r1] (signed)."""
    if r0 == r1 or flux == 0.0:
        return 0.0
    rn = neck_radius(flux, epsilon)
    lo, hi = min(r0, r1), max(r0, r1)
    if lo <= rn:
        raise AtOrInsideNeck("integration span touches the neck")
    sign = 1.0 if r1 >= r0 else -1.0
    if lo - rn < 0.5 * rn:
        # inverse-square-root blowup at the neck: substitute s = sqrt(r - rn)
        f = lambda s: 2.0 * s * ode_rhs(rn + s * s, flux, epsilon)
        val, err = quad(f, np.sqrt(lo - rn), np.sqrt(hi - rn), epsabs=tol, epsrel=tol, limit=200)
    else:
        f = lambda r: ode_rhs(r, flux, epsilon)
        val, err = quad(f, lo, hi, epsabs=tol, epsrel=tol, limit=200)
    if err > max(tol, 10 * tol * abs(val)) * 100:
        raise QuadratureFailure(f"quadrature error {err:.3e} above tolerance {tol:.3e}")
    return sign * val


def integrate_profile(
    anchor_r: float,
    a: float,
    c: float,
    epsilon: float,
    span: tuple,
    tol: float = 1e-12,
    nodes_per_decade: int = 64,
) -> EndProfile:
    """Integrate the end with logarithmic parameter c anchored at
    u(anchor_r) = a + c Log(anchor_r).

    The flux is 2 pi c (rescaled convention; unit-picture flux 2 pi eps c) and
    the height is accumulated by adaptive quadrature of the slope to tolerance
    ``tol`` across a log-spaced grid over ``span``.
    """
    lo, hi = span
    if not (lo <= anchor_r <= hi):
        raise ValueError("anchor_r must lie inside span")
    flux = 2.0 * np.pi * c
    rn = neck_radius(flux, epsilon)
    if lo <= rn:
        raise AtOrInsideNeck(f"span starts at {lo} inside neck radius {rn}")
    grid = log_grid(lo, hi, nodes_per_decade)
    anchor_value = a + c * np.log(anchor_r)
    if c == 0.0:
        u = np.full_like(grid, a)
    elif lo - rn > 0.1 * rn:
        u = cumulative_quadrature(lambda s: ode_rhs(s, flux, epsilon),
                                  anchor_r, grid, anchor_value)
    else:
        u = np.empty_like(grid)
        j0 = int(np.argmin(np.abs(np.log(grid) - np.log(anchor_r))))
        u[j0] = anchor_value + _slope_integral(anchor_r, grid[j0], flux, epsilon, tol)
        for j in range(j0 + 1, len(grid)):
            u[j] = u[j - 1] + _slope_integral(grid[j - 1], grid[j], flux, epsilon, tol)
        for j in range(j0 - 1, -1, -1):
            u[j] = u[j + 1] + _slope_integral(grid[j + 1], grid[j], flux, epsilon, tol)
    ur = ode_rhs(grid, flux, epsilon) if c != 0.0 else np.zeros_like(grid)
    kind = "hyperbolic" if epsilon > 0 else "euclidean"
    return EndProfile(grid, u, ur, a, c, flux, epsilon, r_neck=rn if c != 0 else None, kind=kind)


def flux_functional(profile: EndProfile, r):
    """Flux integrand F(r) evaluated from the sampled slope.

    F(r) = pi * sbar(r) * cosh(eps r) * u_r / sqrt(1 + (cosh(eps r) u_r)^2)
    with sbar = sinh(2 eps r)/eps; constant in r exactly when the profile is
    minimal, non-constant across the splice of a joined end.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < profile.grid[0]) or np.any(r > profile.grid[-1]):
        raise OutOfRange("radius outside the sampled profile range")
    ur = _interp_slope(profile, r)
    sbar, _, h, _ = _warp(r, profile.epsilon)
    coshur = ur / h
    return np.pi * sbar * coshur / np.sqrt(1.0 + coshur * coshur)


def _interp_slope(profile: EndProfile, r):
    r = np.asarray(r, dtype=float)
    exact = np.isin(r, profile.grid)
    if np.all(exact):
        idx = np.searchsorted(profile.grid, r)
        return profile.ur[idx]
    from scipy.interpolate import PchipInterpolator

    interp = PchipInterpolator(np.log(profile.grid), profile.ur)
    return interp(np.log(r))


def euclidean_closed_form(a: float, c: float, r):
    """Exact euclidean catenoid height via the arcosh parametrisation,
    normalised so u -> a + c Log(r): u = a + c Log((r + sqrt(r^2 - c^2)) / 2)."""
    r = np.asarray(r, dtype=float)
    if c == 0.0:
        return np.full_like(r, a)
    if np.any(r * r <= c * c):
        raise AtOrInsideNeck("euclidean catenoid is a graph only for r > |c|")
    return a + c * np.log((r + np.sqrt(r * r - c * c)) / 2.0)


def euclidean_end(a: float, c: float, span: tuple, nodes_per_decade: int = 64) -> EndProfile:
    """Exact euclidean minimal end (eps = 0) with the given constant term and
    logarithmic parameter; planar when c = 0."""
    lo, hi = span
    if abs(c) >= lo:
        raise AtOrInsideNeck(f"span starts at {lo} inside euclidean neck {abs(c)}")
    grid = log_grid(lo, hi, nodes_per_decade)
    u = euclidean_closed_form(a, c, grid)
    ur = ode_rhs(grid, 2.0 * np.pi * c, 0.0) if c != 0.0 else np.zeros_like(grid)
    return EndProfile(
        grid, u, ur, a, c, 2.0 * np.pi * c, 0.0,
        r_neck=abs(c) if c != 0 else None, kind="euclidean",
    )


def euclidean_dc(c: float, r, order: int = 0):
    """c-derivative of the euclidean end height at fixed constant term, and its
    radial derivatives: d u/dc = Log((r+s)/2) - c^2/(s (r+s)) with s = sqrt(r^2-c^2);
    order 1, 2 return d/dr and d^2/dr^2 of that (r^2 (r^2-c^2)^{-3/2} etc.)."""
    r = np.asarray(r, dtype=float)
    if c == 0.0:
        if order == 0:
            return np.log(r)
        return 1.0 / r if order == 1 else -1.0 / (r * r)
    s = np.sqrt(r * r - c * c)
    if order == 0:
        return np.log((r + s) / 2.0) - c * c / (s * (r + s))
    if order == 1:
        return r * r * s**-3
    if order == 2:
        return -r * (r * r + 2.0 * c * c) * s**-5
    raise ValueError("order must be 0, 1 or 2")


def save_profile(profile: EndProfile, path):
    """Columnar text format: one header line, then rows `r u ur` at 17 digits."""
    rn = profile.r_neck if profile.r_neck is not None else float("nan")
    lines = [
        f"# kind={profile.kind} a={profile.a:.17g} c={profile.c:.17g} "
        f"flux={profile.flux:.17g} epsilon={profile.epsilon:.17g} r_neck={rn:.17g}"
    ]
    for r, u, ur in zip(profile.grid, profile.u, profile.ur):
        lines.append(f"{r:.17g} {u:.17g} {ur:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_profile(path) -> EndProfile:
    with open(path) as fh:
        header = fh.readline().strip()
        rows = np.loadtxt(fh, ndmin=2)
    meta = dict(kv.split("=") for kv in header.lstrip("# ").split())
    rn = float(meta["r_neck"])
    return EndProfile(
        rows[:, 0], rows[:, 1], rows[:, 2],
        a=float(meta["a"]), c=float(meta["c"]), flux=float(meta["flux"]),
        epsilon=float(meta["epsilon"]),
        r_neck=None if np.isnan(rn) else rn,
        kind=meta["kind"],
    )
