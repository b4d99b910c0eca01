"""Cut-off functions, the parameter regime, and the (eps,R) joining of ends.

The smooth cut-off template is

    chi(s) = 1                        s <= 1,
           = sig(2-s)/(sig(2-s)+sig(s-1))   1 < s < 2,   sig(t) = exp(-1/t),
           = 0                        s >= 2,

so chi_R(r) := chi(r/R) plateaus at 1 inside B(R) and vanishes beyond 2R,
with analytic derivatives up to third order (needed by the operator modules).

The gluing regime couples the rescaling eps, the splice radius R and the
driver Lambda through

    eps R^{5-2 eta} <= 1/Lambda   and   eps R^{5-eta} >= Lambda,

whose eps-window is nonempty iff Lambda^2 <= R^eta.  ``join_ends`` splices a
euclidean minimal end to an eps-hyperbolic one with matching constant term
and logarithmic parameter across the transition annulus A(R, 2R).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import catenoid as cat
from .grids import GridFunction

__all__ = [
    "EmptyWindow",
    "ParameterMismatch",
    "NotImmersive",
    "BoundExceeded",
    "CutoffSpec",
    "Band",
    "GlueParams",
    "RegimeReport",
    "cutoff",
    "cutoff_derivs",
    "feasible_window",
    "validate_regime",
    "default_params",
    "join_ends",
    "joined_height_derivs",
    "PerturbationParams",
    "perturbed_immersion",
    "log_family",
    "shifted_profiles",
]


class EmptyWindow(ValueError):
    """No feasible eps for the requested (R, Lambda, eta): R too small."""


class ParameterMismatch(ValueError):
    """Constant terms or logarithmic parameters of splice inputs differ."""


class NotImmersive(RuntimeError):
    """Perturbation large enough to degenerate the displaced surface."""


class BoundExceeded(ValueError):
    """Logarithmic parameter left the compact family |c| <= C_bound."""


# ---------------------------------------------------------------------------
# cut-off template with derivatives (truncated Taylor arithmetic to order 3)

def _sigma_series(t):
    """(sig, sig', sig'', sig''') of sig(t) = exp(-1/t) for t > 0, else zeros."""
    t = np.asarray(t, dtype=float)
    pos = t > 1e-12
    ts = np.where(pos, t, 1.0)
    s = np.where(pos, np.exp(-1.0 / ts), 0.0)
    i1 = 1.0 / ts
    d1 = np.where(pos, s * i1**2, 0.0)
    d2 = np.where(pos, s * (i1**4 - 2 * i1**3), 0.0)
    d3 = np.where(pos, s * (i1**6 - 6 * i1**5 + 6 * i1**4), 0.0)
    return np.stack([s, d1, d2, d3])


def _series_div(a, b):
    """Taylor coefficients of a/b to third order (leading axis = order)."""
    q0 = a[0] / b[0]
    q1 = (a[1] - q0 * b[1]) / b[0]
    q2 = (a[2] - 2 * q1 * b[1] - q0 * b[2]) / b[0]
    q3 = (a[3] - 3 * q2 * b[1] - 3 * q1 * b[2] - q0 * b[3]) / b[0]
    return np.stack([q0, q1, q2, q3])


def _chi_series(s):
    """(chi, chi', chi'', chi''') of the template at argument s."""
    s = np.asarray(s, dtype=float)
    out = np.zeros((4,) + s.shape)
    out[0] = np.where(s <= 1.0, 1.0, 0.0)
    mid = (s > 1.0) & (s < 2.0)
    if np.any(mid):
        sm = s[mid]
        N = _sigma_series(2.0 - sm)
        N[1] *= -1.0
        N[3] *= -1.0
        D = _sigma_series(sm - 1.0)
        q = _series_div(N, N + D)
        for k in range(4):
            out[k][mid] = q[k]
    return out


def cutoff_derivs(r, inner: float, order: int = 0):
    """chi_R(r) = chi(r / inner) and derivatives up to ``order`` (<= 3)."""
    ser = _chi_series(np.asarray(r, dtype=float) / inner)
    scale = np.array([inner ** -k for k in range(4)])
    vals = ser * scale.reshape((4,) + (1,) * (ser.ndim - 1))
    return vals[: order + 1]


def cutoff(r, spec: "CutoffSpec"):
    """Value of the cut-off of the transition region A(inner, 2 inner)."""
    return cutoff_derivs(r, spec.inner, 0)[0]


@dataclass(frozen=True)
class CutoffSpec:
    """Cut-off of the transition region A(inner, 2*inner)."""

    inner: float

    def __post_init__(self):
        if self.inner <= 0:
            raise ValueError("inner must be positive")

    def __call__(self, r, order: int = 0):
        return cutoff_derivs(r, self.inner, order)


@dataclass(frozen=True)
class Band:
    """Radial field beta(r) = const + sum_i sign_i * chi_{R_i}(r), with derivatives.

    Encodes the vertical/normal interpolation of the modified displacement
    field: beta = 1 where displacement is vertical, 0 where it is normal.
    """

    const: float = 0.0
    terms: tuple = ()  # ((sign, inner), ...)

    def __call__(self, r, order: int = 0):
        r = np.asarray(r, dtype=float)
        out = np.zeros((order + 1,) + r.shape)
        out[0] += self.const
        for sign, inner in self.terms:
            out += sign * cutoff_derivs(r, inner, order)
        return out

    @staticmethod
    def vertical_inside(inner: float) -> "Band":
        """beta = chi_{inner}: vertical displacement inside B(inner)."""
        return Band(0.0, ((1.0, inner),))

    @staticmethod
    def vertical_between(r0: float, r_eps: Optional[float]) -> "Band":
        """beta = chi_{r_eps} - chi_{r0}: vertical on A(2 r0, r_eps), normal
        near the core and near infinity; r_eps None means the eps = 0
        convention chi_eps == 1."""
        if r_eps is None:
            return Band(1.0, ((-1.0, r0),))
        return Band(0.0, ((1.0, r_eps), (-1.0, r0)))

    @staticmethod
    def normal_everywhere() -> "Band":
        return Band(0.0, ())


# ---------------------------------------------------------------------------
# parameter regime

@dataclass(frozen=True)
class GlueParams:
    """Parameter bundle of the gluing regime.

    c holds one logarithmic parameter per end; R0 is the inner working radius
    of the end description (exposed as a knob, default 4).
    """

    epsilon: float
    R: float
    Lambda: float
    eta: float
    c: tuple = (1.0, 0.0, -1.0)
    C_bound: float = 4.0
    R0: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(x) for x in np.atleast_1d(self.c)))
        if not 0 < self.eta < 0.5:
            raise ValueError("eta must lie in (0, 1/2)")
        if self.Lambda < 1.0:
            raise ValueError("Lambda must be >= 1")
        if self.epsilon <= 0 or self.R <= 1:
            raise ValueError("need epsilon > 0 and R > 1")

    @property
    def n_ends(self) -> int:
        return len(self.c)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon, "R": self.R, "Lambda": self.Lambda,
            "eta": self.eta, "c": list(self.c), "C_bound": self.C_bound, "R0": self.R0,
        }

    @staticmethod
    def from_dict(d: dict) -> "GlueParams":
        return GlueParams(
            epsilon=float(d["epsilon"]), R=float(d["R"]), Lambda=float(d["Lambda"]),
            eta=float(d["eta"]), c=tuple(np.atleast_1d(d.get("c", (1.0, 0.0, -1.0)))),
            C_bound=float(d.get("C_bound", 4.0)), R0=float(d.get("R0", 4.0)),
        )


@dataclass(frozen=True)
class RegimeReport:
    upper_ok: bool       # eps R^{5-2eta} <= 1/Lambda
    lower_ok: bool       # eps R^{5-eta}  >= Lambda
    window: tuple        # admissible eps interval for (R, Lambda, eta)
    c_ok: bool

    @property
    def feasible(self) -> bool:
        return self.upper_ok and self.lower_ok and self.c_ok


def feasible_window(R: float, Lambda: float, eta: float) -> tuple:
    """Admissible eps interval [Lambda R^{-(5-eta)}, R^{-(5-2eta)}/Lambda]."""
    lo = Lambda * R ** -(5.0 - eta)
    hi = R ** -(5.0 - 2.0 * eta) / Lambda
    if lo > hi:
        raise EmptyWindow(
            f"Lambda^2 = {Lambda**2:.6g} exceeds R^eta = {R**eta:.6g}: R too small"
        )
    return lo, hi


def validate_regime(params: GlueParams) -> RegimeReport:
    """Check both regime inequalities for the given parameters.

    Raises EmptyWindow when no eps can satisfy them for this (R, Lambda, eta).
    """
    window = feasible_window(params.R, params.Lambda, params.eta)
    upper = params.epsilon * params.R ** (5.0 - 2.0 * params.eta) <= 1.0 / params.Lambda
    lower = params.epsilon * params.R ** (5.0 - params.eta) >= params.Lambda
    c_ok = all(abs(ci) <= params.C_bound for ci in params.c)
    return RegimeReport(bool(upper), bool(lower), window, c_ok)


def default_params(R: float = 40.0, Lambda: float = 1.1, eta: float = 0.1,
                   c=(1.0, 0.0, -1.0), **kw) -> GlueParams:
    """Regime point with eps at the geometric mean of the feasible window."""
    lo, hi = feasible_window(R, Lambda, eta)
    return GlueParams(epsilon=float(np.sqrt(lo * hi)), R=R, Lambda=Lambda, eta=eta, c=c, **kw)


# ---------------------------------------------------------------------------
# joining

def join_ends(eu: cat.EndProfile, hy: cat.EndProfile, params: GlueParams,
              tol: float = 1e-12) -> cat.EndProfile:
    """Splice a euclidean end to an eps-hyperbolic end over A(R, 2R).

    The joined height is chi_c * u_eu + (1 - chi_c) * u_hy; samples equal the
    euclidean input on [.., R] and the hyperbolic input on [2R, ..] bitwise at
    shared nodes.  Requires matching constant terms and logarithmic parameters.
    """
    if abs(eu.a - hy.a) > tol or abs(eu.c - hy.c) > tol:
        raise ParameterMismatch(
            f"(a, c) mismatch: euclidean ({eu.a}, {eu.c}) vs hyperbolic ({hy.a}, {hy.c})"
        )
    if eu.epsilon != 0.0:
        raise ParameterMismatch("first argument must be a euclidean (eps = 0) end")
    R = params.R
    lo_mask = eu.grid < 2.0 * R
    hi_mask = hy.grid >= 2.0 * R
    grid = np.concatenate([eu.grid[lo_mask], hy.grid[hi_mask]])
    if np.any(np.diff(grid) <= 0):
        raise ParameterMismatch("input grids do not interleave monotonically at 2R")
    chi = cutoff_derivs(grid, R, 0)[0]
    u_eu = np.concatenate([eu.u[lo_mask], cat.euclidean_closed_form(eu.a, eu.c, hy.grid[hi_mask])])
    u_hy = np.empty_like(grid)
    u_hy[np.sum(lo_mask):] = hy.u[hi_mask]
    trans = (grid >= R) & (grid < 2.0 * R)
    pure_eu = grid < R
    u_hy[trans] = hy.eval_u(grid[trans]) if np.any(trans) else u_hy[trans]
    u_hy[pure_eu] = 0.0  # chi = 1 there, value irrelevant
    u = np.where(pure_eu, u_eu, chi * u_eu + (1.0 - chi) * u_hy)
    dchi = cutoff_derivs(grid, R, 1)[1]
    ur_eu = np.where(grid > abs(eu.c), cat.ode_rhs(np.maximum(grid, abs(eu.c) + 1e-9), eu.flux, 0.0), 0.0) \
        if eu.c != 0 else np.zeros_like(grid)
    ur_hy = np.where(pure_eu, 0.0, cat.ode_rhs(np.maximum(grid, hy.grid[0]), hy.flux, hy.epsilon))
    ur = np.where(pure_eu, ur_eu,
                  chi * ur_eu + (1.0 - chi) * ur_hy + dchi * (u_eu - np.where(pure_eu, 0.0, u_hy)))
    return cat.EndProfile(
        grid, u, ur, eu.a, eu.c, hy.flux, hy.epsilon,
        r_neck=eu.r_neck, kind="joined", splice=(eu, hy, R),
    )


def joined_height_derivs(profile: cat.EndProfile, r, order: int = 3):
    """(u, u_r, ..., up to ``order``) of a joined end, analytically.

    Uses the product rule on chi_c * u_eu + (1 - chi_c) * u_hy with closed-form
    slope derivatives of both constituents; heights are accumulated by
    quadrature from the stored samples.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if profile.kind != "joined":
        u = profile.eval_u(r) if profile.c != 0 else np.full_like(r, profile.a)
        if profile.c == 0:
            zeros = np.zeros_like(r)
            return [u] + [zeros] * order
        ws = cat.ode_rhs_derivs(r, profile.flux, profile.epsilon)
        return [u] + [ws[k] for k in range(order)]
    eu, hy, R = profile.splice
    chi = cutoff_derivs(r, R, min(order, 3))
    ue = _height_derivs(eu, r, order)
    uh = _height_derivs(hy, r, order)
    diff = [ue[k] - uh[k] for k in range(order + 1)]
    out = []
    for k in range(order + 1):
        # d^k [u_hy + chi * diff]
        val = uh[k].copy()
        for j in range(k + 1):
            val += _binom(k, j) * chi[j] * diff[k - j]
        out.append(val)
    return out


def _binom(n, k):
    from math import comb

    return float(comb(n, k))


def _height_derivs(profile: cat.EndProfile, r, order: int):
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if profile.c == 0.0:
        return [np.full_like(r, profile.a)] + [np.zeros_like(r)] * order
    u = np.asarray(profile.eval_u(r), dtype=float).reshape(r.shape)
    ws = cat.ode_rhs_derivs(r, profile.flux, profile.epsilon)
    return [u] + [ws[k] for k in range(order)]


def shifted_profiles(profile: cat.EndProfile, dc: float, params: GlueParams) -> cat.EndProfile:
    """The joined end with logarithmic parameter c + dc and the same constant
    term (the family behind the log-parameter perturbation operator)."""
    eu, hy, R = profile.splice
    c2 = eu.c + dc
    eu2 = cat.euclidean_end(eu.a, c2, (eu.grid[0], eu.grid[-1]),
                            nodes_per_decade=_npd(eu.grid))
    hy2 = cat.integrate_profile(params.R / 4.0, hy.a, c2, hy.epsilon,
                                (hy.grid[0], hy.grid[-1]), nodes_per_decade=_npd(hy.grid))
    return join_ends(eu2, hy2, params)


def _npd(grid) -> int:
    return int(round(np.log(10.0) / np.log(grid[1] / grid[0])))


# ---------------------------------------------------------------------------
# perturbation family

@dataclass
class PerturbationParams:
    """Degrees of freedom of the perturbation family.

    a: first vertical shifts (active outside B(4 R0)); b: second vertical
    shifts (active outside B(2/eps)); w: logarithmic-parameter shifts;
    f: displacement along the modified normal field (GridFunction or callable
    r -> value), restricted to the retained symmetry class.
    """

    a: np.ndarray
    b: np.ndarray
    w: np.ndarray
    f: object = None

    def __post_init__(self):
        self.a = np.atleast_1d(np.asarray(self.a, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        self.w = np.atleast_1d(np.asarray(self.w, dtype=float))

    @staticmethod
    def zero(n: int) -> "PerturbationParams":
        z = np.zeros(n)
        return PerturbationParams(z.copy(), z.copy(), z.copy(), None)


def _f_value(f, r):
    if f is None:
        return np.zeros_like(np.asarray(r, dtype=float))
    if isinstance(f, GridFunction):
        from scipy.interpolate import PchipInterpolator

        return PchipInterpolator(np.log(f.grid.radii), f.mode0)(np.log(r))
    return f(r)


def displacement_band(params: GlueParams) -> Band:
    """Vertical band of the modified displacement field on a joined surface:
    vertical on A(2 R0, 1/eps), normal near the core and beyond 2/eps."""
    return Band.vertical_between(params.R0, 1.0 / params.epsilon)


def perturbed_immersion(end: cat.EndProfile, pp: PerturbationParams,
                        params: GlueParams, p, end_index: int = 0):
    """Displaced position (r, theta, t) of the surface point over radius p.

    Displacement f along the modified normal field (vertical inside the band,
    hyperbolic unit normal outside) plus the two vertical shifts of the end.
    Raises NotImmersive when the radial reparametrisation degenerates on a
    local stencil.
    """
    from . import geometry as geo

    r = np.atleast_1d(np.asarray(getattr(p, "r", p), dtype=float))
    theta = getattr(p, "theta", 0.0)
    band = displacement_band(params)
    stencil = np.concatenate([r * (1 - 1e-4), r, r * (1 + 1e-4)])

    def displace(rr):
        hs = joined_height_derivs(end, rr, 2)
        u, u1 = hs[0], hs[1]
        beta = band(rr, 0)[0]
        fval = _f_value(pp.f, rr)
        _, C, _, _ = geo.warp_factors(rr, params.epsilon)
        mu = C / np.sqrt(1.0 + C * C * u1 * u1)
        r_new = rr + fval * (1.0 - beta) * (-mu * u1)
        chi0p = cutoff_derivs(rr, 2.0 * params.R0, 0)[0]
        chieps = cutoff_derivs(rr, 0.5 / params.epsilon, 0)[0]
        t_new = (
            u + fval * (beta + (1.0 - beta) * mu / (C * C))
            + pp.a[end_index] * (1.0 - chi0p) + pp.b[end_index] * (1.0 - chieps)
        )
        return r_new, t_new

    r_disp, t_disp = displace(stencil)
    n = r.size
    if np.any(r_disp[:n] >= r_disp[n:2 * n]) or np.any(r_disp[n:2 * n] >= r_disp[2 * n:]):
        raise NotImmersive("radial reparametrisation reverses on the stencil")
    return np.stack([r_disp[n:2 * n], np.full(n, theta), t_disp[n:2 * n]])


def log_family(end: cat.EndProfile, w: float, params: GlueParams, p, glue: Optional[GlueParams] = None):
    """Point of the log-parameter-shifted surface over the same footprint.

    The end is replaced by the joined end with parameter c + w and unchanged
    constant term; the horizontal projection of every point is fixed.
    """
    if abs(end.c + w) > params.C_bound:
        raise BoundExceeded(f"|c + w| = {abs(end.c + w):.3g} exceeds C_bound = {params.C_bound}")
    r = np.atleast_1d(np.asarray(getattr(p, "r", p), dtype=float))
    theta = getattr(p, "theta", 0.0)
    if w == 0.0:
        u = joined_height_derivs(end, r, 0)[0]
    else:
        shifted = shifted_profiles(end, w, params)
        u = joined_height_derivs(shifted, r, 0)[0]
    return np.stack([r, np.full(r.size, theta), u])
