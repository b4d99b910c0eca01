"""Hyperbolic metrics in polar/Fermi coordinates and the pointwise calculus of
vertical graphs.

The ambient spaces are R^2 and R^3 carrying the one-parameter metric family

    g^eps    = dr^2 + S(r)^2 dtheta^2,
    gbar^eps = dr^2 + S(r)^2 dtheta^2 + C(r)^2 dt^2,

with warp factors S(r) = sinh(eps*r)/eps and C(r) = cosh(eps*r).  These have
constant sectional curvature -eps^2; eps = 0 is the euclidean member and
eps = 1 the unit-curvature Fermi parametrisation of H^3 about the vertical
geodesic.  Note the identities S' = C and C' = eps^2 S.

All tensors are expressed in the orthonormal frame (e_r, e_theta) of the
horizontal metric; the third slot of a 3-vector refers to the coordinate
vector field e_z = d/dt (which has gbar-length C, not 1).

For a graph  t = u(r, theta)  the module computes the normalisation factor
mu, unit normal, induced metric and its inverse, second fundamental form and
mean curvature, plus the coefficients of the graph Laplace-Beltrami operator
and the first variation of the mean curvature under vertical perturbations.
Mean curvature is the *sum* of the principal curvatures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MetricParams",
    "Point2",
    "Jet2",
    "GraphGeometry",
    "warp_factors",
    "metric_at",
    "graph_geometry",
    "mean_curvature",
    "mean_curvature_gradient",
    "laplace_beltrami_coeffs",
    "jet_to_polar",
    "jet_to_cartesian",
    "area_element",
    "fermi_to_ball",
]

# Below this value of eps*r the warp factor sinh(eps*r)/eps is evaluated by
# its even series in (eps*r); covers eps = 0 exactly (truncation < 1e-28).
_SERIES_CUT = 1e-4


@dataclass(frozen=True)
class MetricParams:
    """Curvature scale of the metric family; sectional curvature is -epsilon^2."""

    epsilon: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class Point2:
    """Polar point (r, theta) with r >= 0."""

    r: float
    theta: float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.r) < 0):
            raise ValueError("r must be >= 0")


@dataclass(frozen=True)
class Jet2:
    """Second-order data (u, Du, D^2 u) of a graph function at a point.

    ``du`` holds the two gradient components and ``d2u`` the three independent
    components (11, 12, 22) of the symmetric covariant Hessian, both in the
    orthonormal frame named by ``frame``: 'polar' means (e_r, e_theta),
    'cartesian' the frame rotated back by the polar angle (for eps = 0 these
    are literal cartesian partial derivatives).
    """

    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    frame: str = "polar"

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        object.__setattr__(self, "du", np.asarray(self.du, dtype=float))
        object.__setattr__(self, "d2u", np.asarray(self.d2u, dtype=float))
        if self.du.shape[0] != 2 or self.d2u.shape[0] != 3:
            raise ValueError("du must have leading dim 2 and d2u leading dim 3")
        if self.frame not in ("polar", "cartesian"):
            raise ValueError("frame must be 'polar' or 'cartesian'")

    @staticmethod
    def zero() -> "Jet2":
        return Jet2(0.0, np.zeros(2), np.zeros(3))

    @staticmethod
    def radial(u, ur, urr, r, params: "MetricParams") -> "Jet2":
        """Jet of a rotationally symmetric graph u(r).

        The angular-angular component of the covariant Hessian of a radial
        function is (S'/S) u_r = (C/S) u_r in the orthonormal frame.
        """
        S, C, _, _ = warp_factors(r, params.epsilon)
        z = np.zeros_like(np.asarray(ur, dtype=float))
        return Jet2(u, np.stack([np.asarray(ur, float), z]),
                    np.stack([np.asarray(urr, float), z, (C / S) * ur]))


@dataclass(frozen=True)
class GraphGeometry:
    """Pointwise geometric data of the graph t = u(r, theta).

    ``normal`` is expressed against (e_r, e_theta, e_z); its gbar-unit length
    reads n_r^2 + n_theta^2 + C^2 n_z^2 = 1.  ``metric``, ``inv_metric`` and
    ``second_ff`` store symmetric (11, 12, 22) components in the orthonormal
    horizontal frame.  ``mean_curv`` is the sum of principal curvatures with
    respect to the upward normal.
    """

    mu: np.ndarray
    normal: np.ndarray
    metric: np.ndarray
    inv_metric: np.ndarray
    second_ff: np.ndarray
    mean_curv: np.ndarray


def warp_factors(r, epsilon: float):
    """Return (S, C, dS, dC) at radius r: S = sinh(eps r)/eps, C = cosh(eps r).

    dS = C and dC = eps^2 S are the radial derivatives.  A series branch below
    eps*r = 1e-4 covers the euclidean limit eps = 0 (S = r) without 0/0.
    """
    r = np.asarray(r, dtype=float)
    x = epsilon * r
    small = np.abs(x) < _SERIES_CUT
    x2 = x * x
    series = r * (1.0 + x2 / 6.0 * (1.0 + x2 / 20.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = np.where(small, 1.0, np.sinh(np.where(small, 1.0, x)))
        S = np.where(small, series, exact / max(epsilon, 1e-300))
    C = np.cosh(x)
    return S, C, C, epsilon**2 * S


def metric_at(params: MetricParams, p: Point2, vertical: bool = False):
    """Diagonal metric coefficients at p: (dr^2, dtheta^2) of g^eps, plus the
    dt^2 coefficient of gbar^eps when ``vertical`` is set.
    """
    S, C, _, _ = warp_factors(p.r, params.epsilon)
    if vertical:
        return np.ones_like(S), S * S, C * C
    return np.ones_like(S), S * S


def jet_to_polar(jet: Jet2, theta) -> Jet2:
    """Rotate jet components from the cartesian-aligned frame to (e_r, e_theta)."""
    if jet.frame == "polar":
        return jet
    return Jet2(jet.u, *_rotate(jet.du, jet.d2u, theta), frame="polar")


def jet_to_cartesian(jet: Jet2, theta) -> Jet2:
    """Rotate jet components from (e_r, e_theta) to the cartesian-aligned frame."""
    if jet.frame == "cartesian":
        return jet
    du, d2u = _rotate(jet.du, jet.d2u, -np.asarray(theta))
    return Jet2(jet.u, du, d2u, frame="cartesian")


def _rotate(du, d2u, theta):
    # components transform with R = [[cos, sin], [-sin, cos]]: v_pol = R v_cart
    c, s = np.cos(theta), np.sin(theta)
    g1 = c * du[0] + s * du[1]
    g2 = -s * du[0] + c * du[1]
    h11 = c * c * d2u[0] + 2 * c * s * d2u[1] + s * s * d2u[2]
    h12 = -c * s * d2u[0] + (c * c - s * s) * d2u[1] + c * s * d2u[2]
    h22 = s * s * d2u[0] - 2 * c * s * d2u[1] + c * c * d2u[2]
    return np.stack([g1, g2]), np.stack([h11, h12, h22])


def _mu_and_inverse(C, g1, g2):
    q = C * C * (g1 * g1 + g2 * g2)
    mu = C / np.sqrt(1.0 + q)
    mu2 = mu * mu
    G11 = 1.0 - mu2 * g1 * g1
    G12 = -mu2 * g1 * g2
    G22 = 1.0 - mu2 * g2 * g2
    return mu, (G11, G12, G22)


def graph_geometry(params: MetricParams, p: Point2, jet: Jet2) -> GraphGeometry:
    """Full second-order geometry of the graph through (p, jet).

    The normalisation factor is mu = C / sqrt(1 + C^2 |Du|^2), the upward unit
    normal mu*(-Du, 1/C^2), the induced metric delta_ij + C^2 u_i u_j with
    inverse delta_ij - mu^2 u_i u_j.  Second fundamental form (w.r.t. the
    upward normal) and mean curvature:

        II_ij = mu [Hess(u)_ij + (C'/C)(r_i u_j + u_i r_j) + C'C u_r u_i u_j],
        H     = <ginv, II>,

    which for eps = 0 reduces to the classical euclidean graph formulas.
    """
    jet = jet_to_polar(jet, p.theta)
    _, C, _, _ = warp_factors(p.r, params.epsilon)
    g1, g2 = jet.du
    h11, h12, h22 = jet.d2u
    mu, (G11, G12, G22) = _mu_and_inverse(C, g1, g2)

    tau = params.epsilon * np.tanh(params.epsilon * np.asarray(p.r, float))  # C'/C
    kap = C * C * tau  # C'*C

    II11 = mu * (h11 + 2.0 * tau * g1 + kap * g1 * g1 * g1)
    II12 = mu * (h12 + tau * g2 + kap * g1 * g1 * g2)
    II22 = mu * (h22 + kap * g1 * g2 * g2)
    H = G11 * II11 + 2.0 * G12 * II12 + G22 * II22

    met = np.stack([1.0 + C * C * g1 * g1, C * C * g1 * g2, 1.0 + C * C * g2 * g2])
    normal = np.stack([-mu * g1, -mu * g2, mu / (C * C)])
    return GraphGeometry(
        mu=mu,
        normal=normal,
        metric=met,
        inv_metric=np.stack([G11, G12, G22]),
        second_ff=np.stack([II11, II12, II22]),
        mean_curv=H,
    )


def mean_curvature(params: MetricParams, r, du, d2u):
    """Mean curvature of a graph from orthonormal-polar jet arrays.

    Vectorised fast path used by the operator and solver modules; agrees with
    ``graph_geometry(...).mean_curv``.
    """
    _, C, _, _ = warp_factors(r, params.epsilon)
    g1, g2 = du
    h11, h12, h22 = d2u
    mu, (G11, G12, G22) = _mu_and_inverse(C, g1, g2)
    tau = params.epsilon * np.tanh(params.epsilon * np.asarray(r, float))
    kap = C * C * tau
    P1 = G11 * h11 + 2.0 * G12 * h12 + G22 * h22
    P2 = 2.0 * tau * (G11 * g1 + G12 * g2)
    P3 = kap * g1 * (G11 * g1 * g1 + 2.0 * G12 * g1 * g2 + G22 * g2 * g2)
    return mu * (P1 + P2 + P3)


def mean_curvature_gradient(params: MetricParams, r, du, d2u):
    """Partial derivatives of the mean curvature in the jet entries.

    Returns (dH_dh, dH_dg) where dH_dh has components (A11, A12, A22) acting on
    a Hessian perturbation k as A11 k11 + 2 A12 k12 + A22 k22 (so the first
    variation under u -> u + t v is  <dH_dh, Hess v> + <dH_dg, Dv>), evaluated
    by closed-form differentiation of the mean-curvature formula.
    """
    r = np.asarray(r, dtype=float)
    _, C, _, _ = warp_factors(r, params.epsilon)
    C2 = C * C
    g1, g2 = du
    h11, h12, h22 = d2u
    mu, (G11, G12, G22) = _mu_and_inverse(C, g1, g2)
    mu2, mu3, mu4 = mu * mu, mu**3, mu**4
    tau = params.epsilon * np.tanh(params.epsilon * r)
    kap = C2 * tau

    gg = g1 * g1 + g2 * g2
    Gg1 = G11 * g1 + G12 * g2
    Gg2 = G12 * g1 + G22 * g2
    gGg = g1 * Gg1 + g2 * Gg2
    hg1 = h11 * g1 + h12 * g2
    hg2 = h12 * g1 + h22 * g2
    ghg = g1 * hg1 + g2 * hg2
    trGh = G11 * h11 + 2.0 * G12 * h12 + G22 * h22

    T = trGh + 2.0 * tau * Gg1 + kap * g1 * gGg
    dmu = np.stack([-mu3 * g1, -mu3 * g2])

    dH_dg = np.empty_like(np.broadcast_to(du, du.shape)).astype(float)
    for m in range(2):
        gm = du[m]
        dmu_m = dmu[m]
        # dG_ij/dg_m = -2 mu dmu g_i g_j - mu^2 (delta_im g_j + g_i delta_jm)
        dP1 = -2.0 * mu * dmu_m * ghg - 2.0 * mu2 * (hg1 if m == 0 else hg2)
        # d(Gg)_1/dg_m and d(g^T G g)/dg_m
        dGg1 = (
            -2.0 * mu * dmu_m * g1 * gg
            - mu2 * ((gg if m == 0 else 0.0) + g1 * gm)
            + (G11 if m == 0 else G12)
        )
        dgGg = 2.0 * (Gg1 if m == 0 else Gg2) - 2.0 * mu * dmu_m * gg * gg - 2.0 * mu2 * gm * gg
        dP2 = 2.0 * tau * dGg1
        dP3 = kap * ((gGg if m == 0 else 0.0) + g1 * dgGg)
        dH_dg[m] = dmu_m * T + mu * (dP1 + dP2 + dP3)

    dH_dh = np.stack([mu * G11, mu * G12, mu * G22])
    return dH_dh, dH_dg


def laplace_beltrami_coeffs(params: MetricParams, p: Point2, jet: Jet2):
    """Coefficients (a, b) of the graph Laplace-Beltrami operator at p.

    Delta^u f = a^{ij} Hess(f)_ij + b^i f_i against the covariant orthonormal
    derivatives of g^eps; a is the inverse induced metric and b collects the
    relative-Christoffel contractions.  For jet = 0 this is the ambient
    operator (a = id, b = 0), whose coordinate form is
    f_rr + (C/S) f_r + (1/S^2) f_theta,theta.
    """
    jet = jet_to_polar(jet, p.theta)
    r = np.asarray(p.r, dtype=float)
    _, C, _, _ = warp_factors(r, params.epsilon)
    C2 = C * C
    g1, g2 = jet.du
    h11, h12, h22 = jet.d2u
    mu, (G11, G12, G22) = _mu_and_inverse(C, g1, g2)
    tau = params.epsilon * np.tanh(params.epsilon * r)
    kap = C2 * tau

    Gg1 = G11 * g1 + G12 * g2
    Gg2 = G12 * g1 + G22 * g2
    trGh = (
        G11 * (G11 * h11 + G12 * h12) + G12 * (G11 * h12 + G12 * h22)
        + G12 * (G12 * h11 + G22 * h12) + G22 * (G12 * h12 + G22 * h22)
    )
    # scalar contractions entering the first-order part of (A.15)
    gh_Gg = G11 * h11 + 2.0 * G12 * h12 + G22 * h22  # <G, Hess u>
    gGr = Gg1  # (G g) . e_r
    gGg = g1 * Gg1 + g2 * Gg2

    b1 = -C2 * gh_Gg * Gg1 - 2.0 * kap * gGr * Gg1 + kap * gGg * G11
    b2 = -C2 * gh_Gg * Gg2 - 2.0 * kap * gGr * Gg2 + kap * gGg * G12
    a = np.stack([G11, G12, G22])
    b = np.stack([b1, b2])
    del trGh, mu
    return a, b


def coeffs_to_coordinates(a, b, r, params: MetricParams):
    """Convert orthonormal-covariant coefficients to polar coordinate partials.

    Returns (c_rr, c_rt, c_tt, c_r, c_t) such that the operator reads
    c_rr f_rr + c_rt f_rtheta + c_tt f_thetatheta + c_r f_r + c_t f_theta.
    """
    S, C, _, _ = warp_factors(r, params.epsilon)
    c_rr = a[0]
    c_rt = 2.0 * a[1] / S
    c_tt = a[2] / (S * S)
    c_r = b[0] + a[2] * C / S
    c_t = b[1] / S - 2.0 * a[1] * C / (S * S)
    return c_rr, c_rt, c_tt, c_r, c_t


def area_element(params: MetricParams, r, du):
    """Area element of the graph per coordinate area dr dtheta: sqrt(1+C^2|Du|^2) S."""
    S, C, _, _ = warp_factors(r, params.epsilon)
    g1, g2 = du
    return np.sqrt(1.0 + C * C * (g1 * g1 + g2 * g2)) * S


def fermi_to_ball(r, theta, t, epsilon: float):
    """Embed Fermi-coordinate points into the Poincare ball chart.

    Points are first carried to the unit-curvature picture (rho, theta,
    eps*t) with rho = eps*r (identity when eps in {0, 1}; eps = 0 returns the
    euclidean point itself), then through the hyperboloid

        X = (cosh rho cosh s, sinh rho cos th, sinh rho sin th, cosh rho sinh s)

    and the standard projection x = (X1, X2, X3)/(1 + X0).
    """
    r = np.asarray(r, float)
    t = np.asarray(t, float)
    if epsilon == 0.0:
        return np.stack([r * np.cos(theta), r * np.sin(theta), t])
    rho, s = epsilon * r, epsilon * t
    X0 = np.cosh(rho) * np.cosh(s)
    X1 = np.sinh(rho) * np.cos(theta)
    X2 = np.sinh(rho) * np.sin(theta)
    X3 = np.cosh(rho) * np.sinh(s)
    return np.stack([X1, X2, X3]) / (1.0 + X0)
