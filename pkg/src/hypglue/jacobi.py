"""Modified Jacobi operators of graphs and ends, and their discrete forms.

The modified Jacobi operator linearises the mean curvature under displacement
along the interpolated field  X = beta * e_z + (1 - beta) * N  (vertical on
the band where beta = 1, hyperbolic unit normal outside), divided by the
transversality factor psi = gbar(X, N) > 0.  Writing L[v] for the first
variation of the mean curvature under the vertical graph perturbation
u -> u + t v, a displacement f along X changes the height by f * psi / mu, so

    Jhat f = (1/psi) L[(psi/mu) f]
           = g^{u,ij} Hess(f)_ij + b^i f_i + c0 f,

whose second-order part is always the inverse induced metric and whose
zero-order part vanishes identically on the vertical band (e_z is Killing).
With beta = 0 everywhere this is the unmodified Jacobi operator; at a totally
geodesic plane it reduces to  Lap^g f - 2 eps^2 f, and on the vertical band
to  Lap^g f + 2 eps tanh(eps r) f_r.

Operators are carried as rotationally symmetric coefficient fields against
covariant orthonormal derivatives; ``discretize`` turns them into per-mode
sparse systems on the log-radial grid (second-order centered differences).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import catenoid as cat
from . import geometry as geo
from . import surgery as srg
from .grids import AnnularGrid, GridFunction

__all__ = [
    "NotTransverse",
    "GridMismatch",
    "SingularRow",
    "ExpansionRegionViolated",
    "OperatorCoeffs",
    "GraphOperator",
    "graph_operator",
    "modified_jacobi",
    "plane_operator",
    "jacobi_as_derivative",
    "displaced_mean_curvature",
    "decompose_singular",
    "singular_part",
    "canonical_extension",
    "extend_operator",
    "discretize",
    "DiscreteOperator",
    "end_operator_expansion",
    "AnnularGrid",
    "GridFunction",
]


class NotTransverse(RuntimeError):
    """psi <= 0 somewhere: the graph is not transverse to the displacement field."""


class GridMismatch(ValueError):
    """Operands sampled on different radii."""


class SingularRow(RuntimeError):
    """A diagonal block of the discrete system vanishes."""


class ExpansionRegionViolated(ValueError):
    """Requested expansion outside the annulus where it is valid."""


# ---------------------------------------------------------------------------
# coefficient fields

@dataclass
class OperatorCoeffs:
    """Second-order operator  a^{ij} Hess(f)_ij + b^i f_i + c0 f  sampled on
    ``radii``, components in the covariant orthonormal frame of the metric
    with scale ``epsilon``; a = (11, 12, 22), b = (r, theta)."""

    radii: np.ndarray
    epsilon: float
    a: np.ndarray
    b: np.ndarray
    c0: np.ndarray

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c0 = np.asarray(self.c0, dtype=float)
        n = self.radii.size
        if self.a.shape != (3, n) or self.b.shape != (2, n) or self.c0.shape != (n,):
            raise ValueError("coefficient shapes inconsistent with radii")

    def _match(self, other: "OperatorCoeffs"):
        if self.radii.shape != other.radii.shape or not np.array_equal(self.radii, other.radii):
            raise GridMismatch("operators sampled on different radii")

    def __sub__(self, other):
        self._match(other)
        return OperatorCoeffs(self.radii, self.epsilon, self.a - other.a,
                              self.b - other.b, self.c0 - other.c0)

    def __add__(self, other):
        self._match(other)
        return OperatorCoeffs(self.radii, self.epsilon, self.a + other.a,
                              self.b + other.b, self.c0 + other.c0)

    @staticmethod
    def zero(radii, epsilon: float) -> "OperatorCoeffs":
        n = np.asarray(radii).size
        return OperatorCoeffs(radii, epsilon, np.zeros((3, n)), np.zeros((2, n)), np.zeros(n))

    def mode_coefficients(self, k: int):
        """Radial coordinate-form coefficients (c2, c1, c0k) of the operator on
        the Fourier mode k: c2 f'' + c1 f' + c0k f.  Requires a_12 = b_theta = 0
        (rotationally symmetric operators)."""
        if np.max(np.abs(self.a[1])) > 0 or np.max(np.abs(self.b[1])) > 0:
            raise ValueError("mode reduction requires a_12 = b_theta = 0")
        S, C, _, _ = geo.warp_factors(self.radii, self.epsilon)
        c2 = self.a[0]
        c1 = self.b[0] + self.a[2] * C / S
        c0k = self.c0 - k * k * self.a[2] / (S * S)
        return c2, c1, c0k

    def apply_radial(self, r, v, v1, v2):
        """Apply to an analytically known radial function (jets at r)."""
        idx = _index_of(self.radii, r)
        S, C, _, _ = geo.warp_factors(self.radii[idx], self.epsilon)
        return (self.a[0][idx] * v2 + (self.b[0][idx] + self.a[2][idx] * C / S) * v1
                + self.c0[idx] * v)


def _index_of(radii, r):
    r = np.atleast_1d(np.asarray(r, dtype=float))
    idx = np.searchsorted(radii, r * (1 - 1e-12))
    if np.any(idx >= radii.size) or np.any(np.abs(radii[idx] - r) > 1e-9 * np.abs(r)):
        raise GridMismatch("radii not nodes of the operator sampling")
    return idx


# ---------------------------------------------------------------------------
# the graph operator via the vertical linearisation

@dataclass
class GraphOperator:
    """Coefficients of Jhat plus the ingredients of the vertical linearisation,
    kept for perturbation-operator columns: response(v) = (1/psi) L[v]."""

    coeffs: OperatorCoeffs
    psi: np.ndarray
    phi: np.ndarray
    dH_dh: np.ndarray
    dH_dg: np.ndarray

    @property
    def radii(self) -> np.ndarray:
        return self.coeffs.radii

    def response(self, v, v1, v2):
        """(1/psi) L[v] for a radial function with jets (v, v_r, v_rr).

        L has no zero-order term, so the response of any constant vanishes;
        columns built from cut-off profiles are exactly supported on their
        transition annuli.
        """
        S, C, _, _ = geo.warp_factors(self.radii, self.coeffs.epsilon)
        hess_tt = (C / S) * v1
        Lv = self.dH_dh[0] * v2 + self.dH_dh[2] * hess_tt + self.dH_dg[0] * v1
        return Lv / self.psi


def graph_operator(radii, height_derivs: Sequence[np.ndarray], band: srg.Band,
                   epsilon: float) -> GraphOperator:
    """Modified Jacobi operator of the rotationally symmetric graph with the
    given height derivatives (u, u_r, u_rr, u_rrr) under the metric of scale
    ``epsilon``, displacement field interpolated by ``band``.
    """
    radii = np.asarray(radii, dtype=float)
    _, u1, u2, u3 = (np.broadcast_to(h, radii.shape) for h in height_derivs[:4])
    S, C, dC_, _ = geo.warp_factors(radii, epsilon)
    Cp = epsilon**2 * S           # C'
    Cpp = epsilon**2 * C          # C''

    q = C * C * u1 * u1
    roota = np.sqrt(1.0 + q)
    mu = C / roota
    qp = 2.0 * C * Cp * u1 * u1 + 2.0 * C * C * u1 * u2
    qpp = (2.0 * (Cp * Cp + C * Cpp) * u1 * u1 + 8.0 * C * Cp * u1 * u2
           + 2.0 * C * C * (u2 * u2 + u1 * u3))
    mu1 = Cp / roota - 0.5 * C * qp / roota**3
    mu2 = (Cpp / roota - Cp * qp / roota**3
           + 0.75 * C * qp * qp / roota**5 - 0.5 * C * qpp / roota**3)

    beta = band(radii, 2)
    inv_mu = 1.0 / mu
    inv_mu1 = -mu1 / mu**2
    inv_mu2 = -mu2 / mu**2 + 2.0 * mu1 * mu1 / mu**3
    phi = beta[0] + (1.0 - beta[0]) * inv_mu
    phi1 = beta[1] * (1.0 - inv_mu) + (1.0 - beta[0]) * inv_mu1
    phi2 = (beta[2] * (1.0 - inv_mu) - 2.0 * beta[1] * inv_mu1
            + (1.0 - beta[0]) * inv_mu2)
    psi = mu * phi
    if np.any(psi <= 0.0) or not np.all(np.isfinite(psi)):
        raise NotTransverse("psi = gbar(X, N) must be positive on the graph")

    du = np.stack([u1, np.zeros_like(u1)])
    d2u = np.stack([u2, np.zeros_like(u2), (C / S) * u1])
    dH_dh, dH_dg = geo.mean_curvature_gradient(geo.MetricParams(epsilon), radii, du, d2u)

    G = np.stack([1.0 - mu * mu * u1 * u1, np.zeros_like(u1), np.ones_like(u1)])
    hess_phi_tt = (C / S) * phi1
    b_r = (2.0 * mu * G[0] * phi1) / psi + dH_dg[0] * inv_mu
    c0 = (mu * (G[0] * phi2 + G[2] * hess_phi_tt) + dH_dg[0] * phi1) / psi
    coeffs = OperatorCoeffs(radii, epsilon, G, np.stack([b_r, np.zeros_like(b_r)]), c0)
    return GraphOperator(coeffs, psi, phi, dH_dh, dH_dg)


def modified_jacobi(profile, params: geo.MetricParams, psi_cutoff=None,
                    radii=None) -> OperatorCoeffs:
    """Modified Jacobi operator of an end profile (or of the plane when
    ``profile`` is a constant height).

    psi_cutoff None gives the unmodified operator (displacement along the unit
    normal everywhere); a CutoffSpec makes the displacement vertical inside
    its transition region; a Band is used as given.
    """
    return _graph_operator_of(profile, params, psi_cutoff, radii).coeffs


def _graph_operator_of(profile, params, psi_cutoff, radii=None) -> GraphOperator:
    if isinstance(profile, cat.EndProfile):
        if radii is None:
            radii = profile.grid
        hs = srg.joined_height_derivs(profile, radii, 3)
    else:
        if radii is None:
            raise ValueError("radii required for a constant-height plane")
        radii = np.asarray(radii, dtype=float)
        hs = [np.full_like(radii, float(profile))] + [np.zeros_like(radii)] * 3
    band = _as_band(psi_cutoff)
    return graph_operator(radii, hs, band, params.epsilon)


def _as_band(psi_cutoff) -> srg.Band:
    if psi_cutoff is None:
        return srg.Band.normal_everywhere()
    if isinstance(psi_cutoff, srg.Band):
        return psi_cutoff
    if isinstance(psi_cutoff, srg.CutoffSpec):
        return srg.Band.vertical_inside(psi_cutoff.inner)
    raise TypeError("psi_cutoff must be None, a CutoffSpec or a Band")


def plane_operator(radii, epsilon: float, psi_cutoff=None, height: float = 0.0) -> OperatorCoeffs:
    """Jacobi operator of the horizontal totally geodesic plane."""
    return modified_jacobi(height, geo.MetricParams(epsilon), psi_cutoff, radii=radii)


# ---------------------------------------------------------------------------
# displaced-surface mean curvature (exact for rotationally symmetric data)

def displaced_mean_curvature(profile, params: geo.MetricParams, band: srg.Band,
                             radii, f_jets, t: float = 1.0, extra_height=None):
    """Mean curvature of the surface displaced by t*f along X, evaluated at the
    displaced image of each radius (indexed by the base radii).

    The rotationally symmetric displacement is reparametrised exactly: the
    displaced footpoint is rhat = r - t f (1-beta) mu u_r and the height
    uhat = u + t f (beta + (1-beta) mu / C^2) (+ an optional vertical field),
    with all chain-rule derivatives analytic apart from the jets of f itself.
    Raises surgery.NotImmersive when the radial map degenerates.
    """
    radii = np.asarray(radii, dtype=float)
    if isinstance(profile, cat.EndProfile):
        u0, u1, u2, u3 = srg.joined_height_derivs(profile, radii, 3)
    else:
        u0 = np.full_like(radii, float(profile))
        u1 = u2 = u3 = np.zeros_like(radii)
    f, f1, f2 = f_jets
    if extra_height is not None:
        v0, v1, v2 = extra_height
        u0, u1, u2 = u0 + v0, u1 + v1, u2 + v2
    S, C, _, _ = geo.warp_factors(radii, params.epsilon)
    eps = params.epsilon
    Cp = eps**2 * S
    Cpp = eps**2 * C
    q = C * C * u1 * u1
    roota = np.sqrt(1.0 + q)
    mu = C / roota
    qp = 2.0 * C * Cp * u1 * u1 + 2.0 * C * C * u1 * u2
    qpp = (2.0 * (Cp * Cp + C * Cpp) * u1 * u1 + 8.0 * C * Cp * u1 * u2
           + 2.0 * C * C * (u2 * u2 + u1 * u3))
    mu1 = Cp / roota - 0.5 * C * qp / roota**3
    mu2 = (Cpp / roota - Cp * qp / roota**3
           + 0.75 * C * qp * qp / roota**5 - 0.5 * C * qpp / roota**3)
    beta = band(radii, 2)

    # horizontal displacement profile hor = -(1-beta) mu u1 and derivatives
    g0 = mu * u1
    g1 = mu1 * u1 + mu * u2
    g2 = mu2 * u1 + 2.0 * mu1 * u2 + mu * u3
    hor = -(1.0 - beta[0]) * g0
    hor1 = beta[1] * g0 - (1.0 - beta[0]) * g1
    hor2 = beta[2] * g0 + 2.0 * beta[1] * g1 - (1.0 - beta[0]) * g2
    # vertical factor vfac = beta + (1-beta) mu / C^2 and derivatives
    m0 = mu / (C * C)
    m1 = mu1 / (C * C) - 2.0 * mu * Cp / C**3
    m2 = (mu2 / (C * C) - 4.0 * mu1 * Cp / C**3
          - 2.0 * mu * Cpp / C**3 + 6.0 * mu * Cp * Cp / C**4)
    vfac = beta[0] + (1.0 - beta[0]) * m0
    vfac1 = beta[1] * (1.0 - m0) + (1.0 - beta[0]) * m1
    vfac2 = beta[2] * (1.0 - m0) - 2.0 * beta[1] * m1 + (1.0 - beta[0]) * m2

    rhat = radii + t * f * hor
    dr = 1.0 + t * (f1 * hor + f * hor1)
    ddr = t * (f2 * hor + 2.0 * f1 * hor1 + f * hor2)
    dt_ = u1 + t * (f1 * vfac + f * vfac1)
    ddt = u2 + t * (f2 * vfac + 2.0 * f1 * vfac1 + f * vfac2)
    if np.any(dr <= 0.0) or np.any(rhat <= 0.0):
        raise srg.NotImmersive("displaced radial parametrisation degenerates")
    Uhat1 = dt_ / dr
    Uhat2 = (ddt * dr - dt_ * ddr) / dr**3
    du = np.stack([Uhat1, np.zeros_like(Uhat1)])
    Sh, Ch, _, _ = geo.warp_factors(rhat, params.epsilon)
    d2u = np.stack([Uhat2, np.zeros_like(Uhat2), (Ch / Sh) * Uhat1])
    return rhat, geo.mean_curvature(params, rhat, du, d2u)


def jacobi_as_derivative(profile, params: geo.MetricParams, psi_cutoff, f: GridFunction,
                         t: float) -> GridFunction:
    """Symmetric difference quotient (H_{tf} - H_{-tf}) / (2 t psi) on the grid.

    Converges to the modified Jacobi operator applied to f at rate O(t^2).
    """
    grid = f.grid
    band = _as_band(psi_cutoff)
    gop = _graph_operator_of(profile, params, psi_cutoff, radii=grid.radii)
    jets = (f.mode0, f.dr()[grid.modes.index(0)], f.drr()[grid.modes.index(0)])
    _, Hp = displaced_mean_curvature(profile, params, band, grid.radii, jets, t)
    _, Hm = displaced_mean_curvature(profile, params, band, grid.radii, jets, -t)
    return GridFunction.radial(grid, (Hp - Hm) / (2.0 * t * gop.psi))


# ---------------------------------------------------------------------------
# singular/regular decomposition and canonical extension

def singular_part(radii, glue: srg.GlueParams, c_end: float) -> OperatorCoeffs:
    """The singular component: M f = 2 chi_{eps R^4} (eps^2 c^2 / r^3) f_r,
    canonically extended inside B(eps R) where its radial coefficient is
    linear, 2 c^2 r / (eps^2 R^4).  Unit-picture operator (metric scale 1).
    """
    radii = np.asarray(radii, dtype=float)
    eps, R = glue.epsilon, glue.R
    chi = srg.cutoff_derivs(radii, eps * R**4, 0)[0]
    outside = 2.0 * chi * eps * eps * c_end * c_end / radii**3
    inside = 2.0 * c_end * c_end * radii / (eps * eps * R**4)
    b_r = np.where(radii > eps * R, outside, inside)
    n = radii.size
    return OperatorCoeffs(radii, 1.0, np.zeros((3, n)),
                          np.stack([b_r, np.zeros(n)]), np.zeros(n))


def decompose_singular(op: OperatorCoeffs, op0: OperatorCoeffs, glue: srg.GlueParams,
                       c_end: Optional[float] = None):
    """Split Jhat - Jhat0 into the singular first-order part M (exact formula
    with cut-off chi_{eps R^4}) and the regular remainder N; M + N + Jhat0
    reconstructs Jhat identically."""
    op._match(op0)
    if c_end is None:
        c_end = glue.c[0]
    M = singular_part(op.radii, glue, c_end)
    N = (op - op0) - M
    return M, N


def canonical_extension(f: GridFunction, inner: float) -> GridFunction:
    """Extend a function on A(inner, ..) across the inner disk: value at the
    origin is the circle mean at ``inner`` (the mode-0 coefficient), and the
    extension is linear along rays, so mode 0 continues constant and mode k
    scales by r/inner."""
    grid = f.grid
    out = f.coeffs.copy()
    idx = int(np.searchsorted(grid.radii, inner * (1 - 1e-12)))
    idx = min(idx, grid.n - 1)
    ratio = grid.radii[:idx] / grid.radii[idx]
    for m, k in enumerate(grid.modes):
        boundary = out[m, idx]
        out[m, :idx] = boundary if k == 0 else boundary * ratio
    return GridFunction(grid, out)


def extend_operator(op: OperatorCoeffs, inner: float) -> OperatorCoeffs:
    """Canonical extension of a rotationally symmetric operator's cartesian
    coefficient fields inside B(inner): the a-tensor interpolates linearly to
    its isotropic circle mean, b vanishes linearly at the origin, c0 continues
    with its boundary value."""
    radii = op.radii
    idx = int(np.searchsorted(radii, inner * (1 - 1e-12)))
    if idx == 0:
        return op
    idx = min(idx, radii.size - 1)
    a = op.a.copy()
    b = op.b.copy()
    c0 = op.c0.copy()
    ratio = radii[:idx] / radii[idx]
    mbar = 0.5 * (op.a[0][idx] + op.a[2][idx])
    a[0][:idx] = mbar + ratio * (op.a[0][idx] - mbar)
    a[2][:idx] = mbar + ratio * (op.a[2][idx] - mbar)
    a[1][:idx] = ratio * op.a[1][idx]
    b[0][:idx] = ratio * op.b[0][idx]
    b[1][:idx] = ratio * op.b[1][idx]
    c0[:idx] = op.c0[idx]
    return OperatorCoeffs(radii, op.epsilon, a, b, c0)


# ---------------------------------------------------------------------------
# discretisation

class DiscreteOperator:
    """Per-mode sparse realisation of an OperatorCoeffs on an AnnularGrid.

    ``apply`` uses pure operator rows (one-sided at the grid edges); ``solve``
    replaces the edge rows by the grid's boundary conditions and shares the
    interior stencils with ``apply``, so applying after solving reproduces the
    right-hand side exactly at interior nodes.
    """

    def __init__(self, op: OperatorCoeffs, grid: AnnularGrid):
        if not np.array_equal(op.radii, grid.radii):
            raise GridMismatch("operator not sampled on the grid radii")
        self.op = op
        self.grid = grid
        self._apply_mats = {}
        self._solve_mats = {}
        self._lu = {}
        for k in grid.modes:
            c2, c1, c0k = op.mode_coefficients(k)
            A_apply = _assemble(grid, c2, c1, c0k, bc=None)
            A_solve = _assemble(grid, c2, c1, c0k, bc=(grid.inner_bc, grid.outer_bc), mode=k)
            if np.any(A_solve.diagonal() == 0.0):
                raise SingularRow(f"zero diagonal in mode {k} system")
            self._apply_mats[k] = A_apply
            self._solve_mats[k] = A_solve

    def apply(self, f: GridFunction) -> GridFunction:
        out = np.empty_like(f.coeffs)
        for m, k in enumerate(self.grid.modes):
            out[m] = self._apply_mats[k] @ f.coeffs[m]
        return GridFunction(self.grid, out)

    def solve(self, rhs: GridFunction, refine: int = 1) -> GridFunction:
        """Solve with boundary rows enforcing the grid's BCs (homogeneous).

        Interior rows match ``apply``; a refinement step drives the interior
        residual to the rounding floor.
        """
        out = np.empty_like(rhs.coeffs)
        for m, k in enumerate(self.grid.modes):
            if k not in self._lu:
                self._lu[k] = spla.splu(self._solve_mats[k].tocsc())
            b = rhs.coeffs[m].copy()
            b[0] = 0.0
            b[-1] = 0.0
            x = self._lu[k].solve(b)
            for _ in range(refine):
                x += self._lu[k].solve(b - self._solve_mats[k] @ x)
            out[m] = x
        return GridFunction(self.grid, out)


def _assemble(grid: AnnularGrid, c2, c1, c0, bc=None, mode: int = 0) -> sp.csr_matrix:
    n = grid.n
    h = grid.h
    r = grid.radii
    alpha = c2 / r**2
    betac = c1 / r - c2 / r**2
    A = sp.lil_matrix((n, n))
    lo = alpha / h**2 - betac / (2 * h)
    di = -2 * alpha / h**2 + c0
    hi = alpha / h**2 + betac / (2 * h)
    for i in range(1, n - 1):
        A[i, i - 1] = lo[i]
        A[i, i] = di[i]
        A[i, i + 1] = hi[i]
    if bc is None:
        # one-sided operator rows at the edges (second order)
        for i, sgn in ((0, 1), (n - 1, -1)):
            d1 = np.array([-3.0, 4.0, -1.0]) * sgn / (2 * h)
            d2 = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
            cols1 = [i, i + sgn, i + 2 * sgn]
            cols2 = [i, i + sgn, i + 2 * sgn, i + 3 * sgn]
            for c, w in zip(cols2, d2):
                A[i, c] += alpha[i] * w
            for c, w in zip(cols1, d1):
                A[i, c] += betac[i] * w
            A[i, i] += c0[i]
    else:
        inner, outer = bc
        _bc_row(A, 0, +1, inner, h, mode)
        _bc_row(A, n - 1, -1, outer, h, mode)
    return A.tocsr()


def _bc_row(A, i, sgn, tag, h, mode):
    if tag in ("dirichlet", "decay") or (tag == "regularity" and mode != 0):
        A[i, i] = 1.0
    elif tag == "neumann" or (tag == "regularity" and mode == 0):
        A[i, i] = -3.0 * sgn / (2 * h)
        A[i, i + sgn] = 4.0 * sgn / (2 * h)
        A[i, i + 2 * sgn] = -1.0 * sgn / (2 * h)
    else:
        raise ValueError(f"unknown boundary tag {tag!r}")


def discretize(op: OperatorCoeffs, grid: AnnularGrid) -> DiscreteOperator:
    """Sparse per-mode systems (tridiagonal interior) for the operator."""
    return DiscreteOperator(op, grid)


def export_triplets(dop: DiscreteOperator, path, mode: int = 0, solver_rows: bool = False):
    """Coordinate text export (row col value) of one mode's matrix."""
    mat = (dop._solve_mats if solver_rows else dop._apply_mats)[mode].tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(mat.row, mat.col, mat.data):
            fh.write(f"{i} {j} {v:.17g}\n")


# ---------------------------------------------------------------------------
# end-operator expansion audit

@dataclass
class ExpansionReport:
    radii: np.ndarray
    a_remainder: np.ndarray       # f_rr coefficient minus leading part
    b_remainder: np.ndarray       # f_r coordinate coefficient minus leading part
    a_bound_ratio: float          # sup |a_rem| / (eps r + 1/r)^4
    b_bound_ratio: float          # sup |b_rem| / ((eps r + 1/r)^4 / r)


def end_operator_expansion(profile: cat.EndProfile, glue: srg.GlueParams,
                           radii=None, band: Optional[srg.Band] = None) -> ExpansionReport:
    """Compare the end operator against its certified leading part

        Lap^eps - (c^2 x^i x^j / r^4) d_ij + 2 (eps^2 + c^2/r^4) x^i d_i

    on A(R/4, 4R^4), reporting the remainder coefficients and their ratios to
    the stated envelope (eps r + 1/r)^4 (1/r extra for b)."""
    R = glue.R
    if radii is None:
        radii = cat.log_grid(R / 4.0, 4.0 * R**4, 48)
    radii = np.asarray(radii, dtype=float)
    if radii[0] < R / 4.0 * (1 - 1e-9) or radii[-1] > 4.0 * R**4 * (1 + 1e-9):
        raise ExpansionRegionViolated("expansion certified on A(R/4, 4R^4) only")
    eps = profile.epsilon
    if band is None:
        band = srg.Band.vertical_inside(1.0 / eps) if eps > 0 else srg.Band(1.0, ())
    op = _graph_operator_of(profile, geo.MetricParams(eps), band, radii=radii).coeffs
    c = profile.c
    S, C, _, _ = geo.warp_factors(radii, eps)
    # coordinate-form radial coefficients of the operator and the leading part
    c2 = op.a[0]
    c1 = op.b[0] + op.a[2] * C / S
    c2_lead = 1.0 - c * c / radii**2
    c1_lead = C / S + 2.0 * eps * eps * radii + 2.0 * c * c / radii**3
    a_rem = c2 - c2_lead
    b_rem = c1 - c1_lead
    env = (eps * radii + 1.0 / radii) ** 4
    return ExpansionReport(
        radii, a_rem, b_rem,
        a_bound_ratio=float(np.max(np.abs(a_rem) / env)),
        b_bound_ratio=float(np.max(np.abs(b_rem) / (env / radii))),
    )
