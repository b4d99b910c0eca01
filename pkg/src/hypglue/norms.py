"""Holder, Sobolev, weighted, hybrid and scale-free norms on annular grids.

Weighted norms multiply by  w_gamma = chi_2 + (1 - chi_2) e^{gamma rho}
(plateau 1 inside rho <= 2, exponential beyond rho >= 4) and then apply the
plain norm;  the hybrid norm is

    |f|_{m,alpha,gamma} = |f|_{C^{m,alpha}_gamma} + (1/(eps R)) |f|_{H^m_gamma}.

All hyperbolic norms are evaluated in the unit-curvature picture: a function
sampled at radii r of the eps-rescaled picture is carried to rho = eps * r
(log-spacing preserved), where the weight, the area element sinh(rho) and the
derivative magnitudes are the classical ones.  Sobolev quadrature is
trapezoidal in log rho with exact angular integration per Fourier mode;
Holder seminorms are pair-sampled lower bounds with distances measured along
radial-then-angular paths.

Scale-free norms use the euclidean derivative through r*D (so log-radial
differences directly) with weight r^delta and dyadic-annulus Holder
quotients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import surgery as srg
from .grids import AnnularGrid, GridFunction, _dxi, _dxixi

__all__ = [
    "RegionTooCoarse",
    "NormWeights",
    "NormReport",
    "holder_seminorm",
    "weight_value",
    "norm_suite",
    "scale_free_norm",
    "interpolation_audit",
    "InterpolationReport",
]


class RegionTooCoarse(ValueError):
    """Fewer than 8 nodes per decade in the requested region."""


@dataclass(frozen=True)
class NormWeights:
    """Parameters of the weighted/hybrid/scale-free norm family."""

    gamma: float = 0.05
    epsilon: float = 1.0
    R: float = 1.0
    delta: float = 1.5
    alpha: float = 0.05
    m: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.m < 0:
            raise ValueError("m must be a non-negative integer")


@dataclass
class NormReport:
    holder: float
    sobolev: float
    hybrid: float
    components: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"holder {self.holder:.17g}", f"sobolev {self.sobolev:.17g}",
                 f"hybrid {self.hybrid:.17g}"]
        for k in sorted(self.components):
            lines.append(f"{k} {self.components[k]:.17g}")
        return "\n".join(lines) + "\n"


def holder_seminorm(x, values, alpha: float, pair_budget: Optional[int] = None,
                    seed: int = 0) -> float:
    """Pair-sampled lower bound of sup |f(x)-f(y)| / d(x,y)^alpha.

    All pairs are used when their count fits the budget; otherwise every
    adjacent pair plus a seeded random sample.  Monotone increasing in the
    budget.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    if pair_budget is None or n * (n - 1) // 2 <= pair_budget:
        i, j = np.triu_indices(n, k=1)
    else:
        i = np.arange(n - 1)
        j = i + 1
        rng = np.random.default_rng(seed)
        extra = max(pair_budget - (n - 1), 0)
        ii = rng.integers(0, n, size=extra)
        jj = rng.integers(0, n, size=extra)
        keep = ii != jj
        i = np.concatenate([i, ii[keep]])
        j = np.concatenate([j, jj[keep]])
    d = np.abs(x[i] - x[j])
    good = d > 0
    return float(np.max(np.abs(v[i] - v[j])[good] / d[good] ** alpha, initial=0.0))


def weight_value(r, w: NormWeights):
    """w_gamma at unit-picture radius r: 1 inside 2, e^{gamma r} beyond 4."""
    r = np.asarray(r, dtype=float)
    chi = srg.cutoff_derivs(r, 2.0, 0)[0]
    return chi + (1.0 - chi) * np.exp(w.gamma * r)


def _weight_series(rho, gamma):
    """(w, w', w'') of the weight at unit radius rho."""
    chi = srg.cutoff_derivs(rho, 2.0, 2)
    e = np.exp(gamma * rho)
    w = chi[0] + (1.0 - chi[0]) * e
    w1 = chi[1] - chi[1] * e + (1.0 - chi[0]) * gamma * e
    w2 = (chi[2] - chi[2] * e - 2.0 * chi[1] * gamma * e
          + (1.0 - chi[0]) * gamma * gamma * e)
    return w, w1, w2


def _require_resolution(grid: AnnularGrid):
    if grid.nodes_per_decade < 8.0 - 1e-9:
        raise RegionTooCoarse(
            f"{grid.nodes_per_decade:.1f} nodes per decade; need at least 8")


def _mode_weights(grid: AnnularGrid):
    return np.array([2.0 * np.pi if k == 0 else np.pi for k in grid.modes])


def _trapz_xi(integrand, rho):
    return float(np.trapezoid(integrand * rho, np.log(rho)))


def norm_suite(f: GridFunction, w: NormWeights, region: Optional[tuple] = None,
               pair_budget: int = 20000) -> NormReport:
    """Weighted Holder, Sobolev and hybrid norms of f up to order w.m (<= 2).

    The grid radii are interpreted in the eps-rescaled picture and mapped to
    unit-picture radii rho = eps * r; ``region`` restricts to a radial window
    (in grid radii) before the transfer.
    """
    if w.m > 2:
        raise ValueError("norms implemented up to order m = 2")
    grid = f.grid
    _require_resolution(grid)
    sel = grid.mask(*region) if region is not None else np.ones(grid.n, bool)
    if np.count_nonzero(sel) < 4:
        raise RegionTooCoarse("fewer than 4 nodes in the region")
    rho = w.epsilon * grid.radii
    wgt = _weight_series(rho, w.gamma)[0]
    wf = f.scale_radial(wgt)

    from . import geometry as geo

    S, C, _, _ = geo.warp_factors(rho, 1.0)
    h = grid.h
    g = wf.coeffs
    g1 = _dxi(g, h) / rho
    g2 = (_dxixi(g, h) - _dxi(g, h)) / rho**2
    mw = _mode_weights(grid)
    ks = np.array(grid.modes, dtype=float)

    comp = {}
    # pointwise derivative magnitudes (sup over theta bounded by mode-sum)
    amp0 = np.sum(np.abs(g), axis=0)
    amp1 = np.sum(np.sqrt(g1**2 + (ks[:, None] * g / S) ** 2), axis=0)
    hess_tt = ((-(ks**2)[:, None] * g) / S**2 + (C / S) * g1)
    hess_rt = ks[:, None] * (g1 / S - C * g / S**2)
    amp2 = np.sum(np.sqrt(g2**2 + 2 * hess_rt**2 + hess_tt**2), axis=0)
    amps = [amp0, amp1, amp2]

    holder = 0.0
    for k in range(w.m + 1):
        comp[f"holder_sup_{k}"] = float(np.max(amps[k][sel]))
        holder += comp[f"holder_sup_{k}"]
    tail = _local_holder_tail(rho[sel], amps[w.m][sel], w.alpha, pair_budget)
    comp["holder_tail"] = tail
    holder += tail

    sob2 = 0.0
    dens0 = np.sum(mw[:, None] * g**2, axis=0)
    dens1 = np.sum(mw[:, None] * (g1**2 + (ks[:, None] * g / S) ** 2), axis=0)
    dens2 = np.sum(mw[:, None] * (g2**2 + 2 * hess_rt**2 + hess_tt**2), axis=0)
    for k, dens in enumerate([dens0, dens1, dens2][: w.m + 1]):
        term = _trapz_xi((dens * S)[sel], rho[sel])
        comp[f"sobolev_sq_{k}"] = term
        sob2 += term
    sobolev = float(np.sqrt(sob2))

    hybrid = holder + sobolev / (w.epsilon * w.R)
    return NormReport(holder, sobolev, hybrid, comp)


def _local_holder_tail(x, vals, alpha, budget):
    """sup over unit balls of the pair quotient of the top derivative."""
    n = x.size
    if n < 2:
        return 0.0
    i, j = _pairs(n, budget)
    d = np.abs(x[i] - x[j])
    good = (d > 0) & (d <= 1.0)
    if not np.any(good):
        # fall back to adjacent pairs when the grid is coarser than unit balls
        i = np.arange(n - 1)
        j = i + 1
        d = np.abs(x[i] - x[j])
        good = d > 0
    return float(np.max(np.abs(vals[i] - vals[j])[good] / d[good] ** alpha, initial=0.0))


def _pairs(n, budget, seed=0):
    if n * (n - 1) // 2 <= budget:
        return np.triu_indices(n, k=1)
    i = np.arange(n - 1)
    j = i + 1
    rng = np.random.default_rng(seed)
    extra = max(budget - (n - 1), 0)
    ii = rng.integers(0, n, size=extra)
    jj = rng.integers(0, n, size=extra)
    keep = ii != jj
    return np.concatenate([i, ii[keep]]), np.concatenate([j, jj[keep]])


def scale_free_norm(f: GridFunction, delta: float, m: int, alpha: float,
                    R0: float = 0.0, region: Optional[tuple] = None,
                    pair_budget: int = 20000) -> float:
    """Scale-free weighted Holder norm on the annulus:

        sum_{k<=m} sup r^delta |(rD)^k f|  +  sup_{r>=2R0} r^{delta+alpha} [ (rD)^m f ]_{alpha, A(r/2,2r)}

    with euclidean derivatives (mode-0 magnitudes in log-radial form).
    """
    if m > 2:
        raise ValueError("implemented up to m = 2")
    grid = f.grid
    r = grid.radii
    sel = grid.mask(*(region if region is not None else (R0, np.inf)))
    if np.count_nonzero(sel) < 2:
        raise RegionTooCoarse("fewer than 2 nodes in the region")
    h = grid.h
    g = f.coeffs
    gx = _dxi(g, h)
    gxx = _dxixi(g, h)
    ks = np.array(grid.modes, dtype=float)
    amp0 = np.sum(np.abs(g), axis=0)
    amp1 = np.sum(np.sqrt(gx**2 + (ks[:, None] * g) ** 2), axis=0)
    # r^2 |D^2 f|: components r^2 f_rr = gxx - gx, r f_r = gx, angular analogues
    hess_rr = gxx - gx
    hess_rt = ks[:, None] * (gx - g)
    hess_tt = -(ks**2)[:, None] * g + gx
    amp2 = np.sum(np.sqrt(hess_rr**2 + 2 * hess_rt**2 + hess_tt**2), axis=0)
    amps = [amp0, amp1, amp2]

    total = 0.0
    wr = r**delta
    for k in range(m + 1):
        total += float(np.max((wr * amps[k])[sel]))
    # dyadic Holder tail of the m-th scale-free derivative
    tail = 0.0
    rsel = r[sel]
    vsel = amps[m][sel]
    wsel = rsel ** (delta + alpha)
    start = np.searchsorted(rsel, max(2.0 * R0, rsel[0]))
    for i0 in range(start, rsel.size):
        lo, hi = rsel[i0] / 2.0, 2.0 * rsel[i0]
        band = (rsel >= lo) & (rsel <= hi)
        if np.count_nonzero(band) < 2:
            continue
        q = holder_seminorm(rsel[band], vsel[band], alpha,
                            pair_budget=max(pair_budget // max(rsel.size - start, 1), 64))
        tail = max(tail, wsel[i0] * q)
    return total + tail


@dataclass
class InterpolationReport:
    margins: dict

    @property
    def all_hold(self) -> bool:
        return all(v >= -1e-12 for v in self.margins.values())


def interpolation_audit(x, f, df, alpha: float, beta: float = 1.0,
                        g=None, hybrid: Optional[tuple] = None) -> InterpolationReport:
    """Margins of the seminorm interpolation inequalities on sampled data.

    Checks, with densely sampled seminorms on the 1-d data (x, f, df):
      (i)   [f]_alpha <= [f]_0^{1-alpha} [f]_1^alpha
      (ii)  [f]_alpha <= 2^{1-alpha} |f|_C0^{1-alpha} [f]_1^alpha
      (iii) |df|_C0 <= 2 [f]_alpha^{b/(1+b-a)} [df]_beta^{(1-a)/(1+b-a)}
            (reported only when the optimising step length fits the window)
      (iv)  [f g]_alpha <= |f|_C0 [g]_alpha + [f]_alpha |g|_C0   (when g given)
    A positive margin means the inequality holds with that slack.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    df = np.asarray(df, dtype=float)
    sa = holder_seminorm(x, f, alpha)
    s0 = holder_seminorm(x, f, 0.0)
    s1 = holder_seminorm(x, f, 1.0)
    sup = float(np.max(np.abs(f)))
    margins = {
        "A23_first": s0 ** (1 - alpha) * s1**alpha - sa,
        "A23_second": 2 ** (1 - alpha) * sup ** (1 - alpha) * s1**alpha - sa,
    }
    dsup = float(np.max(np.abs(df)))
    dbeta = holder_seminorm(x, df, beta)
    if dbeta > 0:
        hstar = (sa / dbeta) ** (1.0 / (1.0 + beta - alpha))
        if hstar <= (x[-1] - x[0]):
            ex1 = beta / (1.0 + beta - alpha)
            ex2 = (1.0 - alpha) / (1.0 + beta - alpha)
            margins["A24"] = 2.0 * sa**ex1 * dbeta**ex2 - dsup
    if g is not None:
        g = np.asarray(g, dtype=float)
        ga = holder_seminorm(x, g, alpha)
        gsup = float(np.max(np.abs(g)))
        pa = holder_seminorm(x, f * g, alpha)
        margins["A25"] = sup * ga + sa * gsup - pa
    if hybrid is not None:
        # hybrid embedding |f|_{C^{1,alpha}_g} <= K (eps R)^{1-2a} |f|_{2,a,g}
        lhs, rhs, K = hybrid
        margins["hybrid_embedding"] = K * rhs - lhs
    return InterpolationReport(margins)
