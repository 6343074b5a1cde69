"""Phase transition, polarized radius, PL constants and coercivity constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .dirichlet import lowest_eigenvalues, symmetric_dirichlet
from .errors import (BracketNotFound, EigenNotConverged, NoPolarizedState, RootNotBracketed,
                     VerificationFailed)
from .gibbs import H_over_K, V_analytic, V_and_derivatives, gibbs_moment, weighted_moment_W
from .grid import Grid
from .model import ModelParams, phi_alpha
from .quadrature import (DEFAULT_SPEC, QuadSpec, box_half_width, gauss_legendre,
                         radial_integral_scaled, tensor_integral)

CRITICAL_RTOL = 1e-8


# --------------------------------------------------------------------------- D*


def critical_integrals(d: int, alpha: float, D: float, spec: QuadSpec = DEFAULT_SPEC):
    """Scaled pair (int (1-s^2) s^(d+1) e^{-phi/D} ds, int s^(d+1) e^{-phi/D} ds).

    Both carry the same factor exp(min phi/D); only their ratio and the sign
    of the first are meaningful.
    """
    def expo(s):
        return phi_alpha(s, alpha) / D

    num, sn = radial_integral_scaled(expo, lambda s: (1.0 - s * s) * s ** (d + 1), spec)
    den, sd = radial_integral_scaled(expo, lambda s: s ** (d + 1), spec)
    return num * math.exp(sd - sn), den


def critical_residual(d: int, alpha: float, D: float, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """Relative defining integral of D*: int (1-s^2)s^(d+1)w / int s^(d+1)w."""
    num, den = critical_integrals(d, alpha, D, spec)
    return num / den


@lru_cache(maxsize=256)
def find_D_star(d: int, alpha: float, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """Critical noise: the zero in D of the relative critical integral.

    A logarithmic sign scan over [1e-4, 1e4] brackets the root, then Brent's
    method refines it to a relative tolerance well below 1e-10.
    """
    if not alpha > 0:
        raise BracketNotFound("no phase transition for alpha <= 0")
    grid = np.logspace(-4, 4, 33)
    vals = [critical_residual(d, alpha, D, spec) for D in grid]
    for i in range(len(grid) - 1):
        if vals[i] > 0 >= vals[i + 1]:
            return brentq(lambda D: critical_residual(d, alpha, D, spec),
                          grid[i], grid[i + 1], xtol=1e-300, rtol=4e-15, maxiter=200)
    raise BracketNotFound(f"no sign change of the critical integral for d={d}, alpha={alpha}")


def regime(params: ModelParams, spec: QuadSpec = DEFAULT_SPEC) -> str:
    """'polarized' (D < D*), 'critical' (D = D* within 1e-8) or 'isotropic'."""
    Ds = find_D_star(params.d, params.alpha, spec)
    if abs(params.D / Ds - 1.0) <= CRITICAL_RTOL:
        return "critical"
    return "polarized" if params.D < Ds else "isotropic"


# --------------------------------------------------------------------------- r(D)


@lru_cache(maxsize=1024)
def find_r_of_D(params: ModelParams, spec: QuadSpec = DEFAULT_SPEC) -> float | None:
    """Positive zero of H for D < D*, None otherwise."""
    if params.alpha == 0.0 or regime(params, spec) != "polarized":
        return None

    def g(r):
        return H_over_K(params, r, spec)

    # geometric scan upward: H > 0 on (0, r(D)) and H < 0 beyond
    lo = 1e-6
    if not g(lo) > 0:
        raise RootNotBracketed(f"H is not positive near 0 at D={params.D}")
    hi = lo
    while True:
        hi *= 2.0
        if g(hi) < 0:
            break
        lo = hi
        if hi > 1e4:
            raise RootNotBracketed(f"H does not change sign at D={params.D}")
    return brentq(g, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=300)


def require_r_of_D(params: ModelParams, spec: QuadSpec = DEFAULT_SPEC) -> float:
    r = find_r_of_D(params, spec)
    if r is None:
        raise NoPolarizedState(f"D={params.D} is not below the critical noise")
    return r


def equilibrium_speed(params: ModelParams, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """r(D) in the polarized regime and 0 otherwise."""
    r = find_r_of_D(params, spec)
    return 0.0 if r is None else r


def V_star(params: ModelParams, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """Minimum of V, attained on the polarized sphere or at 0."""
    return V_analytic(params, equilibrium_speed(params, spec), 0, spec)


def V_increment(params: ModelParams, r0: float, r1: float, spec: QuadSpec = DEFAULT_SPEC,
                panels: int = 1, order: int = 10) -> float:
    """V(r1) - V(r0) as a Gauss-Legendre integral of V' (no log cancellation)."""
    if r1 == r0:
        return 0.0
    x, w = gauss_legendre(order)
    edges = np.linspace(r0, r1, panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        mid, rad = 0.5 * (a + b), 0.5 * (b - a)
        total += rad * sum(wi * -H_over_K(params, mid + rad * xi, spec) for xi, wi in zip(x, w))
    return total


# --------------------------------------------------------------------------- PL constants


@dataclass(frozen=True)
class PLConstants:
    mu1: float
    mu2: float
    delta: float
    regime: str
    curvature: float  # V''(r(D)), V''(0) or V''''(0) at D = D*


def pl_sandwich_margins(params: ModelParams, pl: PLConstants, speeds, spec: QuadSpec = DEFAULT_SPEC):
    """Lower and upper slack of the PL sandwich at the given speeds |u|.

    Both arrays must be >= 0 for the sandwich to hold.  V is radial, so the
    speed is all that matters.
    """
    r_eq = equilibrium_speed(params, spec)
    speeds = np.asarray(speeds, dtype=float)
    lower, upper = [], []
    for s in speeds:
        gap = V_increment(params, r_eq, s, spec)
        grad = abs(H_over_K(params, s, spec))
        dist = abs(s - r_eq)
        if pl.regime == "critical":
            lo = gap - pl.mu1 / 24.0 * dist**4
            hi = 6.0 ** (4.0 / 3.0) / (24.0 * pl.mu2 ** (1.0 / 3.0)) * grad ** (4.0 / 3.0) - gap
        else:
            lo = gap - 0.5 * pl.mu1 * dist**2
            hi = grad**2 / (2.0 * pl.mu2) - gap
        lower.append(lo)
        upper.append(hi)
    return np.array(lower), np.array(upper)


def _neighbourhood_sample(r_eq, delta, regime_name, n):
    if regime_name == "polarized":
        t = np.linspace(-delta, delta, n + 1)
        t = t[t != 0.0]
        return r_eq + t
    return np.linspace(delta / n, delta, n)


def pl_constants(params: ModelParams, eps: float, spec: QuadSpec = DEFAULT_SPEC,
                 n_check: int = 40, shrink: float = 0.7, max_tries: int = 40) -> PLConstants:
    """PL constants (mu1, mu2, delta) for the current noise regime.

    mu1 = mu2 = c - eps/2 with c the relevant curvature; delta is the largest
    member of min(r(D)/2, eps) * 0.999 * shrink^k for which the sandwich holds
    at ``n_check`` speeds spread over the neighbourhood.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    kind = regime(params, spec)
    r_eq = equilibrium_speed(params, spec)
    if kind == "critical":
        curv = float(V_and_derivatives(params, 0.0, 4, spec))
        cap = eps
    else:
        curv = float(V_analytic(params, r_eq, 2, spec))
        cap = min(0.5 * r_eq, eps) if kind == "polarized" else eps
    if not curv > 0:
        raise VerificationFailed(f"non-positive curvature {curv!r}", point=r_eq)
    mu = max(curv - 0.5 * eps, 0.5 * curv)
    delta = 0.999 * cap
    worst = None
    for _ in range(max_tries):
        pl = PLConstants(mu, mu, delta, kind, curv)
        sample = _neighbourhood_sample(r_eq, delta, kind, n_check)
        lo, hi = pl_sandwich_margins(params, pl, sample, spec)
        slack = np.minimum(lo, hi)
        if np.all(slack >= 0):
            return pl
        worst = float(sample[int(np.argmin(slack))])
        delta *= shrink
    raise VerificationFailed("PL sandwich fails at every tried delta", point=worst)


# --------------------------------------------------------------------------- coercivity


def kappa(params: ModelParams, spec: QuadSpec = DEFAULT_SPEC, direction=None) -> float:
    """kappa(D) = Var of (v - u).u/|u| under G_u, divided by D, for u on the polarized sphere.

    The division by D makes kappa = 1 - V''(r(D)), which is what the
    coercivity identities eta^2 = D(1 - kappa) require.  For d <= 3 the
    variance is a tensor-grid integral; ``direction`` picks the unit vector of u.
    """
    r = require_r_of_D(params, spec)
    d = params.d
    if d > 3:
        m1 = gibbs_moment(params, r, 0, 1, spec)
        m2 = gibbs_moment(params, r, 0, 2, spec)
        return (m2 - 2 * r * m1 + r * r) / params.D
    e = np.zeros(d) if direction is None else np.asarray(direction, dtype=float)
    if direction is None:
        e[0] = 1.0
    e = e / np.linalg.norm(e)
    u = r * e
    tspec = QuadSpec(rel_tol=max(spec.rel_tol, 1e-12), s_max=spec.s_max, n_theta=spec.n_theta,
                     mode="tensor_grid")
    z = tensor_integral(lambda v: 1.0, u, params, tspec)
    var = tensor_integral(lambda v: ((v - u) @ e) ** 2, u, params, tspec) / z
    return var / params.D


def kappa_radial(params: ModelParams, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """Independent route for kappa: 1 - V''(r(D)) from differentiated moments."""
    r = require_r_of_D(params, spec)
    return 1.0 - V_analytic(params, r, 2, spec)


@dataclass(frozen=True)
class PoincareEstimate:
    value: float         # Richardson-extrapolated gap
    coarse: float
    fine: float
    n: int

    @property
    def agreement(self) -> float:
        return abs(self.fine - self.coarse) / abs(self.fine)


def _dirichlet_gap(params, u, n, L):
    """Second eigenvalue of the weighted finite-difference Dirichlet form."""
    if params.d not in (1, 2):
        raise ValueError("poincare_gap supports d in {1, 2}")
    B, _ = symmetric_dirichlet(Grid(params.d, n, L), params, u)
    # k = 3 in 2-d: the gap may be (nearly) degenerate
    ev = lowest_eigenvalues(B, 2 if params.d == 1 else 3, params.d, sigma=-1e-3)
    return float(ev[1])


def poincare_gap(params: ModelParams, u, n: int | None = None, L: float | None = None,
                 spec: QuadSpec = DEFAULT_SPEC) -> PoincareEstimate:
    """Weighted Poincare gap of G_u from a finite-difference Dirichlet form.

    The form sum over faces of w_face (g_j - g_i)^2 h^(d-2) is compared with
    the mass sum w_i g_i^2 h^d; the second eigenvalue of that pencil is the gap.
    Resolutions n and 2n are combined by Richardson extrapolation (O(h^2)).
    """
    d = params.d
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if n is None:
        n = 400 if d == 1 else 64
    if L is None:
        L = box_half_width(params, float(np.linalg.norm(u)), spec)
    coarse = _dirichlet_gap(params, u, n, L)
    fine = _dirichlet_gap(params, u, 2 * n, L)
    if not (coarse > 0 and fine > 0):
        raise EigenNotConverged(f"non-positive gap estimate ({coarse}, {fine})")
    return PoincareEstimate((4.0 * fine - coarse) / 3.0, coarse, fine, n)


@dataclass(frozen=True)
class CoercivityConstants:
    kappa: float
    eta: float
    beta: float
    a: float
    b: float
    Lambda: float
    W2: float


def coercivity_constants(params: ModelParams, spec: QuadSpec = DEFAULT_SPEC,
                         Lambda: float | None = None) -> CoercivityConstants:
    """eta, beta, a, b assembled from kappa, the Poincare gap and W_2."""
    r = require_r_of_D(params, spec)
    k = kappa(params, spec)
    if Lambda is None:
        u = np.zeros(params.d)
        u[0] = r
        Lambda = poincare_gap(params, u, spec=spec).value
    D = params.D
    W2 = weighted_moment_W(params, 2, r, spec)
    eta = math.sqrt(D * (1.0 - k))
    beta = D * Lambda * (1.0 - k)
    a = (D * D + 2.0 * D * math.sqrt(W2 / Lambda) + W2 / Lambda) ** -0.5
    b = (2.0 / D) * math.sqrt(W2) * (1.0 / (eta * beta) + 1.0)
    return CoercivityConstants(k, eta, beta, a, b, Lambda, W2)


# --------------------------------------------------------------------------- portrait


@dataclass(frozen=True)
class PhaseRecord:
    D: float
    regime: str
    r_D: float | None
    curvature: float | None
    pl: PLConstants | None
    coercivity: CoercivityConstants | None


@dataclass
class PhasePortrait:
    d: int
    alpha: float
    D_star: float
    records: list = field(default_factory=list)

    @property
    def r_curve(self):
        return [(rec.D, rec.r_D) for rec in self.records if rec.r_D is not None]


def phase_record(params: ModelParams, eps: float = 1e-2, spec: QuadSpec = DEFAULT_SPEC,
                 with_coercivity: bool = True) -> PhaseRecord:
    kind = regime(params, spec)
    r = find_r_of_D(params, spec)
    pl = pl_constants(params, eps, spec)
    coer = coercivity_constants(params, spec) if (with_coercivity and r is not None) else None
    return PhaseRecord(params.D, kind, r, pl.curvature, pl, coer)


def phase_portrait(d: int, alpha: float, D_values, eps: float = 1e-2,
                   spec: QuadSpec = DEFAULT_SPEC, with_coercivity: bool = True,
                   map_fn=map) -> PhasePortrait:
    """Sweep D; ``map_fn`` may be a parallel map (records are independent)."""
    Ds = find_D_star(d, alpha, spec)
    params = [ModelParams(d, alpha, float(D)) for D in D_values]
    recs = list(map_fn(_record_worker, [(p, eps, spec, with_coercivity) for p in params]))
    return PhasePortrait(d, alpha, Ds, recs)


def _record_worker(args):
    p, eps, spec, with_coercivity = args
    return phase_record(p, eps, spec, with_coercivity)
