"""Free energy, relative entropy, Fisher information, moments, identity checks and rate fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveValues, WindowTooShort, ZeroMeanVelocity
from .gibbs import normalization
from .grid import GridDensity, discrete_gibbs, face_exponents, potential_on_grid
from .model import ModelParams
from .numerics import bernoulli, entropy_density
from .quadrature import DEFAULT_SPEC, QuadSpec

N_MOMENTS = 9


# --------------------------------------------------------------------------- functionals


def free_energy(f: GridDensity, params: ModelParams) -> float:
    """D sum f log f + sum f psi + (1/2) sum |v - u_f|^2 f, with 0 log 0 = 0."""
    g = f.grid
    vals = f.values
    pos = vals > 0
    ent = np.zeros_like(vals)
    ent[pos] = vals[pos] * np.log(vals[pos])
    # psi + |v|^2/2 integrates to sum f psi + (M2)/2; subtract |u_f|^2/2
    uf = f.mean_velocity()
    pot = potential_on_grid(g, params)
    return (params.D * g.integrate(ent) + g.integrate(pot * vals)) - 0.5 * float(uf @ uf)


def relative_entropy(f, g, grid=None) -> float:
    """int f log(f/g) for two densities on the same grid (GridDensity or arrays + grid)."""
    if isinstance(f, GridDensity):
        grid = f.grid
        f = f.values
    if isinstance(g, GridDensity):
        grid = g.grid
        g = g.values
    if grid is None:
        raise ValueError("grid required for raw arrays")
    # f log(f/g) - f + g integrates to H[f|g] when both have unit mass; the
    # mass mismatch is added back so unnormalized inputs are handled exactly
    return grid.integrate(entropy_density(f, g)) + grid.integrate(f) - grid.integrate(g)


def relative_entropy_to_gibbs(f: GridDensity, params: ModelParams, u) -> float:
    return relative_entropy(f.values, discrete_gibbs(f.grid, params, u), f.grid)


def face_fisher_terms(f: GridDensity, params: ModelParams, u):
    """Per-axis arrays (a - b)(log a - log b) of the exponential-fitting faces."""
    g = f.grid
    out = []
    for k, w in enumerate(face_exponents(g, params, u)):
        left = np.take(f.values, np.arange(g.n - 1), axis=k)
        right = np.take(f.values, np.arange(1, g.n), axis=k)
        a = np.maximum(bernoulli(-w) * right, 1e-300)
        b = np.maximum(bernoulli(w) * left, 1e-300)
        out.append((a - b) * (np.log(a) - np.log(b)))
    return out


def fisher_information(f: GridDensity, params: ModelParams, u=None) -> float:
    """D^2 int |grad log(f/G_u)|^2 f with u = u_f by default.

    Built from the same face quantities as the solver flux, so the
    semi-discrete free energy decays exactly at this rate.
    """
    g = f.grid
    if u is None:
        u = f.mean_velocity()
    terms = face_fisher_terms(f, params, u)
    return params.D**2 * g.h ** (g.d - 2) * float(sum(np.sum(t) for t in terms))


def moments(f: GridDensity, kmax: int = N_MOMENTS - 1) -> np.ndarray:
    g = f.grid
    s = np.sqrt(g.speed2)
    return np.array([g.integrate(f.values * s**k) for k in range(kmax + 1)])


def odd_moment(f: GridDensity) -> np.ndarray:
    """int |v|^2 v f dv."""
    g = f.grid
    return np.tensordot(f.values * g.speed2, g.points, axes=g.d) * g.cell_volume


# --------------------------------------------------------------------------- identities


def V_of(params: ModelParams, u, spec: QuadSpec = DEFAULT_SPEC) -> float:
    return -params.D * normalization(params, u, spec)


def identity_residuals(f: GridDensity, params: ModelParams, u, V_star: float | None = None,
                       u_on_sphere: bool | None = None, spec: QuadSpec = DEFAULT_SPEC):
    """Residuals of the three free-energy identities.

    * F = D H[f|G_u] - |u - u_f|^2/2 - D log Z(u) for any u;
    * F - F* = D H[f|G_{u_f}] + V(u_f) - V*;
    * F - F* = D H[f|G_u] - |u_f - u|^2/2 for u on the polarized sphere.

    Relative entropies use grid Gibbs states, log Z uses the quadrature layer,
    so the residuals measure the agreement of the two routes.  The last entry
    is NaN unless ``u`` lies on the sphere (or ``u_on_sphere`` is forced).
    """
    from .phase import V_star as compute_V_star, equilibrium_speed

    u = np.atleast_1d(np.asarray(u, dtype=float))
    D = params.D
    F = free_energy(f, params)
    uf = f.mean_velocity()
    if V_star is None:
        V_star = compute_V_star(params, spec)
    H_u = relative_entropy_to_gibbs(f, params, u)
    logZ_u = normalization(params, u, spec)
    res6 = F - (D * H_u - 0.5 * float((u - uf) @ (u - uf)) - D * logZ_u)
    H_uf = relative_entropy_to_gibbs(f, params, uf)
    res7 = (F - V_star) - (D * H_uf + V_of(params, uf, spec) - V_star)
    if u_on_sphere is None:
        r_eq = equilibrium_speed(params, spec)
        u_on_sphere = abs(float(np.linalg.norm(u)) - r_eq) <= 1e-12 * max(1.0, r_eq)
    res8 = (F - V_star) - (D * H_u - 0.5 * float((uf - u) @ (uf - u))) if u_on_sphere else math.nan
    return res6, res7, res8


def csiszar_kullback_margin(f: GridDensity, params: ModelParams) -> float:
    """H[f|G_{u_f}] - ||f - G_{u_f}||_1^2 / 2 (nonnegative when the inequality holds)."""
    uf = f.mean_velocity()
    G = discrete_gibbs(f.grid, params, uf)
    l1 = f.grid.integrate(np.abs(f.values - G))
    return relative_entropy(f.values, G, f.grid) - 0.5 * l1 * l1


def free_energy_lower_bound(f: GridDensity, params: ModelParams) -> float:
    """-(d/2) log(2 pi) D + (alpha/4) M4 - ((D + alpha)/2) M4^(1/2)."""
    d, D, a = params.d, params.D, params.alpha
    M4 = f.moment(4)
    return -0.5 * d * math.log(2 * math.pi) * D + 0.25 * a * M4 - 0.5 * (D + a) * math.sqrt(M4)


def mean_velocity_rate(f: GridDensity, params: ModelParams) -> np.ndarray:
    """alpha u_f - alpha int |v|^2 v f dv, the exact time derivative of u_f."""
    return params.alpha * (f.mean_velocity() - odd_moment(f))


def moment_rate(f: GridDensity, params: ModelParams, k: int) -> float:
    """Time derivative of M_k = int |v|^k f implied by the equation (even k >= 2).

    dM_k/dt = D k (k + d - 2) M_{k-2} - k [alpha (M_{k+2} - M_k) + M_k - u_f . int |v|^(k-2) v f].
    """
    if k < 2 or k % 2:
        raise ValueError("k must be even and >= 2")
    g = f.grid
    d, D, a = params.d, params.D, params.alpha
    s2 = g.speed2
    vals = f.values
    Mk = g.integrate(vals * s2 ** (k // 2))
    Mk2 = g.integrate(vals * s2 ** (k // 2 + 1))
    Mkm = g.integrate(vals * s2 ** (k // 2 - 1))
    cross = np.tensordot(vals * s2 ** (k // 2 - 1), g.points, axes=g.d) * g.cell_volume
    uf = f.mean_velocity()
    return D * k * (k + d - 2) * Mkm - k * (a * (Mk2 - Mk) + Mk - float(uf @ cross))


# --------------------------------------------------------------------------- records


@dataclass
class DiagnosticsRecord:
    t: float
    F: float
    F_gap: float
    H_rel_star: float
    H_rel_inf: float
    I: float
    u_f: np.ndarray
    dist_S: float
    Q1: float
    M: np.ndarray
    res_eq6: float
    res_eq7: float
    res_eq8: float
    res_debruijn: float = math.nan
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Reference:
    """Per-run constants the records are measured against."""

    params: ModelParams
    r_eq: float
    V_star: float
    spec: QuadSpec = DEFAULT_SPEC

    @classmethod
    def for_params(cls, params: ModelParams, spec: QuadSpec = DEFAULT_SPEC) -> "Reference":
        from .phase import V_star, equilibrium_speed

        return cls(params, equilibrium_speed(params, spec), V_star(params, spec), spec)

    def anchor(self, u_f) -> np.ndarray:
        """u_*: projection of u_f on the polarized sphere, or 0 in the isotropic regime."""
        u_f = np.atleast_1d(np.asarray(u_f, dtype=float))
        if self.r_eq == 0.0:
            return np.zeros_like(u_f)
        n = float(np.linalg.norm(u_f))
        if n < 1e-12:
            raise ZeroMeanVelocity("projection on the sphere undefined at u_f = 0")
        return self.r_eq * u_f / n


def q1_against(f: GridDensity, params: ModelParams, u_anchor) -> float:
    """Q1 of g = f/G_u - 1: D int (f - G)^2/G - |u_f - u_G|^2 with grid G_u."""
    grid = f.grid
    G = discrete_gibbs(grid, params, u_anchor)
    diff = f.values - G
    l2 = grid.integrate(diff * diff / np.maximum(G, 1e-300))
    vg_D = f.mean_velocity() - np.tensordot(G, grid.points, axes=grid.d) * grid.cell_volume
    return params.D * l2 - float(vg_D @ vg_D)


def make_record(t: float, f: GridDensity, ref: Reference, u_inf=None,
                fisher: float | None = None) -> DiagnosticsRecord:
    params = ref.params
    uf = f.mean_velocity()
    F = free_energy(f, params)
    try:
        u_star = ref.anchor(uf)
    except ZeroMeanVelocity:
        u_star = None
    if u_star is not None:
        H_star = relative_entropy_to_gibbs(f, params, u_star)
        Q1 = q1_against(f, params, u_star)
        res = identity_residuals(f, params, u_star, V_star=ref.V_star, u_on_sphere=True,
                                 spec=ref.spec)
    else:
        H_star = Q1 = math.nan
        res = identity_residuals(f, params, np.zeros_like(uf), V_star=ref.V_star,
                                 u_on_sphere=False, spec=ref.spec)
    H_inf = relative_entropy_to_gibbs(f, params, u_inf) if u_inf is not None else math.nan
    I = fisher_information(f, params) if fisher is None else fisher
    return DiagnosticsRecord(
        t=t, F=F, F_gap=F - ref.V_star, H_rel_star=H_star, H_rel_inf=H_inf, I=I,
        u_f=uf, dist_S=abs(float(np.linalg.norm(uf)) - ref.r_eq), Q1=Q1, M=moments(f),
        res_eq6=res[0], res_eq7=res[1], res_eq8=res[2])


# --------------------------------------------------------------------------- rates


@dataclass(frozen=True)
class RateFit:
    rate: float
    r_squared: float
    n_points: int
    t_start: float
    t_end: float
    kind: str


def _tail(t, y, window, min_points, floor_rel):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and values must be 1-d arrays of equal length")
    if floor_rel is not None and y.size:
        # stop at the first sample that reaches the round-off floor (the plateau is noisy)
        low = np.nonzero(~(y > floor_rel * np.max(np.abs(y))))[0]
        if low.size:
            t, y = t[:int(low[0])], y[:int(low[0])]
    n_tail = max(int(math.ceil(window * t.size)), min_points)
    if t.size < min_points:
        raise WindowTooShort(f"{t.size} samples < {min_points}")
    t, y = t[-n_tail:], y[-n_tail:]
    if np.any(y <= 0):
        raise NonPositiveValues("rate fits need positive values on the window")
    return t, y


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(coef[0]), r2


def fit_rate(t, values, window: float = 0.3, min_points: int = 50, kind: str = "exponential",
             floor_rel: float | None = None) -> RateFit:
    """Decay rate on the tail window.

    ``exponential``: values ~ C e^{-rate t}, slope of log value against t.
    ``algebraic``: values ~ C t^{-rate}, slope of log value against log t.
    ``floor_rel`` truncates the series at the first sample below that fraction
    of its maximum (the round-off plateau) before the window is taken.
    """
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    t, y = _tail(t, values, window, min_points, floor_rel)
    if kind == "exponential":
        slope, r2 = _linfit(t, np.log(y))
    elif kind == "algebraic":
        if np.any(t <= 0):
            raise NonPositiveValues("algebraic fits need t > 0")
        slope, r2 = _linfit(np.log(t), np.log(y))
    else:
        raise ValueError(f"unknown fit kind {kind!r}")
    return RateFit(-slope, r2, int(t.size), float(t[0]), float(t[-1]), kind)


def cauchy_spread(t, u, tail: float = 0.2) -> float:
    """Largest pairwise distance between u(t) samples on the final ``tail`` of the run."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float).reshape(t.size, -1)
    sel = u[t >= t[-1] - tail * (t[-1] - t[0])]
    diff = sel[:, None, :] - sel[None, :, :]
    return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))


# --------------------------------------------------------------------------- local decay bundle


@dataclass
class BoundCheck:
    name: str
    holds_from: float | None  # first recorded time after which the bound holds throughout
    min_margin: float         # smallest (rhs - lhs) over the checked tail
    holds_everywhere: bool


def _activation(t, lhs, rhs, rtol=1e-9):
    margin = rhs - lhs
    tol = rtol * np.maximum(np.abs(rhs), np.abs(lhs)) + 1e-300
    ok = margin >= -tol
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(t[0]), float(np.min(margin)), True
    start = int(bad[-1]) + 1
    if start >= t.size:
        return None, float(np.min(margin)), False
    return float(t[start]), float(np.min(margin[start:])), False


def local_decay_bundle(t, Q1, H_star, dist_uf_ustar2, consts, t0: float | None = None):
    """Check the tail bounds of the local exponential convergence argument.

    ``consts`` needs attributes eta, mu, D, beta, K_D.  Returns a dict of
    :class:`BoundCheck`:

    * ``entropy``: H[f|G_*] <= Q1/eta^2;
    * ``velocity``: |u_f - u_*|^2 <= 2D Q1/(mu eta^2);
    * ``envelope``: Q1(t) <= Q1(t0)/(1 - K_D Q1(t0)^(1/2))^2 e^{-2 beta^2 (t - t0)}
      for t >= t0 (t0 defaults to the first time).
    """
    t = np.asarray(t, dtype=float)
    Q1 = np.asarray(Q1, dtype=float)
    H_star = np.asarray(H_star, dtype=float)
    du2 = np.asarray(dist_uf_ustar2, dtype=float)
    eta2 = consts.eta**2
    out = {}
    out["entropy"] = BoundCheck("entropy", *_activation(t, H_star, Q1 / eta2))
    out["velocity"] = BoundCheck("velocity",
                                 *_activation(t, du2, 2 * consts.D * Q1 / (consts.mu * eta2)))
    i0 = 0 if t0 is None else int(np.searchsorted(t, t0))
    q0 = Q1[i0]
    denom = 1.0 - consts.K_D * math.sqrt(max(q0, 0.0))
    if denom <= 0:
        out["envelope"] = BoundCheck("envelope", None, -math.inf, False)
    else:
        env = q0 / denom**2 * np.exp(-2 * consts.beta**2 * (t[i0:] - t[i0]))
        out["envelope"] = BoundCheck("envelope", *_activation(t[i0:], Q1[i0:], env))
    return out
