"""Linearization around a Gibbs state: quadratic forms, operators and remainder bounds.

A perturbation g lives on a grid and is anchored at a Gibbs state G_u
(discretely normalized); f = G_u (1 + g).  With v_g = (1/D) int v g G_u:

    Q1[g] = D int g^2 G_u - D^2 |v_g|^2
    Q2[g] = D^2 int |grad g - v_g|^2 G_u
    L_u g = D Lap g + (grad psi + v - u).(v_g - grad g)
    R_u g = -v_g.[D grad g - (grad psi + v - u) g]

Gradients are centred second-order differences with one-sided second-order
stencils at the boundary cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .diagnostics import free_energy, fisher_information, odd_moment
from .dirichlet import lowest_eigenvalues, symmetric_dirichlet
from .errors import AnchorMismatch, ZeroMeanVelocity
from .gibbs import GibbsState, weighted_moment_W
from .grid import Grid, GridDensity, discrete_gibbs
from .model import ModelParams, grad_psi_alpha
from .quadrature import DEFAULT_SPEC, QuadSpec


# --------------------------------------------------------------------------- anchor


@dataclass(frozen=True, eq=False)
class Anchor:
    """A Gibbs state G_u together with its grid representation."""

    grid: Grid
    state: GibbsState

    @classmethod
    def at(cls, grid: Grid, params: ModelParams, u, spec: QuadSpec = DEFAULT_SPEC) -> "Anchor":
        return cls(grid, GibbsState.at(params, u, spec))

    @property
    def params(self) -> ModelParams:
        return self.state.params

    @property
    def u(self) -> np.ndarray:
        return self.state.u

    @cached_property
    def G(self) -> np.ndarray:
        return discrete_gibbs(self.grid, self.params, self.u)

    @cached_property
    def drift(self) -> np.ndarray:
        """grad psi_alpha(v) + v - u on the grid, shape (..., d)."""
        pts = self.grid.points
        return grad_psi_alpha(pts, self.params.alpha) + pts - self.u

    def same_as(self, other: "Anchor") -> bool:
        return (self is other) or (self.grid == other.grid and self.params == other.params
                                   and np.array_equal(self.u, other.u))

    def integrate(self, values) -> float:
        return self.grid.integrate(values * self.G)

    def weighted_mean_vector(self, values) -> np.ndarray:
        """int v values G dv."""
        g = self.grid
        return np.tensordot(values * self.G, g.points, axes=g.d) * g.cell_volume


def gradient(grid: Grid, g) -> np.ndarray:
    """Centred gradient, shape (..., d)."""
    if grid.d == 1:
        return np.gradient(g, grid.h, edge_order=2)[..., None]
    return np.stack(np.gradient(g, grid.h, edge_order=2), axis=-1)


def laplacian(grid: Grid, g) -> np.ndarray:
    h2 = grid.h**2
    out = np.zeros_like(g)
    for axis in range(grid.d):
        x = np.moveaxis(g, axis, 0)
        lap = np.empty_like(x)
        lap[1:-1] = x[2:] - 2.0 * x[1:-1] + x[:-2]
        lap[0] = 2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]
        lap[-1] = 2.0 * x[-1] - 5.0 * x[-2] + 4.0 * x[-3] - x[-4]
        out += np.moveaxis(lap, 0, axis) / h2
    return out


# --------------------------------------------------------------------------- perturbations


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Grid function g with zero G_u-mean."""

    anchor: Anchor
    g: np.ndarray

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        if g.shape != self.anchor.grid.shape:
            raise ValueError("g does not match the anchor grid")
        mean = self.anchor.integrate(g)
        scale = math.sqrt(self.anchor.integrate(g * g)) + 1e-300
        if abs(mean) > 1e-12 * max(1.0, scale):
            raise ValueError(f"g has nonzero G-mean {mean:.3e}; use Perturbation.project")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @classmethod
    def project(cls, anchor: Anchor, g) -> "Perturbation":
        """Remove the G_u-mean of g."""
        g = np.asarray(g, dtype=float)
        return cls(anchor, g - anchor.integrate(g))

    @classmethod
    def from_density(cls, f: GridDensity, anchor: Anchor) -> "Perturbation":
        """g = f/G_u - 1 (zero mean because both have unit mass)."""
        G = anchor.G
        g = np.where(G > 0, f.values / np.maximum(G, 1e-300) - 1.0, 0.0)
        return cls.project(anchor, g)

    @cached_property
    def v_g(self) -> np.ndarray:
        return self.anchor.weighted_mean_vector(self.g) / self.anchor.params.D

    @cached_property
    def grad(self) -> np.ndarray:
        return gradient(self.anchor.grid, self.g)

    def __add__(self, other: "Perturbation") -> "Perturbation":
        _check(self, other)
        return Perturbation(self.anchor, self.g + other.g)

    def __sub__(self, other: "Perturbation") -> "Perturbation":
        _check(self, other)
        return Perturbation(self.anchor, self.g - other.g)

    def scaled(self, c: float) -> "Perturbation":
        return Perturbation(self.anchor, c * self.g)

    def density(self, eps: float = 1.0) -> GridDensity:
        """G_u (1 + eps g)."""
        return GridDensity(self.anchor.grid, self.anchor.G * (1.0 + eps * self.g))


def _check(p1: Perturbation, p2: Perturbation):
    if not p1.anchor.same_as(p2.anchor):
        raise AnchorMismatch("perturbations are anchored at different Gibbs states")


def l2_norm_sq(p: Perturbation) -> float:
    """int g^2 G_u."""
    return p.anchor.integrate(p.g * p.g)


def grad_norm_sq(p: Perturbation) -> float:
    return p.anchor.integrate(np.sum(p.grad**2, axis=-1))


def q1(p: Perturbation) -> float:
    D = p.anchor.params.D
    return D * l2_norm_sq(p) - D * D * float(p.v_g @ p.v_g)


def q2(p: Perturbation) -> float:
    D = p.anchor.params.D
    diff = p.grad - p.v_g
    return D * D * p.anchor.integrate(np.sum(diff * diff, axis=-1))


def inner_arrays(anchor: Anchor, a, b) -> float:
    """D int a b G - D^2 v_a . v_b for arbitrary grid functions (bilinear form)."""
    D = anchor.params.D
    va = anchor.weighted_mean_vector(a) / D
    vb = anchor.weighted_mean_vector(b) / D
    return D * anchor.integrate(a * b) - D * D * float(va @ vb)


def inner_u(p1: Perturbation, p2: Perturbation) -> float:
    _check(p1, p2)
    D = p1.anchor.params.D
    return D * p1.anchor.integrate(p1.g * p2.g) - D * D * float(p1.v_g @ p2.v_g)


def apply_L(p: Perturbation) -> np.ndarray:
    D = p.anchor.params.D
    return D * laplacian(p.anchor.grid, p.g) + np.sum(p.anchor.drift * (p.v_g - p.grad), axis=-1)


def apply_R(p: Perturbation) -> np.ndarray:
    D = p.anchor.params.D
    flux = D * p.grad - p.anchor.drift * p.g[..., None]
    return -np.sum(p.v_g * flux, axis=-1)


def weak_L_form(p1: Perturbation, p2: Perturbation) -> float:
    """-D^2 int (grad g - v_g).(grad h - v_h) G_u: the weak form of <L g, h>_u."""
    _check(p1, p2)
    D = p1.anchor.params.D
    a = p1.grad - p1.v_g
    b = p2.grad - p2.v_g
    return -D * D * p1.anchor.integrate(np.sum(a * b, axis=-1))


def weak_R_form(p1: Perturbation, p2: Perturbation) -> float:
    """D^2 v_g . int g (grad h - v_h) G_u: the weak form of <R g, h>_u."""
    _check(p1, p2)
    D = p1.anchor.params.D
    vec = _integrate_vec(p1.anchor, p1.g[..., None] * (p2.grad - p2.v_g))
    return D * D * float(p1.v_g @ vec)


def _integrate_vec(anchor: Anchor, field) -> np.ndarray:
    g = anchor.grid
    return np.tensordot(anchor.G, field, axes=g.d) * g.cell_volume


# --------------------------------------------------------------------------- projection


def project_u_star(u_f, r: float) -> np.ndarray:
    """Radial projection r u_f/|u_f| onto the sphere of radius r."""
    u_f = np.atleast_1d(np.asarray(u_f, dtype=float))
    n = float(np.linalg.norm(u_f))
    if n < 1e-12:
        raise ZeroMeanVelocity("cannot project u_f = 0 onto the sphere")
    return r * u_f / n


def projection_differential(u_f, w, r: float) -> np.ndarray:
    """d pi_{u_f}(w) for pi(v) = r v/|v|: r (w/|v| - (v.w) v/|v|^3)."""
    u_f = np.atleast_1d(np.asarray(u_f, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    n = float(np.linalg.norm(u_f))
    if n < 1e-12:
        raise ZeroMeanVelocity("projection differential undefined at u_f = 0")
    return r * (w / n - float(u_f @ w) * u_f / n**3)


def u_star_prime(f: GridDensity, r: float, params: ModelParams) -> np.ndarray:
    """Time derivative of u_* = pi(u_f) along the equation.

    Uses du_f/dt = alpha u_f - alpha int |v|^2 v f dv, which follows from the
    equation itself; only the tangential part survives the projection.
    """
    uf = f.mean_velocity()
    rate = params.alpha * (uf - odd_moment(f))
    return projection_differential(uf, rate, r)


def u_star_prime_from_g(p: Perturbation, u_f, r: float) -> np.ndarray:
    """Same derivative from the anchored perturbation: -d pi(alpha int |v|^2 v g G_*)."""
    a = p.anchor
    w = a.params.alpha * a.weighted_mean_vector(p.g * a.grid.speed2)
    return -projection_differential(u_f, w, r)


def projected_perturbation(f: GridDensity, params: ModelParams, r: float,
                           spec: QuadSpec = DEFAULT_SPEC) -> Perturbation:
    """g = f/G_{u_*} - 1 with u_* the projection of u_f onto the sphere of radius r."""
    u_star = project_u_star(f.mean_velocity(), r)
    return Perturbation.from_density(f, Anchor.at(f.grid, params, u_star, spec))


def remainder_R(p: Perturbation, u_star_prime_vec) -> float:
    """R[g] = D^2 v_g . int g (grad g - v_g) G_* - (u_*'/2) . int g^2 v G_*."""
    a = p.anchor
    D = a.params.D
    first = D * D * float(p.v_g @ _integrate_vec(a, p.g[..., None] * (p.grad - p.v_g)))
    second = 0.5 * float(np.asarray(u_star_prime_vec) @ a.weighted_mean_vector(p.g * p.g))
    return first - second


# --------------------------------------------------------------------------- moment bound


def moment_weight(anchor: Anchor) -> np.ndarray:
    """alpha^2 |v|^6 / (8 D^2) on the grid."""
    p = anchor.params
    return p.alpha**2 * anchor.grid.speed2**3 / (8.0 * p.D**2)


def C_D(anchor: Anchor) -> float:
    """Smallest C with alpha^2/(8D^2) int g^2|v|^6 G <= C int g^2 G + int |grad g|^2 G on the grid.

    Computed as the top of the spectrum of the weight minus the finite-difference
    Dirichlet operator in L^2(G), i.e. a generalized symmetric eigenproblem.
    """
    grid = anchor.grid
    B, _ = symmetric_dirichlet(grid, anchor.params, anchor.u)
    w = moment_weight(anchor).ravel()
    Bw = (B - sp.diags(w)).tocsc()
    sigma = -float(w.max()) - 1.0
    lam = lowest_eigenvalues(Bw, 1, grid.d, sigma)[0]
    return max(-float(lam), 0.0)


def moment_weighted_bound_check(p: Perturbation, C: float) -> float:
    """lhs - rhs of the moment-weighted bound (nonpositive when it holds)."""
    a = p.anchor
    lhs = a.integrate(moment_weight(a) * p.g * p.g)
    rhs = C * l2_norm_sq(p) + grad_norm_sq(p)
    return lhs - rhs


# --------------------------------------------------------------------------- constants


@dataclass(frozen=True)
class LinearizedConstants:
    D: float
    r: float
    kappa: float
    eta: float
    beta: float
    a: float
    b: float
    Lambda: float
    W2: float
    W6: float
    C_D: float
    gamma: float
    B_D: float
    K_D: float
    A_D: float
    mu: float
    delta: float


def gamma_D(params: ModelParams, eta: float, beta: float, b: float, C: float) -> float:
    """Constant in |int g^2 v G_*| <= gamma Q2 (aligned g).

    The moment-weighted bound gives int g^2|v|^6 G <= (8D^2/alpha^2)(...), so the
    prefactor is (8D^2/alpha^2)^(1/6).
    """
    eb2 = (eta * beta) ** 2
    return (8.0 * params.D**2 / params.alpha**2) ** (1.0 / 6.0) * (
        (C / eb2 + b * b) ** (1.0 / 6.0) * (1.0 / eb2) ** (5.0 / 6.0))


def linearized_constants(params: ModelParams, grid: Grid | None = None, eps: float = 1e-2,
                         spec: QuadSpec = DEFAULT_SPEC, coercivity=None, pl=None) -> LinearizedConstants:
    """All constants of the local decay estimate for D below the threshold."""
    from .phase import coercivity_constants, pl_constants, require_r_of_D
    from .solver import SolverConfig

    r = require_r_of_D(params, spec)
    co = coercivity or coercivity_constants(params, spec)
    pl = pl or pl_constants(params, eps, spec)
    if grid is None:
        grid = SolverConfig().resolve(params).grid(params.d)
    u = np.zeros(params.d)
    u[0] = r
    C = C_D(Anchor.at(grid, params, u, spec))
    W2 = co.W2
    W6 = weighted_moment_W(params, 6, r, spec)
    gam = gamma_D(params, co.eta, co.beta, co.b, C)
    B = params.D**2 / (co.eta * co.beta) + 0.5 * gam
    K = B * (math.sqrt(W2) / (params.D * co.eta) + 2 * params.alpha * math.sqrt(W6) / (r * co.eta))
    A = min(pl.delta * co.eta / math.sqrt(W2), K**-2)
    return LinearizedConstants(params.D, r, co.kappa, co.eta, co.beta, co.a, co.b, co.Lambda,
                               W2, W6, C, gam, B, K, A, pl.mu1, pl.delta)


# --------------------------------------------------------------------------- aligned perturbations


def aligned_perturbation(anchor: Anchor, rng: np.random.Generator, degree: int = 4,
                         n_waves: int = 2) -> Perturbation:
    """Random smooth g whose v_g is parallel to u (or any g in one dimension).

    g depends on v through (v.e, |v - (v.e)e|^2) with e = u/|u|, i.e. it is
    symmetric under reflections fixing the u axis.  Low-order polynomials
    plus a few bounded waves keep g in every weighted L^2 space.
    """
    grid = anchor.grid
    u = anchor.u
    n = float(np.linalg.norm(u))
    e = u / n if n > 0 else np.eye(grid.d)[0]
    pts = grid.points
    par = pts @ e
    perp2 = np.maximum(grid.speed2 - par * par, 0.0)
    c = par - n
    g = np.zeros(grid.shape)
    for i in range(degree + 1):
        for j in range(0, (degree - i) // 2 + 1):
            if grid.d == 1 and j > 0:
                continue
            if i == 0 and j == 0:
                continue
            g += rng.normal() / math.factorial(i + j) * c**i * perp2**j
    for _ in range(n_waves):
        k1, k2 = rng.normal(size=2) * 2.0
        g += rng.normal() * np.cos(k1 * par + rng.uniform(0, 2 * np.pi)) * np.cos(k2 * np.sqrt(perp2))
    return Perturbation.project(anchor, g)


def random_perturbation(anchor: Anchor, rng: np.random.Generator, degree: int = 3) -> Perturbation:
    """Random smooth g with no alignment constraint."""
    pts = anchor.grid.points
    g = np.zeros(anchor.grid.shape)
    for _ in range(degree + 2):
        k = rng.normal(size=anchor.grid.d) * 1.5
        g += rng.normal() * np.cos(pts @ k + rng.uniform(0, 2 * np.pi))
    g += pts @ rng.normal(size=anchor.grid.d)
    return Perturbation.project(anchor, g)


# --------------------------------------------------------------------------- limit definitions


def q1_from_free_energy(p: Perturbation, eps: float) -> float:
    """(2/eps^2)(F[G_u(1 + eps g)] - F[G_u])."""
    params = p.anchor.params
    F0 = free_energy(GridDensity(p.anchor.grid, p.anchor.G), params)
    return 2.0 / eps**2 * (free_energy(p.density(eps), params) - F0)


def q2_from_fisher(p: Perturbation, eps: float) -> float:
    """(1/eps^2) I[G_u(1 + eps g)]."""
    return fisher_information(p.density(eps), p.anchor.params) / eps**2
