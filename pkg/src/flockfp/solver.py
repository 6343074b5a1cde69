"""Exponential-fitting finite-volume solver for the self-consistent Fokker-Planck equation.

    df/dt = D Lap f + div[(grad psi_alpha(v) + v - u_f) f],   u_f = int v f dv.

Each step freezes u at the current mean velocity and applies backward Euler to
the linear equation with Scharfetter-Gummel (Chang-Cooper) face fluxes

    F = (D/h) [B(w) f_left - B(-w) f_right],   w = (phi_u(right) - phi_u(left))/D,

B(x) = x/(e^x - 1).  Using potential differences for w makes the grid Gibbs
state exp(-phi_u/D) an exact zero-flux state.  The implicit matrix is an
M-matrix with unit column sums, so positivity and mass hold for every dt.
In two dimensions the x and y sweeps are applied one after the other.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import (DiagnosticsRecord, Reference, fisher_information, free_energy,
                          make_record, relative_entropy_to_gibbs)
from .errors import CFLViolation, DissipationViolation, HypothesisViolated, NegativeCell
from .grid import (Grid, GridDensity, base_face_differences, discrete_gibbs, domain_half_width,
                   face_exponents, log_gibbs_weights)
from .model import ModelParams, grad_psi_alpha
from .numerics import bernoulli, tridiagonal_solve
from .quadrature import DEFAULT_SPEC, QuadSpec

__all__ = ["GridDensity", "SolverConfig", "Stepper", "drift_field", "step", "run",
           "initial_data", "RunResult"]


def drift_field(params: ModelParams, u, v):
    """grad psi_alpha(v) + v - u for points ``v`` of shape (..., d)."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    return grad_psi_alpha(v, params.alpha) + v - u


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and run controls; ``None`` entries are filled by :meth:`resolve`."""

    L: float | None = None
    n: int | None = None
    dt: float | None = None
    t_end: float = 1.0
    coupling: str = "explicit"
    output_stride: int = 10
    cfl_max: float = 100.0
    check_dissipation: bool = True
    dissipation_atol: float = 1e-10
    dissipation_ctol: float = 1e-2

    def __post_init__(self):
        if self.coupling not in ("explicit", "semi_implicit"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.output_stride < 1:
            raise ValueError("output_stride must be >= 1")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        for name in ("L", "dt"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")

    def resolve(self, params: ModelParams, speed: float | None = None) -> "SolverConfig":
        """Fill L (truncation rule), n (400 or 128) and dt (1e-3/D)."""
        L = self.L
        if L is None:
            if speed is None:
                from .phase import equilibrium_speed
                speed = equilibrium_speed(params) or 1.0
            L = domain_half_width(params, speed)
        n = self.n if self.n is not None else (400 if params.d == 1 else 128)
        dt = self.dt if self.dt is not None else 1e-3 / params.D
        return replace(self, L=float(L), n=int(n), dt=float(dt))

    def grid(self, d: int) -> Grid:
        if self.L is None or self.n is None:
            raise ValueError("resolve() the config first")
        return Grid(d, self.n, self.L)

    def cfl_number(self, params: ModelParams, speed: float = 0.0) -> float:
        g = self.grid(params.d)
        vmax = g.L * math.sqrt(params.d)
        drift = params.alpha * abs(vmax**2 - 1.0) * vmax + vmax + speed
        return self.dt * drift / g.h

    def dissipation_tol(self, h: float, scale: float = 1.0) -> float:
        return self.dissipation_atol * max(1.0, abs(scale)) + self.dissipation_ctol * (
            self.dt**2 + h * h)


class Stepper:
    """Backward-Euler exponential-fitting stepper with precomputed u-independent data."""

    def __init__(self, grid: Grid, params: ModelParams, dt: float):
        self.grid = grid
        self.params = params
        self.dt = dt
        self.base = base_face_differences(grid, params)
        self.c = dt * params.D / grid.h**2

    def _sweep(self, values, w, axis):
        n = self.grid.n
        c = self.c
        bp = bernoulli(w)
        bm = bernoulli(-w)
        # move the sweep axis last so each line is contiguous
        vals = np.moveaxis(values, axis, -1)
        bp = np.moveaxis(bp, axis, -1)
        bm = np.moveaxis(bm, axis, -1)
        lead = vals.shape[:-1]
        diag = np.ones(lead + (n,))
        diag[..., :-1] += c * bp
        diag[..., 1:] += c * bm
        upper = np.zeros(lead + (n,))
        lower = np.zeros(lead + (n,))
        upper[..., :-1] = -c * bm
        lower[..., :-1] = -c * bp
        sol = tridiagonal_solve(lower.ravel()[:-1], diag.ravel(), upper.ravel()[:-1],
                                np.ascontiguousarray(vals).ravel())
        return np.moveaxis(sol.reshape(vals.shape), -1, axis)

    def linear_step(self, values, u):
        """One step of the linear equation with the mean velocity frozen at ``u``."""
        ws = face_exponents(self.grid, self.params, u, self.base)
        out = values
        for axis, w in enumerate(ws):
            out = self._sweep(out, w, axis)
        lo = float(out.min())
        if lo < 0:
            if lo < -1e-13 * float(out.max()):
                raise NegativeCell(f"negative cell value {lo:.3e}")
            out = np.maximum(out, 0.0)
        return out

    def step(self, f: GridDensity, coupling: str = "explicit") -> GridDensity:
        u = f.mean_velocity()
        new = self.linear_step(f.values, u)
        if coupling == "semi_implicit":
            u_pred = GridDensity(self.grid, new).mean_velocity()
            new = self.linear_step(f.values, u_pred)
        return GridDensity(self.grid, new)


def step(f: GridDensity, cfg: SolverConfig, params: ModelParams) -> GridDensity:
    """Single time step (convenience wrapper; use :class:`Stepper` in loops)."""
    if cfg.dt is None:
        raise ValueError("cfg.dt must be set")
    cfl = replace(cfg, L=f.grid.L, n=f.grid.n).cfl_number(params)
    if cfl > cfg.cfl_max:
        raise CFLViolation(f"CFL number {cfl:.3g} exceeds {cfg.cfl_max}")
    return Stepper(f.grid, params, cfg.dt).step(f, cfg.coupling)


@dataclass
class RunResult:
    times: np.ndarray
    records: list
    final: GridDensity
    snapshots: list = field(default_factory=list)
    F_steps: np.ndarray | None = None
    uf_steps: np.ndarray | None = None
    u_inf: np.ndarray | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def run(f_ini: GridDensity, cfg: SolverConfig, params: ModelParams, *,
        spec: QuadSpec = DEFAULT_SPEC, keep_snapshots: bool = False,
        keep_steps: bool = False, ref: Reference | None = None,
        fill_u_inf: bool = True) -> RunResult:
    """Integrate to ``cfg.t_end`` and record diagnostics every ``output_stride`` steps.

    The free energy is checked after every step; an increase beyond
    ``cfg.dissipation_tol`` raises :class:`DissipationViolation`.  The
    de Bruijn residual (F^{n+1} - F^n)/dt + (I^n + I^{n+1})/2 is stored on
    every record except the first.  When ``fill_u_inf`` is set, u_inf is the
    final mean velocity and H[f|G_{u_inf}] is filled in afterwards (this keeps
    the recorded densities in memory).
    """
    grid = f_ini.grid
    if cfg.dt is None or cfg.L is None or cfg.n is None:
        raise ValueError("cfg must be resolved (SolverConfig.resolve)")
    if (cfg.n, cfg.L) != (grid.n, grid.L):
        raise ValueError("initial density does not live on the configured grid")
    ref = ref or Reference.for_params(params, spec)
    cfl = cfg.cfl_number(params)
    if cfl > cfg.cfl_max:
        raise CFLViolation(f"CFL number {cfl:.3g} exceeds {cfg.cfl_max}")
    stepper = Stepper(grid, params, cfg.dt)
    n_steps = int(round(cfg.t_end / cfg.dt))
    f = f_ini.copy()
    F_prev = free_energy(f, params)
    I_prev = fisher_information(f, params)
    records = [make_record(0.0, f, ref, fisher=I_prev)]
    snaps = [f.values.copy()] if (keep_snapshots or fill_u_inf) else []
    times = [0.0]
    F_steps = [F_prev] if keep_steps else None
    uf_steps = [f.mean_velocity()] if keep_steps else None
    tol = cfg.dissipation_tol(grid.h, F_prev)
    for k in range(1, n_steps + 1):
        f = stepper.step(f, cfg.coupling)
        F_new = free_energy(f, params)
        if cfg.check_dissipation and F_new > F_prev + tol:
            raise DissipationViolation(
                f"free energy rose by {F_new - F_prev:.3e} at step {k} (tolerance {tol:.3e})")
        if keep_steps:
            F_steps.append(F_new)
            uf_steps.append(f.mean_velocity())
        if k % cfg.output_stride == 0 or k == n_steps:
            I_new = fisher_information(f, params)
            rec = make_record(k * cfg.dt, f, ref, fisher=I_new)
            # the de Bruijn residual needs I at the previous step as well
            I_old = fisher_information(prev_f, params) if k > 1 else I_prev
            rec.res_debruijn = (F_new - F_prev) / cfg.dt + 0.5 * (I_old + I_new)
            records.append(rec)
            times.append(k * cfg.dt)
            if keep_snapshots or fill_u_inf:
                snaps.append(f.values.copy())
        F_prev = F_new
        prev_f = f
    result = RunResult(np.array(times), records, f, snaps,
                       np.array(F_steps) if keep_steps else None,
                       np.array(uf_steps) if keep_steps else None)
    if fill_u_inf:
        u_inf = f.mean_velocity()
        result.u_inf = u_inf
        for rec, vals in zip(records, snaps):
            rec.H_rel_inf = relative_entropy_to_gibbs(GridDensity(grid, vals), params, u_inf)
        if not keep_snapshots:
            result.snapshots = []
    return result


# --------------------------------------------------------------------------- initial data


@dataclass
class InitialReport:
    kind: str
    free_energy: float
    free_energy_gap_G0: float          # F[f_ini] - F[G_0]
    max_weighted_l2: float             # max over a sphere sample of int f^2 / G_u
    admissible: bool
    notes: list = field(default_factory=list)


def _random_profile(grid: Grid, rng: np.random.Generator, n_modes: int = 3):
    """Smooth bounded profile with sup norm 1."""
    pts = grid.points
    g = np.zeros(grid.shape)
    for _ in range(n_modes):
        k = rng.normal(size=grid.d) * 1.5
        g += rng.normal() * np.cos(pts @ k + rng.uniform(0, 2 * np.pi))
    return g / max(np.max(np.abs(g)), 1e-300)


def initial_data(kind: str, params: ModelParams, grid: Grid, seed: int = 0, *,
                 u0=None, eps: float = 0.1, center=None, width: float = 0.3,
                 weight: float = 0.5, spec: QuadSpec = DEFAULT_SPEC, n_sphere: int = 16,
                 warn: bool = True):
    """Build an initial density and report the convergence hypotheses.

    kinds:
      * ``gibbs_tilt``: G_{u0} (1 + eps g0) with g0 a smooth random profile, |g0| <= 1;
      * ``gaussian_bump``: Gaussian of the given ``width`` at ``center``;
      * ``mixture``: (1 - weight) G_{u0} + weight * bump;
      * ``impulse``: all mass in the cell containing ``center``.
    ``u0`` defaults to r(D) e_1 (or 0 above the threshold); ``center`` to 1.2 u0.
    Returns ``(GridDensity, InitialReport)``; a :class:`HypothesisViolated`
    warning is emitted when F[f] >= F[G_0] in the polarized regime.
    """
    from .phase import equilibrium_speed

    rng = np.random.default_rng(seed)
    r_eq = equilibrium_speed(params, spec)
    e1 = np.zeros(grid.d)
    e1[0] = 1.0
    u0 = r_eq * e1 if u0 is None else np.atleast_1d(np.asarray(u0, dtype=float))
    if center is None:
        center = 1.2 * u0 if np.any(u0) else 1.2 * e1
    center = np.atleast_1d(np.asarray(center, dtype=float))
    pts = grid.points
    if kind == "gibbs_tilt":
        if not 0 <= eps < 1:
            raise ValueError("eps must lie in [0, 1)")
        G = discrete_gibbs(grid, params, u0)
        vals = G if eps == 0 else G * (1.0 + eps * _random_profile(grid, rng))
    elif kind == "gaussian_bump":
        vals = np.exp(-np.sum((pts - center) ** 2, axis=-1) / (2 * width**2))
    elif kind == "mixture":
        bump = np.exp(-np.sum((pts - center) ** 2, axis=-1) / (2 * width**2))
        bump /= grid.integrate(bump)
        vals = (1 - weight) * discrete_gibbs(grid, params, u0) + weight * bump
    elif kind == "impulse":
        idx = tuple(int(np.clip(np.floor((c + grid.L) / grid.h), 0, grid.n - 1)) for c in center)
        vals = np.zeros(grid.shape)
        vals[idx] = 1.0
    else:
        raise ValueError(f"unknown initial data kind {kind!r}")
    f = GridDensity.normalized(grid, vals)
    report = hypothesis_report(f, params, kind, r_eq, n_sphere, rng)
    if warn and not report.admissible:
        warnings.warn("; ".join(report.notes), HypothesisViolated, stacklevel=2)
    return f, report


def hypothesis_report(f: GridDensity, params: ModelParams, kind: str, r_eq: float,
                      n_sphere: int = 16, rng=None) -> InitialReport:
    grid = f.grid
    F = free_energy(f, params)
    G0 = GridDensity(grid, discrete_gibbs(grid, params, np.zeros(grid.d)))
    gap = F - free_energy(G0, params)
    if r_eq > 0:
        if grid.d == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            th = np.linspace(0, 2 * np.pi, n_sphere, endpoint=False)
            dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        l2 = 0.0
        for e in dirs:
            lw = log_gibbs_weights(grid, params, r_eq * e)
            lw = lw - np.max(lw)
            logG = lw - math.log(grid.integrate(np.exp(lw)))
            with np.errstate(over="ignore"):
                l2 = max(l2, grid.integrate(f.values**2 * np.exp(-logG)))
    else:
        l2 = math.nan
    notes = []
    admissible = True
    if r_eq > 0 and not gap < 0:
        admissible = False
        notes.append(f"F[f_ini] - F[G_0] = {gap:.3e} is not negative")
    if r_eq > 0 and not np.isfinite(l2):
        admissible = False
        notes.append("f_ini is not in L2(1/G_u) on the grid")
    return InitialReport(kind, F, gap, l2, admissible, notes)
