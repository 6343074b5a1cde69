"""Uniform cell-centred velocity grids and densities living on them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .model import ModelParams, phi_alpha, phi_u
from .quadrature import TAIL_MARGIN, peak_and_truncation


@dataclass(frozen=True)
class Grid:
    """Tensor grid of n^d cells over [-L, L]^d (d in {1, 2})."""

    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("grids support d in {1, 2}")
        if self.n < 8:
            raise ValueError("n must be >= 8")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def shape(self):
        return (self.n,) * self.d

    @cached_property
    def centers(self) -> np.ndarray:
        return -self.L + self.h * (np.arange(self.n) + 0.5)

    @cached_property
    def points(self) -> np.ndarray:
        """Cell centres, shape (n,)*d + (d,)."""
        mesh = np.meshgrid(*([self.centers] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def speed2(self) -> np.ndarray:
        return np.sum(self.points**2, axis=-1)

    def integrate(self, values) -> float:
        return float(np.sum(values)) * self.cell_volume

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.d, self.n * factor, self.L)


def domain_half_width(params: ModelParams, speed: float = 0.0, margin: float = TAIL_MARGIN) -> float:
    """Half-width beyond which every Gibbs state with |u| <= 1.5 ``speed`` has weight < e^-margin.

    ``speed`` is the largest mean velocity expected during a run; the default
    for the polarized regime is r(D), and 1 otherwise.
    """
    lead = 1.5 * speed

    def expo(s):
        return (phi_alpha(s, params.alpha) - lead * s) / params.D

    _, _, s_max = peak_and_truncation(expo, margin, 1.0 + lead)
    return float(s_max)


def log_gibbs_weights(grid: Grid, params: ModelParams, u) -> np.ndarray:
    """-phi_u(v)/D on the grid (unnormalized log weights)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return -phi_u(grid.points, u, params.alpha) / params.D


def discrete_log_normalization(grid: Grid, params: ModelParams, u) -> float:
    """log of sum exp(-phi_u/D) h^d, the grid analogue of log Z(u)."""
    return float(logsumexp(log_gibbs_weights(grid, params, u))) + grid.d * math.log(grid.h)


def discrete_gibbs(grid: Grid, params: ModelParams, u) -> np.ndarray:
    """Gibbs state on the grid, normalized to unit discrete mass."""
    lw = log_gibbs_weights(grid, params, u)
    lw = lw - logsumexp(lw)
    return np.exp(lw) / grid.cell_volume


@dataclass
class GridDensity:
    """Nonnegative cell values with unit discrete mass."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values must have shape {self.grid.shape}, got {v.shape}")
        self.values = v

    @classmethod
    def normalized(cls, grid: Grid, values) -> "GridDensity":
        v = np.clip(np.asarray(values, dtype=float), 0.0, None)
        m = grid.integrate(v)
        if not m > 0:
            raise ValueError("density has no mass")
        return cls(grid, v / m)

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def mean_velocity(self) -> np.ndarray:
        g = self.grid
        return np.tensordot(self.values, g.points, axes=g.d) * g.cell_volume

    def moment(self, k: int) -> float:
        return self.grid.integrate(self.values * self.grid.speed2 ** (0.5 * k))

    def copy(self) -> "GridDensity":
        return GridDensity(self.grid, self.values.copy())


def potential_on_grid(grid: Grid, params: ModelParams) -> np.ndarray:
    """psi_alpha(v) + |v|^2/2 at the cell centres (the u-independent part of phi_u)."""
    r2 = grid.speed2
    return 0.25 * params.alpha * r2 * r2 + 0.5 * (1.0 - params.alpha) * r2


def face_exponents(grid: Grid, params: ModelParams, u, base=None):
    """Per-axis face exponents w = (phi_u(right) - phi_u(left))/D.

    ``base`` may hold the precomputed u-independent differences returned by
    :func:`base_face_differences`.  Axis k has shape n-1 along axis k.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if base is None:
        base = base_face_differences(grid, params)
    shift = grid.h / params.D
    return [b - shift * u[k] for k, b in enumerate(base)]


def base_face_differences(grid: Grid, params: ModelParams):
    pot = potential_on_grid(grid, params) / params.D
    return [np.diff(pot, axis=k) for k in range(grid.d)]
