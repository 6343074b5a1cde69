"""Model parameters and the confining potential."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Dimension ``d``, potential strength ``alpha`` and noise intensity ``D``.

    ``alpha = 0`` is accepted as a degenerate Gaussian edge case.
    """

    d: int
    alpha: float
    D: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha!r}")
        if not self.D > 0:
            raise ValueError(f"D must be > 0, got {self.D!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "D", float(self.D))

    def with_D(self, D: float) -> "ModelParams":
        return ModelParams(self.d, self.alpha, D)


def phi_alpha(s, alpha):
    """Radial profile alpha s^4/4 + (1 - alpha) s^2/2 = psi_alpha(s) + s^2/2."""
    s2 = np.square(s)
    return 0.25 * alpha * s2 * s2 + 0.5 * (1.0 - alpha) * s2


def psi_alpha(v, alpha):
    """Confining potential alpha|v|^4/4 - alpha|v|^2/2, ``v`` of shape (..., d)."""
    r2 = np.sum(np.square(v), axis=-1)
    return 0.25 * alpha * r2 * r2 - 0.5 * alpha * r2


def grad_psi_alpha(v, alpha):
    r2 = np.sum(np.square(v), axis=-1, keepdims=True)
    return alpha * (r2 - 1.0) * v


def phi_u(v, u, alpha):
    """Gibbs exponent |v - u|^2/2 + psi_alpha(v) (not divided by D)."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    return 0.5 * np.sum(np.square(v - u), axis=-1) + psi_alpha(v, alpha)
