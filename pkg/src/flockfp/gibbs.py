"""Gibbs states, the compatibility functions H and K, and the effective potential.

For a speed ``r >= 0`` write E_r(v) = exp(-(phi_alpha(|v|) - r v_1)/D).  Then

* K(r) = int E_r dv and Z(r e_1) = exp(-r^2/(2D)) K(r);
* H(r) = int (v_1 - r) E_r dv = alpha int (1 - |v|^2) v_1 E_r dv
  (the second form follows from an integration by parts and has no
  cancellation near the zero of H);
* V(r) = -D log Z(r) = r^2/2 - D log K(r), with V'(r) = -H(r)/K(r).

Each r-derivative of E_r inserts a factor v_1/D, so every derivative of H and
K is again a radial-angular moment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DerivativeUnstable
from .model import ModelParams, phi_u
from .quadrature import DEFAULT_SPEC, QuadSpec, gibbs_radial_moment, tensor_integral


def _speed(u) -> float:
    return float(np.linalg.norm(np.atleast_1d(np.asarray(u, dtype=float))))


# --------------------------------------------------------------------------- raw moments


def _K_scaled(params, r, order=0, spec=DEFAULT_SPEC):
    """K^(order)(r) as (value, shift), value * exp(-shift) being the true number."""
    D = params.D
    val, shift = gibbs_radial_moment(params, r, 0, order, spec)
    return val / D**order, shift


def _H_scaled(params, r, order=0, spec=DEFAULT_SPEC):
    D, alpha = params.D, params.alpha
    if alpha == 0.0:
        return 0.0, 0.0
    # alpha int (1 - |v|^2) v_1^(order+1) E_r dv / D^order
    val, shift = gibbs_radial_moment(params, r, 0, 1 + order, spec,
                                     s_factor=lambda s: 1.0 - s * s)
    return alpha * val / D**order, shift


def H_of_r(params: ModelParams, r: float, spec: QuadSpec = DEFAULT_SPEC, deriv: int = 0) -> float:
    """H(r) or its r-derivative of order ``deriv``.

    The value carries the factor exp(min_s (phi_alpha(s) - r s)/D) implicitly;
    for extreme parameters use :func:`log_K_of_r` and :func:`H_over_K`.
    """
    val, shift = _H_scaled(params, r, deriv, spec)
    return val * math.exp(-shift) if val else 0.0


def K_of_r(params: ModelParams, r: float, spec: QuadSpec = DEFAULT_SPEC, deriv: int = 0) -> float:
    val, shift = _K_scaled(params, r, deriv, spec)
    return val * math.exp(-shift)


def log_K_of_r(params: ModelParams, r: float, spec: QuadSpec = DEFAULT_SPEC) -> float:
    val, shift = _K_scaled(params, r, 0, spec)
    return math.log(val) - shift


def H_over_K(params: ModelParams, r: float, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """H(r)/K(r), free of overflow since both share the same scaling."""
    h, sh = _H_scaled(params, r, 0, spec)
    k, sk = _K_scaled(params, r, 0, spec)
    return h / k * math.exp(sk - sh) if h else 0.0


def derivative_ratios(params: ModelParams, r: float, kmax: int, spec: QuadSpec = DEFAULT_SPEC):
    """Return arrays (H^(k)/K, K^(k)/K) for k = 0..kmax."""
    k0, s0 = _K_scaled(params, r, 0, spec)
    hs, ks = [], []
    for k in range(kmax + 1):
        h, sh = _H_scaled(params, r, k, spec)
        kk, skk = _K_scaled(params, r, k, spec)
        hs.append(h / k0 * math.exp(s0 - sh) if h else 0.0)
        ks.append(kk / k0 * math.exp(s0 - skk))
    return np.array(hs), np.array(ks)


# --------------------------------------------------------------------------- states


def normalization(params: ModelParams, u, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """log Z(u) with Z(u) = int exp(-(|v - u|^2/2 + psi_alpha(v))/D) dv."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != params.d:
        raise ValueError(f"u must have {params.d} components")
    if spec.mode == "tensor_grid":
        return math.log(tensor_integral(lambda v: 1.0, u, params, spec))
    r = _speed(u)
    return log_K_of_r(params, r, spec) - 0.5 * r * r / params.D


@dataclass(frozen=True)
class GibbsState:
    """Gibbs state G_u with its cached log-normalization."""

    params: ModelParams
    u: np.ndarray
    logZ: float = field(default=float("nan"))

    def __post_init__(self):
        u = np.array(np.atleast_1d(self.u), dtype=float)
        if u.size != self.params.d:
            raise ValueError(f"u must have {self.params.d} components")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        if math.isnan(self.logZ):
            object.__setattr__(self, "logZ", normalization(self.params, u))

    @classmethod
    def at(cls, params: ModelParams, u, spec: QuadSpec = DEFAULT_SPEC) -> "GibbsState":
        return cls(params, u, normalization(params, u, spec))

    def log_density(self, v):
        return -phi_u(v, self.u, self.params.alpha) / self.params.D - self.logZ

    def __call__(self, v):
        return np.exp(self.log_density(v))


def density(state: GibbsState, v):
    """G_u(v) for points ``v`` of shape (..., d)."""
    return state(v)


def mean_velocity_of_gibbs(params: ModelParams, u, spec: QuadSpec = DEFAULT_SPEC) -> np.ndarray:
    """Mean velocity int v G_u dv = u + (H/K)(|u|) u/|u|."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    r = _speed(u)
    if r == 0.0:
        return np.zeros_like(u)
    return u + H_over_K(params, r, spec) * u / r


def gibbs_moment(params: ModelParams, r: float, s_power: int, cos_power: int,
                 spec: QuadSpec = DEFAULT_SPEC) -> float:
    """E[|v|^k v_1^p] under G_{r e_1}; s_power counts the powers of |v| beyond v_1^p."""
    num, sn = gibbs_radial_moment(params, r, s_power, cos_power, spec)
    den, sd = gibbs_radial_moment(params, r, 0, 0, spec)
    return num / den * math.exp(sd - sn)


# --------------------------------------------------------------------------- effective potential


def _V_prime(params, r, spec):
    return -H_over_K(params, r, spec)


def V_analytic(params: ModelParams, r: float, order: int, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """Derivative of V of order 0..4 from differentiated moments (no differencing).

    With q = H/K and H = q K, the Leibniz rule gives q', q'', q''' recursively;
    V^(k) = -q^(k-1) for k >= 1.
    """
    if order == 0:
        return 0.5 * r * r - params.D * log_K_of_r(params, r, spec)
    h, k = derivative_ratios(params, r, order - 1, spec)
    q = []
    for n in range(order):
        acc = h[n]
        for j in range(n):
            acc -= math.comb(n, j) * q[j] * k[n - j]
        q.append(acc)  # k[0] == 1
    return -q[order - 1]


def V_and_derivatives(params: ModelParams, r: float, order: int = 0,
                      spec: QuadSpec = DEFAULT_SPEC, step: float | None = None,
                      rtol: float = 1e-6) -> float:
    """V(r) or one of its first four r-derivatives.

    Orders 0-2 are evaluated from quadrature directly.  Orders 3 and 4 are
    central differences of V' with Richardson extrapolation over the steps
    ``step``, ``step/2``, ``step/4``; the two extrapolated values must agree to
    ``rtol`` (relative to the size of V'' at r plus the value itself).
    """
    if order not in range(5):
        raise ValueError("order must be in 0..4")
    if order <= 2:
        return V_analytic(params, r, order, spec)
    h0 = step if step is not None else 1e-2 * max(1.0, abs(r))

    def vp(x):
        return _V_prime(params, x, spec)

    def stencil(h):
        if order == 3:
            return (vp(r + h) - 2.0 * vp(r) + vp(r - h)) / (h * h)
        return (vp(r + 2 * h) - 2.0 * vp(r + h) + 2.0 * vp(r - h) - vp(r - 2 * h)) / (2.0 * h**3)

    e = [stencil(h0 / 2**j) for j in range(3)]
    r1 = (4.0 * e[1] - e[0]) / 3.0
    r2 = (4.0 * e[2] - e[1]) / 3.0
    best = (16.0 * r2 - r1) / 15.0
    scale = abs(best) + abs(V_analytic(params, r, 2, spec)) + 1e-8
    if abs(r2 - r1) > rtol * scale:
        raise DerivativeUnstable(
            f"order-{order} Richardson estimates disagree: {r1!r} vs {r2!r}")
    return best


def weighted_moment_W(params: ModelParams, k: int, r: float | None = None,
                      spec: QuadSpec = DEFAULT_SPEC) -> float:
    """W_k = int |v|^k G_u dv for u on the polarized sphere (independent of the direction)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if r is None:
        from .phase import require_r_of_D
        r = require_r_of_D(params, spec)
    if k == 0:
        return 1.0
    return gibbs_moment(params, r, k, 0, spec)
