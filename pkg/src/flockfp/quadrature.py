"""Deterministic quadrature for Gibbs-weighted integrals over R^d.

Two routes are provided. The radial-angular route reduces every integral of
the form ``int F(|v|) v_1^p exp(v_1 r / D) dv`` to a one-dimensional radial
integral against an angular moment ``A_p``; the tensor route integrates a
general integrand over a truncated box with composite Gauss-Legendre rules.
The two are used to cross-check each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .errors import DimensionUnsupported, NonConvergent
from .model import phi_alpha

TAIL_MARGIN = 40.0
LOG_OVERFLOW = 300.0


@dataclass(frozen=True)
class QuadSpec:
    rel_tol: float = 1e-13
    s_max: float | None = None
    n_theta: int = 64
    mode: str = "radial_angular"

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.n_theta < 16 or self.n_theta % 2:
            raise ValueError("n_theta must be even and >= 16")
        if self.mode not in ("radial_angular", "tensor_grid"):
            raise ValueError(f"unknown quadrature mode {self.mode!r}")
        if self.s_max is not None and not self.s_max > 0:
            raise ValueError("s_max must be positive")

    @property
    def margin(self) -> float:
        # the tail factor exp(-margin) must sit well below rel_tol
        return max(TAIL_MARGIN, -math.log(self.rel_tol) + 10.0)


DEFAULT_SPEC = QuadSpec()


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def sphere_measure(k: int) -> float:
    """Surface measure of the unit sphere S^k in R^{k+1}; |S^0| = |S^-1| = 2."""
    if k <= 0:
        return 2.0
    return 2.0 * math.exp(0.5 * (k + 1) * math.log(math.pi) - gammaln(0.5 * (k + 1)))


# --------------------------------------------------------------------------- angular


def angular_moment(t, d: int, power: int, scaled: bool = False, n_theta: int = 64):
    """A_p(t) = int_0^pi cos^p(th) sin^(d-2)(th) exp(t cos th) dth.

    For d = 1 the sphere is {-1, 1} and, with the factor 2 carried by
    ``sphere_measure(-1)``, A_p is cosh(t) for even p and sinh(t) for odd p.
    With ``scaled=True`` the result is multiplied by exp(-|t|), which keeps
    it bounded for every t.
    """
    t = np.asarray(t, dtype=float)
    shape = t.shape
    t = t.ravel()
    at = np.abs(t)
    sign = np.where(t < 0, -1.0, 1.0) if power % 2 else 1.0
    if d == 1:
        # exp(-|t|) cosh t and exp(-|t|) sinh|t| without overflow
        if power % 2 == 0:
            val = 0.5 * (1.0 + np.exp(-2.0 * at))
        else:
            val = -0.5 * np.expm1(-2.0 * at)
        out = sign * val
    else:
        out = _angular_folded(at, d, power, n_theta) * sign
    if not scaled:
        out = out * np.exp(at)
    return out.reshape(shape)


def _angular_folded(at, d, power, n_theta):
    # fold th -> pi - th: the integral over [0, pi/2] of cosh or sinh(t cos th)
    # has no cancellation; the peak at th = 0 has width ~ 1/sqrt(t)
    half = n_theta // 2
    x, w = gauss_legendre(half)
    theta1 = np.minimum(0.5 * np.pi, 9.0 / np.sqrt(np.maximum(at, 1e-300)))
    lo = np.stack([np.zeros_like(theta1), theta1], axis=1)
    hi = np.stack([theta1, np.full_like(theta1, 0.5 * np.pi)], axis=1)
    mid = 0.5 * (lo + hi)
    rad = 0.5 * (hi - lo)
    th = mid[:, :, None] + rad[:, :, None] * x[None, None, :]
    wt = rad[:, :, None] * w[None, None, :]
    c = np.cos(th)
    sn = np.sin(th)
    a = at[:, None, None]
    # exp(-|t|) * {cosh, sinh}(|t| c)
    e_plus = np.exp(a * (c - 1.0))
    if power % 2 == 0:
        core = 0.5 * e_plus * (1.0 + np.exp(-2.0 * a * c))
    else:
        core = -0.5 * e_plus * np.expm1(-2.0 * a * c)
    integrand = c**power * sn ** (d - 2) * core
    return 2.0 * np.sum(integrand * wt, axis=(1, 2))


def angular_h(s, d: int, deriv: int = 0, log_scaled: bool = False, n_theta: int = 64):
    """h(s), h'(s) or h''(s) of the radial formula for H.

    h(s) = int_0^pi cos(th) sin^(d-2)(th) exp(s cos th) dth for d >= 2 and
    sinh(s) for d = 1; each derivative inserts one more cos(th).
    With ``log_scaled=True`` returns ``(mantissa, exponent)`` such that the
    value is ``mantissa * exp(exponent)``.
    """
    if deriv not in (0, 1, 2):
        raise ValueError("deriv must be 0, 1 or 2")
    s = np.asarray(s, dtype=float)
    if log_scaled:
        return angular_moment(s, d, deriv + 1, scaled=True, n_theta=n_theta), np.abs(s)
    if np.any(np.abs(s) > LOG_OVERFLOW):
        m, e = angular_h(s, d, deriv, log_scaled=True, n_theta=n_theta)
        with np.errstate(over="ignore"):
            return m * np.exp(e)
    return angular_moment(s, d, deriv + 1, scaled=False, n_theta=n_theta)


# --------------------------------------------------------------------------- 1-d adaptive


def adaptive_gauss_legendre(func, a: float, b: float, rel_tol: float, order: int = 16,
                            init_panels: int = 16, max_panels: int = 1 << 14, breaks=(),
                            noise: float = 0.0):
    """Integrate ``func`` on [a, b] by nested panel bisection.

    Each panel is integrated with an ``order``-point and an ``order/2``-point
    Gauss-Legendre rule; their difference is the panel error estimate. A panel
    is accepted when its error is below ``rel_tol`` times the larger of its
    length share of ``int |func|`` and its own ``int |func|``, so
    sign-changing and sharply peaked integrands are both handled.
    Returns ``(value, abs_integral)``.
    """
    if b <= a:
        return 0.0, 0.0
    xn, wn = gauss_legendre(order)
    xh, wh = gauss_legendre(order // 2)
    length = b - a
    edges = np.linspace(a, b, init_panels + 1)
    extra = [x for x in breaks if a < x < b]
    if extra:
        edges = np.unique(np.concatenate([edges, extra]))
    lo, hi = edges[:-1], edges[1:]
    accepted, accepted_abs = [], []
    n_total = edges.size - 1
    while lo.size:
        mid = 0.5 * (lo + hi)
        rad = 0.5 * (hi - lo)
        fn = np.asarray(func((mid[:, None] + rad[:, None] * xn).ravel()), dtype=float)
        fn = fn.reshape(lo.size, order)
        fh = np.asarray(func((mid[:, None] + rad[:, None] * xh).ravel()), dtype=float)
        fh = fh.reshape(lo.size, order // 2)
        i_n = rad * (fn @ wn)
        i_abs = rad * (np.abs(fn) @ wn)
        err = np.abs(i_n - rad * (fh @ wh))
        if not (np.all(np.isfinite(i_n)) and np.all(np.isfinite(err))):
            raise NonConvergent("non-finite integrand values")
        # running estimate of int |func|; refines together with the panels
        scale = math.fsum(accepted_abs) + float(np.sum(i_abs))
        if scale == 0.0:
            return 0.0, 0.0
        # the larger of the length share and the panel's own |f| mass: the
        # total error stays below 2 rel_tol int|f| without demanding
        # sub-roundoff accuracy on narrow peaked panels
        tol = rel_tol * np.maximum(scale * (2.0 * rad / length), i_abs)
        ok = err <= np.maximum(tol, noise * i_abs) + 1e-300
        accepted.extend(i_n[ok])
        accepted_abs.extend(i_abs[ok])
        bad = ~ok
        if not np.any(bad):
            break
        n_total += int(np.sum(bad))
        if n_total > max_panels:
            raise NonConvergent(
                f"panel refinement cap reached ({max_panels}); worst error {err.max():.3e}"
            )
        lo_b, mid_b, hi_b = lo[bad], mid[bad], hi[bad]
        lo = np.concatenate([lo_b, mid_b])
        hi = np.concatenate([mid_b, hi_b])
    return math.fsum(accepted), math.fsum(accepted_abs)


# --------------------------------------------------------------------------- radial


def peak_and_truncation(exponent, margin: float = TAIL_MARGIN, s_hint: float = 1.0):
    """Locate the minimum of ``exponent`` on [0, inf) and the truncation radius.

    The radius is the point beyond the last minimiser where ``exponent`` has
    risen by ``margin`` above its minimum.  Returns ``(s_peak, e_min, s_max)``.
    """
    s_hi = max(s_hint, 1.0)
    while True:
        grid = np.linspace(0.0, s_hi, 4001)
        e = exponent(grid)
        k = int(np.argmin(e))
        e_min = float(e[k])
        if e[-1] > e_min + margin and k < grid.size - 1:
            break
        s_hi *= 2.0
        if s_hi > 1e6:
            raise NonConvergent("exponent does not grow; cannot truncate")
    # refine the minimum location on the neighbouring cells
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid.size - 1)]
    fine = np.linspace(a, b, 401)
    ef = exponent(fine)
    j = int(np.argmin(ef))
    s_peak = float(fine[j])
    e_min = min(e_min, float(ef[j]))
    level = e_min + margin
    # last crossing of the level
    above = np.nonzero(e <= level)[0]
    i_last = int(above[-1])
    s_max = brentq(lambda s: float(exponent(np.array([s]))[0]) - level,
                   grid[i_last], grid[i_last + 1], xtol=1e-12)
    return s_peak, e_min, s_max


def radial_integral_scaled(weight_exponent, kernel, spec: QuadSpec = DEFAULT_SPEC,
                           s_hint: float = 1.0):
    """Return ``(value, shift)`` with int_0^inf kernel e^{-E} = value * e^{-shift}.

    ``weight_exponent`` is E(s) (for instance phi_alpha(s)/D); ``shift`` is
    its minimum, so the scaled value never overflows.
    """
    s_peak, e_min, s_max = peak_and_truncation(weight_exponent, spec.margin, s_hint)
    if spec.s_max is not None:
        s_max = spec.s_max

    def integrand(s):
        return kernel(s) * np.exp(-(weight_exponent(s) - e_min))

    # seed panel edges at the scale of the peak width
    dh = 1e-4 * max(s_peak, 1.0)
    curv = (weight_exponent(np.array([s_peak + dh]))[0] - 2 * weight_exponent(np.array([s_peak]))[0]
            + weight_exponent(np.array([max(s_peak - dh, 0.0)]))[0]) / dh**2
    width = 1.0 / math.sqrt(curv) if curv > 0 else s_max
    breaks = [s_peak + k * width for k in (-6, -3, -1, 0, 1, 3, 6)]
    # exp(-(E - e_min)) inherits the rounding of E, which is ~ eps |E|
    e_scale = abs(e_min) + spec.margin + 1.0
    noise = 16.0 * np.finfo(float).eps * e_scale
    val, _ = adaptive_gauss_legendre(integrand, 0.0, s_max, spec.rel_tol, breaks=breaks,
                                     noise=noise)
    return val, e_min


def radial_integral(weight_exponent, kernel, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """int_0^inf kernel(s) exp(-weight_exponent(s)) ds."""
    val, shift = radial_integral_scaled(weight_exponent, kernel, spec)
    if val == 0.0:
        return 0.0
    if -shift > 700:
        raise OverflowError("radial integral overflows; use radial_integral_scaled")
    return val * math.exp(-shift)


def gibbs_radial_exponent(params, r: float):
    """E(s) = (phi_alpha(s) - r s)/D, the exponent after the angular reduction."""
    alpha, D = params.alpha, params.D

    def e(s):
        return (phi_alpha(s, alpha) - r * s) / D

    return e


def gibbs_radial_moment(params, r: float, s_power: int, cos_power: int,
                        spec: QuadSpec = DEFAULT_SPEC, s_factor=None):
    """Scaled radial reduction of int F(|v|) v_1^p exp(-(phi_alpha(|v|) - r v_1)/D) dv.

    With F(s) = s^k * s_factor(s) this is
    |S^{d-2}| int s^{d-1+k+p} s_factor(s) A_p(r s/D) exp(-phi_alpha(s)/D) ds.
    Returns ``(value, shift)`` as in :func:`radial_integral_scaled`.
    """
    d, D = params.d, params.D
    area = sphere_measure(d - 2)
    power = d - 1 + s_power + cos_power
    e = gibbs_radial_exponent(params, abs(r))
    sgn = -1.0 if (r < 0 and cos_power % 2) else 1.0

    def kernel(s):
        ang = angular_moment(abs(r) * s / D, d, cos_power, scaled=True, n_theta=spec.n_theta)
        k = area * s**power * ang
        if s_factor is not None:
            k = k * s_factor(s)
        return k

    # exp(r s/D) has been absorbed by the scaled angular moment; compensate
    val, shift = radial_integral_scaled(e, kernel, spec, s_hint=1.0 + abs(r))
    return sgn * val, shift


# --------------------------------------------------------------------------- tensor


_TENSOR_RULES = {1: (16, 8, 512), 2: (16, 8, 128), 3: (8, 6, 48)}


def box_half_width(params, u_norm: float, spec: QuadSpec = DEFAULT_SPEC) -> float:
    if spec.s_max is not None:
        return float(spec.s_max)
    _, _, s_max = peak_and_truncation(gibbs_radial_exponent(params, u_norm), spec.margin,
                                      1.0 + u_norm)
    return s_max


def tensor_integral(f, u, params, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """int f(v) exp(-phi_u(v)/D) dv over R^d (d <= 3) on a truncated box.

    ``f`` receives points of shape (..., d). Panels are doubled until two
    successive composite Gauss-Legendre results agree to ``rel_tol`` relative
    to the integral of |f| e^{-phi_u/D}.
    """
    d = params.d
    if d > 3:
        raise DimensionUnsupported("tensor quadrature supports d <= 3; use the radial route")
    u = np.broadcast_to(np.asarray(u, dtype=float), (d,))
    half_width = box_half_width(params, float(np.linalg.norm(u)), spec)
    order, panels, cap = _TENSOR_RULES[d]
    prev = None
    while True:
        val, scale = _tensor_pass(f, u, params, half_width, order, panels)
        if prev is not None and abs(val - prev) <= spec.rel_tol * max(scale, 1e-300):
            return val
        if scale == 0.0:
            return 0.0
        prev = val
        panels *= 2
        if panels > cap:
            raise NonConvergent(f"tensor quadrature did not settle (last change {abs(val - prev):.3e})")


def _tensor_pass(f, u, params, half_width, order, panels):
    x, w = gauss_legendre(order)
    edges = np.linspace(-half_width, half_width, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    rad = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + rad[:, None] * x).ravel()
    weights = (rad[:, None] * w).ravel()
    d = params.d
    mesh = np.meshgrid(*([nodes] * d), indexing="ij")
    pts = np.stack(mesh, axis=-1)
    wts = weights
    for _ in range(d - 1):
        wts = np.multiply.outer(wts, weights)
    r2 = np.sum(pts * pts, axis=-1)
    expo = (phi_alpha(np.sqrt(r2), params.alpha) - pts @ u + 0.5 * float(u @ u)) / params.D
    shift = float(expo.min())
    weight = np.exp(-(expo - shift)) * wts
    fv = np.asarray(f(pts), dtype=float)
    fv = np.broadcast_to(fv, weight.shape)
    factor = math.exp(-shift)
    return float(np.sum(fv * weight)) * factor, float(np.sum(np.abs(fv) * weight)) * factor
