"""Independent brute-force reference computations.

Nothing here imports flockfp.  Integrals use Richardson-extrapolated dense
trapezoid sums on a fixed truncated interval, roots use plain bisection, the
2-d angular factor uses the modified Bessel function, and the Poincare gap
uses a Rayleigh-Ritz Legendre basis instead of finite differences.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import ive
from scipy.linalg import eigh


def phi(s, alpha):
    return alpha * s**4 / 4 + (1 - alpha) * s**2 / 2


def trap(f, a, b, n=200_000):
    """Trapezoid with one Richardson step (error O(h^4))."""
    def t(m):
        x = np.linspace(a, b, m + 1)
        y = f(x)
        return (b - a) / m * (y.sum() - 0.5 * (y[0] + y[-1]))
    return (4 * t(2 * n) - t(n)) / 3


def bisect(g, lo, hi, rtol=1e-15):
    glo = g(lo)
    assert glo * g(hi) < 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0:
            return mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo <= rtol * abs(mid):
            break
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------- angular factor


def simpson(f, a, b, n):
    x = np.linspace(a, b, n + 1)
    y = f(x)
    return (b - a) / (3 * n) * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def angular_h(s, d, deriv=0, n=20_000):
    if d == 1:
        return math.sinh(s) if deriv % 2 == 0 else math.cosh(s)
    return simpson(lambda t: np.cos(t) ** (deriv + 1) * np.sin(t) ** (d - 2) * np.exp(s * np.cos(t)),
                   0.0, math.pi, n)


# --------------------------------------------------------------------------- D* and r(D)


S_MAX = 6.0


def critical_ratio(d, alpha, D):
    emin = min(phi(1.0, alpha), 0.0) if alpha > 1 else 0.0
    w = lambda s: np.exp(-(phi(s, alpha) - emin) / D)
    num = trap(lambda s: (1 - s * s) * s ** (d + 1) * w(s), 0.0, S_MAX)
    den = trap(lambda s: s ** (d + 1) * w(s), 0.0, S_MAX)
    return num / den


def D_star(d, alpha):
    return bisect(lambda D: critical_ratio(d, alpha, D), 0.05, 2.0, rtol=1e-13)


def H_and_K(d, alpha, D, r):
    """H(r) = int (v1 - r) E, K(r) = int E with E = exp(-(phi(|v|) - r v1)/D).

    d = 1: direct line integral.  d = 2: polar form with 2 pi I_0, 2 pi I_1.
    """
    if d == 1:
        E = lambda v: np.exp(-(phi(np.abs(v), alpha) - r * v) / D)
        H = trap(lambda v: (v - r) * E(v), -S_MAX, S_MAX, 400_000)
        K = trap(E, -S_MAX, S_MAX, 400_000)
        return H, K
    if d == 2:
        # exp(r s cos/D) integrated over the circle: 2 pi I_0(rs/D), with v1 -> 2 pi s I_1
        def w(s, nu):
            x = r * s / D
            return 2 * math.pi * ive(nu, x) * np.exp(x - phi(s, alpha) / D)
        K = trap(lambda s: s * w(s, 0), 0.0, S_MAX)
        H = trap(lambda s: s * s * w(s, 1), 0.0, S_MAX) - r * K
        return H, K
    raise ValueError("oracle supports d in {1, 2}")


def r_of_D(d, alpha, D):
    g = lambda r: H_and_K(d, alpha, D, r)[0]
    lo, hi = 1e-3, 0.05
    while g(hi) > 0:
        lo, hi = hi, hi * 1.5
    return bisect(g, lo, hi, rtol=1e-13)


# --------------------------------------------------------------------------- 1-d Gibbs integrals


def gibbs_1d(alpha, D, u, f, L=S_MAX, n=400_000):
    """int f e^{-phi_u/D} dv in d=1 with phi_u = (v-u)^2/2 + alpha v^4/4 - alpha v^2/2."""
    e = lambda v: (v - u) ** 2 / 2 + alpha * v**4 / 4 - alpha * v**2 / 2
    return trap(lambda v: f(v) * np.exp(-e(v) / D), -L, L, n)


def log_Z_1d(alpha, D, u):
    return math.log(gibbs_1d(alpha, D, u, lambda v: np.ones_like(v)))


def mean_1d(alpha, D, u, f):
    return gibbs_1d(alpha, D, u, f) / gibbs_1d(alpha, D, u, lambda v: np.ones_like(v))


def poincare_1d(alpha, D, u, degree=60, L=4.0, nq=600):
    """Rayleigh-Ritz gap of int g'^2 G / Var_G(g) on Legendre polynomials in v/L."""
    x, wq = npleg.leggauss(nq)
    v = L * x
    e = (v - u) ** 2 / 2 + alpha * v**4 / 4 - alpha * v**2 / 2
    G = np.exp(-(e - e.min()) / D) * wq * L
    G /= G.sum()
    P = np.array([npleg.legval(x, np.eye(degree + 1)[k]) for k in range(1, degree + 1)])
    dP = np.array([npleg.legval(x, npleg.legder(np.eye(degree + 1)[k])) / L
                   for k in range(1, degree + 1)])
    P = P - (P @ G)[:, None]  # remove the G-mean
    A = (dP * G) @ dP.T
    B = (P * G) @ P.T
    # drop the numerically dependent directions of the basis before solving
    lam, Q = eigh(B)
    Q = Q[:, lam > 1e-14 * lam.max()] / np.sqrt(lam[lam > 1e-14 * lam.max()])
    return float(np.linalg.eigvalsh(Q.T @ A @ Q)[0])
