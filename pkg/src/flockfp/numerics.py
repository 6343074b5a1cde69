"""Small numerical kernels shared by the solver and the diagnostics."""
from __future__ import annotations

import numpy as np

_SERIES_CUT = 1e-4


def bernoulli(x):
    """B(x) = x / (e^x - 1) with B(0) = 1, evaluated without overflow or cancellation."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < _SERIES_CUT
    xs = x[small]
    out[small] = 1.0 - 0.5 * xs + xs * xs / 12.0
    big = ~small
    xb = x[big]
    with np.errstate(over="ignore"):
        out[big] = xb / np.expm1(xb)
    # expm1 overflow: B(x) ~ x e^{-x} -> 0 for large x; B(-x) ~ x for large x
    out[big & (x > 700.0)] = 0.0
    return out


def entropy_density(f, g):
    """Cellwise f log(f/g) - f + g >= 0, accurate when f ~ g.

    Cells with f = 0 contribute g.  When g underflows the direct formula is used.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    out = np.empty(np.broadcast(f, g).shape)
    f, g = np.broadcast_to(f, out.shape), np.broadcast_to(g, out.shape)
    zero_f = f <= 0.0
    tiny_g = (g < 1e-280) & ~zero_f
    ok = ~zero_f & ~tiny_g
    fo, go = f[ok], g[ok]
    x = (fo - go) / go
    # g [(1 + x) log1p(x) - x], series near 0, logs of f and g when f << g
    xs = np.maximum(x, -0.5)
    val = np.where(np.abs(x) < _SERIES_CUT, x * x * (0.5 - x / 6.0 + x * x / 12.0),
                   (1.0 + xs) * np.log1p(xs) - xs)
    out[ok] = np.where(x < -0.5, fo * (np.log(fo) - np.log(go)) - fo + go, go * val)
    out[zero_f] = g[zero_f]
    ft, gt = f[tiny_g], np.maximum(g[tiny_g], 1e-300)
    out[tiny_g] = ft * (np.log(ft) - np.log(gt)) - ft + gt
    return out


def tridiagonal_solve(lower, diag, upper, rhs):
    """Solve a (batched, flattened) tridiagonal system with LAPACK dgtsv."""
    from scipy.linalg.lapack import dgtsv

    _, _, _, x, info = dgtsv(lower, diag, upper, rhs, overwrite_dl=0, overwrite_d=0,
                             overwrite_du=0, overwrite_b=0)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgtsv failed with info={info}")
    return x
