"""Finite-difference Dirichlet forms weighted by a Gibbs state on a grid.

For weights w (cell centres) and w_f (face midpoints) the form
    A[g] = sum_faces w_f (g_j - g_i)^2 h^(d-2)
approximates int |grad g|^2 G dv, and M = diag(w h^d) approximates the
L^2(G) mass.  Generalized eigenproblems A x = lambda M x are solved through the
symmetric matrix B = M^(-1/2) A M^(-1/2).
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import EigenNotConverged
from .grid import Grid
from .model import ModelParams, phi_u


def symmetric_dirichlet(grid: Grid, params: ModelParams, u):
    """Return (B, inv_sqrt_m) with B sparse symmetric and inv_sqrt_m = diag(M)^(-1/2) flattened.

    Weights are rescaled by their maximum; eigenvalues are unaffected.
    """
    d, n, h = grid.d, grid.n, grid.h
    u = np.atleast_1d(np.asarray(u, dtype=float))
    D, alpha = params.D, params.alpha
    logw = -phi_u(grid.points, u, alpha) / D
    shift = float(logw.max())
    inv_sqrt_m = (np.exp(-0.5 * (logw - shift)) / h ** (0.5 * d)).ravel()
    faces = -grid.L + h * np.arange(1, n)
    idx = np.arange(n**d).reshape(grid.shape)
    diag = np.zeros(grid.shape)
    rows, cols, vals = [], [], []
    for axis in range(d):
        coords = [grid.centers] * d
        coords[axis] = faces
        mesh = np.stack(np.meshgrid(*coords, indexing="ij"), axis=-1)
        wf = np.exp(-phi_u(mesh, u, alpha) / D - shift) * h ** (d - 2)
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        diag[tuple(lo)] += wf
        diag[tuple(hi)] += wf
        i0 = idx[tuple(lo)].ravel()
        i1 = idx[tuple(hi)].ravel()
        off = -wf.ravel() * inv_sqrt_m[i0] * inv_sqrt_m[i1]
        rows += [i0, i1]
        cols += [i1, i0]
        vals += [off, off]
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel() * inv_sqrt_m**2)
    B = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n**d, n**d))
    return B, inv_sqrt_m


def lowest_eigenvalues(B, k: int, d: int, sigma: float) -> np.ndarray:
    """The ``k`` smallest eigenvalues of the symmetric matrix ``B`` (all > sigma)."""
    if d == 1:
        dg = B.diagonal()
        off = B.diagonal(1)
        return eigh_tridiagonal(dg, off, eigvals_only=True, select="i",
                                select_range=(0, k - 1))
    try:
        ev = eigsh(B, k=k, sigma=sigma, which="LM", return_eigenvectors=False, tol=1e-12)
    except ArpackNoConvergence as exc:  # pragma: no cover - depends on ARPACK
        raise EigenNotConverged(str(exc)) from exc
    return np.sort(ev)
