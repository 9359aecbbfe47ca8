"""Damped Newton on the 5-point system  L u + mu u - k u^p = 0  over the
interior nodes of the unit square, assembled from scratch (no package code)."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def laplacian_5pt(n):
    """(n-2)^2 interior unknowns of an n x n unit-square grid, ij ordering."""
    m = n - 2
    h = 1.0 / (n - 1)
    T = sp.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1])
    I = sp.identity(m)
    L = (sp.kron(T, I) + sp.kron(I, T)) / h**2
    x = np.linspace(0, 1, n)[1:-1]
    X, Y = np.meshgrid(x, x, indexing="ij")
    return L.tocsr(), X.ravel(), Y.ravel(), h


def oasis_ramp(X, Y, h, center=(0.5, 0.5), r=0.25, k1=1.0, ramp_cells=4):
    d = np.hypot(X - center[0], Y - center[1]) - r
    return k1 * np.minimum(1.0, np.maximum(d, 0.0) / (ramp_cells * h))


def newton(L, mu, k, p, u0, tol=1e-13, max_iter=200):
    u = np.array(u0, dtype=float)
    I = sp.identity(L.shape[0])

    def F(v):
        return L @ v + mu * v - k * np.abs(v) ** p

    r = F(u)
    for _ in range(max_iter):
        J = (L + mu * I - sp.diags(p * k * np.abs(u) ** (p - 1))).tocsc()
        du = spla.spsolve(J, -r)
        t = 1.0
        while t > 1e-8:
            cand = u + t * du
            rc = F(cand)
            if np.abs(rc).max() < (1 - 1e-4 * t) * np.abs(r).max() or np.abs(du).max() * t < tol * (1 + np.abs(u).max()):
                break
            t *= 0.5
        u, r = cand, rc
        if t * np.abs(du).max() < tol * (1 + np.abs(u).max()):
            break
    return u, float(np.abs(r).max())
