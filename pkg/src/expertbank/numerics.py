"""Dense float64 primitives shared by every other module.

numpy backs the array plumbing (allocation, matmul, reductions); the
symmetric eigensolver is a cyclic Jacobi implementation kept in-tree so
the covariance-signature path is fully inspectable and deterministic.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SymmetryError",
    "ConvergenceError",
    "make_rng",
    "spawn_rng",
    "standard_normal",
    "matmul",
    "transpose",
    "mean_rows",
    "ensure_finite",
    "sym_eig",
    "clamp_spectrum",
]


class SymmetryError(ValueError):
    """Input matrix is not square or not symmetric within tolerance."""


class ConvergenceError(RuntimeError):
    """Eigensolver did not converge within the sweep cap."""


def make_rng(seed):
    """Deterministic generator for an integer seed (PCG64 under the hood)."""
    return np.random.default_rng(int(seed))


def spawn_rng(seed, *stream):
    """Generator for the sub-stream (seed, *stream).

    Distinct stream tags give statistically independent streams, so each
    consumer (per-task training, generation, routing) can be reseeded
    without coordinating draw counts with the others.
    """
    return np.random.default_rng([int(seed), *(int(s) for s in stream)])


def standard_normal(rng, n, d):
    """n x d matrix of iid N(0, 1) draws from `rng`."""
    if n < 1 or d < 1:
        raise ValueError(f"need positive sample shape, got ({n}, {d})")
    return rng.standard_normal((n, d))


def matmul(a, b):
    return np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)


def transpose(a):
    return np.asarray(a, dtype=np.float64).T


def mean_rows(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError(f"mean_rows needs a nonempty 2-d array, got shape {a.shape}")
    return a.mean(axis=0)


def ensure_finite(a, what="array"):
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite values")
    return a


def sym_eig(q, tol=1e-10, max_sweeps=64):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigvals, eigvecs): eigenvalues sorted descending, eigenvectors
    in the matching columns of an orthogonal matrix, so
    q = eigvecs @ diag(eigvals) @ eigvecs.T. Column signs are canonical
    (largest-magnitude entry nonnegative) so repeated runs and serialized
    stores compare bit-for-bit.
    """
    a = np.array(q, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SymmetryError(f"expected a square matrix, got shape {a.shape}")
    ensure_finite(a, "sym_eig input")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > max(tol, 1e-8) * scale:
        raise SymmetryError("matrix is not symmetric within tolerance")
    a = (a + a.T) / 2.0
    v = np.eye(n)
    norm = float(np.linalg.norm(a))
    if n == 1 or norm == 0.0:
        vals = np.diag(a).copy()
        order = np.argsort(-vals, kind="stable")
        return vals[order], v[:, order]

    upper = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        # summing the strict upper triangle directly avoids the cancellation
        # a full-norm-minus-diagonal formula hits near convergence
        off = float(np.sqrt(2.0 * np.sum(a[upper] ** 2)))
        if off <= tol * norm:
            break
        # Skipping pivots below norm*tol/(2n) still lets the sweep check
        # pass next round: sum of n(n-1) such squares stays under (tol*norm)^2.
        skip = tol * norm / (2.0 * n)
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if abs(apr) <= skip:
                    continue
                theta = (a[r, r] - a[p, p]) / (2.0 * apr)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J.T @ A @ J with the (p, r) plane rotation J.
                col_p = a[:, p].copy()
                col_r = a[:, r].copy()
                a[:, p] = col_p * c - col_r * s
                a[:, r] = col_p * s + col_r * c
                row_p = a[p, :].copy()
                row_r = a[r, :].copy()
                a[p, :] = row_p * c - row_r * s
                a[r, :] = row_p * s + row_r * c
                a[p, r] = 0.0
                a[r, p] = 0.0
                vec_p = v[:, p].copy()
                vec_r = v[:, r].copy()
                v[:, p] = vec_p * c - vec_r * s
                v[:, r] = vec_p * s + vec_r * c
    else:
        raise ConvergenceError(f"jacobi sweep cap reached ({max_sweeps} sweeps)")

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    v = v[:, order]
    flip = v[np.abs(v).argmax(axis=0), np.arange(n)] < 0.0
    v[:, flip] *= -1.0
    return vals, v


def clamp_spectrum(eigvals, tol=1e-8):
    """Floor eigenvalues at tol * lambda_max (absolute floor tol when the
    whole spectrum is below tol) so D^{-1/2} and D^{1/2} stay finite even
    for degenerate covariances."""
    vals = np.array(eigvals, dtype=np.float64)
    if vals.size == 0:
        return vals
    lam_max = float(vals.max())
    floor = tol * lam_max if lam_max > tol else tol
    return np.maximum(vals, floor)
