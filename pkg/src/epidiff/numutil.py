"""Shared numerical utilities: RNG streams, guarded Cholesky, small-matrix helpers."""

from __future__ import annotations

import numpy as np

# Jitter ladder applied to a degenerate covariance before giving up,
# as multiples of trace/p (the mean eigenvalue scale).
_JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


def make_rng(seed_base: int, stream: int = 0) -> np.random.Generator:
    """Counter-based RNG stream: one independent Philox stream per index.

    Streams for distinct ``stream`` values never overlap, and a given
    (seed_base, stream) pair reproduces bitwise across runs and platforms.
    """
    ss = np.random.SeedSequence(entropy=int(seed_base), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def chol_psd(mat: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Lower-triangular square root of a symmetric PSD matrix.

    Escalates diagonal jitter (0, 1e-12, 1e-10, 1e-8 x trace/p) before
    failing, so mildly degenerate matrices (epidemic fade-out) still factor.
    Raises ``np.linalg.LinAlgError`` if the matrix is indefinite beyond the
    jitter budget.
    """
    a = np.asarray(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(a, a.T, atol=tol * (1.0 + np.abs(a).max(initial=0.0))):
        raise np.linalg.LinAlgError("matrix is not symmetric")
    p = a.shape[0]
    scale = max(np.trace(a) / p, 0.0)
    if scale == 0.0 and np.allclose(a, 0.0, atol=tol):
        return np.zeros_like(a)
    sym = 0.5 * (a + a.T)
    for jit in _JITTER_LADDER:
        try:
            return np.linalg.cholesky(sym + (jit * scale) * np.eye(p))
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(
        f"matrix indefinite beyond jitter budget (trace/p={scale:.3e})"
    )


def eigen_sqrt(mat: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Symmetric PSD square root via eigen-decomposition (alternative factor)."""
    a = 0.5 * (np.asarray(mat, dtype=float) + np.asarray(mat, dtype=float).T)
    w, v = np.linalg.eigh(a)
    scale = max(abs(w).max(initial=0.0), 1.0)
    if w.min(initial=0.0) < -tol * scale:
        raise np.linalg.LinAlgError("matrix indefinite beyond tolerance")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


# ---------------------------------------------------------------------------
# Batched 2x2 symmetric helpers. Arrays of shape (..., 2, 2); used by the
# contrast evaluation where thousands of tiny SPD solves dominate.
# ---------------------------------------------------------------------------

def spd2_logdet_and_solve(S: np.ndarray, r: np.ndarray, jitter_scale: float = 1e-12):
    """log det S_k and S_k^{-1} r_k for stacked symmetric 2x2 matrices.

    Returns (logdet (...,), quadratic form r^T S^{-1} r (...,)). Applies a
    relative diagonal jitter once if any determinant is non-positive; raises
    LinAlgError when that does not cure it.
    """
    a = S[..., 0, 0]
    b = S[..., 1, 1]
    c = S[..., 0, 1]
    det = a * b - c * c
    if np.any(det <= 0.0) or np.any(a <= 0.0):
        jit = jitter_scale * 0.5 * (a + b)
        a = a + jit
        b = b + jit
        det = a * b - c * c
        if np.any(det <= 0.0) or np.any(a <= 0.0):
            raise np.linalg.LinAlgError("non-PSD weight matrix beyond jitter")
    r1 = r[..., 0]
    r2 = r[..., 1]
    quad = (b * r1 * r1 - 2.0 * c * r1 * r2 + a * r2 * r2) / det
    return np.log(det), quad


def spd2_inv(S: np.ndarray, jitter_scale: float = 1e-12) -> np.ndarray:
    """Inverse of stacked symmetric 2x2 SPD matrices."""
    a = S[..., 0, 0]
    b = S[..., 1, 1]
    c = S[..., 0, 1]
    det = a * b - c * c
    if np.any(det <= 0.0) or np.any(a <= 0.0):
        jit = jitter_scale * 0.5 * (a + b)
        a = a + jit
        b = b + jit
        det = a * b - c * c
        if np.any(det <= 0.0):
            raise np.linalg.LinAlgError("non-PSD matrix beyond jitter")
    out = np.empty_like(S)
    out[..., 0, 0] = b / det
    out[..., 1, 1] = a / det
    out[..., 0, 1] = -c / det
    out[..., 1, 0] = -c / det
    return out


def spd_logdet_and_solve(S: np.ndarray, r: np.ndarray):
    """Generic-p counterpart of :func:`spd2_logdet_and_solve` (stacked)."""
    L = np.linalg.cholesky(S)
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    y = np.linalg.solve(L, r[..., None])
    quad = np.sum(y[..., 0] ** 2, axis=-1)
    return logdet, quad


def latin_hypercube(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Latin hypercube sample in [0,1]^dim: one point per stratum per axis."""
    u = rng.random((n, dim))
    out = np.empty((n, dim))
    for j in range(dim):
        perm = rng.permutation(n)
        out[:, j] = (perm + u[:, j]) / n
    return out
