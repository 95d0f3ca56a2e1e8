"""Closed-form ridge projection of one modality onto another.

For a batch f (b-by-n) and a conditioning batch g (b-by-m), the
regularized least-squares weights are

    W(lambda) = (g^T g + lambda I)^-1 g^T f        (m-by-n)

and the normalized output is the residual f - g W. Note the shape
convention: W maps g-features to f-features, so the residual always has
f's exact shape. Both evaluation paths below go through the thin SVD of
g rather than forming or inverting g^T g.
"""

from __future__ import annotations

import numpy as np

from .linalg import SvdFactors, as_matrix, thin_svd

MIN_BATCH = 2


def _check_batch(f: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = as_matrix(f, "f")
    g = as_matrix(g, "g")
    if f.shape[0] != g.shape[0]:
        raise ValueError(f"batch size mismatch: f has {f.shape[0]} rows, g has {g.shape[0]}")
    if f.shape[0] < MIN_BATCH:
        raise ValueError(f"need at least {MIN_BATCH} rows to fit a projection, got {f.shape[0]}")
    return f, g


def project_direct(
    f: np.ndarray, g: np.ndarray, lam: float, svd_g: SvdFactors | None = None
) -> np.ndarray:
    """W(lambda) as one factored matrix chain: V diag(s/(s^2+lam)) U^T f."""
    f, g = _check_batch(f, g)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    fac = svd_g if svd_g is not None else thin_svd(g)
    ratio = fac.sigma / (fac.sigma**2 + lam)
    return fac.vt.T @ (ratio[:, None] * (fac.u.T @ f))


def project_svd(
    f: np.ndarray, g: np.ndarray, lam: float, svd_g: SvdFactors | None = None
) -> np.ndarray:
    """W(lambda) accumulated triplet by triplet.

    Sums the rank-1 contributions (s_i/(s_i^2+lam)) v_i (u_i^T f); zero
    singular values contribute nothing, so rank-deficient g is fine.
    """
    f, g = _check_batch(f, g)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    fac = svd_g if svd_g is not None else thin_svd(g)
    w = np.zeros((g.shape[1], f.shape[1]))
    for i in range(fac.rank_bound):
        s = fac.sigma[i]
        if s == 0.0:
            continue
        w += (s / (s**2 + lam)) * np.outer(fac.vt[i], fac.u[:, i] @ f)
    return w


def residual(f: np.ndarray, g: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Normalized output f - g w; always f's exact shape."""
    f = as_matrix(f, "f")
    g = as_matrix(g, "g")
    w = as_matrix(w, "w")
    if g.shape[1] != w.shape[0] or w.shape[1] != f.shape[1] or f.shape[0] != g.shape[0]:
        raise ValueError(
            f"incompatible shapes: f {f.shape}, g {g.shape}, w {w.shape}"
        )
    return f - g @ w
