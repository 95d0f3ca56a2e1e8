"""Dense matrix helpers and a deterministic thin SVD.

Every other module works on plain 2-D float64 ndarrays; the helpers here
add the validation and determinism guarantees the rest of the package
relies on (finite entries, fixed SVD sign convention).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteError(ValueError):
    """An operation received or produced NaN/Inf entries."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and coerce ``a`` to a 2-D, C-contiguous float64 array.

    Raises ValueError on wrong rank or empty dims, NonFiniteError on
    NaN/Inf entries.
    """
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{name} contains NaN or Inf entries")
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit dimension and finiteness checks."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("matrix product overflowed to non-finite values")
    return out


def frobenius_norm(a: np.ndarray) -> float:
    """sqrt of the sum of squared entries."""
    return float(np.sqrt(np.sum(np.asarray(a, dtype=np.float64) ** 2)))


def mean_abs_diff(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute entry-wise difference.

    Note: this is the MEAN over entries, not the entry sum; the weight
    drift statistic fed into the moment update is defined that way.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD of a b-by-m matrix: ``u @ diag(sigma) @ vt`` with r = min(b, m).

    u is b-by-r with orthonormal columns, sigma is non-increasing and
    non-negative, vt is r-by-m with orthonormal rows.
    """

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def rank_bound(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.vt


def thin_svd(a: np.ndarray) -> SvdFactors:
    """Thin SVD with a deterministic sign convention.

    The largest-magnitude entry of each left singular vector is made
    non-negative (the matching row of vt is flipped with it), so equal
    inputs always produce bit-identical factors.

    Raises NonFiniteError for NaN/Inf inputs and LinAlgError if the
    underlying iteration fails to converge.
    """
    a = as_matrix(a, "svd input")
    u, sigma, vt = np.linalg.svd(a, full_matrices=False)
    # Sign fix: pivot on the largest |entry| per u column.
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u = u * signs
    vt = vt * signs[:, None]
    return SvdFactors(u=np.ascontiguousarray(u), sigma=sigma, vt=np.ascontiguousarray(vt))
