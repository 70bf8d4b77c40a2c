"""Small dense matrix helpers shared by the plant, learner and certificate code.

Matrices are plain 2-D float64 numpy arrays.
"""
from __future__ import annotations

import math

import numpy as np

#: Singular values below ``PINV_RTOL * sigma_max`` are treated as zero.
PINV_RTOL = 1e-10
#: Error vectors with a Euclidean norm at or below this are treated as zero.
ZERO_GUARD = 1e-12


def as_mat(m) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    return a


def mat_mul(a, b) -> np.ndarray:
    a, b = as_mat(a), as_mat(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def inf_norm(m) -> float:
    """Induced infinity norm: the largest absolute row sum."""
    m = as_mat(m)
    return float(np.abs(m).sum(axis=1).max())


def pinv(m, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    ``tol`` is an absolute singular-value cutoff; by default it is
    ``PINV_RTOL`` times the largest singular value. Inputs at subnormal
    scale have pseudoinverses beyond the float range and come back as inf.
    """
    m = as_mat(m)
    if not np.all(np.isfinite(m)):
        raise ValueError("pinv of a matrix with non-finite entries")
    if tol is not None and not tol > 0:
        raise ValueError("tol must be positive")
    scale = float(np.abs(m).max())
    if scale == 0.0:
        return np.zeros(m.T.shape)
    # work on m / scale so tiny (even subnormal) inputs cannot overflow 1/sigma
    u, sig, vt = np.linalg.svd(m / scale, full_matrices=False)
    cutoff = PINV_RTOL * sig[0] if tol is None else tol / scale
    inv = np.divide(1.0, sig, out=np.zeros_like(sig), where=sig > cutoff)
    return ((vt.T * inv) @ u.T) / scale


def vec_pinv(e) -> np.ndarray:
    """Pseudoinverse of a column vector, returned as a flat row ``e / |e|^2``."""
    e = np.asarray(e, dtype=float).ravel()
    nrm2 = float(e @ e)
    if math.sqrt(nrm2) <= ZERO_GUARD:
        return np.zeros_like(e)
    return e / nrm2
