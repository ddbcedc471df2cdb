"""Dense real matrices and the small set of decompositions the rest of the
package relies on.

Matrices are plain ``float64`` numpy arrays of ndim 2; :func:`as_matrix`
is the single validation gate.
"""
from typing import NamedTuple

import numpy as np

from ._tol import EPS
from .errors import NumericalError

__all__ = [
    "SvdFactors",
    "as_matrix",
    "svd",
    "spectral_norm",
    "condition_number",
    "frobenius_norm",
]


class SvdFactors(NamedTuple):
    u: np.ndarray  # (m, r), orthonormal columns
    sigma: np.ndarray  # (r,), nonincreasing, >= 0
    v: np.ndarray  # (n, r), orthonormal columns


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array, or raise ``ValueError``."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def svd(a):
    """Thin SVD ``a = u @ diag(sigma) @ v.T`` with ``r = min(m, n)``.

    No sign convention is imposed on the singular vectors.
    """
    a = as_matrix(a)
    try:
        u, sigma, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for a {a.shape} matrix") from exc
    return SvdFactors(u, sigma, vt.T)


def _singular_values(a):
    a = as_matrix(a)
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for a {a.shape} matrix") from exc


def spectral_norm(a):
    return float(_singular_values(a)[0])


def condition_number(a):
    """Ratio of the largest to the smallest singular value.

    Returns ``inf`` when the smallest singular value is zero at working
    precision, i.e. below ``sigma_max * max(m, n) * eps`` (the numpy rank
    tolerance).
    """
    sigma = _singular_values(a)
    smax, smin = sigma[0], sigma[-1]
    if smax == 0.0 or smin <= smax * max(np.shape(a)) * EPS:
        return float("inf")
    return float(smax / smin)


def frobenius_norm(a):
    return float(np.linalg.norm(as_matrix(a), "fro"))
