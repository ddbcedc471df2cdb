"""Alternating minimization for unitary sparsifying transform learning.

Each iteration keeps the ``s`` largest-magnitude entries of every column of
``W P`` (sparse coding) and then solves the orthogonal Procrustes problem
``min ||W P - Z||_F`` over unitary ``W`` through one SVD of ``P Z^T``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import _kernels
from ._tol import OBJ_TOL, UNITARY_TOL
from .errors import NumericalError
from .linops import as_matrix, svd

__all__ = [
    "StopReason",
    "LearnRecord",
    "LearnResult",
    "hard_threshold",
    "sparse_code_step",
    "operator_update",
    "objective",
    "learn",
]


class StopReason(enum.Enum):
    MAX_ITERATIONS = "MaxIterations"
    OBJECTIVE_TOLERANCE = "ObjectiveTolerance"
    STALLED = "Stalled"


@dataclass
class LearnRecord:
    t: int
    objective: float
    #: objective after the sparse coding step, before the transform update
    objective_coding: float
    werr: Optional[float] = None
    zerr: Optional[float] = None
    support_recovery: Optional[float] = None
    werr_raw: Optional[float] = None
    zerr_raw: Optional[float] = None
    stalled: bool = False


@dataclass
class LearnResult:
    w_final: np.ndarray
    z_final: np.ndarray
    trace: List[LearnRecord] = field(default_factory=list)
    iterations_run: int = 0
    stop_reason: StopReason = StopReason.MAX_ITERATIONS

    def column(self, name):
        return np.array([getattr(r, name) for r in self.trace], dtype=float)


def hard_threshold(v, s):
    """Zero all but the ``s`` largest-magnitude entries of ``v``.

    Ties go to the lowest index.

    >>> hard_threshold([3.0, -1.0, 0.0, 2.0], 2)
    array([3., 0., 0., 2.])
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    if not 0 <= s <= v.size:
        raise ValueError(f"need 0 <= s <= {v.size}, got s={s}")
    return _kernels.threshold_columns(v[:, None], s)[:, 0]


def sparse_code_step(w, p, s):
    w = as_matrix(w, "w")
    p = as_matrix(p, "p")
    n = w.shape[0]
    if w.shape != (n, n) or p.shape[0] != n:
        raise ValueError(f"dimension mismatch: w {w.shape}, p {p.shape}")
    if not 0 <= s <= n:
        raise ValueError(f"need 0 <= s <= {n}, got s={s}")
    return _kernels.threshold_columns(w @ p, s)


def _is_unitary(w):
    n = w.shape[0]
    return w.shape == (n, n) and np.linalg.norm(w.T @ w - np.eye(n)) <= UNITARY_TOL * n


def operator_update(p, z, w_prev=None):
    """Unitary minimizer of ``||W P - Z||_F``; returns ``(W, degenerate)``.

    ``W = V U^T`` where ``P Z^T = U S V^T``. When ``P Z^T`` is exactly zero
    every unitary matrix is a minimizer: ``w_prev`` is kept if it is
    unitary, otherwise the identity is returned. ``degenerate`` flags that
    case.
    """
    p = as_matrix(p, "p")
    z = as_matrix(z, "z")
    if p.shape != z.shape:
        raise ValueError(f"dimension mismatch: p {p.shape}, z {z.shape}")
    n = p.shape[0]
    cross = p @ z.T
    if not np.any(cross):
        if w_prev is not None and _is_unitary(np.asarray(w_prev, dtype=np.float64)):
            return np.array(w_prev, dtype=np.float64), True
        return np.eye(n), True
    u, _, v = svd(cross)
    return v @ u.T, False


def objective(w, z, p):
    w = np.asarray(w, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if w.shape[1] != p.shape[0] or z.shape != (w.shape[0], p.shape[1]):
        raise ValueError(f"dimension mismatch: w {w.shape}, z {z.shape}, p {p.shape}")
    r = w @ p - z
    return float(np.vdot(r, r))


def learn(
    p,
    s,
    w0,
    max_iter=200,
    obj_tol=OBJ_TOL,
    ground_truth=None,
    callback: Optional[Callable] = None,
):
    """Run the alternating scheme from ``w0`` for at most ``max_iter`` iterations.

    Stops early once the objective is ``<= obj_tol`` (pass ``obj_tol=0`` for
    a fixed iteration count) or after two consecutive degenerate transform
    updates. With ``ground_truth`` (a :class:`~utlearn.genmodel.GenerativeModel`)
    each record also carries transform / code errors after signed-permutation
    alignment, the unaligned errors, and the recovered support fraction.
    ``callback(t, w, z)`` is invoked after every iteration.
    """
    from .analysis import align, apply_alignment, support_recovery

    p = as_matrix(p, "p")
    w = as_matrix(w0, "w0").copy()
    n = p.shape[0]
    if w.shape != (n, n):
        raise ValueError(f"w0 must be {n} x {n}, got {w.shape}")
    if not 0 <= s <= n:
        raise ValueError(f"need 0 <= s <= {n}, got s={s}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if obj_tol < 0:
        raise ValueError(f"obj_tol must be >= 0, got {obj_tol}")
    if ground_truth is not None and ground_truth.p.shape != p.shape:
        raise ValueError("ground truth does not match the data shape")

    result = LearnResult(w_final=w, z_final=np.zeros_like(p))
    stalls = 0
    for t in range(1, max_iter + 1):
        z = _kernels.threshold_columns(w @ p, s)
        obj_coding = objective(w, z, p)
        w, degenerate = operator_update(p, z, w)
        obj = objective(w, z, p)
        if not (np.isfinite(obj) and np.isfinite(obj_coding) and np.all(np.isfinite(w))):
            raise NumericalError(f"non-finite iterate at iteration {t}")

        rec = LearnRecord(t=t, objective=obj, objective_coding=obj_coding, stalled=degenerate)
        if ground_truth is not None:
            zstar = ground_truth.zstar
            al = align(w, ground_truth.wstar)
            rec.werr = al.aligned_error
            rec.zerr = float(np.linalg.norm(apply_alignment(z, al) - zstar))
            rec.support_recovery = support_recovery(z, zstar, al)
            rec.werr_raw = float(np.linalg.norm(w - ground_truth.wstar))
            rec.zerr_raw = float(np.linalg.norm(z - zstar))
        result.trace.append(rec)
        result.w_final, result.z_final, result.iterations_run = w, z, t
        if callback is not None:
            callback(t, w, z)

        stalls = stalls + 1 if degenerate else 0
        if obj <= obj_tol:
            result.stop_reason = StopReason.OBJECTIVE_TOLERANCE
            break
        if stalls >= 2:
            result.stop_reason = StopReason.STALLED
            break
    return result
