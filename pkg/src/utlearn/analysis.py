"""Contraction factors, convergence radii and recovery diagnostics.

Notation used in docstrings: ``M_k`` is ``Z*`` with row ``k`` zeroed and
every column outside the support of row ``k`` zeroed. The dominant
per-iteration contraction factor of the alternating scheme is
``max_k ||M_k||_2``, inflated by ``kappa(Z*)^4`` when the rows of ``Z*``
are not orthonormal and divided by ``||P||_2`` when the data are not
normalized. Only these first-order forms are computed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Real
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._tol import RATE_FLOOR
from .genmodel import GenerativeModel, epsilon_for_support_recovery
from .linops import as_matrix, condition_number, spectral_norm

__all__ = [
    "SpectralReport",
    "RadiusReport",
    "Alignment",
    "dk_submatrix",
    "max_dk_norm",
    "spectral_report",
    "q_relaxed",
    "corollary_s2_check",
    "c_constant",
    "radius_f",
    "eps2_radius",
    "convergence_radius",
    "align",
    "apply_alignment",
    "support_recovery",
    "empirical_rate",
    "TAYLOR_RADIUS",
]

#: the Taylor expansions behind the radius bound converge for eps < sqrt(2) - 1
TAYLOR_RADIUS = math.sqrt(2.0) - 1.0


# ---------------------------------------------------------------------------
# masked submatrices and contraction factors
# ---------------------------------------------------------------------------

def _check_row(zstar, k):
    n = zstar.shape[0]
    if not 0 <= k < n:
        raise IndexError(f"row index {k} out of range for {n} rows")


def dk_submatrix(zstar, k):
    """Dense ``n x N`` matrix ``M_k`` (``k`` is 0-based)."""
    zstar = as_matrix(zstar, "zstar")
    _check_row(zstar, k)
    m = np.where(zstar[k] != 0, zstar, 0.0)
    m[k] = 0.0
    return m


def _masked_block_norm(zstar, k, cols):
    block = zstar[:, cols]
    if block.shape[1] == 0:
        return 0.0
    block = block.copy()
    block[k] = 0.0
    if not np.any(block):
        return 0.0
    return spectral_norm(block)


def max_dk_norm(zstar):
    """``max_k ||M_k||_2`` computed on the compact ``n x |S(row k)|`` blocks."""
    zstar = as_matrix(zstar, "zstar")
    return max(_masked_block_norm(zstar, k, zstar[k] != 0) for k in range(zstar.shape[0]))


@dataclass(frozen=True)
class SpectralReport:
    kappa: float
    max_dk_norm: float
    q_thm1: float
    q_n: float
    q_limit: float
    a3_holds: bool
    a4_residual: float
    p_norm: float

    @property
    def q_thm2(self):
        """``kappa^4 * max_dk_norm``, the factor for normalized data."""
        if math.isinf(self.kappa):
            return math.inf
        return self.kappa**4 * self.max_dk_norm


def spectral_report(model: GenerativeModel):
    zstar = model.zstar
    n, s = model.n, model.s
    kappa = condition_number(zstar)
    dk = max_dk_norm(zstar)
    p_norm = spectral_norm(model.p)
    if math.isinf(kappa):
        q_n = math.inf
        a3 = False
    else:
        q_n = kappa**4 / p_norm * dk
        a3 = kappa**4 * dk < 1
    return SpectralReport(
        kappa=kappa,
        max_dk_norm=dk,
        q_thm1=dk,
        q_n=q_n,
        q_limit=math.sqrt((s - 1) / (n - 1)) if n > 1 else 0.0,
        a3_holds=bool(a3),
        a4_residual=float(np.linalg.norm(zstar @ zstar.T - np.eye(n))),
        p_norm=p_norm,
    )


def q_relaxed(zstar, z_t, kappa4):
    """Per-iteration factor ``kappa4 * max_k ||D_k Z* Dt_k||_2``.

    ``Dt_k`` keeps the columns where row ``k`` of ``z_t - zstar`` is nonzero.
    """
    zstar = as_matrix(zstar, "zstar")
    z_t = as_matrix(z_t, "z_t")
    if z_t.shape != zstar.shape:
        raise ValueError(f"dimension mismatch: zstar {zstar.shape}, z_t {z_t.shape}")
    diff = z_t - zstar
    worst = max(_masked_block_norm(zstar, k, diff[k] != 0) for k in range(zstar.shape[0]))
    return float(kappa4) * worst


def corollary_s2_check(zstar):
    """Closed-form check for codes with at most two nonzeros per column.

    Returns ``(holds, q)``: ``holds`` is true when every row is nonempty and
    no two rows share the same support; ``q`` is the largest norm of a row
    restricted to its support overlap with another row, which equals
    ``max_k ||M_k||_2`` because ``M_k M_k^T`` is diagonal here.
    """
    zstar = as_matrix(zstar, "zstar")
    n = zstar.shape[0]
    nz = zstar != 0
    counts = nz.sum(axis=0)
    if np.any(counts > 2):
        raise ValueError(f"a column has {int(counts.max())} > 2 nonzeros")

    nonempty = bool(np.all(nz.any(axis=1)))
    distinct = np.unique(nz, axis=0).shape[0] == n
    holds = nonempty and distinct

    pairs = np.flatnonzero(counts == 2)
    if pairs.size == 0:
        return holds, 0.0
    # argwhere on the transpose lists (column, row) pairs grouped by column
    rows = np.argwhere(nz[:, pairs].T)[:, 1].reshape(-1, 2)
    a, b = rows[:, 0], rows[:, 1]
    sq = np.zeros((n, n))
    np.add.at(sq, (a, b), zstar[b, pairs] ** 2)
    np.add.at(sq, (b, a), zstar[a, pairs] ** 2)
    return holds, float(math.sqrt(sq.max()))


# ---------------------------------------------------------------------------
# convergence radius
# ---------------------------------------------------------------------------

def c_constant(eps0):
    """Higher-order constant ``C(eps0)``; increases from about 5.005 to +inf."""
    if not 0 <= eps0 < TAYLOR_RADIUS:
        raise ValueError(f"eps0 must lie in [0, sqrt(2)-1), got {eps0}")
    root = 1 - 2 * eps0 - eps0 * eps0
    if root <= 0:
        # within rounding of the singular endpoint
        return math.inf
    return 2 + 9 * math.sqrt(2) / (8 * root**1.5) + math.sqrt(2) / (1 - eps0)


def radius_f(eps0, q):
    """``min((1 - q) / C(eps0), eps0)``."""
    return min((1 - q) / c_constant(eps0), eps0)


def eps2_radius(q, grid_step=1e-4, tol=1e-8):
    """Maximize :func:`radius_f` over ``[0, sqrt(2)-1)``.

    Returns ``(eps2, eps0_star, C(eps0_star))``. A grid scan brackets the
    crossing ``C(e) e = 1 - q`` and bisection refines it to ``tol``.
    """
    if not 0 <= q < 1:
        raise ValueError(f"no positive radius for q={q}; need 0 <= q < 1")
    grid = np.arange(0.0, TAYLOR_RADIUS, grid_step)
    vals = np.array([radius_f(e, q) for e in grid])
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[i + 1] if i + 1 < grid.size else 0.5 * (grid[i] + TAYLOR_RADIUS)

    def h(e):
        return c_constant(e) * e - (1 - q)

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if h(mid) < 0:
            lo = mid
        else:
            hi = mid
    best = lo if radius_f(lo, q) >= radius_f(hi, q) else hi
    return radius_f(best, q), best, c_constant(best)


@dataclass(frozen=True)
class RadiusReport:
    eps1: float
    eps2: float
    eps0_star: float
    c_at_eps0: float
    eps: float
    q: float
    kappa_capped: bool = False
    kappa_flag: bool = False


def convergence_radius(model: Optional[GenerativeModel], q):
    """Radius ``min(eps1, eps2)`` of the initialization ball.

    ``eps1`` is the support-recovery radius of ``model``; ``eps2`` maximizes
    :func:`radius_f` for the supplied contraction factor ``q``. When the
    model's codes are not row-orthonormal (``kappa > 1``) ``eps2`` is also
    capped at ``kappa^-2``, a sufficient condition for the inverse series,
    and ``kappa_flag`` is raised for ``kappa > 1.05``. With ``model=None``
    only ``eps2`` is computed and ``eps1`` is ``inf``.
    """
    eps2, eps0_star, c_at = eps2_radius(q)
    capped = False
    flag = False
    eps1 = math.inf
    if model is not None:
        eps1 = epsilon_for_support_recovery(model, 0.5)
        kappa = condition_number(model.zstar)
        flag = kappa > 1.05
        if kappa > 1 and kappa**-2 < eps2:
            eps2, capped = kappa**-2, True
    return RadiusReport(
        eps1=eps1,
        eps2=eps2,
        eps0_star=eps0_star,
        c_at_eps0=c_at,
        eps=min(eps1, eps2),
        q=float(q),
        kappa_capped=capped,
        kappa_flag=flag,
    )


# ---------------------------------------------------------------------------
# signed-permutation alignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Alignment:
    #: perm[j] is the row of W* matched by row j of W
    perm: np.ndarray
    signs: np.ndarray
    aligned_error: float


def apply_alignment(x, alignment):
    """Move row ``j`` of ``x`` to row ``perm[j]``, multiplied by ``signs[j]``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    out[alignment.perm] = alignment.signs[:, None] * x
    return out


def align(w, wstar):
    """Signed row permutation of ``w`` closest to ``wstar`` in Frobenius norm.

    Maximizes ``sum_j |<w_j, wstar_perm(j)>|`` by optimal assignment; with
    the sign of each matched inner product this is exactly the
    Frobenius-optimal signed permutation.
    """
    w = as_matrix(w, "w")
    wstar = as_matrix(wstar, "wstar")
    if w.shape != wstar.shape or w.shape[0] != w.shape[1]:
        raise ValueError(f"dimension mismatch: w {w.shape}, wstar {wstar.shape}")
    inner = w @ wstar.T
    _, perm = linear_sum_assignment(np.abs(inner), maximize=True)
    signs = np.where(inner[np.arange(len(perm)), perm] < 0, -1.0, 1.0)
    al = Alignment(perm=perm, signs=signs, aligned_error=0.0)
    err = float(np.linalg.norm(apply_alignment(w, al) - wstar))
    return Alignment(perm=perm, signs=signs, aligned_error=err)


def support_recovery(z, zstar, alignment=None):
    """Fraction of the entrywise support of ``zstar`` found in the aligned ``z``."""
    z = np.asarray(z, dtype=np.float64)
    zstar = np.asarray(zstar, dtype=np.float64)
    if z.shape != zstar.shape:
        raise ValueError(f"dimension mismatch: z {z.shape}, zstar {zstar.shape}")
    true_support = zstar != 0
    total = int(true_support.sum())
    if total == 0:
        raise ValueError("zstar is all zero; support recovery is undefined")
    found = z != 0
    if alignment is not None:
        moved = np.empty_like(found)
        moved[alignment.perm] = found
        found = moved
    return float(np.count_nonzero(found & true_support)) / total


# ---------------------------------------------------------------------------
# empirical convergence rate
# ---------------------------------------------------------------------------

def empirical_rate(trace, field="werr", floor=RATE_FLOOR):
    """Geometric mean of consecutive error ratios ``err(t+1) / err(t)``.

    The window opens at the first record with full support recovery (or at
    the first record when recovery is not tracked) and closes before the
    first error at or below ``floor``. ``trace`` may also be a plain
    sequence of errors.
    """
    if field not in ("werr", "zerr"):
        raise ValueError(f"field must be 'werr' or 'zerr', got {field!r}")
    trace = list(trace)
    if trace and isinstance(trace[0], Real):
        values = [float(x) for x in trace]
        start = 0
    else:
        values = [getattr(r, field) for r in trace]
        if any(v is None for v in values):
            raise ValueError(f"trace records lack {field!r}")
        recovered = [r.support_recovery for r in trace]
        if recovered and recovered[0] is not None:
            start = next((i for i, sr in enumerate(recovered) if sr == 1.0), len(values))
        else:
            start = 0
    window = []
    for v in values[start:]:
        if not v > floor:
            break
        window.append(v)
    if len(window) < 3:
        raise ValueError(
            f"need >= 3 usable records above {floor:.1e} after support recovery, got {len(window)}"
        )
    ratios = np.asarray(window[1:]) / np.asarray(window[:-1])
    return float(np.exp(np.mean(np.log(ratios))))

