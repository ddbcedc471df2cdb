"""Hot inner loops, with a numba path and a pure-numpy path.

The numba path is used when numba imports cleanly and the environment
variable ``UTLEARN_DISABLE_NUMBA`` is unset (or set to ``0``). Both paths
produce bit-identical output for identical input; the test-suite checks
this and ``benchmarks/bench_kernels.py`` times them against each other.
"""
import os

import numpy as np

_DISABLED = os.environ.get("UTLEARN_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

HAVE_NUMBA = njit is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


# ---------------------------------------------------------------------------
# column-wise hard thresholding
# ---------------------------------------------------------------------------

def threshold_columns_numpy(x, s):
    n, m = x.shape
    out = np.zeros_like(x)
    if s == 0 or m == 0:
        return out
    # stable sort of -|x| keeps the lowest index first among equal magnitudes
    idx = np.argsort(-np.abs(x), axis=0, kind="stable")[:s]
    cols = np.arange(m)
    out[idx, cols] = x[idx, cols]
    return out


def _threshold_columns_py(x, s):
    # one row-major sweep keeping a descending top-s buffer per column;
    # an entry only displaces strictly smaller ones, so the lowest index
    # wins a tie
    n, m = x.shape
    out = np.zeros_like(x)
    if s == 0:
        return out
    mags = np.full((s, m), -1.0)
    idx = np.full((s, m), -1, dtype=np.int64)
    for i in range(n):
        for j in range(m):
            a = abs(x[i, j])
            if a > mags[s - 1, j]:
                k = s - 1
                while k > 0 and a > mags[k - 1, j]:
                    mags[k, j] = mags[k - 1, j]
                    idx[k, j] = idx[k - 1, j]
                    k -= 1
                mags[k, j] = a
                idx[k, j] = i
    for j in range(m):
        for k in range(s):
            i = idx[k, j]
            if i >= 0:
                out[i, j] = x[i, j]
    return out


# ---------------------------------------------------------------------------
# uniform random supports by partial Fisher-Yates
# ---------------------------------------------------------------------------

def fisher_yates_numpy(u, n):
    """Supports of size ``u.shape[1]`` drawn from ``range(n)``, one per row of ``u``.

    ``u`` holds uniforms in [0, 1); draw ``i`` of a row picks a position in
    ``[i, n)`` and swaps it to the front.
    """
    m, s = u.shape
    perm = np.tile(np.arange(n, dtype=np.int64), (m, 1))
    rows = np.arange(m)
    for i in range(s):
        j = i + np.minimum((u[:, i] * (n - i)).astype(np.int64), n - i - 1)
        a = perm[rows, i].copy()
        perm[rows, i] = perm[rows, j]
        perm[rows, j] = a
    return perm[:, :s].copy()


def _fisher_yates_py(u, n):
    m, s = u.shape
    out = np.empty((m, s), dtype=np.int64)
    perm = np.empty(n, dtype=np.int64)
    for r in range(m):
        for i in range(n):
            perm[i] = i
        for i in range(s):
            j = i + min(np.int64(u[r, i] * (n - i)), n - i - 1)
            a = perm[i]
            perm[i] = perm[j]
            perm[j] = a
            out[r, i] = perm[i]
    return out


if HAVE_NUMBA:
    threshold_columns_numba = njit(cache=True)(_threshold_columns_py)
    fisher_yates_numba = njit(cache=True)(_fisher_yates_py)
else:  # pragma: no cover
    threshold_columns_numba = None
    fisher_yates_numba = None


def threshold_columns(x, s):
    """Keep the ``s`` largest-magnitude entries of every column of ``x``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return threshold_columns_numba(x, int(s))
    return threshold_columns_numpy(x, int(s))


def fisher_yates(u, n):
    u = np.ascontiguousarray(u, dtype=np.float64)
    if USE_NUMBA:
        return fisher_yates_numba(u, int(n))
    return fisher_yates_numpy(u, int(n))
