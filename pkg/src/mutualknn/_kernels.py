"""Hot loops behind neighbor ranking and vote resolution.

Every kernel exists twice: a numba ``@njit`` version and a plain numpy
version. Both produce bit-identical output (same floating point summation
order), so the choice only affects speed. Set ``MUTUALKNN_DISABLE_NUMBA=1``
before import to force the numpy path.
"""

import os
import warnings

import numpy as np

_FLAG = os.environ.get("MUTUALKNN_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled by MUTUALKNN_DISABLE_NUMBA")
    from numba import njit, prange

    # an old system TBB only makes numba fall back to another threading layer
    warnings.filterwarnings("ignore", message="The TBB threading layer requires")
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

# Sentinel rank for entries that must never be selected (e.g. self pairs).
NO_RANK = np.iinfo(np.int64).max // 4


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def pairwise_distances_numpy(a, b):
    # accumulate coordinate by coordinate so the numba loop matches bit for bit
    out = np.zeros((a.shape[0], b.shape[0]))
    for c in range(a.shape[1]):
        t = a[:, c][:, None] - b[:, c][None, :]
        out += t * t
    return np.sqrt(out)


def forward_ranks_numpy(dist):
    m, n = dist.shape
    order = np.argsort(dist, axis=1, kind="stable")
    ranks = np.empty((m, n), dtype=np.int64)
    rows = np.arange(m)[:, None]
    ranks[rows, order] = np.arange(n)[None, :]
    return ranks


def reverse_counts_numpy(sorted_rows, dq):
    """count[q, j] = #{entries of sorted_rows[j] <= dq[q, j]}."""
    m, n = dq.shape
    out = np.empty((m, n), dtype=np.int64)
    for j in range(n):
        out[:, j] = np.searchsorted(sorted_rows[j], dq[:, j], side="right")
    return out


def resolve_votes_numpy(tally, active, labels0, ranks):
    """Argmax over class tallies, ties settled by the nearest active voter.

    ``labels0`` are 0-based class indices of the training points. A query
    whose tally is all zero gets -1 so the caller can apply its own fallback.
    """
    m, J = tally.shape
    best = tally.max(axis=1)
    tied = tally == best[:, None]
    n_tied = tied.sum(axis=1)
    out = np.argmax(tally, axis=1).astype(np.int64)
    out[best <= 0] = -1
    need = (n_tied > 1) & (best > 0)
    if need.any():
        idx = np.nonzero(need)[0]
        cand = active[idx] & tied[idx][:, labels0]
        r = np.where(cand, ranks[idx], NO_RANK)
        j = np.argmin(r, axis=1)
        out[idx] = labels0[j]
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _pairwise_distances_nb(a, b):
        na, nb, d = a.shape[0], b.shape[0], a.shape[1]
        out = np.empty((na, nb))
        for i in prange(na):
            for j in range(nb):
                acc = 0.0
                for c in range(d):
                    t = a[i, c] - b[j, c]
                    acc += t * t
                out[i, j] = np.sqrt(acc)
        return out

    @njit(parallel=True, cache=True)
    def _forward_ranks_nb(dist):
        m, n = dist.shape
        ranks = np.empty((m, n), dtype=np.int64)
        for i in prange(m):
            order = np.argsort(dist[i], kind="mergesort")
            for r in range(n):
                ranks[i, order[r]] = r
        return ranks

    @njit(parallel=True, cache=True)
    def _reverse_counts_nb(sorted_rows, dq):
        m, n = dq.shape
        width = sorted_rows.shape[1]
        out = np.empty((m, n), dtype=np.int64)
        for q in prange(m):
            for j in range(n):
                v = dq[q, j]
                lo, hi = 0, width
                while lo < hi:
                    mid = (lo + hi) // 2
                    if sorted_rows[j, mid] <= v:
                        lo = mid + 1
                    else:
                        hi = mid
                out[q, j] = lo
        return out

    @njit(cache=True)
    def _resolve_votes_nb(tally, active, labels0, ranks):
        m, J = tally.shape
        n = labels0.shape[0]
        out = np.empty(m, dtype=np.int64)
        for q in range(m):
            best = tally[q, 0]
            arg = 0
            for c in range(1, J):
                if tally[q, c] > best:
                    best = tally[q, c]
                    arg = c
            if best <= 0:
                out[q] = -1
                continue
            n_tied = 0
            for c in range(J):
                if tally[q, c] == best:
                    n_tied += 1
            if n_tied == 1:
                out[q] = arg
                continue
            best_rank = NO_RANK
            pick = arg
            for j in range(n):
                if active[q, j] and tally[q, labels0[j]] == best and ranks[q, j] < best_rank:
                    best_rank = ranks[q, j]
                    pick = labels0[j]
            out[q] = pick
        return out


def _dispatch(nb_name, np_func):
    if HAVE_NUMBA:
        return globals()[nb_name]
    return np_func


pairwise_distances = _dispatch("_pairwise_distances_nb", pairwise_distances_numpy)
forward_ranks = _dispatch("_forward_ranks_nb", forward_ranks_numpy)
reverse_counts = _dispatch("_reverse_counts_nb", reverse_counts_numpy)
resolve_votes = _dispatch("_resolve_votes_nb", resolve_votes_numpy)
