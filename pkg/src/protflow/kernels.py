"""Hot loops behind the sequence metrics: edit distance and assignment.

Two interchangeable backends compute identical results:

  * numba: scalar-loop kernels compiled with @njit (parallel pairwise fill),
    used by default when numba imports cleanly.
  * numpy: vectorized row-DP edit distance and a vectorized shortest
    augmenting path solver, used as a fallback.

Selection: set PROTFLOW_BACKEND=numpy to force the fallback, or
PROTFLOW_BACKEND=numba to require the compiled path (ImportError if numba is
missing). PROTFLOW_THREADS caps the numba thread pool. The neural-network
math elsewhere in the package is plain numpy/BLAS and is not affected.
"""

import os

import numpy as np

_INF = np.int64(1) << np.int64(62)

_env_backend = os.environ.get("PROTFLOW_BACKEND", "").strip().lower()
if _env_backend not in ("", "numba", "numpy"):
    raise ValueError(
        f"PROTFLOW_BACKEND must be 'numba' or 'numpy', got {_env_backend!r}"
    )

HAS_NUMBA = False
if _env_backend != "numpy":
    try:
        import numba
        from numba import njit, prange

        HAS_NUMBA = True
    except ImportError:
        if _env_backend == "numba":
            raise
        HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"

if HAS_NUMBA:
    _threads = os.environ.get("PROTFLOW_THREADS", "").strip()
    if _threads:
        _cap = max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(_cap)


def encode_sequences(seqs):
    """Pack strings into a (n, L_max) uint32 code matrix plus lengths.

    Codes are unicode code points, so any strings work, not just residue
    alphabets. Rows are zero-padded past their length.
    """
    n = len(seqs)
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    l_max = int(lengths.max()) if n else 0
    codes = np.zeros((n, max(l_max, 1)), dtype=np.uint32)
    for i, s in enumerate(seqs):
        if s:
            codes[i, : len(s)] = np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)
    return codes, lengths


# --- scalar implementations (compiled under numba) ----------------------------


def _lev_scalar_impl(a, b):
    la = a.shape[0]
    lb = b.shape[0]
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev = np.empty(lb + 1, dtype=np.int64)
    cur = np.empty(lb + 1, dtype=np.int64)
    for j in range(lb + 1):
        prev[j] = j
    for i in range(la):
        cur[0] = i + 1
        ai = a[i]
        for j in range(1, lb + 1):
            c = prev[j - 1] + (0 if b[j - 1] == ai else 1)
            if prev[j] + 1 < c:
                c = prev[j] + 1
            if cur[j - 1] + 1 < c:
                c = cur[j - 1] + 1
            cur[j] = c
        tmp = prev
        prev = cur
        cur = tmp
    return prev[lb]


def _assignment_scalar_impl(cost):
    """Shortest-augmenting-path assignment on an int64 cost matrix.

    Returns col4row (col4row[i] = column assigned to row i). All arithmetic
    is integer, so results are exact.
    """
    n = cost.shape[0]
    u = np.zeros(n, dtype=np.int64)
    v = np.zeros(n, dtype=np.int64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    shortest = np.empty(n, dtype=np.int64)
    path = np.empty(n, dtype=np.int64)
    sr = np.empty(n, dtype=np.bool_)
    sc = np.empty(n, dtype=np.bool_)

    for cur_row in range(n):
        for j in range(n):
            shortest[j] = _INF
            path[j] = -1
            sr[j] = False
            sc[j] = False
        min_val = np.int64(0)
        i = cur_row
        sink = -1
        while sink == -1:
            sr[i] = True
            lowest = _INF
            jlow = -1
            for j in range(n):
                if sc[j]:
                    continue
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    shortest[j] = r
                    path[j] = i
                if shortest[j] < lowest or (shortest[j] == lowest and row4col[j] == -1):
                    lowest = shortest[j]
                    jlow = j
            min_val = lowest
            sc[jlow] = True
            if row4col[jlow] == -1:
                sink = jlow
            else:
                i = row4col[jlow]
        u[cur_row] += min_val
        for k in range(n):
            if sr[k] and k != cur_row:
                u[k] += min_val - shortest[col4row[k]]
        for j in range(n):
            if sc[j]:
                v[j] -= min_val - shortest[j]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur_row:
                break
    return col4row


def _pairwise_scalar_impl(codes, lengths):
    n = codes.shape[0]
    out = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            d = _lev_scalar_impl(codes[i, : lengths[i]], codes[j, : lengths[j]])
            out[i, j] = d
            out[j, i] = d
    return out


def _cross_scalar_impl(codes_a, lengths_a, codes_b, lengths_b):
    na = codes_a.shape[0]
    nb = codes_b.shape[0]
    out = np.zeros((na, nb), dtype=np.int64)
    for i in range(na):
        for j in range(nb):
            out[i, j] = _lev_scalar_impl(
                codes_a[i, : lengths_a[i]], codes_b[j, : lengths_b[j]]
            )
    return out


if HAS_NUMBA:
    _lev_numba = njit(cache=True)(_lev_scalar_impl)
    _assignment_numba = njit(cache=True)(_assignment_scalar_impl)

    @njit(parallel=True, cache=True)
    def _pairwise_numba(codes, lengths):
        n = codes.shape[0]
        out = np.zeros((n, n), dtype=np.int64)
        for i in prange(n):
            for j in range(i + 1, n):
                d = _lev_numba(codes[i, : lengths[i]], codes[j, : lengths[j]])
                out[i, j] = d
                out[j, i] = d
        return out

    @njit(parallel=True, cache=True)
    def _cross_numba(codes_a, lengths_a, codes_b, lengths_b):
        na = codes_a.shape[0]
        nb = codes_b.shape[0]
        out = np.zeros((na, nb), dtype=np.int64)
        for i in prange(na):
            for j in range(nb):
                out[i, j] = _lev_numba(
                    codes_a[i, : lengths_a[i]], codes_b[j, : lengths_b[j]]
                )
        return out


# --- numpy fallback implementations -------------------------------------------


def _lev_numpy(a, b):
    la = a.shape[0]
    lb = b.shape[0]
    if la == 0:
        return int(lb)
    if lb == 0:
        return int(la)
    j = np.arange(lb + 1, dtype=np.int64)
    prev = j.copy()
    cand = np.empty(lb + 1, dtype=np.int64)
    for i in range(la):
        cand[0] = i + 1
        np.minimum(prev[1:] + 1, prev[:-1] + (b != a[i]), out=cand[1:])
        # close the left-to-right deletion recurrence in one accumulate pass:
        # cur[j] = min_{k<=j} cand[k] + (j - k)
        prev = np.minimum.accumulate(cand - j) + j
    return int(prev[lb])


def _pairwise_numpy(codes, lengths):
    n = codes.shape[0]
    out = np.zeros((n, n), dtype=np.int64)
    rows = [codes[i, : lengths[i]] for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d = _lev_numpy(rows[i], rows[j])
            out[i, j] = d
            out[j, i] = d
    return out


def _cross_numpy(codes_a, lengths_a, codes_b, lengths_b):
    na = codes_a.shape[0]
    nb = codes_b.shape[0]
    out = np.zeros((na, nb), dtype=np.int64)
    rows_a = [codes_a[i, : lengths_a[i]] for i in range(na)]
    rows_b = [codes_b[j, : lengths_b[j]] for j in range(nb)]
    for i in range(na):
        for j in range(nb):
            out[i, j] = _lev_numpy(rows_a[i], rows_b[j])
    return out


def _assignment_numpy(cost):
    """Same augmenting-path algorithm with the column scan vectorized."""
    n = cost.shape[0]
    u = np.zeros(n, dtype=np.int64)
    v = np.zeros(n, dtype=np.int64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)

    for cur_row in range(n):
        shortest = np.full(n, _INF, dtype=np.int64)
        path = np.full(n, -1, dtype=np.int64)
        sr = np.zeros(n, dtype=bool)
        sc = np.zeros(n, dtype=bool)
        min_val = np.int64(0)
        i = cur_row
        sink = -1
        while sink == -1:
            sr[i] = True
            open_cols = ~sc
            r = min_val + cost[i] - u[i] - v
            better = open_cols & (r < shortest)
            shortest[better] = r[better]
            path[better] = i
            masked = np.where(open_cols, shortest, _INF)
            # tie-break exactly like the scalar kernel's scan: last free
            # column among the minima, else the first minimum
            lowest = masked.min()
            tie = np.flatnonzero(masked == lowest)
            free = tie[row4col[tie] == -1]
            jlow = int(free[-1]) if free.size else int(tie[0])
            min_val = lowest
            sc[jlow] = True
            if row4col[jlow] == -1:
                sink = jlow
            else:
                i = int(row4col[jlow])
        u[cur_row] += min_val
        others = sr.copy()
        others[cur_row] = False
        idx = np.flatnonzero(others)
        if idx.size:
            u[idx] += min_val - shortest[col4row[idx]]
        v[sc] -= min_val - shortest[sc]
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, int(col4row[i])
            if i == cur_row:
                break
    return col4row


# --- public dispatchers --------------------------------------------------------


def levenshtein(a, b):
    """Edit distance (unit insert/delete/substitute costs) between two strings."""
    ca = np.frombuffer(a.encode("utf-32-le"), dtype=np.uint32) if a else np.zeros(0, np.uint32)
    cb = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32) if b else np.zeros(0, np.uint32)
    if BACKEND == "numba":
        return int(_lev_numba(ca, cb))
    return _lev_numpy(ca, cb)


def pairwise_edit_matrix(seqs):
    """Symmetric (n, n) int64 matrix of edit distances within one list."""
    n = len(seqs)
    if n == 0:
        return np.zeros((0, 0), dtype=np.int64)
    codes, lengths = encode_sequences(seqs)
    if BACKEND == "numba":
        return _pairwise_numba(codes, lengths)
    return _pairwise_numpy(codes, lengths)


def cross_edit_matrix(seqs_a, seqs_b):
    """(len(a), len(b)) int64 matrix of edit distances between two lists."""
    if len(seqs_a) == 0 or len(seqs_b) == 0:
        return np.zeros((len(seqs_a), len(seqs_b)), dtype=np.int64)
    codes_a, lengths_a = encode_sequences(seqs_a)
    codes_b, lengths_b = encode_sequences(seqs_b)
    if BACKEND == "numba":
        return _cross_numba(codes_a, lengths_a, codes_b, lengths_b)
    return _cross_numpy(codes_a, lengths_a, codes_b, lengths_b)


def assignment_min_cost(cost):
    """Minimum-cost perfect assignment on a square int64 cost matrix.

    Returns:
        (total, col4row): exact integer total cost and the assigned column
        for each row.
    """
    cost = np.asarray(cost)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost must be square, got shape {cost.shape}")
    if cost.shape[0] == 0:
        return 0, np.zeros(0, dtype=np.int64)
    if not np.issubdtype(cost.dtype, np.integer):
        raise ValueError("cost matrix must be integer-typed (exact arithmetic)")
    cost = cost.astype(np.int64)
    if BACKEND == "numba":
        col4row = _assignment_numba(cost)
    else:
        col4row = _assignment_numpy(cost)
    total = int(cost[np.arange(cost.shape[0]), col4row].sum())
    return total, col4row
