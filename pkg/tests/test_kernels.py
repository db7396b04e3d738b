"""Edit-distance and assignment kernels: oracles, backends, env dispatch."""

import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from protflow import kernels
from protflow.kernels import (
    assignment_min_cost,
    cross_edit_matrix,
    encode_sequences,
    levenshtein,
    pairwise_edit_matrix,
)

ALPHA = "ACD"


def _lev_recursive(a, b):
    """Exhaustive recursion; exponential, only for tiny strings."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    cost = 0 if a[0] == b[0] else 1
    return min(
        _lev_recursive(a[1:], b) + 1,
        _lev_recursive(a, b[1:]) + 1,
        _lev_recursive(a[1:], b[1:]) + cost,
    )


def _all_strings(max_len):
    out = [""]
    for n in range(1, max_len + 1):
        out.extend("".join(p) for p in itertools.product(ALPHA, repeat=n))
    return out


def test_levenshtein_known_values():
    assert levenshtein("", "") == 0
    assert levenshtein("A", "") == 1
    assert levenshtein("KITTEN".replace("E", "E"), "KITTEN") == 0
    assert levenshtein("ACDE", "ACE") == 1
    assert levenshtein("AAAA", "CCCC") == 4


def test_levenshtein_matches_recursion_exhaustively():
    # every pair of strings of length <= 3 over a 3-letter alphabet, plus a
    # seeded sample of length-4/5 pairs (the full cross product is large)
    short = _all_strings(3)
    for a in short:
        for b in short:
            assert levenshtein(a, b) == _lev_recursive(a, b), (a, b)
    rng = np.random.default_rng(17)
    pool = _all_strings(5)
    for _ in range(300):
        a = pool[rng.integers(0, len(pool))]
        b = pool[rng.integers(0, len(pool))]
        assert levenshtein(a, b) == _lev_recursive(a, b), (a, b)


def test_levenshtein_properties_random():
    rng = np.random.default_rng(23)
    aa = "ACDEFGHIKLMNPQRSTVWY"
    for _ in range(100):
        a = "".join(aa[i] for i in rng.integers(0, 20, size=rng.integers(0, 12)))
        b = "".join(aa[i] for i in rng.integers(0, 20, size=rng.integers(0, 12)))
        d = levenshtein(a, b)
        assert d == levenshtein(b, a)
        assert d <= max(len(a), len(b))
        assert d >= abs(len(a) - len(b))
        assert (d == 0) == (a == b)


def test_pairwise_matrix_consistent_with_scalar():
    rng = np.random.default_rng(31)
    aa = "ACDEFGHIKLMNPQRSTVWY"
    seqs = ["".join(aa[i] for i in rng.integers(0, 20, size=rng.integers(1, 15)))
            for _ in range(12)]
    mat = pairwise_edit_matrix(seqs)
    assert mat.shape == (12, 12)
    assert np.array_equal(mat, mat.T)
    assert np.all(np.diag(mat) == 0)
    for i in range(12):
        for j in range(12):
            assert mat[i, j] == levenshtein(seqs[i], seqs[j])


def test_cross_matrix_consistent_with_scalar():
    rng = np.random.default_rng(37)
    aa = "ACDEFGHIKLMNPQRSTVWY"
    xs = ["".join(aa[i] for i in rng.integers(0, 20, size=rng.integers(1, 10)))
          for _ in range(5)]
    ys = ["".join(aa[i] for i in rng.integers(0, 20, size=rng.integers(1, 10)))
          for _ in range(7)]
    mat = cross_edit_matrix(xs, ys)
    assert mat.shape == (5, 7)
    for i in range(5):
        for j in range(7):
            assert mat[i, j] == levenshtein(xs[i], ys[j])


def test_encode_sequences_shapes():
    codes, lengths = encode_sequences(["AC", "ACDE", ""])
    assert codes.shape == (3, 4)
    assert lengths.tolist() == [2, 4, 0]


def _assignment_brute_force(cost):
    n = cost.shape[0]
    best = None
    for perm in itertools.permutations(range(n)):
        total = sum(int(cost[i, perm[i]]) for i in range(n))
        if best is None or total < best:
            best = total
    return best


def test_assignment_matches_brute_force():
    rng = np.random.default_rng(41)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        cost = rng.integers(0, 50, size=(n, n)).astype(np.int64)
        total, col4row = assignment_min_cost(cost)
        assert total == _assignment_brute_force(cost)
        # col4row is a permutation achieving the reported total
        assert sorted(col4row.tolist()) == list(range(n))
        assert sum(int(cost[i, col4row[i]]) for i in range(n)) == total


def test_assignment_identity_and_antidiagonal():
    cost = np.array([[0, 9, 9], [9, 0, 9], [9, 9, 0]], dtype=np.int64)
    total, col4row = assignment_min_cost(cost)
    assert total == 0
    assert col4row.tolist() == [0, 1, 2]


def _run_with_backend(backend, snippet):
    env = dict(os.environ, PROTFLOW_BACKEND=backend)
    return subprocess.run(
        [sys.executable, "-c", snippet], env=env, capture_output=True, text=True
    )


_BACKEND_SNIPPET = """
import numpy as np
from protflow.kernels import BACKEND, levenshtein, pairwise_edit_matrix, assignment_min_cost
rng = np.random.default_rng(99)
aa = "ACDEFGHIKLMNPQRSTVWY"
seqs = ["".join(aa[i] for i in rng.integers(0, 20, size=rng.integers(1, 12))) for _ in range(10)]
mat = pairwise_edit_matrix(seqs)
cost = rng.integers(0, 30, size=(6, 6)).astype(np.int64)
total, col4row = assignment_min_cost(cost)
print(BACKEND)
print(mat.tolist())
print(total, col4row.tolist())
"""


def test_backends_bitwise_identical():
    out_numpy = _run_with_backend("numpy", _BACKEND_SNIPPET)
    assert out_numpy.returncode == 0, out_numpy.stderr
    lines_numpy = out_numpy.stdout.strip().splitlines()
    assert lines_numpy[0] == "numpy"
    if not kernels.HAS_NUMBA:
        pytest.skip("numba not importable")
    out_numba = _run_with_backend("numba", _BACKEND_SNIPPET)
    assert out_numba.returncode == 0, out_numba.stderr
    lines_numba = out_numba.stdout.strip().splitlines()
    assert lines_numba[0] == "numba"
    assert lines_numpy[1:] == lines_numba[1:]


def test_invalid_backend_rejected():
    res = _run_with_backend("cuda", "import protflow.kernels")
    assert res.returncode != 0
    assert "PROTFLOW_BACKEND" in res.stderr


def test_threads_env_is_clamped():
    snippet = "import protflow.kernels as k; print(k.BACKEND)"
    res = subprocess.run(
        [sys.executable, "-c", snippet],
        env=dict(os.environ, PROTFLOW_THREADS="1"),
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
