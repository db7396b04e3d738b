"""Deterministic randomness and small linear-algebra helpers.

All randomness in the package flows from a single integer seed through
RngStream, a counter-based (Philox) stream with named substreams. Substream
keys are derived by hashing (root seed, path), so the draw order inside one
substream never perturbs any other substream — per-sample streams make
serial and batched generation produce identical values.
"""

import hashlib

import numpy as np

from .errors import NonFiniteValue, NotPSD, NotSymmetric, TooFewSamples


class RngStream:
    """Named, splittable random stream over a Philox counter-based generator.

    Args:
        seed: integer root seed.
        path: substream path, "" for the root. Children extend it with
            "/<name>"; the Philox key is sha256(seed, path), so substreams
            are independent of each other and of draw order.
    """

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed, path=""):
        self.seed = int(seed)
        self.path = path
        digest = hashlib.sha256(f"{self.seed}:{self.path}".encode("utf-8")).digest()
        key = np.frombuffer(digest[:32], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key[:2]))

    def substream(self, name):
        """Derive an independent child stream keyed by name."""
        return RngStream(self.seed, f"{self.path}/{name}")

    def normal(self, shape):
        return self._gen.standard_normal(size=shape, dtype=np.float64)

    def uniform(self, shape):
        return self._gen.random(size=shape, dtype=np.float64)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high=high, size=size, dtype=np.int64)

    def permutation(self, n):
        return self._gen.permutation(n)

    @property
    def generator(self):
        return self._gen


def gaussian(rng, rows, cols):
    """Draw a (rows, cols) float64 standard-normal matrix from an RngStream."""
    if rows <= 0 or cols <= 0:
        raise ValueError(f"dimensions must be positive, got ({rows}, {cols})")
    return rng.normal((rows, cols))


def mean_cov(x):
    """Sample mean and unbiased covariance of rows.

    Args:
        x: (n, d) array, n >= 2.

    Returns:
        (mean, cov): (d,) and symmetric (d, d) float64 arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected 2-D array, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise TooFewSamples(f"need at least 2 rows, got {n}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("non-finite entries in sample matrix")
    mu = x.mean(axis=0)
    xc = x - mu
    cov = (xc.T @ xc) / (n - 1)
    return mu, 0.5 * (cov + cov.T)


def psd_sqrt(s):
    """Symmetric PSD square root via an eigendecomposition.

    Small negative eigenvalues (round-off) are clamped to zero; genuinely
    negative spectra raise NotPSD. Thresholds scale with the largest
    eigenvalue magnitude so large covariances are not spuriously rejected.

    Returns:
        Symmetric (d, d) float64 R with R @ R ~= s.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NonFiniteValue("non-finite entries in matrix")
    scale = max(1.0, float(np.abs(s).max()))
    if float(np.abs(s - s.T).max()) > 1e-9 * scale:
        raise NotSymmetric(f"asymmetry {float(np.abs(s - s.T).max()):g} exceeds tolerance")
    s = 0.5 * (s + s.T)
    vals, vecs = np.linalg.eigh(s)
    lam_scale = max(1.0, float(np.abs(vals).max()))
    if float(vals.min()) < -1e-6 * lam_scale:
        raise NotPSD(f"eigenvalue {float(vals.min()):g} below tolerance")
    vals = np.clip(vals, 0.0, None)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (root + root.T)


def grad_check(fn, params, h=1e-5):
    """Compare an analytic gradient against central differences.

    Args:
        fn: params -> (value, grad) with grad shaped like params.
        params: 1-D float64 array of the point to check at.
        h: central-difference step.

    Returns:
        Max over coordinates of |num - ana| / max(|num|, |ana|, 1e-8).
    """
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1:
        raise ValueError("params must be a flat 1-D array")
    value, grad = fn(params)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise ValueError(f"grad shape {grad.shape} != params shape {params.shape}")
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise NonFiniteValue("non-finite value or gradient")
    worst = 0.0
    for i in range(params.size):
        p_hi = params.copy()
        p_lo = params.copy()
        p_hi[i] += h
        p_lo[i] -= h
        f_hi, _ = fn(p_hi)
        f_lo, _ = fn(p_lo)
        if not (np.isfinite(f_hi) and np.isfinite(f_lo)):
            raise NonFiniteValue(f"non-finite perturbed value at coordinate {i}")
        num = (f_hi - f_lo) / (2.0 * h)
        rel = abs(num - grad[i]) / max(abs(num), abs(grad[i]), 1e-8)
        worst = max(worst, rel)
    return worst
