"""ODE integration of dx/dt = v(x, t) from t=1 (noise) to t=0 (data).

Internally integration runs in s = 1 - t so steps move forward; the field is
negated accordingly. Fixed-step Euler and Dormand-Prince 5(4) in fixed-grid
and adaptive modes are provided. NFE counts vector-field evaluations only.
The fixed-grid DP54 mode needs just the first six stages per step (the
5th-order weight of stage 7 is zero), so its NFE is exactly 6N.
"""

import math

import numpy as np

from .errors import NfeBudgetExceeded, NonFiniteState, StepUnderflow
from .seqio import detokenize

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_ERR_W = _B5 - _B4

_FIXED_METHODS = ("euler", "dopri5-fixed")


class SolverConfig:
    """Solver selection: method, fixed step count, adaptive tolerances."""

    __slots__ = ("method", "steps", "atol", "rtol", "max_nfe")

    def __init__(self, method="dopri5", steps=25, atol=1e-6, rtol=1e-6, max_nfe=100000):
        if method == "dopri5":
            method = "dopri5-fixed"
        if method not in ("euler", "dopri5-fixed", "dopri5-adaptive"):
            raise ValueError(f"unknown solver method {method!r}")
        self.method = method
        self.steps = int(steps)
        if method in _FIXED_METHODS and not 1 <= self.steps <= 100:
            raise ValueError(f"fixed-grid steps must be in [1, 100], got {steps}")
        if atol <= 0 or rtol <= 0:
            raise ValueError("atol and rtol must be > 0")
        self.atol = float(atol)
        self.rtol = float(rtol)
        self.max_nfe = int(max_nfe)
        if self.max_nfe < 1:
            raise ValueError("max_nfe must be >= 1")

    def to_dict(self):
        return {
            "method": self.method,
            "steps": self.steps,
            "atol": self.atol,
            "rtol": self.rtol,
            "max_nfe": self.max_nfe,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class SolveResult:
    __slots__ = ("x0", "nfe", "trajectory", "accepted", "rejected")

    def __init__(self, x0, nfe, trajectory=None, accepted=0, rejected=0):
        self.x0 = x0
        self.nfe = nfe
        self.trajectory = trajectory
        self.accepted = accepted
        self.rejected = rejected


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"non-finite state at step {step}")


def euler_solve(v, x1, n_steps, record_trajectory=False):
    """Fixed-step Euler from t=1 to t=0: x <- x - (1/N) * v(x, t)."""
    if n_steps < 1:
        raise ValueError("N must be >= 1")
    x = np.array(x1, dtype=np.float64)
    delta = 1.0 / n_steps
    traj = [(1.0, x.copy())] if record_trajectory else None
    for k in range(n_steps):
        t = 1.0 - k * delta
        x = x - delta * v(x, t)
        _check_finite(x, k)
        if record_trajectory:
            traj.append((1.0 - (k + 1) * delta, x.copy()))
    return SolveResult(x, n_steps, traj, accepted=n_steps)


def _dopri5_fixed(v, x1, n_steps, record_trajectory=False):
    """Uniform-grid DP54 using the six 5th-order stages; NFE = 6N exactly."""
    x = np.array(x1, dtype=np.float64)
    h = 1.0 / n_steps
    traj = [(1.0, x.copy())] if record_trajectory else None
    ks = [None] * 6
    for step in range(n_steps):
        s = step * h  # s = 1 - t
        for i in range(6):
            xi = x
            if i:
                acc = _A[i][0] * ks[0]
                for j in range(1, i):
                    acc = acc + _A[i][j] * ks[j]
                xi = x + h * acc
            t = 1.0 - (s + _C[i] * h)
            ks[i] = -v(xi, t)
        incr = _B5[0] * ks[0]
        for i in range(1, 6):
            incr = incr + _B5[i] * ks[i]
        x = x + h * incr
        _check_finite(x, step)
        if record_trajectory:
            traj.append((1.0 - (step + 1) * h, x.copy()))
    return SolveResult(x, 6 * n_steps, traj, accepted=n_steps)


def _dopri5_adaptive(v, x1, atol, rtol, max_nfe, record_trajectory=False):
    """Embedded 5(4) pair with PI step control and FSAL reuse.

    Error norm: RMS over coordinates of err/(atol + rtol*max(|x|, |x_new|)).
    Accept when the norm is <= 1. Step factor safety 0.9, exponents 0.7/5
    (proportional) and 0.4/5 (integral), clamped to [0.2, 5].
    """
    alpha = 0.7 / 5.0
    beta = 0.4 / 5.0
    safety = 0.9

    x = np.array(x1, dtype=np.float64)
    s = 0.0
    s_end = 1.0
    nfe = 0
    accepted = 0
    rejected = 0
    traj = [(1.0, x.copy())] if record_trajectory else None

    def field(s_val, x_val):
        nonlocal nfe
        nfe += 1
        if nfe > max_nfe:
            raise NfeBudgetExceeded(f"nfe exceeded budget {max_nfe}")
        return -v(x_val, 1.0 - s_val)

    k = [None] * 7
    k[0] = field(s, x)
    h = 0.1
    err_old = 1e-4
    while s < s_end:
        h = min(h, s_end - s)
        if h < 1e-10:
            raise StepUnderflow(f"step size {h:g} underflowed at s={s:g}")
        for i in range(1, 7):
            acc = _A[i][0] * k[0]
            for j in range(1, i):
                acc = acc + _A[i][j] * k[j]
            k[i] = field(s + _C[i] * h, x + h * acc)
        incr = _B5[0] * k[0]
        err_incr = _ERR_W[0] * k[0]
        for i in range(1, 7):
            incr = incr + _B5[i] * k[i]
            err_incr = err_incr + _ERR_W[i] * k[i]
        x_new = x + h * incr
        _check_finite(x_new, accepted + rejected)
        err_vec = h * err_incr
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = math.sqrt(float(((err_vec / scale) ** 2).mean()))
        if err <= 1.0:
            s += h
            x = x_new
            k[0] = k[6]  # FSAL
            accepted += 1
            if record_trajectory:
                traj.append((1.0 - s, x.copy()))
            if err == 0.0:
                factor = 5.0
            else:
                factor = safety * err ** (-alpha) * err_old**beta
            factor = min(max(factor, 0.2), 5.0)
            h *= factor
            err_old = max(err, 1e-4)
        else:
            rejected += 1
            factor = min(max(safety * err ** (-1.0 / 5.0), 0.2), 1.0)
            h *= factor
    return SolveResult(x, nfe, traj, accepted=accepted, rejected=rejected)


def dopri5_solve(v, x1, config, record_trajectory=False):
    if config.method == "dopri5-adaptive":
        return _dopri5_adaptive(
            v, x1, config.atol, config.rtol, config.max_nfe, record_trajectory
        )
    return _dopri5_fixed(v, x1, config.steps, record_trajectory)


def solve(v, x1, config, record_trajectory=False):
    """Integrate the field from noise (t=1) to data (t=0) per the config."""
    if config.method == "euler":
        return euler_solve(v, x1, config.steps, record_trajectory)
    return dopri5_solve(v, x1, config, record_trajectory)


def sample_batch(model, pipeline, length_dist, n, solver_config, rng):
    """Full sampling: noise -> ODE -> decompress -> unsmooth -> decode.

    Each sample draws its noise, its length, and solves on an independent
    RNG substream keyed by sample index, so results do not depend on batch
    order or size.

    Args:
        model: trained VectorFieldModel over (l_max, width) latents.
        pipeline: LatentPipeline providing decode-side parameters.
        length_dist: LengthDistribution for mask sampling.
        n: number of sequences, >= 1.
        solver_config: SolverConfig.
        rng: RngStream.

    Returns:
        (sequences, stats): list of n residue strings and a dict with
        per-sample NFE plus the mean.
    """
    from .flow import flow_forward

    if n < 1:
        raise ValueError("n must be >= 1")
    l_max = pipeline.l_max
    width = pipeline.width

    def field(x, t):
        return flow_forward(model, x[None], np.full(1, t))[0]

    seqs = []
    nfes = []
    for i in range(n):
        sub = rng.substream(f"sample{i}")
        eps = sub.substream("noise").normal((l_max, width))
        res = solve(field, eps, solver_config)
        length = length_dist.sample(sub.substream("length"))
        mask = np.zeros(l_max, dtype=bool)
        mask[: min(length, l_max)] = True
        ts = pipeline.latent_to_sequence(res.x0, mask)
        seqs.append(detokenize(ts))
        nfes.append(res.nfe)
    stats = {"nfes": nfes, "mean_nfe": float(np.mean(nfes)), "n": n}
    return seqs, stats
