"""Small neural-net primitives with hand-written forward/backward passes.

Everything operates on float64 numpy arrays; parameters live in ordered
dicts of named arrays so they can be flattened for gradient checks and
serialized by name. GELU uses the tanh approximation, which has a clean
analytic derivative.
"""

import math

import numpy as np

from .errors import Diverged

_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x):
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def gelu_grad(x):
    u = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(u)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)


def layernorm_forward(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis. Returns (y, cache) for the backward pass."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = gamma * xhat + beta
    return y, (xhat, inv, gamma)


def layernorm_backward(dy, cache):
    xhat, inv, gamma = cache
    d = xhat.shape[-1]
    dgamma = (dy * xhat).reshape(-1, d).sum(axis=0)
    dbeta = dy.reshape(-1, d).sum(axis=0)
    dxhat = dy * gamma
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits):
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy over rows plus its gradient w.r.t. logits.

    Args:
        logits: (n, k) float64.
        targets: (n,) int64 class ids.
    """
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = -logp[np.arange(n), targets].mean()
    dlogits = softmax(logits)
    dlogits[np.arange(n), targets] -= 1.0
    return loss, dlogits / n


def sinusoidal_table(length, dim):
    """Fixed sin/cos positional table, deterministic in (length, dim).

    Even columns carry sin, odd columns cos, geometric frequencies from 1
    down to 1/10000 across column pairs.
    """
    if dim % 2 != 0:
        raise ValueError(f"dim must be even, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / max(half, 1))
    ang = pos * freqs[None, :]
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(ang)
    table[:, 1::2] = np.cos(ang)
    return table


def time_features(t, dim, scale=1000.0):
    """Sinusoidal features of scalar times t in [0, 1], shape (len(t), dim)."""
    if dim % 2 != 0:
        raise ValueError(f"dim must be even, got {dim}")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64)) * scale
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / max(half, 1))
    ang = t[:, None] * freqs[None, :]
    out = np.zeros((t.shape[0], dim), dtype=np.float64)
    out[:, 0::2] = np.sin(ang)
    out[:, 1::2] = np.cos(ang)
    return out


def cosine_lr(step, total_steps, peak, lr_min, warmup, cycles=1):
    """Linear warmup to peak, then cosine decay to lr_min over `cycles` restarts."""
    if warmup > 0 and step < warmup:
        return peak * (step + 1) / warmup
    span = max(total_steps - warmup, 1)
    progress = min(max(step - warmup, 0) / span, 1.0)
    frac = (progress * cycles) % 1.0 if progress < 1.0 else 1.0
    return lr_min + 0.5 * (peak - lr_min) * (1.0 + math.cos(math.pi * frac))


def global_norm(grads):
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    return math.sqrt(total)


def clip_grads_(grads, max_norm):
    """Scale grads in place to cap the global L2 norm; returns the pre-clip norm."""
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


class AdamW:
    """Decoupled weight-decay Adam over a dict of named parameters."""

    def __init__(self, params, betas=(0.9, 0.98), eps=1e-6, weight_decay=0.0):
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads, lr):
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for k, p in params.items():
            g = grads[k]
            if not np.all(np.isfinite(g)):
                raise Diverged(f"non-finite gradient for {k}")
            if self.weight_decay > 0:
                p -= lr * self.weight_decay * p
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def flatten_params(params):
    """Concatenate a dict of arrays into one vector plus a layout for unflatten."""
    keys = list(params)
    vec = np.concatenate([params[k].ravel() for k in keys]) if keys else np.zeros(0)
    layout = [(k, params[k].shape) for k in keys]
    return vec, layout


def unflatten_params(vec, layout):
    out = {}
    pos = 0
    for k, shape in layout:
        n = int(np.prod(shape)) if shape else 1
        out[k] = vec[pos : pos + n].reshape(shape).copy()
        pos += n
    return out
