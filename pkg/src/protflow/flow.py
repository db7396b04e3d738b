"""Rectified flow matching: straight-line interpolants, the CFM objective,
the vector-field network, 1-RF training, and reflow.

Convention throughout: t=1 is the noise side, t=0 the data side. The
interpolant is x_t = t*x1 + (1-t)*x0 and the regression target is the
constant path velocity u = x1 - x0, so a perfectly-fit field is integrated
from noise to data by running time 1 -> 0.

The vector field is a stack of per-position residual MLP blocks over width
W: a sinusoidal embedding of t is linearly projected and added to each
block's input, and the input of block b (for b < B//2) is linearly projected
and added to the input of block B-1-b (long skips). A single-head
self-attention sublayer per block, plus a learned positional table, can be
switched on when positions must interact (e.g. jointly-modeled chains).
"""

import math

import numpy as np

from . import nn, ode
from .errors import Diverged, NonFiniteLoss, ShapeMismatch
from .numeric import RngStream


class VectorFieldConfig:
    """Shape and feature switches for the vector-field network.

    Args:
        depth: number of residual blocks B.
        width: per-position channel count W (the flow operates on (L, W)).
        hidden: MLP hidden width H (must be even only if used as time dim).
        attention: enable per-block single-head self-attention.
        seq_len: positional-table length; required when attention is on.
        time_dim: sinusoidal time-feature width (even); default max(8, W
            rounded up to even).
    """

    __slots__ = ("depth", "width", "hidden", "attention", "seq_len", "time_dim")

    def __init__(self, depth, width, hidden, attention=False, seq_len=None, time_dim=None):
        if depth < 1 or width < 1 or hidden < 1:
            raise ValueError("depth, width, hidden must be positive")
        if attention and not seq_len:
            raise ValueError("attention requires seq_len for the positional table")
        if time_dim is None:
            time_dim = max(8, width + (width % 2))
        if time_dim % 2 != 0:
            raise ValueError("time_dim must be even")
        self.depth = depth
        self.width = width
        self.hidden = hidden
        self.attention = bool(attention)
        self.seq_len = seq_len
        self.time_dim = time_dim

    def to_dict(self):
        return {
            "depth": self.depth,
            "width": self.width,
            "hidden": self.hidden,
            "attention": self.attention,
            "seq_len": self.seq_len,
            "time_dim": self.time_dim,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["depth"],
            d["width"],
            d["hidden"],
            attention=d.get("attention", False),
            seq_len=d.get("seq_len"),
            time_dim=d.get("time_dim"),
        )


class VectorFieldModel:
    """Parameter container; forward/backward live in module functions."""

    __slots__ = ("cfg", "params")

    def __init__(self, cfg, params):
        self.cfg = cfg
        self.params = params

    def clone(self):
        return VectorFieldModel(self.cfg, {k: v.copy() for k, v in self.params.items()})

    def n_params(self):
        return sum(int(v.size) for v in self.params.values())


def _skip_source(cfg, b):
    """Index j of the block whose input is projected into block b, or -1."""
    j = cfg.depth - 1 - b
    if 0 <= j < cfg.depth // 2 and j < b:
        return j
    return -1


def init_flow_model(cfg, rng):
    """Initialize so the network is the identity map: block outputs, skip
    projections, and attention outputs all start at zero, so v(x, t) = x."""
    sub = rng.substream("flow-init")
    p = {}
    if cfg.attention:
        p["pos"] = 0.02 * sub.substream("pos").normal((cfg.seq_len, cfg.width))
    for b in range(cfg.depth):
        bs = sub.substream(f"block{b}")
        p[f"block{b}.tw"] = bs.substream("tw").normal((cfg.time_dim, cfg.width)) / math.sqrt(cfg.time_dim)
        p[f"block{b}.tb"] = np.zeros(cfg.width)
        if cfg.attention:
            p[f"block{b}.wq"] = bs.substream("wq").normal((cfg.width, cfg.width)) / math.sqrt(cfg.width)
            p[f"block{b}.wk"] = bs.substream("wk").normal((cfg.width, cfg.width)) / math.sqrt(cfg.width)
            p[f"block{b}.wv"] = bs.substream("wv").normal((cfg.width, cfg.width)) / math.sqrt(cfg.width)
            p[f"block{b}.wo"] = np.zeros((cfg.width, cfg.width))
        p[f"block{b}.w1"] = bs.substream("w1").normal((cfg.width, cfg.hidden)) / math.sqrt(cfg.width)
        p[f"block{b}.b1"] = np.zeros(cfg.hidden)
        p[f"block{b}.w2"] = np.zeros((cfg.hidden, cfg.width))
        p[f"block{b}.b2"] = np.zeros(cfg.width)
    for j in range(cfg.depth // 2):
        if cfg.depth - 1 - j != j:
            p[f"skip{j}.w"] = np.zeros((cfg.width, cfg.width))
    return VectorFieldModel(cfg, p)


def _softmax_lastaxis(x):
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def flow_forward(model, x, t, need_cache=False):
    """Evaluate v(x, t).

    Args:
        x: (n, L, W) states.
        t: scalar or (n,) times.
        need_cache: also return intermediates for flow_backward.

    Returns:
        v of shape (n, L, W), or (v, cache) when need_cache.
    """
    cfg = model.cfg
    p = model.params
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != cfg.width:
        raise ShapeMismatch(f"expected (n, L, {cfg.width}), got {x.shape}")
    n, length, w = x.shape
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    temb = nn.time_features(t, cfg.time_dim)

    stream = x
    if cfg.attention:
        if length != cfg.seq_len:
            raise ShapeMismatch(f"attention model fixed to L={cfg.seq_len}, got {length}")
        stream = stream + p["pos"][None]
    inputs = []
    caches = []
    inv_sqrt_w = 1.0 / math.sqrt(w)
    for b in range(cfg.depth):
        j = _skip_source(cfg, b)
        x_in = stream + inputs[j] @ p[f"skip{j}.w"] if j >= 0 else stream
        inputs.append(x_in)
        tb = temb @ p[f"block{b}.tw"] + p[f"block{b}.tb"]
        u = x_in + tb[:, None, :]
        if cfg.attention:
            q = u @ p[f"block{b}.wq"]
            k = u @ p[f"block{b}.wk"]
            vv = u @ p[f"block{b}.wv"]
            scores = (q @ k.transpose(0, 2, 1)) * inv_sqrt_w
            att = _softmax_lastaxis(scores)
            m = att @ vv
            u2 = u + m @ p[f"block{b}.wo"]
        else:
            q = k = vv = att = m = None
            u2 = u
        a = u2 @ p[f"block{b}.w1"] + p[f"block{b}.b1"]
        z = nn.gelu(a)
        delta = z @ p[f"block{b}.w2"] + p[f"block{b}.b2"]
        stream = x_in + delta
        if need_cache:
            caches.append((u, q, k, vv, att, m, u2, a, z))
    if need_cache:
        return stream, (x, temb, inputs, caches)
    return stream


def flow_backward(model, cache, dv):
    """Gradients of a scalar loss w.r.t. all parameters, given dL/dv.

    Returns a dict keyed like model.params.
    """
    cfg = model.cfg
    p = model.params
    x, temb, inputs, caches = cache
    n, length, w = x.shape
    inv_sqrt_w = 1.0 / math.sqrt(w)
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    d_inputs_extra = [None] * cfg.depth

    def flat(arr):
        return arr.reshape(-1, arr.shape[-1])

    d_stream = dv
    for b in reversed(range(cfg.depth)):
        u, q, k, vv, att, m, u2, a, z = caches[b]
        # stream_out = x_in + delta
        d_delta = d_stream
        grads[f"block{b}.w2"] += flat(z).T @ flat(d_delta)
        grads[f"block{b}.b2"] += flat(d_delta).sum(axis=0)
        d_z = d_delta @ p[f"block{b}.w2"].T
        d_a = d_z * nn.gelu_grad(a)
        grads[f"block{b}.w1"] += flat(u2).T @ flat(d_a)
        grads[f"block{b}.b1"] += flat(d_a).sum(axis=0)
        d_u2 = d_a @ p[f"block{b}.w1"].T
        if cfg.attention:
            d_u = d_u2.copy()
            grads[f"block{b}.wo"] += flat(m).T @ flat(d_u2)
            d_m = d_u2 @ p[f"block{b}.wo"].T
            d_att = d_m @ vv.transpose(0, 2, 1)
            d_vv = att.transpose(0, 2, 1) @ d_m
            d_scores = att * (d_att - (d_att * att).sum(axis=-1, keepdims=True))
            d_q = (d_scores @ k) * inv_sqrt_w
            d_k = (d_scores.transpose(0, 2, 1) @ q) * inv_sqrt_w
            grads[f"block{b}.wq"] += flat(u).T @ flat(d_q)
            grads[f"block{b}.wk"] += flat(u).T @ flat(d_k)
            grads[f"block{b}.wv"] += flat(u).T @ flat(d_vv)
            d_u += d_q @ p[f"block{b}.wq"].T
            d_u += d_k @ p[f"block{b}.wk"].T
            d_u += d_vv @ p[f"block{b}.wv"].T
        else:
            d_u = d_u2
        # u = x_in + broadcast time projection
        d_tb = d_u.sum(axis=1)
        grads[f"block{b}.tw"] += temb.T @ d_tb
        grads[f"block{b}.tb"] += d_tb.sum(axis=0)
        d_x_in = d_stream + d_u
        if d_inputs_extra[b] is not None:
            d_x_in = d_x_in + d_inputs_extra[b]
        j = _skip_source(cfg, b)
        if j >= 0:
            grads[f"skip{j}.w"] += flat(inputs[j]).T @ flat(d_x_in)
            extra = d_x_in @ p[f"skip{j}.w"].T
            d_inputs_extra[j] = extra if d_inputs_extra[j] is None else d_inputs_extra[j] + extra
        d_stream = d_x_in
    if cfg.attention:
        grads["pos"] += d_stream.sum(axis=0)
    return grads


# --- interpolant and objective --------------------------------------------------


def rf_interpolate(x0, x1, t):
    """Straight-line interpolant x_t = t*x1 + (1-t)*x0; exact at t in {0, 1}."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeMismatch(f"x0 {x0.shape} vs x1 {x1.shape}")
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 1:
        t = t.reshape((-1,) + (1,) * (x0.ndim - 1))
    return t * x1 + (1.0 - t) * x0


def rf_target(x0, x1):
    """Constant path velocity u = x1 - x0 (independent of t)."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeMismatch(f"x0 {x0.shape} vs x1 {x1.shape}")
    return x1 - x0


def cfm_loss(model, x0, x1, t):
    """Conditional flow-matching loss and its parameter gradients.

    Loss is the mean over every scalar of (v(x_t, t) - u)^2, which keeps
    thresholds independent of batch shape.

    Returns:
        (loss, grads dict).
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("t values must lie in [0, 1]")
    x_t = rf_interpolate(x0, x1, t)
    u = rf_target(x0, x1)
    v, cache = flow_forward(model, x_t, t, need_cache=True)
    diff = v - u
    loss = float((diff**2).mean())
    if not np.isfinite(loss):
        raise NonFiniteLoss("CFM loss is non-finite")
    dv = (2.0 / diff.size) * diff
    return loss, flow_backward(model, cache, dv)


# --- training loops --------------------------------------------------------------


class FlowTrainConfig:
    """Optimization settings for 1-RF training and reflow fine-tuning."""

    __slots__ = (
        "steps",
        "batch",
        "lr",
        "lr_min",
        "warmup",
        "clip",
        "seed",
        "weight_decay",
        "betas",
        "ema_decay",
    )

    def __init__(
        self,
        steps,
        batch,
        lr=1e-3,
        lr_min=2e-4,
        warmup=100,
        clip=1.0,
        seed=0,
        weight_decay=0.01,
        betas=(0.9, 0.98),
        ema_decay=0.0,
    ):
        if steps < 0:
            raise ValueError("steps must be >= 0")
        if batch < 1:
            raise ValueError("batch must be >= 1")
        if clip <= 0:
            raise ValueError("clip norm must be > 0")
        self.steps = steps
        self.batch = batch
        self.lr = lr
        self.lr_min = lr_min
        self.warmup = warmup
        self.clip = clip
        self.seed = seed
        self.weight_decay = weight_decay
        self.betas = betas
        self.ema_decay = ema_decay


def _train(model, config, draw_batch, stream_name):
    """Shared optimizer loop; draw_batch(sub, step) -> (x0, x1, t)."""
    params = model.params
    opt = nn.AdamW(params, betas=config.betas, eps=1e-6, weight_decay=config.weight_decay)
    root = RngStream(config.seed).substream(stream_name)
    trace = []
    ema = None
    if config.ema_decay > 0:
        ema = {k: v.copy() for k, v in params.items()}
    for step in range(config.steps):
        sub = root.substream(f"step{step}")
        x0, x1, t = draw_batch(sub, step)
        loss, grads = cfm_loss(model, x0, x1, t)
        if not np.isfinite(loss):
            raise Diverged(f"loss non-finite at step {step}")
        grad_norm = nn.clip_grads_(grads, config.clip)
        lr = nn.cosine_lr(step, config.steps, config.lr, config.lr_min, config.warmup)
        opt.step(params, grads, lr)
        if ema is not None:
            for key, val in params.items():
                ema[key] += (1.0 - config.ema_decay) * (val - ema[key])
        trace.append((step, loss, lr, grad_norm))
    return model, trace, ema


def train_rf(dataset, config, model):
    """1-RF training: x0 from data, x1 ~ N(0, I), t ~ U(0, 1) per step.

    Args:
        dataset: (N, L, W) array of smoothed, compressed latents.
        config: FlowTrainConfig.
        model: VectorFieldModel (modified in place).

    Returns:
        (model, trace) with trace rows (step, loss, lr, grad_norm).
    """
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.ndim != 3 or dataset.shape[0] == 0:
        raise ValueError(f"dataset must be nonempty (N, L, W), got {dataset.shape}")
    n = dataset.shape[0]
    shape = dataset.shape[1:]

    def draw(sub, step):
        idx = sub.substream("idx").integers(0, n, size=config.batch)
        x1 = sub.substream("noise").normal((config.batch,) + shape)
        t = sub.substream("t").uniform(config.batch)
        return dataset[idx], x1, t

    model, trace, ema = _train(model, config, draw, "rf-train")
    if ema is not None:
        for key in model.params:
            model.params[key] = ema[key]
    return model, trace


class ReflowCoupling:
    """Noise/data endpoint pairs produced by integrating a trained model."""

    __slots__ = ("z0", "z1", "nfe", "solver")

    def __init__(self, z0, z1, nfe, solver):
        self.z0 = np.asarray(z0, dtype=np.float64)
        self.z1 = np.asarray(z1, dtype=np.float64)
        if self.z0.shape != self.z1.shape:
            raise ShapeMismatch(f"z0 {self.z0.shape} vs z1 {self.z1.shape}")
        self.nfe = np.asarray(nfe, dtype=np.int64)
        self.solver = solver

    def __len__(self):
        return self.z0.shape[0]

    def __getitem__(self, i):
        return self.z0[i], self.z1[i]


def reflow_pairs(model, solver_config, m, rng):
    """Generate M coupling pairs: z1 ~ N(0, I), z0 = ODE endpoint from z1.

    Each pair is solved independently on its own RNG substream, so a fresh
    re-solve of any single pair reproduces it bitwise (fixed-step solvers).
    """
    cfg = model.cfg
    length = cfg.seq_len if cfg.attention else 1
    z0s = []
    z1s = []
    nfes = []

    def field(x, t):
        return flow_forward(model, x[None], np.full(1, t))[0]

    for i in range(m):
        z1 = rng.substream(f"pair{i}").normal((length, cfg.width))
        res = ode.solve(field, z1, solver_config)
        z0s.append(res.x0)
        z1s.append(z1)
        nfes.append(res.nfe)
    shape = (m, length, cfg.width) if m else (0, length, cfg.width)
    return ReflowCoupling(
        np.array(z0s).reshape(shape), np.array(z1s).reshape(shape), nfes, solver_config
    )


def train_reflow(pairs, config, model):
    """Fine-tune on deterministic couplings: (x0, x1) drawn jointly from pairs."""
    if len(pairs) == 0:
        raise ValueError("empty coupling set")
    z0, z1 = pairs.z0, pairs.z1
    n = z0.shape[0]

    def draw(sub, step):
        idx = sub.substream("idx").integers(0, n, size=config.batch)
        t = sub.substream("t").uniform(config.batch)
        return z0[idx], z1[idx], t

    model, trace, ema = _train(model, config, draw, "reflow-train")
    if ema is not None:
        for key in model.params:
            model.params[key] = ema[key]
    return model, trace


def straightness(model, pairs, n_t):
    """Mean squared deviation per coordinate between the model field and the
    straight-line velocity, over a uniform t-grid and all pairs. 0 means the
    learned paths are exactly straight on these couplings."""
    if len(pairs) == 0:
        raise ValueError("empty coupling set")
    if n_t < 2:
        raise ValueError("n_t must be >= 2")
    z0, z1 = pairs.z0, pairs.z1
    u = z1 - z0
    total = 0.0
    for t in np.linspace(0.0, 1.0, n_t):
        z_t = rf_interpolate(z0, z1, float(t))
        v = flow_forward(model, z_t, np.full(z0.shape[0], t))
        total += float(((u - v) ** 2).mean())
    return total / n_t
