"""QPNet forward and backward passes in numpy.

Shapes use B (batch), T (samples), R (residual channels), K (skip channels),
A (conditioning dims). Every block sees its input ``h`` at the current sample
and at ``t - d[t]`` (zero before the start), adds the conditioning
projection, and passes the pair of pre-activations through the gated unit.
The gated output feeds a residual 1x1 (added to ``h``) and a skip 1x1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dilation import NetConfig
from .errors import ShapeError

N_OUT = 256


def sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def gated_unit(a_f, a_g):
    """tanh(a_f) * sigmoid(a_g), elementwise."""
    return np.tanh(a_f) * sigmoid(a_g)


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# Parameters

def param_shapes(config: NetConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Trainable arrays in declaration order (this is also the checkpoint order)."""
    R, K, A = config.residual_channels, config.skip_channels, config.aux_dim
    shapes: list[tuple[str, tuple[int, ...]]] = [("causal.w", (R, 2)), ("causal.b", (R,))]
    for i in range(config.n_blocks):
        p = f"block{i}."
        shapes += [
            (p + "Wc_f", (R, R)), (p + "Wp_f", (R, R)), (p + "Wc_g", (R, R)), (p + "Wp_g", (R, R)),
            (p + "V_f", (R, A)), (p + "V_g", (R, A)), (p + "b_f", (R,)), (p + "b_g", (R,)),
            (p + "R", (R, R)), (p + "b_r", (R,)), (p + "S", (K, R)), (p + "b_s", (K,)),
        ]
    shapes += [("head.W1", (K, K)), ("head.b1", (K,)), ("head.W2", (N_OUT, K)), ("head.b2", (N_OUT,))]
    return shapes


def param_count(config: NetConfig) -> int:
    return sum(int(np.prod(s)) for _, s in param_shapes(config))


@dataclass
class ModelParams:
    """All trainable arrays plus fixed conditioning normalization."""

    config: NetConfig
    arrays: dict[str, np.ndarray]
    cond_mean: np.ndarray = field(default=None)  # type: ignore[assignment]
    cond_std: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        dtype = self.dtype
        A = self.config.aux_dim
        if self.cond_mean is None:
            self.cond_mean = np.zeros(A, dtype=dtype)
        if self.cond_std is None:
            self.cond_std = np.ones(A, dtype=dtype)
        expected = param_shapes(self.config)
        if [n for n, _ in expected] != list(self.arrays):
            raise ShapeError("parameter names do not match the configuration")
        for name, shape in expected:
            if self.arrays[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {self.arrays[name].shape}")

    @property
    def dtype(self):
        return next(iter(self.arrays.values())).dtype

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def names(self) -> list[str]:
        return list(self.arrays)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.arrays.items()},
                           self.cond_mean.astype(dtype), self.cond_std.astype(dtype))

    def copy(self) -> "ModelParams":
        return self.astype(self.dtype)

    def count(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def block(self, i: int) -> "BlockWeights":
        return BlockWeights.from_params(self, i)


def init_params(config: NetConfig, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(config):
        if len(shape) == 1:
            arrays[name] = np.zeros(shape, dtype=dtype)
        else:
            scale = 1.0 / np.sqrt(shape[1])
            arrays[name] = rng.uniform(-scale, scale, size=shape).astype(dtype)
    return ModelParams(config, arrays)


@dataclass(frozen=True)
class BlockWeights:
    """A block's matrices fused for a single matmul per stage.

    ``W_in`` maps the concatenation [h_t, h_{t-d}, cond_t] (2R + A) to the
    filter and gate pre-activations (2R). ``W_out`` maps the gated output to
    [residual, skip] (R + K).
    """

    W_in: np.ndarray
    b_in: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    @classmethod
    def from_params(cls, params: ModelParams, i: int) -> "BlockWeights":
        p = f"block{i}."
        a = params.arrays
        W_in = np.block([
            [a[p + "Wc_f"].T, a[p + "Wc_g"].T],
            [a[p + "Wp_f"].T, a[p + "Wp_g"].T],
            [a[p + "V_f"].T, a[p + "V_g"].T],
        ])
        b_in = np.concatenate([a[p + "b_f"], a[p + "b_g"]])
        W_out = np.concatenate([a[p + "R"].T, a[p + "S"].T], axis=1)
        b_out = np.concatenate([a[p + "b_r"], a[p + "b_s"]])
        return cls(np.ascontiguousarray(W_in), b_in, np.ascontiguousarray(W_out), b_out)


# ---------------------------------------------------------------------------
# Dilated taps

def pd_dilated_conv(x, W_c, W_p, d):
    """Two-tap convolution with per-sample dilation: W_c x[t] + W_p x[t - d[t]].

    ``x`` is (T, C_in); indices before 0 read zeros.
    """
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[:, None]
    past = gather_past(x[None], np.broadcast_to(np.asarray(d), (1, len(x))))[0]
    return x @ np.atleast_2d(W_c).T + past @ np.atleast_2d(W_p).T


def _past_index(d: np.ndarray, T: int) -> np.ndarray:
    """Flat index into a (B*T + 1)-row table whose row 0 is zeros."""
    B = d.shape[0]
    t = np.arange(T)[None, :]
    src = t - d
    flat = src + 1 + (np.arange(B)[:, None] * T)
    return np.where(src >= 0, flat, 0).ravel()


def gather_past(h: np.ndarray, d) -> np.ndarray:
    """h[:, t - d] with zeros before the start; ``d`` is an int or a (B, T) array."""
    B, T, C = h.shape
    if np.ndim(d) == 0:
        d = int(d)
        out = np.zeros_like(h)
        if d < T:
            out[:, d:] = h[:, : T - d]
        return out
    idx = _past_index(np.asarray(d), T)
    table = np.concatenate([np.zeros((1, C), dtype=h.dtype), h.reshape(B * T, C)])
    return table[idx].reshape(B, T, C)


def scatter_past(g: np.ndarray, d) -> np.ndarray:
    """Adjoint of :func:`gather_past`."""
    B, T, C = g.shape
    if np.ndim(d) == 0:
        d = int(d)
        out = np.zeros_like(g)
        if d < T:
            out[:, : T - d] = g[:, d:]
        return out
    idx = _past_index(np.asarray(d), T)
    table = np.zeros((B * T + 1, C), dtype=g.dtype)
    np.add.at(table, idx, g.reshape(B * T, C))
    return table[1:].reshape(B, T, C)


# ---------------------------------------------------------------------------
# Forward / backward

@dataclass
class ForwardCache:
    x: np.ndarray
    x_prev: np.ndarray
    dilations: list
    blocks: list[BlockWeights]
    stacked: list[np.ndarray] = field(default_factory=list)
    tanh_f: list[np.ndarray] = field(default_factory=list)
    sig_g: list[np.ndarray] = field(default_factory=list)
    z: list[np.ndarray] = field(default_factory=list)
    skip: np.ndarray | None = None
    hidden: np.ndarray | None = None


def _as_batch(x, cond, plan):
    """Normalize inputs to (B, T), (B, T, A) and a list of per-block dilations."""
    x = np.asarray(x)
    single = x.ndim == 1
    if single:
        x = x[None]
        cond = np.asarray(cond)[None]
        plans = [plan]
    else:
        cond = np.asarray(cond)
        plans = list(plan)
    B, T = x.shape
    if cond.shape[:2] != (B, T) or len(plans) != B or any(len(p) != T for p in plans):
        raise ShapeError("input, conditioning and dilation plan must have equal lengths")
    dilations = list(plans[0].fixed_dilations)
    n_adaptive = plans[0].adaptive_dilations.shape[1]
    if n_adaptive:
        stacked = np.stack([p.adaptive_dilations for p in plans])  # (B, T, n_adaptive)
        dilations += [np.ascontiguousarray(stacked[:, :, k]) for k in range(n_adaptive)]
    return x, cond, dilations, single


def forward(params: ModelParams, x, cond, plan, return_cache: bool = False):
    """Teacher-forced logits.

    ``x`` holds the companded previous sample at every position (0 at t=0).
    Accepts a single sequence (x: (T,), cond: (T, A), plan: DilationPlan) or a
    batch (x: (B, T), cond: (B, T, A), plan: list of B plans).
    """
    cfg = params.config
    x, cond, dilations, single = _as_batch(x, cond, plan)
    if len(dilations) != cfg.n_blocks:
        raise ShapeError("dilation plan does not match the network configuration")
    if cond.shape[2] != cfg.aux_dim:
        raise ShapeError(f"conditioning width {cond.shape[2]} != aux_dim {cfg.aux_dim}")
    dtype = params.dtype
    x = x.astype(dtype)
    cn = ((cond - params.cond_mean) / params.cond_std).astype(dtype)
    B, T = x.shape
    R = cfg.residual_channels

    x_prev = np.zeros_like(x)
    x_prev[:, 1:] = x[:, :-1]
    w = params["causal.w"]
    h = x[..., None] * w[:, 0] + x_prev[..., None] * w[:, 1] + params["causal.b"]

    blocks = [params.block(i) for i in range(cfg.n_blocks)]
    cache = ForwardCache(x, x_prev, dilations, blocks)
    skip = np.zeros((B, T, cfg.skip_channels), dtype=dtype)
    for blk, d in zip(blocks, dilations):
        stacked = np.concatenate([h, gather_past(h, d), cn], axis=2)
        pre = stacked @ blk.W_in + blk.b_in
        tf = np.tanh(pre[..., :R])
        sg = sigmoid(pre[..., R:])
        z = tf * sg
        out = z @ blk.W_out + blk.b_out
        h = h + out[..., :R]
        skip += out[..., R:]
        if return_cache:
            cache.stacked.append(stacked)
            cache.tanh_f.append(tf)
            cache.sig_g.append(sg)
            cache.z.append(z)

    a1 = np.maximum(skip, 0)
    hidden = a1 @ params["head.W1"].T + params["head.b1"]
    a2 = np.maximum(hidden, 0)
    logits = a2 @ params["head.W2"].T + params["head.b2"]
    cache.skip, cache.hidden = skip, hidden
    if single:
        logits = logits[0]
    return (logits, cache) if return_cache else logits


def backward(params: ModelParams, cache: ForwardCache | None, dlogits) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given dLoss/dlogits; same keys as ``params.arrays``."""
    if cache is None or not cache.stacked and params.config.n_blocks:
        raise ValueError("backward needs the cache of a forward pass run with return_cache=True")
    cfg = params.config
    R = cfg.residual_channels
    dlogits = np.asarray(dlogits, dtype=params.dtype)
    if dlogits.ndim == 2:
        dlogits = dlogits[None]
    grads: dict[str, np.ndarray] = {}

    skip, hidden = cache.skip, cache.hidden
    a1 = np.maximum(skip, 0)
    a2 = np.maximum(hidden, 0)
    flat = lambda a: a.reshape(-1, a.shape[-1])
    grads["head.W2"] = flat(dlogits).T @ flat(a2)
    grads["head.b2"] = flat(dlogits).sum(0)
    dhidden = (dlogits @ params["head.W2"]) * (hidden > 0)
    grads["head.W1"] = flat(dhidden).T @ flat(a1)
    grads["head.b1"] = flat(dhidden).sum(0)
    dskip = (dhidden @ params["head.W1"]) * (skip > 0)

    dh = np.zeros(dskip.shape[:2] + (R,), dtype=dskip.dtype)
    block_grads = []
    for i in reversed(range(cfg.n_blocks)):
        blk = cache.blocks[i]
        stacked, tf, sg, z = cache.stacked[i], cache.tanh_f[i], cache.sig_g[i], cache.z[i]
        dout = np.concatenate([dh, dskip], axis=2)
        dW_out = flat(z).T @ flat(dout)
        db_out = flat(dout).sum(0)
        dz = dout @ blk.W_out.T
        dpre = np.concatenate([dz * sg * (1.0 - tf * tf), dz * tf * sg * (1.0 - sg)], axis=2)
        dW_in = flat(stacked).T @ flat(dpre)
        db_in = flat(dpre).sum(0)
        dstacked = dpre @ blk.W_in.T
        dh = dh + dstacked[..., :R] + scatter_past(np.ascontiguousarray(dstacked[..., R:2 * R]),
                                                   cache.dilations[i])
        block_grads.append((i, dW_in, db_in, dW_out, db_out))

    dx_h = dh
    grads["causal.w"] = np.stack([
        np.einsum("btr,bt->r", dx_h, cache.x),
        np.einsum("btr,bt->r", dx_h, cache.x_prev),
    ], axis=1)
    grads["causal.b"] = flat(dx_h).sum(0)

    for i, dW_in, db_in, dW_out, db_out in block_grads:
        p = f"block{i}."
        grads[p + "Wc_f"] = dW_in[:R, :R].T
        grads[p + "Wc_g"] = dW_in[:R, R:].T
        grads[p + "Wp_f"] = dW_in[R:2 * R, :R].T
        grads[p + "Wp_g"] = dW_in[R:2 * R, R:].T
        grads[p + "V_f"] = dW_in[2 * R:, :R].T
        grads[p + "V_g"] = dW_in[2 * R:, R:].T
        grads[p + "b_f"] = db_in[:R]
        grads[p + "b_g"] = db_in[R:]
        grads[p + "R"] = dW_out[:, :R].T
        grads[p + "b_r"] = db_out[:R]
        grads[p + "S"] = dW_out[:, R:].T
        grads[p + "b_s"] = db_out[R:]
    return {name: np.ascontiguousarray(grads[name]) for name in params.names()}


def cross_entropy(logits, targets):
    """Mean negative log-likelihood of ``targets`` under softmax(logits)."""
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError("logits and targets must cover the same samples")
    z = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=-1))
    picked = np.take_along_axis(z, targets[..., None], axis=-1)[..., 0]
    return float(np.mean(logz - picked))


def cross_entropy_grad(logits, targets):
    """(loss, dLoss/dlogits) for the mean cross-entropy."""
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError("logits and targets must cover the same samples")
    grad = softmax(logits)
    np.put_along_axis(grad, targets[..., None], np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
    return cross_entropy(logits, targets), grad / targets.size
