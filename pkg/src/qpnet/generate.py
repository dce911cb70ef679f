"""Incremental autoregressive sampling.

Each residual block keeps a ring buffer of its own past inputs. With
time-variant dilations a classic fixed-length queue per layer would hand back
the wrong history, so every step reads an arbitrary offset ``d <= capacity``
from the buffer instead of popping the oldest entry. Cost per sample is one
small matvec chain per block, independent of the dilation size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dilation import DilationPlan
from .errors import QPNetError, ShapeError
from .net import ModelParams, N_OUT, sigmoid, softmax
from .signal import Waveform, class_center, mulaw_decode


class CacheOverflow(QPNetError, RuntimeError):
    """A dilation exceeded the history a layer was sized for."""


@dataclass
class GenState:
    buffers: list[np.ndarray]
    capacities: list[int]
    t: int
    prev_input: float
    rng: np.random.Generator

    @classmethod
    def initial(cls, params: ModelParams, seed: int = 0) -> "GenState":
        caps = params.config.layer_capacities()
        R = params.config.residual_channels
        return cls([np.zeros((c, R), dtype=params.dtype) for c in caps], caps, 0, 0.0,
                   np.random.default_rng(seed))


class Stepper:
    """Per-sample evaluation of a fixed set of parameters."""

    def __init__(self, params: ModelParams):
        self.params = params
        cfg = params.config
        self.R = cfg.residual_channels
        self.blocks = [params.block(i) for i in range(cfg.n_blocks)]
        self.fixed = list(cfg.fixed_dilations())
        self.dtype = params.dtype

    def normalize(self, cond: np.ndarray) -> np.ndarray:
        p = self.params
        return ((np.asarray(cond) - p.cond_mean) / p.cond_std).astype(self.dtype)

    def logits(self, state: GenState, x_t: float, cond_t: np.ndarray, adaptive_t) -> np.ndarray:
        """Advance one sample: push every block input, return the 256 logits.

        ``cond_t`` must already be normalized; ``adaptive_t`` lists the
        dilations of the adaptive blocks at this sample.
        """
        p = self.params
        R = self.R
        t = state.t
        dtype = self.dtype
        w = p["causal.w"]
        x_t = dtype.type(x_t)
        h = x_t * w[:, 0] + dtype.type(state.prev_input) * w[:, 1] + p["causal.b"]
        skip = np.zeros(p.config.skip_channels, dtype=dtype)
        dils = self.fixed + [int(d) for d in adaptive_t]
        for k, (blk, d) in enumerate(zip(self.blocks, dils)):
            buf = state.buffers[k]
            cap = state.capacities[k]
            if d > cap:
                raise CacheOverflow(f"block {k}: dilation {d} exceeds cache capacity {cap}")
            past = buf[(t - d) % cap]  # zero until written, which covers t - d < 0
            stacked = np.concatenate([h, past, cond_t])
            pre = stacked @ blk.W_in + blk.b_in
            z = np.tanh(pre[:R]) * sigmoid(pre[R:])
            out = z @ blk.W_out + blk.b_out
            buf[t % cap] = h
            h = h + out[:R]
            skip += out[R:]
        hidden = np.maximum(skip, 0) @ p["head.W1"].T + p["head.b1"]
        logits = np.maximum(hidden, 0) @ p["head.W2"].T + p["head.b2"]
        state.t = t + 1
        state.prev_input = float(x_t)
        return logits


def step(state: GenState, params: ModelParams, x_t: float, cond_t, dilations_t, stepper: Stepper | None = None):
    """One incremental step; returns (probabilities over 256 classes, state).

    ``x_t`` is the companded previous sample (0 at the first step), ``cond_t``
    the raw conditioning vector and ``dilations_t`` the adaptive dilations.
    """
    stepper = stepper or Stepper(params)
    logits = stepper.logits(state, x_t, stepper.normalize(cond_t), dilations_t)
    return softmax(logits.astype(np.float64)), state


def pick_class(probs: np.ndarray, mode: str, rng: np.random.Generator) -> int:
    if mode == "argmax":
        return int(np.argmax(probs))  # first maximum: lowest index wins ties
    if mode == "sample":
        cdf = np.cumsum(probs)
        return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), N_OUT - 1))
    raise ValueError(f"unknown generation mode {mode!r}; use 'argmax' or 'sample'")


def generate_codes(params: ModelParams, cond, plan: DilationPlan, mode: str = "argmax", seed: int = 0,
                   keep_logits: bool = False, progress=None):
    """Run the sampler; returns (classes, logits or None, network inputs)."""
    cond = np.asarray(cond)
    T = len(cond)
    if len(plan) != T:
        raise ShapeError(f"plan covers {len(plan)} samples but conditioning has {T}")
    if cond.ndim != 2 or cond.shape[1] != params.config.aux_dim:
        raise ShapeError("conditioning width does not match the network")
    if plan.adaptive_dilations.shape[1] != params.config.n_adaptive:
        raise ShapeError("plan does not match the network's adaptive blocks")
    stepper = Stepper(params)
    state = GenState.initial(params, seed)
    cn = stepper.normalize(cond)
    codes = np.zeros(T, dtype=np.int64)
    inputs = np.zeros(T, dtype=np.float64)
    all_logits = np.zeros((T, N_OUT), dtype=params.dtype) if keep_logits else None
    x_t = 0.0
    for t in range(T):
        inputs[t] = x_t
        logits = stepper.logits(state, x_t, cn[t], plan.adaptive_dilations[t])
        if keep_logits:
            all_logits[t] = logits
        c = pick_class(softmax(logits.astype(np.float64)), mode, state.rng)
        codes[t] = c
        x_t = float(class_center(c))
        if progress is not None and t % 4000 == 0:
            progress(t, T)
    return codes, all_logits, inputs


def generate(params: ModelParams, cond, plan: DilationPlan, mode: str = "argmax", seed: int = 0,
             progress=None) -> Waveform:
    """Synthesize a waveform sample by sample from conditioning and its dilation plan."""
    codes, _, _ = generate_codes(params, cond, plan, mode, seed, progress=progress)
    return Waveform(mulaw_decode(codes), params.config.sample_rate)
