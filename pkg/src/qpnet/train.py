"""Teacher-forced maximum-likelihood training with Adam."""

from __future__ import annotations

import csv
import logging
from contextlib import nullcontext
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .corpus import Utterance, load_corpus
from .dilation import NetConfig, receptive_field
from .errors import ConfigError, TrainingError
from .net import ModelParams, backward, cross_entropy_grad, forward, init_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 4
    crop_len: int = 2000
    max_steps: int = 1000
    seed: int = 0
    checkpoint_every: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    deterministic: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in kinds:
                raise ConfigError(f"unknown train setting {k!r}")
            kind = kinds[k]
            if kind == "bool":
                out[k] = v if isinstance(v, bool) else str(v).strip().lower() in ("1", "true", "yes", "on")
            else:
                out[k] = float(v) if kind == "float" else int(v)
        return cls(**out)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(0, {k: np.zeros_like(a) for k, a in params.arrays.items()},
                   {k: np.zeros_like(a) for k, a in params.arrays.items()})


@dataclass
class Batch:
    inputs: np.ndarray  # (B, T) companded previous samples
    cond: np.ndarray  # (B, T, A)
    plans: list
    targets: np.ndarray  # (B, T) classes


def crop_batch(utts: list[Utterance], rng: np.random.Generator, batch_size: int, crop_len: int) -> Batch:
    """Random same-length crops; history before each crop start is zero-padded."""
    crop_len = min(crop_len, min(len(u) for u in utts))
    xs, cs, ps, ts = [], [], [], []
    for _ in range(batch_size):
        u = utts[int(rng.integers(len(utts)))]
        start = int(rng.integers(len(u) - crop_len + 1))
        stop = start + crop_len
        xs.append(u.inputs[start:stop])
        cs.append(u.cond[start:stop])
        ps.append(u.plan.crop(start, stop))
        ts.append(u.codes[start:stop])
    return Batch(np.stack(xs), np.stack(cs), ps, np.stack(ts))


def full_batch(u: Utterance) -> Batch:
    return Batch(u.inputs[None], u.cond[None], [u.plan], u.codes[None])


def batch_loss(params: ModelParams, batch: Batch) -> float:
    from .net import cross_entropy

    return cross_entropy(forward(params, batch.inputs, batch.cond, batch.plans), batch.targets)


def adam_update(params: ModelParams, grads: dict, state: AdamState, tc: TrainConfig):
    step = state.step + 1
    lr = tc.learning_rate
    c1 = 1.0 - tc.beta1 ** step
    c2 = 1.0 - tc.beta2 ** step
    new_arrays, new_m, new_v = {}, {}, {}
    for name, p in params.arrays.items():
        g = grads[name].astype(p.dtype)
        m = tc.beta1 * state.m[name] + (1.0 - tc.beta1) * g
        v = tc.beta2 * state.v[name] + (1.0 - tc.beta2) * g * g
        upd = lr * (m / c1) / (np.sqrt(v / c2) + tc.eps)
        new_arrays[name] = (p - upd).astype(p.dtype)
        new_m[name] = m.astype(p.dtype)
        new_v[name] = v.astype(p.dtype)
    new_params = ModelParams(params.config, new_arrays, params.cond_mean.copy(), params.cond_std.copy())
    return new_params, AdamState(step, new_m, new_v)


def train_step(params: ModelParams, batch: Batch, opt_state: AdamState, tc: TrainConfig):
    """Forward, backward and one Adam update; returns (params, opt_state, loss)."""
    logits, cache = forward(params, batch.inputs, batch.cond, batch.plans, return_cache=True)
    loss, dlogits = cross_entropy_grad(logits, batch.targets)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss at optimizer step {opt_state.step + 1}: {loss}")
    grads = backward(params, cache, dlogits)
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise TrainingError(f"non-finite gradients in {', '.join(bad[:5])} at step {opt_state.step + 1}")
    new_params, new_state = adam_update(params, grads, opt_state, tc)
    return new_params, new_state, loss


def conditioning_stats(utts: list[Utterance], floor: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    allc = np.concatenate([u.cond for u in utts])
    return allc.mean(0), np.maximum(allc.std(0), floor)


def _thread_limit(deterministic: bool):
    if not deterministic:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=1)


def write_loss_log(path: str | Path, losses: list[tuple[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"])
        for step, loss in losses:
            w.writerow([step, repr(float(loss))])


def fit(config: NetConfig, tc: TrainConfig, utts: list[Utterance], params: ModelParams | None = None,
        opt_state: AdamState | None = None, on_step=None):
    """Run ``tc.max_steps`` optimizer steps on random crops of ``utts``.

    Returns (params, opt_state, [(step, loss), ...]).
    """
    if not utts:
        raise TrainingError("no training utterances")
    rng = np.random.default_rng(tc.seed)
    if params is None:
        params = init_params(config, tc.seed)
        params.cond_mean, params.cond_std = (a.astype(params.dtype) for a in conditioning_stats(utts))
    opt_state = opt_state or AdamState.zeros(params)
    rf = receptive_field(config, config.max_factor)
    if tc.crop_len <= rf:
        log.warning("crop_len %d does not exceed the largest receptive field %d", tc.crop_len, rf)
    losses = []
    with _thread_limit(tc.deterministic):
        for i in range(tc.max_steps):
            batch = crop_batch(utts, rng, tc.batch_size, tc.crop_len)
            params, opt_state, loss = train_step(params, batch, opt_state, tc)
            losses.append((opt_state.step, loss))
            if on_step is not None:
                on_step(opt_state.step, loss, params, opt_state)
    return params, opt_state, losses


def train_loop(config: NetConfig, tc: TrainConfig, manifest: str | Path, out_dir: str | Path,
               extra_echo: dict | None = None):
    """Train from a manifest; writes ``model.qpw``, periodic checkpoints and ``loss.csv``."""
    utts = load_corpus(manifest, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = {"train": tc.to_dict(), **(extra_echo or {})}

    def on_step(step, loss, params, opt_state):
        if step % 100 == 0 or step == 1:
            log.info("step %d loss %.4f", step, loss)
        if tc.checkpoint_every and step % tc.checkpoint_every == 0:
            save_checkpoint(out / f"step{step:07d}.qpw", params, opt_state, echo)

    params, opt_state, losses = fit(config, tc, utts, on_step=on_step)
    save_checkpoint(out / "model.qpw", params, opt_state, echo)
    write_loss_log(out / "loss.csv", losses)
    return params, losses
