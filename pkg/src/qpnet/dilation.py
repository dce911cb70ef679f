"""Dilation sizes: pitch-dependent factor, layer schedules, receptive fields."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class NetConfig:
    fixed_layers: int = 4
    fixed_repeats: int = 3
    adaptive_layers: int = 4
    adaptive_repeats: int = 1
    residual_channels: int = 512
    skip_channels: int = 256
    a: int = 8
    sample_rate: int = 22050
    aux_dim: int = 2 + 34
    f0_floor: float = 40.0
    f0_ceil: float = 800.0

    def __post_init__(self):
        for name in ("fixed_layers", "fixed_repeats", "adaptive_layers", "adaptive_repeats"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.n_fixed + self.n_adaptive < 1:
            raise ConfigError("network needs at least one residual block")
        if self.residual_channels < 1 or self.skip_channels < 1:
            raise ConfigError("channel counts must be positive")
        if self.a < 1:
            raise ConfigError("dilation constant a must be >= 1")
        if not 0 < self.f0_floor < self.f0_ceil:
            raise ConfigError("need 0 < f0_floor < f0_ceil")
        if self.sample_rate <= 0 or self.aux_dim < 0:
            raise ConfigError("sample_rate must be positive and aux_dim non-negative")

    @property
    def n_fixed(self) -> int:
        return self.fixed_layers * self.fixed_repeats

    @property
    def n_adaptive(self) -> int:
        return self.adaptive_layers * self.adaptive_repeats

    @property
    def n_blocks(self) -> int:
        return self.n_fixed + self.n_adaptive

    @property
    def f0_clip(self) -> tuple[float, float]:
        return (self.f0_floor, self.f0_ceil)

    @property
    def max_factor(self) -> int:
        """Largest dilation factor reachable inside the F0 clip range."""
        return dilation_factor(self.f0_floor, self.sample_rate, self.a, self.f0_clip)

    def fixed_dilations(self) -> list[int]:
        if self.n_fixed == 0:
            return []
        return fixed_schedule(self.fixed_layers, self.fixed_repeats)

    def layer_capacities(self) -> list[int]:
        """Largest dilation each block can be asked for, fixed blocks first."""
        adaptive = [self.max_factor * 2 ** (k % self.adaptive_layers) for k in range(self.n_adaptive)]
        return self.fixed_dilations() + adaptive

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in types:
                raise ConfigError(f"unknown net setting {k!r}")
            out[k] = float(v) if types[k] == "float" else int(v)
        return cls(**out)


PRESETS: dict[str, dict] = {
    "wnf": dict(fixed_layers=10, fixed_repeats=3, adaptive_layers=0, adaptive_repeats=0,
                residual_channels=512, skip_channels=256),
    "wnc": dict(fixed_layers=4, fixed_repeats=4, adaptive_layers=0, adaptive_repeats=0,
                residual_channels=512, skip_channels=256),
    "qpnet": dict(fixed_layers=4, fixed_repeats=3, adaptive_layers=4, adaptive_repeats=1,
                  residual_channels=512, skip_channels=256),
    "tiny-wnc": dict(fixed_layers=4, fixed_repeats=4, adaptive_layers=0, adaptive_repeats=0,
                     residual_channels=32, skip_channels=16, sample_rate=16000, aux_dim=2 + 16),
    "tiny-qpnet": dict(fixed_layers=4, fixed_repeats=3, adaptive_layers=4, adaptive_repeats=1,
                       residual_channels=32, skip_channels=16, sample_rate=16000, aux_dim=2 + 16),
}


def preset(name: str, **overrides) -> NetConfig:
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}") from None
    base.update(overrides)
    return NetConfig(**base)


def dilation_factor(f0, sample_rate: float, a: int, f0_clip: tuple[float, float] = (40.0, 800.0)):
    """Pitch-dependent factor ``max(1, ceil(fs / (clip(f0) * a)))``.

    Works on scalars (returns int) and arrays (returns int64 array).
    """
    f0_arr = np.asarray(f0, dtype=np.float64)
    if np.any(~(f0_arr > 0)):
        raise DomainError("dilation factor needs positive F0; use a continuous F0 track")
    lo, hi = f0_clip
    clipped = np.clip(f0_arr, lo, hi)
    ratio = sample_rate / (clipped * a)
    # guard against ceil(28.000000000001) when the ratio is an exact integer
    e = np.maximum(1, np.ceil(np.round(ratio, 9))).astype(np.int64)
    return int(e) if e.ndim == 0 else e


def fixed_schedule(layers: int, repeats: int) -> list[int]:
    if layers < 1 or repeats < 1:
        raise ConfigError("layers and repeats must be >= 1")
    return [2 ** k for k in range(layers)] * repeats


def adaptive_schedule(E, layers: int, repeats: int) -> np.ndarray:
    """Per-sample dilations, shape (T, layers * repeats): ``E[t] * 2**(k % layers)``."""
    E = np.atleast_1d(np.asarray(E, dtype=np.int64))
    if np.any(E < 1):
        raise DomainError("dilation factors must be >= 1")
    base = np.asarray(fixed_schedule(layers, repeats), dtype=np.int64)
    return E[:, None] * base[None, :]


def receptive_field(config: NetConfig, E: int = 1) -> int:
    """Samples of network input visible to one output: causal tap plus all dilations."""
    if E < 1:
        raise DomainError("dilation factor must be >= 1")
    return (1 + config.fixed_repeats * (2 ** config.fixed_layers - 1)
            + config.adaptive_repeats * E * (2 ** config.adaptive_layers - 1))


@dataclass(frozen=True)
class DilationPlan:
    fixed_dilations: list[int]
    adaptive_dilations: np.ndarray  # (T, n_adaptive) int64
    E: np.ndarray  # (T,) int64

    def __len__(self) -> int:
        return len(self.E)

    def crop(self, start: int, stop: int) -> "DilationPlan":
        return DilationPlan(self.fixed_dilations, self.adaptive_dilations[start:stop], self.E[start:stop])


def build_plan(config: NetConfig, cond: np.ndarray) -> DilationPlan:
    """Dilations for every sample from the continuous log-F0 column of ``cond``."""
    cond = np.asarray(cond)
    if cond.ndim != 2 or cond.shape[1] < 1:
        raise DomainError("conditioning must be a (T, aux_dim) matrix")
    f0 = np.exp(cond[:, 0].astype(np.float64))
    E = np.atleast_1d(dilation_factor(f0, config.sample_rate, config.a, config.f0_clip))
    if config.n_adaptive:
        adaptive = adaptive_schedule(E, config.adaptive_layers, config.adaptive_repeats)
    else:
        adaptive = np.zeros((len(E), 0), dtype=np.int64)
    return DilationPlan(config.fixed_dilations(), adaptive, E)


def constant_plan(config: NetConfig, T: int, E: int) -> DilationPlan:
    E_arr = np.full(T, E, dtype=np.int64)
    adaptive = (adaptive_schedule(E_arr, config.adaptive_layers, config.adaptive_repeats)
                if config.n_adaptive else np.zeros((T, 0), dtype=np.int64))
    return DilationPlan(config.fixed_dilations(), adaptive, E_arr)


