"""Run configuration: INI-style file, named presets and flag overrides.

Example::

    [run]
    preset = tiny-qpnet
    seed = 3

    [net]
    residual_channels = 24

    [train]
    learning_rate = 0.003
    max_steps = 800

    [features]
    mcep_dim = 16

    [corpus]
    f0_low = 150
    f0_high = 250

    [generate]
    mode = argmax

    [eval]
    ratios = 1, 1/2, 3/2

Values from command-line flags win over the file; the file wins over the
preset. ``aux_dim`` always follows ``2 + features.mcep_dim``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

from .corpus import CorpusParams
from .dilation import NetConfig, preset
from .errors import ConfigError
from .evaluate import TABLE_RATIOS
from .features import FeatureParams
from .train import TrainConfig

SECTIONS = ("run", "net", "train", "features", "corpus", "generate", "eval")


def _coerce(kind: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if kind.startswith("tuple"):
        parts = [p.strip() for p in raw.strip("()[]").split(",") if p.strip()]
        inner = int if "int" in kind else float
        return tuple(inner(p) for p in parts)
    if "None" in kind and raw.lower() in ("", "none"):
        return None
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    if kind == "bool":
        return raw.lower() in ("1", "true", "yes", "on")
    return raw


def _apply(obj, values: dict, section: str):
    kinds = {f.name: f.type for f in fields(obj)}
    out = {}
    for k, v in values.items():
        if k not in kinds:
            raise ConfigError(f"[{section}] unknown key {k!r}; known keys: {', '.join(kinds)}")
        out[k] = _coerce(kinds[k], v)
    return replace(obj, **out)


def parse_ratios(text) -> list[Fraction]:
    if text is None or (isinstance(text, str) and not text.strip()):
        return list(TABLE_RATIOS)
    if isinstance(text, str):
        text = [t for t in text.split(",") if t.strip()]
    try:
        ratios = [Fraction(str(t).strip()).limit_denominator(1000) for t in text]
    except ValueError as exc:
        raise ConfigError(f"bad ratio list: {exc}") from None
    if any(r <= 0 for r in ratios):
        raise ConfigError("ratios must be positive")
    return ratios


@dataclass
class RunConfig:
    preset: str = "tiny-qpnet"
    seed: int = 0
    net: NetConfig = field(default_factory=lambda: preset("tiny-qpnet"))
    train: TrainConfig = field(default_factory=TrainConfig)
    features: FeatureParams = field(default_factory=lambda: FeatureParams.for_rate(16000))
    corpus: CorpusParams = field(default_factory=CorpusParams)
    mode: str = "argmax"
    ratios: list[Fraction] = field(default_factory=lambda: list(TABLE_RATIOS))
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def resolve(cls, path: str | Path | None = None, overrides: dict[str, dict] | None = None) -> "RunConfig":
        """Merge preset defaults, the config file and flag overrides (in that order)."""
        merged: dict[str, dict] = {s: {} for s in SECTIONS}
        if path is not None:
            cp = configparser.ConfigParser()
            if not cp.read(path):
                raise ConfigError(f"cannot read config file {path}")
            for section in cp.sections():
                if section not in merged:
                    raise ConfigError(f"unknown config section [{section}]")
                merged[section].update(dict(cp[section]))
        for section, values in (overrides or {}).items():
            merged.setdefault(section, {}).update({k: v for k, v in values.items() if v is not None})

        run = merged["run"]
        unknown = set(run) - {"preset", "seed"}
        if unknown:
            raise ConfigError(f"[run] unknown keys: {', '.join(sorted(unknown))}")
        name = str(run.get("preset", "tiny-qpnet"))
        seed = int(run.get("seed", 0))
        net = preset(name)

        feat_values = dict(merged["features"])
        sample_rate = int(merged["net"].get("sample_rate", net.sample_rate))
        features = _apply(FeatureParams.for_rate(sample_rate), feat_values, "features")
        net_values = dict(merged["net"])
        if "aux_dim" in net_values and int(net_values["aux_dim"]) != 2 + features.mcep_dim:
            raise ConfigError("net.aux_dim must equal 2 + features.mcep_dim")
        net_values["aux_dim"] = 2 + features.mcep_dim
        net_values.setdefault("f0_floor", features.f0_min)
        net_values.setdefault("f0_ceil", features.f0_max)
        net = NetConfig.from_dict({**net.to_dict(), **net_values})

        train_values = {"seed": seed, **merged["train"]}
        train = TrainConfig.from_dict({**TrainConfig().to_dict(), **train_values})
        corpus = _apply(CorpusParams(sample_rate=net.sample_rate), merged["corpus"], "corpus")
        if corpus.sample_rate != net.sample_rate:
            raise ConfigError("corpus.sample_rate must match net.sample_rate")

        gen = merged["generate"]
        mode = str(gen.pop("mode", "argmax")) if gen else "argmax"
        if gen:
            raise ConfigError(f"[generate] unknown keys: {', '.join(gen)}")
        if mode not in ("argmax", "sample"):
            raise ConfigError(f"generate.mode must be 'argmax' or 'sample', got {mode!r}")
        ev = dict(merged["eval"])
        ratios = parse_ratios(ev.pop("ratios", None))
        if ev:
            raise ConfigError(f"[eval] unknown keys: {', '.join(ev)}")
        return cls(name, seed, net, train, features, corpus, mode, ratios, merged)

    def to_sections(self) -> dict[str, dict]:
        def plain(d):
            return {k: (", ".join(map(str, v)) if isinstance(v, tuple) else v) for k, v in d.items()}

        return {
            "run": {"preset": self.preset, "seed": self.seed},
            "net": self.net.to_dict(),
            "train": self.train.to_dict(),
            "features": plain(asdict(self.features)),
            "corpus": plain(asdict(self.corpus)),
            "generate": {"mode": self.mode},
            "eval": {"ratios": ", ".join(str(r) for r in self.ratios)},
        }

    def echo(self) -> str:
        cp = configparser.ConfigParser()
        for section, values in self.to_sections().items():
            cp[section] = {k: str(v) for k, v in values.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def write_echo(self, out_dir: str | Path) -> Path:
        path = Path(out_dir) / "config.ini"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.echo())
        return path
