"""Synthetic corpora, manifests and per-utterance training tensors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dilation import DilationPlan, NetConfig, build_plan
from .errors import ConfigError, QPNetError, ShapeError
from .features import FeatureParams, build_conditioning, melcep_analyze
from .frames import FrameTrack, load_track, save_track
from .signal import SynthSegment, SynthSpec, Waveform, class_center, mulaw_encode, read_wav, synth_utterance, write_wav


@dataclass(frozen=True)
class CorpusParams:
    sample_rate: int = 16000
    duration: float = 1.0
    f0_low: float = 150.0
    f0_high: float = 250.0
    harmonics: tuple[int, int] = (8, 16)
    tilt: tuple[float, float] = (-9.0, -4.0)
    noise: tuple[float, float] = (0.0, 0.02)
    voiced_len: tuple[float, float] = (0.25, 0.6)
    unvoiced_len: tuple[float, float] = (0.03, 0.1)


def random_synth_spec(rng: np.random.Generator, cp: CorpusParams, seed: int) -> SynthSpec:
    """Alternating voiced glides and short unvoiced gaps inside the F0 band."""
    lo, hi = math.log(cp.f0_low), math.log(cp.f0_high)
    segments = []
    total = 0.0
    voiced = bool(rng.random() < 0.8)
    while total < cp.duration - 1e-9:
        span = cp.voiced_len if voiced else cp.unvoiced_len
        dur = min(float(rng.uniform(*span)), cp.duration - total)
        if voiced:
            a, b = np.exp(rng.uniform(lo, hi, size=2))
            segments.append(SynthSegment(dur, float(a), float(b), True))
        else:
            segments.append(SynthSegment(dur, voiced=False))
        total += dur
        voiced = not voiced
    if not any(s.voiced for s in segments):
        f = float(np.exp(rng.uniform(lo, hi)))
        segments = [SynthSegment(cp.duration, f, f, True)]
    return SynthSpec(
        segments,
        sample_rate=cp.sample_rate,
        harmonic_count=int(rng.integers(cp.harmonics[0], cp.harmonics[1] + 1)),
        spectral_tilt=float(rng.uniform(*cp.tilt)),
        noise_level=float(rng.uniform(*cp.noise)),
        seed=seed,
    )


def synth_features(w: Waveform, truth: FrameTrack, fp: FeatureParams) -> FrameTrack:
    """Ground-truth pitch from the generator plus analysed mel-cepstra."""
    mcep, energy = melcep_analyze(w, fp, len(truth))
    return truth.with_spectral(mcep, energy)


def write_corpus(out_dir: str | Path, n: int, seed: int, cp: CorpusParams | None = None,
                 fp: FeatureParams | None = None, prefix: str = "utt") -> Path:
    """Render ``n`` utterances as WAV + QPF1 pairs and write ``manifest.txt``."""
    cp = cp or CorpusParams()
    fp = fp or FeatureParams.for_rate(cp.sample_rate)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(n):
        spec = random_synth_spec(rng, cp, seed=int(rng.integers(2 ** 31)))
        w, truth = synth_utterance(spec, fp.frame_hop)
        track = synth_features(w, truth, fp)
        wav_name, feat_name = f"{prefix}{i:04d}.wav", f"{prefix}{i:04d}.qpf"
        write_wav(out / wav_name, w)
        save_track(out / feat_name, track)
        lines.append(f"{wav_name}\t{feat_name}\n")
    manifest = out / "manifest.txt"
    manifest.write_text("".join(lines))
    return manifest


def read_manifest(path: str | Path) -> list[tuple[Path, Path]]:
    """Parse ``wav<TAB>feature`` lines; relative paths resolve against the manifest."""
    path = Path(path)
    if not path.exists():
        raise QPNetError(f"manifest {path} does not exist")
    pairs = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected 'wav_path<TAB>feature_path'")
        wav, feat = (Path(p) if Path(p).is_absolute() else path.parent / p for p in parts)
        for f in (wav, feat):
            if not f.exists():
                raise QPNetError(f"{path}:{lineno}: missing file {f}")
        pairs.append((wav, feat))
    return pairs


@dataclass
class Utterance:
    """One utterance prepared for a particular network configuration."""

    wave: Waveform
    track: FrameTrack
    codes: np.ndarray
    inputs: np.ndarray
    cond: np.ndarray
    plan: DilationPlan

    def __len__(self) -> int:
        return len(self.codes)


def teacher_inputs(codes: np.ndarray) -> np.ndarray:
    """Companded previous-sample sequence with a zero at t = 0."""
    x = np.zeros(len(codes))
    x[1:] = class_center(codes[:-1])
    return x


def prepare(wave: Waveform, track: FrameTrack, config: NetConfig) -> Utterance:
    if wave.sample_rate != config.sample_rate:
        raise ConfigError(f"audio at {wave.sample_rate} Hz but network expects {config.sample_rate} Hz")
    cond = build_conditioning(track, len(wave))
    if cond.shape[1] != config.aux_dim:
        raise ShapeError(f"features give {cond.shape[1]} conditioning dims, network expects {config.aux_dim}")
    codes = mulaw_encode(wave.samples)
    return Utterance(wave, track, codes, teacher_inputs(codes), cond, build_plan(config, cond))


def load_corpus(manifest: str | Path, config: NetConfig) -> list[Utterance]:
    pairs = read_manifest(manifest)
    if not pairs:
        raise QPNetError(f"manifest {manifest} lists no utterances")
    return [prepare(read_wav(w), load_track(f), config) for w, f in pairs]
