"""Waveforms, 8-bit mu-law coding, WAV I/O and the synthetic corpus source."""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import DomainError, FormatError
from .frames import FrameTrack

MU = 255
N_CLASSES = 256
_LOG_1P_MU = math.log1p(MU)


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise DomainError("waveform must be mono (1-D)")
        if self.sample_rate <= 0:
            raise DomainError("sample_rate must be positive")
        if x.size and np.max(np.abs(x)) > 1.0:
            raise DomainError("waveform samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def compand(x):
    """Continuous mu-law compression F(x) = sign(x) ln(1 + 255|x|) / ln 256."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.log1p(MU * np.abs(x)) / _LOG_1P_MU


def mulaw_encode(x):
    """Quantize amplitudes in [-1, 1] to mu-law classes 0..255.

    Classes are 256 uniform bins over the companded range [-1, 1]; scalar
    input gives a Python int, array input an int64 array.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) > 1.0):
        raise DomainError("mu-law input must lie in [-1, 1]")
    codes = np.clip(np.floor((compand(arr) + 1.0) / 2.0 * N_CLASSES), 0, N_CLASSES - 1).astype(np.int64)
    return int(codes) if codes.ndim == 0 else codes


def class_center(c):
    """Companded value at the centre of class ``c``; this is also the network input."""
    arr = np.asarray(c)
    if np.any(arr < 0) or np.any(arr > N_CLASSES - 1):
        raise DomainError("mu-law class must lie in [0, 255]")
    return (arr.astype(np.float64) + 0.5) / N_CLASSES * 2.0 - 1.0


def mulaw_decode(c):
    """Bin-centre inverse of :func:`mulaw_encode`."""
    fhat = class_center(c)
    x = np.sign(fhat) * (np.power(float(N_CLASSES), np.abs(fhat)) - 1.0) / MU
    return float(x) if x.ndim == 0 else x


def bin_edges() -> np.ndarray:
    """Amplitude-domain edges of the 256 classes (257 values, -1 to 1)."""
    f = np.linspace(-1.0, 1.0, N_CLASSES + 1)
    return np.sign(f) * (np.power(float(N_CLASSES), np.abs(f)) - 1.0) / MU


# ---------------------------------------------------------------------------
# WAV I/O: mono PCM16 only.

def write_wav(path: str | Path, w: Waveform) -> None:
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(w.sample_rate))
        fh.writeframes(pcm.tobytes())


def read_wav(path: str | Path) -> Waveform:
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise FormatError(f"{path}: only mono 16-bit PCM is supported")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


# ---------------------------------------------------------------------------
# Synthetic quasi-periodic source.

@dataclass(frozen=True)
class SynthSegment:
    """A stretch of constant voicing; F0 moves linearly in log-frequency."""

    duration: float
    f0_start: float = 0.0
    f0_end: float = 0.0
    voiced: bool = True


@dataclass(frozen=True)
class SynthSpec:
    segments: Sequence[SynthSegment]
    sample_rate: int = 16000
    harmonic_count: int = 12
    spectral_tilt: float = -6.0
    noise_level: float = 0.0
    seed: int = 0
    peak: float = 0.9
    ramp: float = 0.005

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def validate(self) -> None:
        if not self.segments or self.duration <= 0:
            raise DomainError("synth spec needs a positive duration")
        nyquist = self.sample_rate / 2
        for seg in self.segments:
            if seg.duration <= 0:
                raise DomainError("segment durations must be positive")
            if seg.voiced and not (0 < seg.f0_start < nyquist and 0 < seg.f0_end < nyquist):
                raise DomainError(f"voiced F0 must lie in (0, {nyquist}) Hz")
        if self.harmonic_count < 1:
            raise DomainError("harmonic_count must be >= 1")


def _segment_bounds(spec: SynthSpec) -> list[tuple[int, int]]:
    edges = np.round(np.cumsum([0.0] + [s.duration for s in spec.segments]) * spec.sample_rate).astype(int)
    return list(zip(edges[:-1], edges[1:]))


def f0_contour(spec: SynthSpec, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (f0, voiced) at arbitrary times in seconds; f0 is 0 where unvoiced."""
    times = np.asarray(times, dtype=np.float64)
    f0 = np.zeros_like(times)
    voiced = np.zeros(times.shape, dtype=bool)
    start = 0.0
    for seg in spec.segments:
        stop = start + seg.duration
        inside = (times >= start) & (times < stop)
        if seg.voiced:
            frac = (times[inside] - start) / seg.duration
            f0[inside] = np.exp(np.log(seg.f0_start) + frac * (np.log(seg.f0_end) - np.log(seg.f0_start)))
            voiced[inside] = True
        start = stop
    return f0, voiced


def _ramp_envelope(n: int, ramp: int) -> np.ndarray:
    env = np.ones(n)
    ramp = min(ramp, n // 2)
    if ramp > 0:
        r = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp)
        env[:ramp] = r
        env[n - ramp:] = r[::-1]
    return env


def synth_utterance(spec: SynthSpec, frame_hop: int = 80) -> tuple[Waveform, FrameTrack]:
    """Render a quasi-periodic test utterance and its ground-truth pitch track.

    Voiced segments are harmonic sums (amplitude of harmonic k follows the
    spectral tilt in dB/octave, phases drawn from the seed) plus white noise
    at ``noise_level`` times the voiced RMS; unvoiced segments are low-passed
    noise. Harmonics at or above Nyquist are dropped sample by sample. The
    ground-truth track samples the analytic contour at frame centres.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    fs = spec.sample_rate
    n_total = int(round(spec.duration * fs))
    out = np.zeros(n_total)
    ramp = int(round(spec.ramp * fs))

    k = np.arange(1, spec.harmonic_count + 1)
    amps = np.power(10.0, spec.spectral_tilt * np.log2(k) / 20.0)
    phases = rng.uniform(0, 2 * np.pi, size=spec.harmonic_count)
    phase0 = 0.0

    for seg, (lo, hi) in zip(spec.segments, _segment_bounds(spec)):
        n = hi - lo
        if n <= 0:
            continue
        if seg.voiced:
            frac = np.arange(n) / n
            inst = np.exp(np.log(seg.f0_start) + frac * (np.log(seg.f0_end) - np.log(seg.f0_start)))
            phase = phase0 + 2 * np.pi * np.cumsum(inst) / fs
            phase0 = phase[-1]
            sig = np.zeros(n)
            for kk, a, p in zip(k, amps, phases):
                alive = kk * inst < fs / 2
                sig += np.where(alive, a * np.cos(kk * phase + p), 0.0)
            rms = np.sqrt(np.mean(sig ** 2)) if n else 0.0
            if spec.noise_level > 0:
                sig += spec.noise_level * rms * rng.standard_normal(n)
        else:
            noise = rng.standard_normal(n)
            sig = 0.2 * lfilter([0.3], [1.0, -0.7], noise)
        out[lo:hi] = sig * _ramp_envelope(n, ramp)

    peak = np.max(np.abs(out)) if n_total else 0.0
    if peak > 0:
        out *= spec.peak / peak
    n_frames = -(-n_total // frame_hop)
    centers = (np.arange(n_frames) * frame_hop + frame_hop / 2) / fs
    f0, voiced = f0_contour(spec, centers)
    return Waveform(out, fs), FrameTrack(frame_hop, f0, voiced)
