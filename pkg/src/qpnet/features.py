"""Frame-level analysis (F0, mel-cepstrum) and conditioning construction."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct, rfft, irfft

from .errors import ConfigError, DomainError, ShapeError
from .frames import FrameTrack
from .signal import Waveform

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class FeatureParams:
    """Analysis settings shared by extraction, training and evaluation.

    ``f0_frame_len`` of None means ``max(frame_len, 2 * ceil(fs / f0_min))``
    so the default search range always fits its analysis window.
    """

    frame_len: int = 400
    frame_hop: int = 80
    f0_min: float = 40.0
    f0_max: float = 800.0
    voicing_threshold: float = 0.45
    f0_frame_len: int | None = None
    n_mels: int = 40
    mcep_dim: int = 16
    n_fft: int | None = None

    def f0_window(self, sample_rate: int) -> int:
        if self.f0_frame_len is not None:
            return self.f0_frame_len
        return max(self.frame_len, 2 * math.ceil(sample_rate / self.f0_min))

    @classmethod
    def for_rate(cls, sample_rate: int, **overrides) -> "FeatureParams":
        """Defaults of 25 ms frames and 5 ms hop at ``sample_rate``."""
        base = dict(frame_len=int(round(0.025 * sample_rate)), frame_hop=int(round(0.005 * sample_rate)))
        base.update(overrides)
        return cls(**base)


def n_frames_for(n_samples: int, hop: int) -> int:
    return -(-n_samples // hop)


def frame_signal(x: np.ndarray, frame_len: int, hop: int, n_frames: int | None = None) -> np.ndarray:
    """Slice ``x`` into frames centred on ``i * hop + hop // 2``, zero-padded."""
    if n_frames is None:
        n_frames = n_frames_for(len(x), hop)
    left = frame_len // 2 - hop // 2
    need = (n_frames - 1) * hop + frame_len
    padded = np.zeros(max(need, left + len(x)))
    if left >= 0:
        padded[left:left + len(x)] = x
    else:
        padded[: len(x) + left] = x[-left:]
    return sliding_window_view(padded, frame_len)[::hop][:n_frames]


# ---------------------------------------------------------------------------
# F0

def _nccf(frames: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalized cross-correlation r[i, tau] for tau in 0..max_lag."""
    n, length = frames.shape
    nfft = 1 << int(math.ceil(math.log2(2 * length)))
    spec = rfft(frames, nfft, axis=1)
    acf = irfft(spec * np.conj(spec), nfft, axis=1)[:, : max_lag + 1]
    sq = np.cumsum(frames ** 2, axis=1)
    total = sq[:, -1:]
    lags = np.arange(max_lag + 1)
    head = np.concatenate([np.zeros((n, 1)), sq], axis=1)
    # energy of x[0 : L - tau] and of x[tau : L]
    e_head = head[:, length - lags]
    e_tail = total - head[:, lags]
    denom = np.sqrt(np.maximum(e_head * e_tail, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(denom > 1e-12, acf / denom, 0.0)
    return r


def estimate_f0(w: Waveform, params: FeatureParams | None = None) -> FrameTrack:
    """Autocorrelation pitch tracker.

    For every frame the normalized autocorrelation is searched over lags
    ``[fs / f0_max, fs / f0_min]``. The chosen peak is the first local maximum
    within 10% of the global maximum (guards against period doubling), refined
    by parabolic interpolation. A frame is voiced iff that peak reaches
    ``voicing_threshold``.
    """
    params = params or FeatureParams.for_rate(w.sample_rate)
    fs = w.sample_rate
    if not 0 < params.f0_min < params.f0_max < fs / 2:
        raise ConfigError("need 0 < f0_min < f0_max < sample_rate / 2")
    lag_min = max(1, int(math.floor(fs / params.f0_max)))
    lag_max = int(math.ceil(fs / params.f0_min))
    frame_len = params.f0_window(fs)
    if frame_len < 2 * lag_max:
        raise ConfigError(f"F0 frame length {frame_len} is shorter than twice the longest lag {lag_max}")

    frames = frame_signal(w.samples, frame_len, params.frame_hop)
    r = _nccf(frames, lag_max + 1)
    search = r[:, lag_min : lag_max + 1]
    n = len(frames)
    f0 = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)
    for i in range(n):
        row = search[i]
        best = row.max()
        if best < params.voicing_threshold:
            continue
        interior = (row[1:-1] >= row[:-2]) & (row[1:-1] >= row[2:]) & (row[1:-1] >= 0.9 * best)
        peaks = np.flatnonzero(interior) + 1
        j = int(peaks[0]) if len(peaks) else int(np.argmax(row))
        lag = float(j + lag_min)
        # parabolic refinement on the full-range row so edges have neighbours
        full = r[i]
        t = j + lag_min
        if 1 <= t < len(full) - 1:
            a, b, c = full[t - 1], full[t], full[t + 1]
            den = a - 2 * b + c
            if den < 0:
                lag = t + 0.5 * (a - c) / den
        f = fs / lag
        if params.f0_min <= f <= params.f0_max:
            f0[i] = f
            voiced[i] = True
    return FrameTrack(params.frame_hop, f0, voiced)


def continuous_f0(t: FrameTrack) -> FrameTrack:
    """Fill unvoiced gaps by log-linear interpolation; hold at the ends."""
    if t.continuous:
        return t
    idx = np.flatnonzero(t.voiced)
    if idx.size == 0:
        raise DomainError("cannot build a continuous F0 track without voiced frames")
    logf = np.interp(np.arange(len(t)), idx, np.log(t.f0[idx]))
    f0 = np.exp(logf)
    f0[idx] = t.f0[idx]
    return replace(t, f0=f0, continuous=True)


def scale_f0(t: FrameTrack, ratio: float, sample_rate: int) -> FrameTrack:
    """Multiply F0 by ``ratio`` (voiced frames, or every frame of a continuous track)."""
    if not ratio > 0:
        raise DomainError("F0 ratio must be positive")
    active = np.ones(len(t), dtype=bool) if t.continuous else t.voiced
    f0 = t.f0.copy()
    f0[active] = f0[active] * ratio
    if np.any(f0[active] >= sample_rate / 2):
        raise DomainError(f"scaled F0 reaches Nyquist ({sample_rate / 2} Hz)")
    return replace(t, f0=f0)


# ---------------------------------------------------------------------------
# Mel cepstrum

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (np.power(10.0, np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape (n_mels, n_fft // 2 + 1)."""
    bins = np.linspace(0, sample_rate / 2, n_fft // 2 + 1)
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bins - lo) / (mid - lo)
    down = (hi - bins) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def melcep_analyze(w: Waveform, params: FeatureParams | None = None, n_frames: int | None = None):
    """Mel-cepstra per frame: Hann window, power spectrum, mel energies, log, DCT-II.

    Returns ``(mcep, log_energy)`` with shapes (frames, mcep_dim) and (frames,).
    Coefficient 0 (overall level) is kept. Frames past the end are zero-padded.
    """
    params = params or FeatureParams.for_rate(w.sample_rate)
    if params.mcep_dim > params.n_mels:
        raise ConfigError("mcep_dim must not exceed n_mels")
    n_fft = params.n_fft or 1 << int(math.ceil(math.log2(params.frame_len)))
    frames = frame_signal(w.samples, params.frame_len, params.frame_hop, n_frames)
    windowed = frames * np.hanning(params.frame_len)
    power = np.abs(rfft(windowed, n_fft, axis=1)) ** 2
    mel = power @ mel_filterbank(params.n_mels, n_fft, w.sample_rate).T
    logmel = np.log(np.maximum(mel, LOG_FLOOR))
    mcep = dct(logmel, type=2, norm="ortho", axis=1)[:, : params.mcep_dim]
    log_energy = np.log(np.maximum(np.sum(frames ** 2, axis=1), LOG_FLOOR))
    return mcep, log_energy


def analyze(w: Waveform, params: FeatureParams | None = None) -> FrameTrack:
    """Full analysis: tracked F0 and voicing plus mel-cepstra."""
    params = params or FeatureParams.for_rate(w.sample_rate)
    track = estimate_f0(w, params)
    mcep, energy = melcep_analyze(w, params, len(track))
    return track.with_spectral(mcep, energy)


# ---------------------------------------------------------------------------
# Conditioning

def upsample(features: np.ndarray, frame_hop: int, target_len: int) -> np.ndarray:
    """Hold-upsample frame rows to ``target_len`` samples.

    Sample ``s`` takes frame ``s // frame_hop``; past the last frame the final
    row is repeated.
    """
    features = np.asarray(features)
    if features.ndim == 1:
        features = features[:, None]
    n = len(features)
    if n == 0:
        raise ShapeError("cannot upsample an empty track")
    if n * frame_hop < target_len - frame_hop:
        raise ShapeError(f"{n} frames at hop {frame_hop} cannot cover {target_len} samples")
    idx = np.minimum(np.arange(target_len) // frame_hop, n - 1)
    return features[idx]


def conditioning_frames(t: FrameTrack) -> np.ndarray:
    """Frame-rate conditioning rows: continuous log-F0, U/V flag, mcep."""
    c = continuous_f0(t)
    return np.column_stack([np.log(c.f0), c.voiced.astype(np.float64), c.mcep])


def build_conditioning(t: FrameTrack, target_len: int) -> np.ndarray:
    """Per-sample conditioning matrix of shape (target_len, 2 + D_mc)."""
    return upsample(conditioning_frames(t), t.frame_hop, target_len)


def cond_log_f0(cond: np.ndarray) -> np.ndarray:
    """The continuous log-F0 column of a conditioning matrix."""
    return np.asarray(cond)[..., 0]
