"""Objective metrics and the F0-scaling experiment.

log-F0 uses the natural logarithm. MCD excludes coefficient 0 and uses the
usual (10 / ln 10) * sqrt(2 * sum of squares) scaling.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import read_manifest
from .dilation import build_plan
from .errors import ShapeError
from .features import FeatureParams, build_conditioning, estimate_f0, melcep_analyze, scale_f0
from .frames import FrameTrack, load_track
from .generate import generate
from .net import ModelParams
from .signal import Waveform, read_wav

log = logging.getLogger(__name__)

MCD_SCALE = 10.0 / math.log(10.0) * math.sqrt(2.0)
TABLE_RATIOS = tuple(Fraction(s) for s in ("1", "1/2", "2/3", "3/4", "4/5", "6/5", "5/4", "4/3", "3/2", "2"))


def _co_voiced_sq(cond: FrameTrack, extracted: FrameTrack) -> np.ndarray:
    if len(cond) != len(extracted):
        raise ShapeError(f"frame counts differ: {len(cond)} vs {len(extracted)}")
    mask = cond.voiced & extracted.voiced & (cond.f0 > 0) & (extracted.f0 > 0)
    return (np.log(cond.f0[mask]) - np.log(extracted.f0[mask])) ** 2


def logf0_rmse(cond: FrameTrack, extracted: FrameTrack) -> tuple[float | None, int]:
    """RMSE of natural-log F0 over frames voiced in both tracks.

    Returns ``(rmse, n_frames)``; rmse is None when no frame is co-voiced.
    """
    sq = _co_voiced_sq(cond, extracted)
    if sq.size == 0:
        return None, 0
    return float(np.sqrt(sq.mean())), int(sq.size)


def mcd_frames(a, b) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise ShapeError(f"mel-cepstra shapes differ: {a.shape} vs {b.shape}")
    diff = a[:, 1:] - b[:, 1:]
    return MCD_SCALE * np.sqrt(np.sum(diff ** 2, axis=1))


def mcd(cond_mcep, extracted_mcep) -> float:
    """Mean mel-cepstral distortion in dB (coefficient 0 excluded)."""
    return float(np.mean(mcd_frames(cond_mcep, extracted_mcep)))


# ---------------------------------------------------------------------------
# Scaling experiment

@dataclass
class RatioRow:
    ratio: Fraction
    logf0_rmse: float | None
    mcd: float | None
    voiced_frames: int
    error: str | None = None


@dataclass
class MetricReport:
    rows: list[RatioRow] = field(default_factory=list)

    def average(self) -> RatioRow:
        ok = [r for r in self.rows if r.error is None]
        rm = [r.logf0_rmse for r in ok if r.logf0_rmse is not None]
        md = [r.mcd for r in ok if r.mcd is not None]
        return RatioRow(
            Fraction(0),
            float(np.mean(rm)) if rm else None,
            float(np.mean(md)) if md else None,
            int(round(np.mean([r.voiced_frames for r in ok]))) if ok else 0,
        )

    def row(self, ratio) -> RatioRow:
        ratio = Fraction(ratio).limit_denominator(1000)
        for r in self.rows:
            if r.ratio == ratio:
                return r
        raise KeyError(ratio)

    def write_csv(self, path: str | Path) -> None:
        def fmt(v):
            return "undefined" if v is None else f"{v:.6f}"

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ratio", "logf0_rmse", "mcd_db", "voiced_frames"])
            for r in self.rows:
                if r.error is not None:
                    w.writerow([str(r.ratio), "error", "error", f"error: {r.error}"])
                else:
                    w.writerow([str(r.ratio), fmt(r.logf0_rmse), fmt(r.mcd), r.voiced_frames])
            avg = self.average()
            w.writerow(["average", fmt(avg.logf0_rmse), fmt(avg.mcd), avg.voiced_frames])


Synthesizer = Callable[[Waveform, FrameTrack, Fraction], Waveform]


def copy_synthesizer(source: Waveform, track: FrameTrack, ratio: Fraction) -> Waveform:
    """Replays the source audio regardless of conditioning (loop-back oracle)."""
    return source


def model_synthesizer(params: ModelParams, mode: str = "argmax", seed: int = 0) -> Synthesizer:
    def synth(source: Waveform, track: FrameTrack, ratio: Fraction) -> Waveform:
        cond = build_conditioning(track, len(source))
        return generate(params, cond, build_plan(params.config, cond), mode=mode, seed=seed)

    return synth


def scaling_experiment(synthesize: Synthesizer, manifest: str | Path, ratios: Sequence = TABLE_RATIOS,
                       fp: FeatureParams | None = None, out_dir: str | Path | None = None,
                       limit: int | None = None) -> MetricReport:
    """Scale each utterance's F0, resynthesize, re-analyse and pool the metrics per ratio.

    Frames from all utterances are pooled within a ratio row. Generated audio
    is written under ``out_dir`` when given.
    """
    pairs = read_manifest(manifest)[:limit]
    sources = [(read_wav(w), load_track(f), w.stem) for w, f in pairs]
    report = MetricReport()
    for ratio in ratios:
        ratio = Fraction(ratio).limit_denominator(1000)
        sq_parts, mcd_parts = [], []
        try:
            for wave, track, name in sources:
                fparams = fp or FeatureParams.for_rate(wave.sample_rate, mcep_dim=track.mcep_dim)
                cond_track = scale_f0(track, float(ratio), wave.sample_rate)
                out = synthesize(wave, cond_track, ratio)
                if out_dir is not None:
                    from .signal import write_wav

                    Path(out_dir).mkdir(parents=True, exist_ok=True)
                    tag = str(ratio).replace("/", "-")
                    write_wav(Path(out_dir) / f"{name}_r{tag}.wav", out)
                extracted = estimate_f0(out, fparams)
                mcep, _ = melcep_analyze(out, fparams, len(track))
                if len(extracted) != len(cond_track):
                    raise ShapeError("generated audio analysed to a different frame count")
                sq_parts.append(_co_voiced_sq(cond_track, extracted))
                mcd_parts.append(mcd_frames(track.mcep, mcep))
        except Exception as exc:  # noqa: BLE001 - recorded in the report row
            log.error("ratio %s failed: %s", ratio, exc)
            report.rows.append(RatioRow(ratio, None, None, 0, error=str(exc)))
            continue
        sq = np.concatenate(sq_parts) if sq_parts else np.zeros(0)
        rmse = float(np.sqrt(sq.mean())) if sq.size else None
        md = float(np.mean(np.concatenate(mcd_parts))) if mcd_parts else None
        report.rows.append(RatioRow(ratio, rmse, md, int(sq.size)))
        log.info("ratio %s: logf0_rmse=%s mcd=%s frames=%d", ratio, rmse, md, sq.size)
    return report
