"""Command-line entry point: ``qpnet <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import nullcontext
from fractions import Fraction
from pathlib import Path

from .dilation import PRESETS, dilation_factor, preset, receptive_field
from .errors import QPNetError

log = logging.getLogger("qpnet")

SWEEP_F0 = (50, 60, 80, 100, 150, 200, 250, 300, 400, 500)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI-style run configuration")
    p.add_argument("--preset", help=f"architecture preset ({', '.join(PRESETS)})")
    p.add_argument("--seed", type=int, help="single source of all randomness")
    p.add_argument("--threads", type=int, default=1, help="BLAS thread cap (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpnet", description="Quasi-periodic WaveNet vocoder toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="render a synthetic corpus with WAV, QPF1 and a manifest")
    _common(p)
    p.add_argument("--n", type=int, required=True, help="number of utterances")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("extract", help="analyse WAV files into QPF1 feature files")
    _common(p)
    p.add_argument("wavs", nargs="+")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train a model from a manifest")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--crop-len", type=int)

    p = sub.add_parser("generate", help="synthesize a waveform from a feature file")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True, help="QPF1 feature file")
    p.add_argument("--out", required=True, help="output WAV path")
    p.add_argument("--ratio", default="1", help="F0 scaling ratio, e.g. 3/2")
    p.add_argument("--mode", choices=("argmax", "sample"))

    p = sub.add_parser("eval", help="F0-scaling experiment: log-F0 RMSE and MCD per ratio")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory (report.csv, audio)")
    p.add_argument("--ratios", help="comma-separated ratios; default is the ten-ratio table")
    p.add_argument("--mode", choices=("argmax", "sample"))
    p.add_argument("--limit", type=int, help="evaluate only the first N utterances")

    p = sub.add_parser("rf-analyze", help="print receptive-field lengths per preset and F0")
    _common(p)
    p.add_argument("--f0", default=None, help="F0 in Hz or 'sweep' (adaptive presets)")
    return parser


def _resolve(args, extra: dict | None = None):
    from .config import RunConfig

    run = {"preset": args.preset, "seed": args.seed}
    return RunConfig.resolve(args.config, {"run": run, **(extra or {})})


def cmd_synth_corpus(args) -> int:
    from .corpus import write_corpus

    rc = _resolve(args)
    if args.n < 0:
        raise QPNetError("--n must be non-negative")
    manifest = write_corpus(args.out, args.n, rc.seed, rc.corpus, rc.features)
    rc.write_echo(args.out)
    print(manifest)
    return 0


def cmd_extract(args) -> int:
    from .features import analyze
    from .frames import save_track
    from .signal import read_wav

    rc = _resolve(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for wav in args.wavs:
        w = read_wav(wav)
        if w.sample_rate != rc.net.sample_rate:
            raise QPNetError(f"{wav}: {w.sample_rate} Hz audio, configuration expects {rc.net.sample_rate} Hz")
        track = analyze(w, rc.features)
        dest = out / (Path(wav).stem + ".qpf")
        save_track(dest, track)
        print(dest)
    rc.write_echo(out)
    return 0


def cmd_train(args) -> int:
    from .train import train_loop

    train = {"max_steps": args.steps, "learning_rate": args.lr, "batch_size": args.batch_size,
             "crop_len": args.crop_len}
    rc = _resolve(args, {"train": train})
    out = Path(args.out)
    rc.write_echo(out)
    _, losses = train_loop(rc.net, rc.train, args.manifest, out, extra_echo={"run": {"preset": rc.preset}})
    print(f"trained {len(losses)} steps, final loss {losses[-1][1]:.4f}" if losses else "trained 0 steps")
    print(out / "model.qpw")
    return 0


def _load_model(path):
    from .checkpoint import load_checkpoint

    params, _, _ = load_checkpoint(path)
    return params


def cmd_generate(args) -> int:
    from .dilation import build_plan
    from .features import build_conditioning, scale_f0
    from .frames import load_track
    from .generate import generate
    from .signal import write_wav

    rc = _resolve(args, {"generate": {"mode": args.mode}})
    params = _load_model(args.checkpoint)
    track = load_track(args.features)
    ratio = Fraction(args.ratio)
    fs = params.config.sample_rate
    if ratio != 1:
        track = scale_f0(track, float(ratio), fs)
    n = len(track) * track.frame_hop
    cond = build_conditioning(track, n)
    wave = generate(params, cond, build_plan(params.config, cond), mode=rc.mode, seed=rc.seed)
    write_wav(args.out, wave)
    rc.write_echo(Path(args.out).parent)
    print(args.out)
    return 0


def cmd_eval(args) -> int:
    from .evaluate import model_synthesizer, scaling_experiment

    rc = _resolve(args, {"generate": {"mode": args.mode}, "eval": {"ratios": args.ratios}})
    params = _load_model(args.checkpoint)
    out = Path(args.out)
    rc.write_echo(out)
    report = scaling_experiment(model_synthesizer(params, rc.mode, rc.seed), args.manifest, rc.ratios,
                                fp=rc.features, out_dir=out / "audio", limit=args.limit)
    report.write_csv(out / "report.csv")
    print("# log-F0 RMSE uses the natural logarithm; MCD excludes c0")
    print((out / "report.csv").read_text(), end="")
    return 0


def rf_table(names, f0) -> list[tuple[str, str, str, int]]:
    rows = []
    for name in names:
        cfg = preset(name)
        if cfg.n_adaptive == 0:
            rows.append((name, "-", "-", receptive_field(cfg)))
            continue
        if f0 is None or f0 == "sweep":
            points = SWEEP_F0
        else:
            points = (float(f0),)
        for f in points:
            e = dilation_factor(f, cfg.sample_rate, cfg.a, (min(cfg.f0_floor, f), max(cfg.f0_ceil, f)))
            rows.append((name, f"{f:g}", str(e), receptive_field(cfg, e)))
    return rows


def cmd_rf_analyze(args) -> int:
    names = [args.preset] if args.preset else ["wnf", "wnc", "qpnet"]
    for name in names:
        preset(name)  # validates the name
    print(f"{'preset':<12}{'f0_hz':>8}{'E':>6}{'receptive_field':>18}")
    for name, f, e, rf in rf_table(names, args.f0):
        print(f"{name:<12}{f:>8}{e:>6}{rf:>18}")
    return 0


COMMANDS = {
    "synth-corpus": cmd_synth_corpus,
    "extract": cmd_extract,
    "train": cmd_train,
    "generate": cmd_generate,
    "eval": cmd_eval,
    "rf-analyze": cmd_rf_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=max(1, args.threads))
    except ImportError:  # pragma: no cover
        limiter = nullcontext()
    try:
        with limiter:
            return COMMANDS[args.command](args)
    except QPNetError as exc:
        print(f"qpnet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"qpnet {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
