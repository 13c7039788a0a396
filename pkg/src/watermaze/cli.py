"""Command-line interface: ``train``, ``eval`` and ``curves``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as config_mod
from . import harness
from .checkpoint import CheckpointError


def _int_list(text):
    try:
        return ",".join(str(int(v)) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _point(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    return (x, y)


def build_parser():
    parser = argparse.ArgumentParser(prog="watermaze", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model per (sequence length, run)")
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--episodes", type=int, help="episodes per run")
    p.add_argument("--seq-len", type=_int_list, help="comma-separated context lengths, e.g. 5,45,75")
    p.add_argument("--runs", type=int, help="independent runs per sequence length")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--out", type=Path, help="output directory")

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--trajectories", type=Path, help="directory for per-episode trajectory files")
    p.add_argument("--config", type=Path, help="config file (default: config.txt beside the checkpoint)")
    p.add_argument("--platform", type=_point, help="platform centre 'x,y' (default: from manifest.csv)")
    p.add_argument("--seed", type=int, default=0, help="seed for start positions")
    p.add_argument("--report", type=Path, help="also write the JSON report here")

    p = sub.add_parser("curves", help="EMA-smoothed reward/step curves from metrics files")
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--out", type=Path, required=True)
    return parser


def cmd_train(args):
    overrides = {}
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if args.seq_len is not None:
        overrides["seq_lens"] = args.seq_len
    if args.runs is not None:
        overrides["runs"] = args.runs
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = str(args.out)
    cfg = config_mod.load(args.config, overrides)

    def progress(e):
        logging.getLogger("watermaze.train").debug(
            "episode %d steps=%d reward=%.4f eps=%.3f", e.episode, e.steps, e.total_reward, e.epsilon
        )

    manifest = harness.train_all(cfg, progress)
    print(f"wrote {len(manifest)} artifacts to {cfg.out}")


def cmd_eval(args):
    cfg = config_mod.load(args.config) if args.config else None
    report = harness.evaluate_checkpoint(
        args.checkpoint, args.episodes, cfg=cfg, platform=args.platform, seed=args.seed,
        trajectories=args.trajectories,
    )
    text = report.to_json()
    if args.report:
        args.report.write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_curves(args):
    if not 0.0 < args.alpha <= 1.0:
        raise ValueError("--alpha must lie in (0, 1]")
    harness.export_curves(args.in_dir, args.alpha, args.out)
    print(f"wrote {args.out}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    handler = {"train": cmd_train, "eval": cmd_eval, "curves": cmd_curves}[args.command]
    try:
        handler(args)
    except (config_mod.ConfigError, CheckpointError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
