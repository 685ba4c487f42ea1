"""Command-line front end.

Subcommands: make-data, train, generate, eval, ablate, plot. Exit codes:
0 success, 2 validation error, 3 dependency error. DFA_THREADS caps render
parallelism.
"""

import argparse
import json
import sys
from pathlib import Path

from . import metrics, pipeline, synthdata
from .errors import DependencyError, TalkingHeadError, ValidationError


def _load_json(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text("utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"bad JSON in {path}: {exc}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="talkinghead")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with dataset options")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train one pipeline stage")
    p.add_argument("--stage", required=True, choices=pipeline.STAGES)
    p.add_argument("--config", help="JSON pipeline config")

    p = sub.add_parser("generate", help="generate frames from audio and a prefix")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--audio", required=True, help="container with an audio_raw array")
    p.add_argument("--bop", required=True, help="container with a prefix source")
    p.add_argument("--checkpoints", required=True, help="run directory with checkpoints/")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, help="limit the generation horizon")
    p.add_argument("--samples", type=int, help="override samples per ray")

    p = sub.add_parser("eval", help="evaluate generated frames against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--checkpoints")

    p = sub.add_parser("ablate", help="run the VAE/audio ablation grid")
    p.add_argument("--config", help="JSON pipeline config")

    p = sub.add_parser("plot", help="emit plots for a report or a run directory")
    p.add_argument("--report")
    p.add_argument("--run")
    p.add_argument("--out", required=True)
    return parser


def run(args):
    if args.command == "make-data":
        cfg = _load_json(args.config)
        out = synthdata.generate_dataset(cfg, args.seed, args.out)
        print(f"dataset written to {out}")
        return

    if args.command == "train":
        config = pipeline.resolve_config(_load_json(args.config))
        record = pipeline.run_stage(args.stage, config)
        print(
            f"stage {args.stage}: final loss "
            f"{record['final_losses'].get('loss', float('nan')):.6g} "
            f"({record['wall_clock_s']:.1f}s), checkpoint {record['checkpoint_hash'][:12]}"
        )
        return

    if args.command == "generate":
        out = pipeline.generate_video(
            args.checkpoints, args.audio, args.bop, args.seed, args.out,
            frames=args.frames, n_samples=args.samples,
        )
        print(f"frames written to {out}")
        return

    if args.command == "eval":
        report = pipeline.evaluate(args.pred, args.gt, args.report, args.checkpoints)
        print(f"report written to {args.report}")
        print(report.to_json())
        return

    if args.command == "ablate":
        config = pipeline.resolve_config(_load_json(args.config))
        cells = pipeline.ablation_grid(config)
        table = Path(config["out_root"]) / "ablation" / "table.txt"
        print(table.read_text("utf-8"))
        return

    if args.command == "plot":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.report:
            report = metrics.EvalReport.from_json(Path(args.report).read_text("utf-8"))
            pipeline.plot_report(report, out / "report.png")
            print(f"wrote {out / 'report.png'}")
        if args.run:
            pipeline.plot_run(args.run, out / "losses.png")
            print(f"wrote {out / 'losses.png'}")
        if not args.report and not args.run:
            raise ValidationError("plot needs --report and/or --run")
        return


def main(argv=None):
    pipeline.apply_thread_cap()
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, TalkingHeadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
