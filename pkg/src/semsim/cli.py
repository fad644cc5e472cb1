"""Command line entry point; a thin client over the pipeline functions."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, load_config
from .pipeline import (
    ledger_summary,
    run_baseline,
    run_gated,
    write_run,
    write_sweep,
)
from .scene import generate_stream, write_pgm
from .verification import report_csv, report_text, verify_all


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="YAML experiment config")
    parser.add_argument("--out", type=Path, help="output directory (default from config)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threshold", type=float, help="override the VoI threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semsim",
        description="Gated semantic transmission simulator over an F-composite fading link",
    )
    parser.add_argument("--version", action="version", version=f"semsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "single gated run at the configured threshold"),
        ("sweep", "baseline plus one gated run per sweep threshold"),
        ("baseline", "full-frame-every-tick baseline run"),
        ("verify", "run the invariant suite and report pass/fail"),
        ("gen-scene", "export scene frames and masks as PGM files"),
    ):
        _add_common(sub.add_parser(name, help=help_text))
    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ValueError("--seed must be >= 0")
        cfg.seed = args.seed
    if args.threshold is not None:
        if args.threshold < 0:
            raise ValueError("--threshold must be >= 0")
        cfg.sampler.voi_threshold = args.threshold
    if args.out is not None:
        cfg.output_dir = str(args.out)
    return cfg


def _print_summary(summary: dict) -> None:
    for key, value in summary.items():
        print(f"{key}: {value}")


def _cmd_run(cfg: ExperimentConfig) -> int:
    ledger = run_gated(cfg)
    path = write_run(ledger, cfg.output_dir, "ticks.csv")
    _print_summary(ledger_summary(ledger))
    print(f"ticks written to {path}")
    return 0


def _cmd_baseline(cfg: ExperimentConfig) -> int:
    ledger = run_baseline(cfg)
    path = write_run(ledger, cfg.output_dir, "ticks_baseline.csv")
    _print_summary(ledger_summary(ledger))
    print(f"ticks written to {path}")
    return 0


def _cmd_sweep(cfg: ExperimentConfig) -> int:
    paths = write_sweep(cfg, cfg.output_dir)
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_verify(cfg: ExperimentConfig) -> int:
    results = verify_all(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "verify_report.csv"
    report_path.write_text(report_csv(results))
    print(report_text(results), end="")
    print(f"report written to {report_path}")
    return 0 if all(r.passed for r in results) else 1


def _cmd_gen_scene(cfg: ExperimentConfig) -> int:
    from .config import build_scene

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = build_scene(cfg)
    count = 0
    for frame, mask in generate_stream(scene):
        write_pgm(out / f"frame_{frame.timestamp:04d}.pgm", frame.pixels)
        write_pgm(out / f"mask_{mask.timestamp:04d}.pgm", mask.mask * 255)
        count += 1
    print(f"wrote {count} frame/mask pairs to {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0
    try:
        cfg = _load(args)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    handlers = {
        "run": _cmd_run,
        "baseline": _cmd_baseline,
        "sweep": _cmd_sweep,
        "verify": _cmd_verify,
        "gen-scene": _cmd_gen_scene,
    }
    return handlers[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
