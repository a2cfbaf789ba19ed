from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from app.config import load_config, settings
from app.errors import ConfigError, KitsuneDriveError
from app.jobs.ablate import PRESETS, cmd_ablate
from app.jobs.bench import cmd_bench
from app.jobs.evaluate import cmd_eval
from app.jobs.gen_data import cmd_gen_data
from app.jobs.pretrain import cmd_pretrain
from app.jobs.report import cmd_report
from app.jobs.train import cmd_train
from app.models import StageName

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kitsune-drive", description="Unified causal decoder experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", type=Path, required=True, help="experiment YAML file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, help="override the output directory")
        return p

    command("gen-data", "write the train/val/test scene splits")
    command("pretrain", "pretrain the toy VLM that serves as the transfer source")
    train = command("train", "run the staged training pipeline")
    train.add_argument("--stage", choices=[str(s) for s in StageName], help="run only this configured stage")
    train.add_argument("--checkpoint", type=Path, help="continue from a decoder checkpoint")
    evaluate = command("eval", "evaluate a checkpoint on the test split")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    bench = command("bench-latency", "time FULL against TRUNCATED forwards")
    bench.add_argument("--checkpoint", type=Path)
    ablate = command("ablate", "run an ablation preset")
    ablate.add_argument("--preset", required=True, help=f"one of: {', '.join(PRESETS)}")
    ablate.add_argument("--dry-run", action="store_true", help="list the planned runs without training")
    report = command("report", "render plots for a run directory")
    report.add_argument("--dir", type=Path, help="run directory (default: the output directory)")
    return parser


def run(args: argparse.Namespace) -> None:
    cfg = load_config(args.config, seed=args.seed, output_dir=args.out)
    match args.command:
        case "gen-data":
            cmd_gen_data(cfg)
        case "pretrain":
            cmd_pretrain(cfg)
        case "train":
            cmd_train(cfg, stage=args.stage, checkpoint=args.checkpoint)
        case "eval":
            cmd_eval(cfg, args.checkpoint)
        case "bench-latency":
            cmd_bench(cfg, args.checkpoint)
        case "ablate":
            cmd_ablate(cfg, args.preset, dry_run=args.dry_run)
        case "report":
            cmd_report(args.dir or cfg.output_dir)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        run(args)
    except ConfigError as exc:
        log.error("Configuration error: %s", exc, exc_info=True)
        return EXIT_CONFIG
    except (KitsuneDriveError, OSError) as exc:
        log.error("%s failed: %s", args.command, exc, exc_info=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
