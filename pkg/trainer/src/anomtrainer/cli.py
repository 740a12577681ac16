"""Command line entry points: ``anomtrain train`` and ``anomtrain infer``.

Exit codes: 0 success, 1 bad usage or configuration, 2 runtime failure.
"""

import argparse
import sys
from dataclasses import replace

from .config import TrainConfig, desk_config
from .errors import TrainerConfigError, TrainerError
from .infer import infer_windows
from .train import train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="anomtrain",
                     description="Desk-scale interpolation-factor trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", parents=[], help="train per-fold models")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--desk", action="store_true",
                         help="small network and patch defaults for CPU runs")
    p_train.add_argument("--steps", type=int)
    p_train.add_argument("--patch", type=int, help="cubic patch edge length")
    p_train.add_argument("--folds", type=int)
    p_train.add_argument("--batch", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_train.add_argument("--stop-after", type=int,
                         help="pause at this absolute step")

    p_infer = sub.add_parser("infer", help="emit per-window score files")
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--volume", required=True)
    p_infer.add_argument("--out", required=True)
    p_infer.add_argument("--overlap", type=float, default=0.5)
    p_infer.add_argument("--batch", type=int, default=4)
    return parser


def _train_config(args) -> TrainConfig:
    config = desk_config() if args.desk else TrainConfig()
    overrides = {}
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.patch is not None:
        overrides["patch_size"] = (args.patch,) * 3
    if args.folds is not None:
        overrides["folds"] = args.folds
    if args.batch is not None:
        overrides["batch_size"] = args.batch
    if args.seed is not None:
        overrides["seed"] = args.seed
    return replace(config, **overrides) if overrides else config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            summary = train(_train_config(args), args.manifest, args.out,
                            resume=args.resume, stop_after=args.stop_after)
            for fold in summary["folds"]:
                print(f"fold {fold['fold']}: step {fold['step']} "
                      f"loss {fold['first_loss']:.4f} -> {fold['final_loss']:.4f} "
                      f"({fold['checkpoint']})")
        else:
            out = infer_windows(args.checkpoint, args.volume, args.out,
                                overlap=args.overlap, batch_size=args.batch)
            print(f"windows written to {out}")
    except TrainerConfigError as exc:
        print(f"anomtrain: {exc}", file=sys.stderr)
        return 1
    except TrainerError as exc:
        print(f"anomtrain: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"anomtrain: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
