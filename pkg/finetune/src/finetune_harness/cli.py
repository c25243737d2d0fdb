"""CLI: finetune on a clip export, then export the inference bundle."""

from __future__ import annotations

import argparse
import sys

from .export import export_model
from .model import ModelConfig
from .train import TrainConfig, finetune


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="finetune-harness", description=__doc__)
    parser.add_argument("--export", required=True, help="clip export directory")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--epochs", type=int, default=8)
    parser.add_argument("--eval-count", type=int, default=5)
    parser.add_argument("--lr", type=float, default=3e-4)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--no-class-weighting", action="store_true")
    parser.add_argument("--model-id", default="vmae-toy")
    args = parser.parse_args(argv)

    cfg = TrainConfig(
        epochs=args.epochs,
        eval_count=args.eval_count,
        lr=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        class_weighting=not args.no_class_weighting,
        model=ModelConfig(),
    )
    result = finetune(args.export, args.out, cfg)
    print(f"best validation balanced accuracy: {result.best_bacc:.4f}")
    card = export_model(result.checkpoint_path, args.export, args.out, model_id=args.model_id)
    print(f"model card: {card}")
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
