"""Desk-scale deconvolution run: train F then G on synthetic pairs, score held-out PSNR.

Defaults are the acceptance settings (filters 8, 500 pairs of 64x64,
5,000 + 5,000 steps, N = 5). Pass smaller --iters for a quick look.
"""
import argparse
import json
import logging
from pathlib import Path

from golfopt.experiment import DeskConfig, run_desk
from golfopt.golf import GolfConfig
from golfopt.trainer import TrainConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default="runs/desk")
    parser.add_argument("--iters-f", type=int, default=5000)
    parser.add_argument("--iters-g", type=int, default=5000)
    parser.add_argument("--filters", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--no-f-skip", action="store_true", help="F without the global input skip")
    parser.add_argument("--random-g-init", action="store_true", help="G output conv keeps its random init")
    parser.add_argument("--checkpoint-every", type=int, default=1000)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    model = GolfConfig(
        filters_f=args.filters,
        filters_g=args.filters,
        seed=args.seed,
        f_skip=not args.no_f_skip,
        g_zero_init=not args.random_g_init,
    )
    train = TrainConfig(
        iters_f=args.iters_f,
        iters_g=args.iters_g,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        model=model,
    )
    result = run_desk(DeskConfig(train=train), Path(args.out))
    summary = {k: v for k, v in result.items() if k not in ("per_pair", "config")}
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
