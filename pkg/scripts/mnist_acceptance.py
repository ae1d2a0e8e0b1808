#!/usr/bin/env python3
"""Multi-seed representation scorer for the MNIST-lite experiment.

Trains one run per seed with the given config (seed overridden), then
scores the first eval_samples images: matched reconstruction L2 at least
20% below the shuffled-pair baseline, 5-NN label agreement of the latents
>= 0.35.

Usage:
    python scripts/mnist_acceptance.py --config configs/mnist_lite.yaml --seeds 0 1 2 [--need 2]
"""
import argparse
import copy
import json
import sys
import time

from ivegan.cli import evaluate
from ivegan.config import Experiment, architecture, load_config, train_config
from ivegan.data import ImageSource, mnist_lite
from ivegan.log import setup_logging
from ivegan.model import new_state, snapshot_rng, train

MIN_GAP = 0.20
MIN_KNN = 0.35


def run_seed(base, images: ImageSource, seed: int):
    cfg = copy.deepcopy(base)
    cfg.train.seed = seed
    tcfg = train_config(cfg, images.shape)
    arch = architecture(cfg, images.data_dim)
    state = new_state(tcfg, arch)
    train(tcfg, images, arch, state)
    return evaluate(cfg, state.model, snapshot_rng(seed, state.iteration), images)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--config", default="configs/mnist_lite.yaml")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--need", type=int, default=2, help="seeds that must pass")
    p.add_argument("--json", help="write per-seed reports here")
    args = p.parse_args()

    setup_logging()
    base = load_config(args.config)
    if base.experiment is not Experiment.mnist_lite:
        raise SystemExit(f"{args.config}: not an mnist_lite config")
    mn = base.mnist
    images = ImageSource.from_labeled(mnist_lite(mn.images, mn.labels, limit=mn.limit, factor=mn.downscale))

    results = {}
    passed = 0
    for seed in args.seeds:
        t0 = time.time()
        report = run_seed(base, images, seed)
        ok = report.reconstruction_gap >= MIN_GAP and report.knn_agreement >= MIN_KNN
        passed += ok
        results[seed] = dict(report.to_dict(), passed=ok, seconds=round(time.time() - t0, 1))
        print(
            f"seed {seed}: gap={report.reconstruction_gap:.3f} "
            f"knn={report.knn_agreement:.3f} (chance {report.chance_agreement:.3f}) "
            f"-> {'PASS' if ok else 'FAIL'} ({results[seed]['seconds']}s)"
        )

    print(f"{passed} / {len(args.seeds)} seeds pass (need {args.need})")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(results, f, indent=2, sort_keys=True)
    sys.exit(0 if passed >= args.need else 1)


if __name__ == "__main__":
    main()
