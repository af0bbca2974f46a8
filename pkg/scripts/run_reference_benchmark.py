#!/usr/bin/env python3
"""Pretrain + 10-fold linear probe on a TU-format benchmark dataset
(e.g. MUTAG placed under data/MUTAG), repeated over several seeds.

Usage:
    python3 scripts/run_reference_benchmark.py --data data/MUTAG --seeds 3
"""

import argparse
import os
import sys

import numpy as np

from graph_jepa.graphs import graph_stats, load_dataset
from graph_jepa.probe import cross_validate
from graph_jepa.training import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default="data/MUTAG", help="TU-format dataset directory")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--d", type=int, default=128)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--loss", default="hyperbola",
                    choices=["hyperbola", "euclidean", "poincare"])
    ap.add_argument("--pe", default="node_max", choices=["node_max", "relative_patch"])
    args = ap.parse_args()

    if not os.path.isdir(args.data):
        sys.exit(f"dataset directory {args.data!r} not found; place the TU-format "
                 "files (<NAME>_A.txt etc.) there first")

    ds = load_dataset(args.data, format="tu_format")
    stats = graph_stats(ds)
    labels = [int(g.label) for g in ds.graphs]
    majority = max(np.bincount(labels)) / len(labels)
    print(f"{stats['num_graphs']} graphs, {stats['num_classes']} classes, "
          f"avg nodes {stats['avg_nodes']:.2f}, majority baseline {majority:.4f}")

    accs = []
    for seed in range(args.seeds):
        cfg = TrainConfig(epochs=args.epochs, lr=1e-3, batch_graphs=4, p=4, m=2,
                          k=15, d=args.d, B=4, L=2, loss_kind=args.loss,
                          pe_kind=args.pe, seed=seed)
        model, log = train(ds, cfg)
        report = cross_validate(ds, model, cfg, folds=args.folds, runs=1, seeds=[seed])
        accs.append(report.mean)
        print(f"seed {seed}: final loss {log[-1]['loss']:.4f}, "
              f"accuracy {report.mean:.4f} +- {report.std:.4f}")
    print(f"mean accuracy over {args.seeds} seeds: {np.mean(accs):.4f} "
          f"(majority baseline {majority:.4f})")


if __name__ == "__main__":
    main()
