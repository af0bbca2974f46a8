#!/usr/bin/env python3
"""Collapse A/B experiment: EMA target branch with stop-gradient versus a
co-trained (shared-weights) target branch, tracked by spread diagnostics.

Usage:
    python3 scripts/run_collapse_ab.py --graphs 50 --epochs 4 --seeds 5
"""

import argparse
import json

from graph_jepa.graphs import random_graph_dataset
from graph_jepa.training import TrainConfig, collapse_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--graphs", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=4)
    ap.add_argument("--d", type=int, default=32)
    ap.add_argument("--parts", type=int, default=4)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default=None, help="optional JSON report path")
    args = ap.parse_args()

    ds = random_graph_dataset(args.graphs, seed=7)
    cfg = TrainConfig(epochs=args.epochs, lr=1e-3, batch_graphs=1, p=args.parts,
                      m=1, k=8, d=args.d, B=2, L=2, seed=0)
    report = collapse_experiment(ds, cfg, seeds=tuple(range(args.seeds)))

    for mode in ("ema", "shared"):
        for run in report[mode]:
            final = run["trajectory"][-1]
            print(f"{mode} seed {run['seed']}: embedding_std {final['embedding_std']:.4f}, "
                  f"psi_std {final['psi_std']:.4f}, "
                  f"effective_rank {final['effective_rank']:.2f}")

    ema_final = [r["trajectory"][-1]["embedding_std"] for r in report["ema"]]
    shared_final = [r["trajectory"][-1]["embedding_std"] for r in report["shared"]]
    lower = sum(1 for s, e in zip(shared_final, ema_final) if s < e)
    print(f"shared run ends below the EMA run in {lower}/{args.seeds} seeds")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
        print(f"report written to {args.out}")


if __name__ == "__main__":
    main()
