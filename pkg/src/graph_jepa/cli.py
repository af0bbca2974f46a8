"""Command-line entry point: partition / posenc / pretrain / probe / wl-test /
collapse-experiment."""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from .graphs import (
    GraphDataset,
    GraphError,
    ParseError,
    generate_csl,
    graph_stats,
    load_dataset,
    random_graph_dataset,
    wl1_color_histogram,
)
from .models import JepaModel
from .partition import edge_cut, expand_one_hop, partition_multilevel, partition_random
from .posenc import patch_pe_max, patch_pe_relative, rwse_nodes
from .probe import cross_validate
from .training import TrainConfig, collapse_experiment, train

VERSION = "graph-jepa-0.1.0"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _load_graph_arg(spec):
    """Accept 'csl:n:skip' inline or a path to a single-graph jsonl file."""
    if spec.startswith("csl:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise GraphError(f"bad csl spec {spec!r}, expected csl:n:skip")
        return generate_csl(int(parts[1]), int(parts[2]))
    ds = load_dataset(spec, format="tu_format" if os.path.isdir(spec) else "edge_list_jsonl")
    return ds.graphs[0]


def _load_dataset_arg(spec, format=None):
    if spec.startswith("csl:"):
        # csl:n:skip1,skip2,...:count_per_class -> labeled synthetic dataset
        parts = spec.split(":")
        n = int(parts[1])
        skips = [int(s) for s in parts[2].split(",")]
        count = int(parts[3]) if len(parts) > 3 else 1
        graphs = []
        for label, skip in enumerate(skips):
            g = generate_csl(n, skip)
            for _ in range(count):
                graphs.append(
                    type(g)(g.num_nodes, g.edges, g.node_features, g.edge_features, label)
                )
        return GraphDataset(tuple(graphs), "classification",
                            num_classes=len(skips), name=spec)
    if spec.startswith("toy:"):
        parts = spec.split(":")
        return random_graph_dataset(int(parts[1]), int(parts[2]) if len(parts) > 2 else 0)
    fmt = format or ("tu_format" if os.path.isdir(spec) else "edge_list_jsonl")
    return load_dataset(spec, format=fmt)


def _cmd_partition(args):
    g = _load_graph_arg(args.input)
    if args.method == "random":
        ps = partition_random(g, args.parts, args.seed)
    else:
        ps = partition_multilevel(g, args.parts, args.seed)
    cut = edge_cut(g, ps)
    expanded = expand_one_hop(g, ps)
    out = {
        "parts": args.parts,
        "method": args.method,
        "edge_cut": cut,
        "cores": [list(p.node_ids) for p in ps.patches],
        "expanded": [list(p.node_ids) for p in expanded.patches],
    }
    if args.emit_json:
        print(json.dumps(out))
    else:
        print(f"edge cut: {cut}")
        for i, core in enumerate(out["cores"]):
            print(f"patch {i}: core={core} expanded={out['expanded'][i]}")
    return 0


def _cmd_posenc(args):
    g = _load_graph_arg(args.input)
    if args.level == "node":
        enc = rwse_nodes(g, args.order)
        print(json.dumps({"level": "node", "order": args.order,
                          "matrix": enc.per_node.tolist()}))
        return 0
    ps = expand_one_hop(g, partition_multilevel(g, args.parts, args.seed))
    if args.level == "patch":
        pe = patch_pe_max(rwse_nodes(g, args.order), ps)
    else:
        pe = patch_pe_relative(g, ps, args.order)
    print(json.dumps({"level": args.level, "order": args.order,
                      "matrix": pe.per_patch.tolist()}))
    return 0


def _parse_config_file(path):
    if not os.path.exists(path):
        raise ParseError(f"config file not found: {path}")
    raw = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value
    dataset = raw.pop("dataset", None)
    fmt = raw.pop("format", None)
    if dataset is None:
        raise ParseError(f"{path}: missing 'dataset' key")
    kwargs = {}
    for f in fields(TrainConfig):
        if f.name in raw:
            kwargs[f.name] = _coerce(raw.pop(f.name), f.default)
    if raw:
        raise ParseError(f"{path}: unknown keys {sorted(raw)}")
    return dataset, fmt, TrainConfig(**kwargs)


def _coerce(value, default):
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def _cmd_pretrain(args):
    dataset_spec, fmt, cfg = _parse_config_file(args.config)
    ds = _load_dataset_arg(dataset_spec, fmt)
    manifest_path = args.out + ".manifest.json"
    for path in (args.out, manifest_path):
        if os.path.exists(path):
            raise ParseError(f"refusing to overwrite existing {path}")
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    model, log = train(ds, cfg)
    model.save(args.out)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            for row in log:
                fh.write(json.dumps(row) + "\n")
    manifest = {
        "version": VERSION,
        "config": asdict(cfg),
        "dataset": dataset_spec,
        "seed": cfg.seed,
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": {"checkpoint": args.out, "log": args.log},
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"checkpoint written to {args.out} (final loss {log[-1]['loss']:.6f})")
    return 0


def _cmd_probe(args):
    model = JepaModel.load(args.checkpoint)
    ds = _load_dataset_arg(args.dataset)
    if args.task == "cls" and ds.task != "classification":
        raise ParseError("dataset has no classification labels")
    if args.task == "reg" and ds.task != "regression":
        raise ParseError("dataset has no regression targets")
    mc = model.config
    cfg = TrainConfig(p=args.parts, m=1, k=mc.k, d=mc.d, B=mc.blocks, L=mc.gnn_layers,
                      partition_method=args.method, pe_kind=args.pe, seed=args.seed)
    report = cross_validate(ds, model, cfg, folds=args.folds, runs=args.runs)
    payload = report.to_dict()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    print(f"{report.metric}: {report.mean:.4f} +- {report.std:.4f} "
          f"({report.folds} folds x {report.runs} runs)")
    return 0


def _cmd_wl_test(args):
    ga = _load_graph_arg(args.a)
    gb = _load_graph_arg(args.b)
    ha = wl1_color_histogram(ga, rounds=args.rounds)
    hb = wl1_color_histogram(gb, rounds=args.rounds)
    if ha == hb:
        print("1-WL: indistinguishable")
    else:
        print("1-WL: distinguishable")
    return 0


def _cmd_collapse(args):
    ds = random_graph_dataset(args.graphs, seed=7)
    cfg = TrainConfig(epochs=args.epochs, p=args.parts, m=1, k=8, d=args.d, B=2, L=2,
                      batch_graphs=1, seed=0)
    report = collapse_experiment(ds, cfg, seeds=tuple(range(args.seeds)))
    payload = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        print(payload)
    for mode in ("ema", "shared"):
        finals = [r["trajectory"][-1]["embedding_std"] for r in report[mode]]
        print(f"{mode}: final embedding_std per seed = "
              + ", ".join(f"{v:.4f}" for v in finals))
    return 0


def build_parser():
    parser = _Parser(prog="graph-jepa")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("partition", help="partition a graph into patches")
    sp.add_argument("--input", required=True)
    sp.add_argument("--parts", type=int, required=True)
    sp.add_argument("--method", choices=["metis", "random"], default="metis")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--emit-json", action="store_true")
    sp.set_defaults(fn=_cmd_partition)

    sp = sub.add_parser("posenc", help="random-walk structural encodings")
    sp.add_argument("--input", required=True)
    sp.add_argument("--order", type=int, required=True)
    sp.add_argument("--level", choices=["node", "patch", "relative"], default="node")
    sp.add_argument("--parts", type=int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=_cmd_posenc)

    sp = sub.add_parser("pretrain", help="self-supervised pretraining")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--log", default=None)
    sp.set_defaults(fn=_cmd_pretrain)

    sp = sub.add_parser("probe", help="linear probe on frozen embeddings")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--task", choices=["cls", "reg"], required=True)
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--runs", type=int, default=5)
    sp.add_argument("--parts", type=int, default=4)
    sp.add_argument("--method", choices=["metis", "random"], default="metis")
    sp.add_argument("--pe", choices=["node_max", "relative_patch"], default="node_max")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--report", default=None)
    sp.set_defaults(fn=_cmd_probe)

    sp = sub.add_parser("wl-test", help="compare 1-WL color histograms")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--rounds", type=int, default=20)
    sp.set_defaults(fn=_cmd_wl_test)

    sp = sub.add_parser("collapse-experiment", help="EMA vs shared-weights A/B")
    sp.add_argument("--graphs", type=int, default=50)
    sp.add_argument("--d", type=int, default=32)
    sp.add_argument("--epochs", type=int, default=4)
    sp.add_argument("--parts", type=int, default=4)
    sp.add_argument("--seeds", type=int, default=5)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=_cmd_collapse)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        return args.fn(args)
    except (GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
