"""Graph data model, dataset ingestion, synthetic generators, and the 1-WL oracle."""

from __future__ import annotations

import hashlib
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    """Base class for graph construction / ingestion failures."""


class ParseError(GraphError):
    """Malformed record in a dataset file."""


class SchemaError(GraphError):
    """Structurally valid records with inconsistent shapes or widths."""


def _normalize_edges(num_nodes, edges):
    seen = set()
    out = []
    for e in edges:
        if len(e) != 2:
            raise GraphError(f"edge {e!r} is not a pair")
        u, v = int(e[0]), int(e[1])
        if u == v:
            raise GraphError(f"self-loop at node {u}")
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise GraphError(f"edge ({u},{v}) out of range for {num_nodes} nodes")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise GraphError(f"duplicate undirected edge {key}")
        seen.add(key)
        out.append(key)
    return tuple(out)


@dataclass(frozen=True)
class Graph:
    """Immutable undirected attributed graph.

    Edges are stored as unordered (u, v) pairs with u < v, no self-loops,
    no duplicates. Feature matrices are row-per-node / row-per-edge.
    """

    num_nodes: int
    edges: tuple
    node_features: np.ndarray
    edge_features: np.ndarray
    label: object = None

    def __post_init__(self):
        if self.num_nodes <= 0:
            raise GraphError("graph must have at least one node")
        object.__setattr__(self, "edges", _normalize_edges(self.num_nodes, self.edges))
        nf = np.asarray(self.node_features, dtype=np.float64)
        ef = np.asarray(self.edge_features, dtype=np.float64)
        if nf.ndim != 2 or nf.shape[0] != self.num_nodes:
            raise SchemaError(
                f"node_features shape {nf.shape} incompatible with {self.num_nodes} nodes"
            )
        if ef.ndim != 2 or ef.shape[0] != len(self.edges):
            raise SchemaError(
                f"edge_features shape {ef.shape} incompatible with {len(self.edges)} edges"
            )
        nf.setflags(write=False)
        ef.setflags(write=False)
        object.__setattr__(self, "node_features", nf)
        object.__setattr__(self, "edge_features", ef)

    @staticmethod
    def build(num_nodes, edges, node_features=None, edge_features=None, label=None):
        """Construct a Graph, filling in constant-zero width-1 features when absent."""
        edges = _normalize_edges(num_nodes, edges)
        if node_features is None:
            node_features = np.zeros((num_nodes, 1))
        if edge_features is None:
            edge_features = np.zeros((len(edges), 1))
        return Graph(num_nodes, edges, node_features, edge_features, label)

    @property
    def num_edges(self):
        return len(self.edges)

    def adjacency(self):
        """Dense symmetric 0/1 adjacency matrix."""
        a = np.zeros((self.num_nodes, self.num_nodes))
        for u, v in self.edges:
            a[u, v] = 1.0
            a[v, u] = 1.0
        return a

    def neighbor_lists(self):
        nbrs = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return nbrs

    def degrees(self):
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def permuted(self, perm):
        """Relabel nodes: new index of old node i is perm[i]."""
        perm = list(perm)
        inv = np.argsort(perm)
        edges = [(perm[u], perm[v]) for u, v in self.edges]
        order = sorted(
            range(len(edges)), key=lambda i: (min(edges[i]), max(edges[i]))
        )
        nf = self.node_features[inv]
        ef = self.edge_features[order] if len(edges) else self.edge_features
        return Graph(
            self.num_nodes, [edges[i] for i in order], nf, ef, self.label
        )


@dataclass(frozen=True)
class GraphDataset:
    graphs: tuple
    task: str  # "classification" | "regression"
    num_classes: int = 0
    target_dim: int = 0
    name: str = ""

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise SchemaError(f"unknown task {self.task!r}")
        graphs = tuple(self.graphs)
        if graphs:
            fn = graphs[0].node_features.shape[1]
            fe = graphs[0].edge_features.shape[1]
            for i, g in enumerate(graphs):
                if g.node_features.shape[1] != fn or g.edge_features.shape[1] != fe:
                    raise SchemaError(f"graph {i} feature widths differ from graph 0")
                if self.task == "classification" and g.label is not None:
                    if not (0 <= int(g.label) < self.num_classes):
                        raise SchemaError(
                            f"graph {i} label {g.label} outside [0, {self.num_classes})"
                        )
        object.__setattr__(self, "graphs", graphs)

    def __len__(self):
        return len(self.graphs)

    def labels(self):
        return [g.label for g in self.graphs]


def _load_jsonl(path):
    graphs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                g = Graph.build(
                    int(rec["num_nodes"]),
                    [tuple(e) for e in rec.get("edges", [])],
                    rec.get("node_features"),
                    rec.get("edge_features"),
                    rec.get("label"),
                )
            except KeyError as exc:
                raise ParseError(f"{path}:{lineno}: missing field {exc}") from exc
            except GraphError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            graphs.append(g)
    return graphs


def _tu_path(directory, name, suffix):
    return os.path.join(directory, f"{name}_{suffix}.txt")


def _load_tu(directory):
    """Read the standard TU flat-file layout (1-based indices)."""
    name = os.path.basename(os.path.normpath(directory))
    ind_path = _tu_path(directory, name, "graph_indicator")
    if not os.path.exists(ind_path):
        raise ParseError(f"missing {ind_path}")
    indicator = np.loadtxt(ind_path, dtype=np.int64, ndmin=1)
    num_graphs = int(indicator.max())
    node_of_graph = [[] for _ in range(num_graphs)]
    for node_idx, gid in enumerate(indicator):
        node_of_graph[gid - 1].append(node_idx)
    offsets = {}
    for gid, nodes in enumerate(node_of_graph):
        for local, node in enumerate(nodes):
            offsets[node] = (gid, local)

    edges_per_graph = [[] for _ in range(num_graphs)]
    edge_rows_per_graph = [[] for _ in range(num_graphs)]
    seen_per_graph = [set() for _ in range(num_graphs)]
    a_path = _tu_path(directory, name, "A")
    with open(a_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                u, v = (int(x) for x in line.replace(",", " ").split())
            except ValueError as exc:
                raise ParseError(f"{a_path}:{lineno}: bad edge row {line!r}") from exc
            gu, lu = offsets[u - 1]
            gv, lv = offsets[v - 1]
            if gu != gv:
                raise ParseError(f"{a_path}:{lineno}: edge spans graphs {gu} and {gv}")
            key = (min(lu, lv), max(lu, lv))
            if key not in seen_per_graph[gu]:
                seen_per_graph[gu].add(key)
                edges_per_graph[gu].append(key)
                edge_rows_per_graph[gu].append(lineno - 1)

    labels = np.loadtxt(_tu_path(directory, name, "graph_labels"), ndmin=1)
    label_values = sorted(set(float(x) for x in labels))
    if all(float(x).is_integer() for x in label_values):
        task = "classification"
        remap = {v: i for i, v in enumerate(label_values)}
        labels = [remap[float(x)] for x in labels]
        num_classes = len(label_values)
    else:
        task = "regression"
        labels = [float(x) for x in labels]
        num_classes = 0

    node_feats = None
    nl_path = _tu_path(directory, name, "node_labels")
    if os.path.exists(nl_path):
        nl = np.loadtxt(nl_path, dtype=np.int64, ndmin=1)
        values = sorted(set(int(x) for x in nl))
        remap = {v: i for i, v in enumerate(values)}
        node_feats = np.zeros((len(nl), len(values)))
        for i, x in enumerate(nl):
            node_feats[i, remap[int(x)]] = 1.0

    edge_feats = None
    el_path = _tu_path(directory, name, "edge_labels")
    if os.path.exists(el_path):
        el = np.loadtxt(el_path, dtype=np.int64, ndmin=1)
        values = sorted(set(int(x) for x in el))
        remap = {v: i for i, v in enumerate(values)}
        edge_feats = np.zeros((len(el), len(values)))
        for i, x in enumerate(el):
            edge_feats[i, remap[int(x)]] = 1.0

    graphs = []
    for gid in range(num_graphs):
        nodes = node_of_graph[gid]
        nf = node_feats[nodes] if node_feats is not None else None
        ef = None
        if edge_feats is not None:
            ef = edge_feats[edge_rows_per_graph[gid]]
        graphs.append(
            Graph.build(len(nodes), edges_per_graph[gid], nf, ef, labels[gid])
        )
    return GraphDataset(
        tuple(graphs), task, num_classes=num_classes,
        target_dim=1 if task == "regression" else 0, name=name,
    )


def load_dataset(path, format="edge_list_jsonl", task=None, name=None):
    """Load a GraphDataset from disk.

    Formats: "edge_list_jsonl" (one JSON object per line) or "tu_format"
    (directory holding the standard TU flat files).
    """
    if format == "tu_format":
        return _load_tu(path)
    if format != "edge_list_jsonl":
        raise ParseError(f"unknown format {format!r}")
    graphs = _load_jsonl(path)
    if not graphs:
        raise ParseError(f"{path}: no graphs")
    labels = [g.label for g in graphs]
    if task is None:
        if all(l is None for l in labels):
            task = "classification"
            num_classes = 0
        elif all(isinstance(l, int) or (isinstance(l, float) and float(l).is_integer())
                 for l in labels if l is not None):
            graphs = [
                Graph(g.num_nodes, g.edges, g.node_features, g.edge_features,
                      int(g.label) if g.label is not None else None)
                for g in graphs
            ]
            task = "classification"
            num_classes = len(set(int(l) for l in labels if l is not None))
        else:
            task = "regression"
            num_classes = 0
    else:
        num_classes = len(set(labels)) if task == "classification" else 0
    return GraphDataset(
        tuple(graphs), task, num_classes=num_classes,
        target_dim=1 if task == "regression" else 0,
        name=name or os.path.basename(str(path)),
    )


def generate_csl(n, skip):
    """Circular skip-link graph: an n-cycle plus chords {i, (i+skip) mod n}.

    4-regular whenever 2 <= skip < n/2. Distinct skips on the same n give
    non-isomorphic graphs that 1-WL cannot separate.
    """
    if n < 5:
        raise GraphError(f"need n >= 5, got {n}")
    if not (2 <= skip and 2 * skip < n):
        raise GraphError(f"need 2 <= skip < n/2, got skip={skip}, n={n}")
    edges = [(i, (i + 1) % n) for i in range(n)]
    edges += [(i, (i + skip) % n) for i in range(n)]
    return Graph.build(n, edges)


def random_graph(n, edge_prob, seed, connected=True):
    """Erdos-Renyi graph; when connected, a random spanning tree is forced in."""
    rng = np.random.default_rng(seed)
    edges = set()
    if connected and n > 1:
        order = rng.permutation(n)
        for i in range(1, n):
            j = order[int(rng.integers(0, i))]
            u, v = int(order[i]), int(j)
            edges.add((min(u, v), max(u, v)))
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < edge_prob:
                edges.add((u, v))
    return Graph.build(n, sorted(edges))


def random_graph_dataset(num_graphs, seed, n_range=(8, 14), edge_prob=0.3):
    """Toy classification set: label 1 for denser graphs, 0 otherwise."""
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(num_graphs):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        dense = i % 2 == 1
        p = edge_prob * (2.0 if dense else 1.0)
        g = random_graph(n, min(p, 0.9), int(rng.integers(0, 2**32)))
        graphs.append(
            Graph(g.num_nodes, g.edges, g.node_features, g.edge_features, int(dense))
        )
    return GraphDataset(tuple(graphs), "classification", num_classes=2, name="toy")


def wl1_color_histogram(g, rounds=10):
    """1-WL color refinement; returns the final color multiset as a Counter.

    Colors are content-addressed hashes, so histograms are directly
    comparable across graphs. Stops early once the color partition is stable.
    """
    if rounds < 1:
        raise GraphError("rounds must be >= 1")
    nbrs = g.neighbor_lists()
    colors = [_stable_hash(("deg", int(d))) for d in g.degrees()]
    for _ in range(rounds):
        new = [
            _stable_hash((colors[v], tuple(sorted(colors[u] for u in nbrs[v]))))
            for v in range(g.num_nodes)
        ]
        if _partition_of(new) == _partition_of(colors):
            colors = new
            break
        colors = new
    return Counter(colors)


def _stable_hash(obj):
    return hashlib.blake2b(repr(obj).encode(), digest_size=8).hexdigest()


def _partition_of(colors):
    groups = {}
    for i, c in enumerate(colors):
        groups.setdefault(c, []).append(i)
    return sorted(tuple(v) for v in groups.values())


def graph_stats(ds):
    """Exact arithmetic means over the dataset."""
    if len(ds) == 0:
        raise GraphError("empty dataset")
    return {
        "num_graphs": len(ds),
        "num_classes": ds.num_classes,
        "avg_nodes": sum(g.num_nodes for g in ds.graphs) / len(ds),
        "avg_edges": sum(g.num_edges for g in ds.graphs) / len(ds),
    }
