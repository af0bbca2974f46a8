"""Graph partitioning into patches: multilevel heuristic, random baseline, 1-hop expansion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Graph, GraphError


class PartitionError(GraphError):
    pass


@dataclass(frozen=True)
class Subgraph:
    """One patch: original node ids, the induced local graph, and the
    pre-expansion core size."""

    node_ids: tuple
    local_graph: Graph
    core_size: int


@dataclass(frozen=True)
class PatchSet:
    patches: tuple
    assignment: tuple  # original node id -> patch index (pre-expansion cores)
    expanded: bool = False

    @property
    def num_patches(self):
        return len(self.patches)


def induced_subgraph(g, node_ids, core_size):
    """Patch over node_ids with every original edge between members induced."""
    node_ids = tuple(sorted(node_ids))
    index = {v: i for i, v in enumerate(node_ids)}
    local_edges = []
    rows = []
    for row, (u, v) in enumerate(g.edges):
        if u in index and v in index:
            local_edges.append((index[u], index[v]))
            rows.append(row)
    nf = g.node_features[list(node_ids)]
    ef = g.edge_features[rows] if rows else g.edge_features[:0]
    local = Graph(len(node_ids), local_edges, nf, ef)
    return Subgraph(node_ids, local, core_size)


def _patchset_from_assignment(g, assignment, p):
    groups = [[] for _ in range(p)]
    for v, part in enumerate(assignment):
        groups[part].append(v)
    if any(not grp for grp in groups):
        raise PartitionError("empty patch in assignment")
    patches = tuple(
        induced_subgraph(g, grp, core_size=len(grp)) for grp in groups
    )
    return PatchSet(patches, tuple(int(x) for x in assignment), expanded=False)


def partition_random(g, p, seed):
    """Uniformly random node->patch assignment conditioned on non-empty patches."""
    if p < 1:
        raise PartitionError("p must be >= 1")
    if p > g.num_nodes:
        raise PartitionError(f"p={p} exceeds {g.num_nodes} nodes")
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        assignment = rng.integers(0, p, size=g.num_nodes)
        if len(set(assignment.tolist())) == p:
            return _patchset_from_assignment(g, assignment.tolist(), p)
    # Conditioning fallback when rejection is too slow: pin one anchor per part.
    perm = rng.permutation(g.num_nodes)
    assignment = rng.integers(0, p, size=g.num_nodes)
    for part, v in enumerate(perm[:p]):
        assignment[v] = part
    return _patchset_from_assignment(g, assignment.tolist(), p)


def edge_cut(g, ps):
    """Number of original edges whose endpoints lie in different cores."""
    a = ps.assignment
    return sum(1 for u, v in g.edges if a[u] != a[v])


def expand_one_hop(g, ps):
    """Grow each core by the original-graph neighbors of its members and
    re-induce local graphs. Core sizes are preserved."""
    nbrs = g.neighbor_lists()
    patches = []
    for patch in ps.patches:
        nodes = set(patch.node_ids)
        for v in patch.node_ids:
            nodes.update(nbrs[v])
        patches.append(induced_subgraph(g, nodes, core_size=patch.core_size))
    return PatchSet(tuple(patches), ps.assignment, expanded=True)


# ---------------------------------------------------------------------------
# Multilevel partitioner: heavy-edge matching coarsening, greedy growing
# initial partition, KL-style boundary refinement during uncoarsening.
# ---------------------------------------------------------------------------


def _weighted_adj(g):
    adj = [dict() for _ in range(g.num_nodes)]
    for u, v in g.edges:
        adj[u][v] = adj[u].get(v, 0.0) + 1.0
        adj[v][u] = adj[v].get(u, 0.0) + 1.0
    return adj


def _heavy_edge_matching(adj, node_w, rng):
    n = len(adj)
    match = [-1] * n
    order = rng.permutation(n)
    for u in order:
        u = int(u)
        if match[u] != -1:
            continue
        best, best_w = -1, -1.0
        for v, w in adj[u].items():
            if match[v] == -1 and w > best_w:
                best, best_w = v, w
        if best != -1:
            match[u] = best
            match[best] = u
    coarse_of = [-1] * n
    nxt = 0
    for u in range(n):
        if coarse_of[u] != -1:
            continue
        coarse_of[u] = nxt
        if match[u] != -1:
            coarse_of[match[u]] = nxt
        nxt += 1
    c_adj = [dict() for _ in range(nxt)]
    c_w = [0.0] * nxt
    for u in range(n):
        c_w[coarse_of[u]] += node_w[u]
    for u in range(n):
        cu = coarse_of[u]
        for v, w in adj[u].items():
            cv = coarse_of[v]
            if cu < cv:
                c_adj[cu][cv] = c_adj[cu].get(cv, 0.0) + w
                c_adj[cv][cu] = c_adj[cv].get(cu, 0.0) + w
    return coarse_of, c_adj, c_w


def _cut_of(adj, parts):
    cut = 0.0
    for u in range(len(adj)):
        for v, w in adj[u].items():
            if u < v and parts[u] != parts[v]:
                cut += w
    return cut


def _greedy_growing(adj, node_w, p, rng):
    """Seed-and-grow initial partition on the coarsest graph."""
    n = len(adj)
    total = sum(node_w)
    target = total / p
    parts = [-1] * n
    deg = [sum(adj[u].values()) for u in range(n)]
    for part in range(p - 1):
        remaining = [u for u in range(n) if parts[u] == -1]
        if len(remaining) <= p - 1 - part:
            break
        seed = min(remaining, key=lambda u: (deg[u], u))
        parts[seed] = part
        weight = node_w[seed]
        frontier_budget = len(remaining)
        while weight < target and frontier_budget > 0:
            frontier_budget -= 1
            best, best_w = -1, -1.0
            for u in range(n):
                if parts[u] != part:
                    continue
                for v, w in adj[u].items():
                    if parts[v] == -1 and w > best_w:
                        best, best_w = v, w
            if best == -1:
                # disconnected remainder: grab the lightest unassigned node
                rest = [u for u in range(n) if parts[u] == -1]
                if len(rest) <= p - 1 - part:
                    break
                best = min(rest, key=lambda u: (node_w[u], u))
            if weight + node_w[best] > target and weight > 0:
                break
            parts[best] = part
            weight += node_w[best]
    # leftovers go to the last part; guarantee every part non-empty
    for u in range(n):
        if parts[u] == -1:
            parts[u] = p - 1
    for part in range(p):
        if part not in parts:
            donor_part = max(range(p), key=lambda q: sum(1 for x in parts if x == q))
            candidates = [u for u in range(n) if parts[u] == donor_part]
            parts[candidates[-1]] = part
    return parts


def _rebalance(adj, node_w, parts, p, lo, hi, rng):
    """Move nodes out of overweight parts (cheapest-cut-increase first)."""
    weights = [0.0] * p
    for u, part in enumerate(parts):
        weights[part] += node_w[u]
    counts = [parts.count(q) for q in range(p)]
    for _ in range(4 * len(parts)):
        over = [q for q in range(p) if weights[q] > hi]
        under_ok = [q for q in range(p) if weights[q] < hi]
        if not over or not under_ok:
            break
        src = max(over, key=lambda q: weights[q])
        best = None
        for u in range(len(parts)):
            if parts[u] != src or counts[src] <= 1:
                continue
            for dst in under_ok:
                if dst == src or weights[dst] + node_w[u] > hi:
                    continue
                increase = sum(
                    w * ((1 if parts[v] == src else 0) - (1 if parts[v] == dst else 0))
                    for v, w in adj[u].items()
                )
                key = (increase, weights[dst], u)
                if best is None or key < best[0]:
                    best = (key, u, dst)
        if best is None:
            break
        _, u, dst = best
        weights[parts[u]] -= node_w[u]
        counts[parts[u]] -= 1
        parts[u] = dst
        weights[dst] += node_w[u]
        counts[dst] += 1
    return parts


def _kl_pass(adj, node_w, parts, p, lo, hi, rng):
    """One greedy boundary pass; only strictly cut-reducing moves are applied."""
    weights = [0.0] * p
    counts = [0] * p
    for u, part in enumerate(parts):
        weights[part] += node_w[u]
        counts[part] += 1
    moved = 0
    for u in rng.permutation(len(parts)):
        u = int(u)
        src = parts[u]
        if counts[src] <= 1:
            continue
        link = {}
        for v, w in adj[u].items():
            link[parts[v]] = link.get(parts[v], 0.0) + w
        internal = link.get(src, 0.0)
        best_dst, best_gain = -1, 0.0
        for dst, w in link.items():
            if dst == src:
                continue
            if weights[dst] + node_w[u] > hi or weights[src] - node_w[u] < lo:
                continue
            gain = w - internal
            if gain > best_gain:
                best_dst, best_gain = dst, gain
        if best_dst != -1:
            weights[src] -= node_w[u]
            counts[src] -= 1
            parts[u] = best_dst
            weights[best_dst] += node_w[u]
            counts[best_dst] += 1
            moved += 1
    return moved


def _refine(adj, node_w, parts, p, lo, hi, rng, trace=None):
    for _ in range(10):
        before = _cut_of(adj, parts)
        moved = _kl_pass(adj, node_w, parts, p, lo, hi, rng)
        after = _cut_of(adj, parts)
        if trace is not None:
            trace.append((before, after))
        if moved == 0:
            break
    return parts


def balance_bounds(n, p):
    """Per-part node budget: ideal n/p with +-30% slack, kept feasible."""
    ideal = n / p
    lo = max(1, int(np.ceil(0.7 * ideal)))
    hi = max(1, int(np.floor(1.3 * ideal)))
    while p * hi < n:
        hi += 1
    while p * lo > n:
        lo -= 1
    return max(lo, 1), hi


def partition_multilevel(g, p, seed, trace=None):
    """Multilevel scheme: coarsen by heavy-edge matching to <= max(2p, 16)
    supernodes, greedy balanced growing on the coarsest graph, then project
    back with boundary refinement at every level.

    When `trace` is a list, (cut_before, cut_after) pairs for every
    refinement pass are appended to it.
    """
    if p < 2:
        raise PartitionError("p must be >= 2")
    if p > g.num_nodes:
        raise PartitionError(f"p={p} exceeds {g.num_nodes} nodes")
    rng = np.random.default_rng(seed)
    lo, hi = balance_bounds(g.num_nodes, p)

    adj = _weighted_adj(g)
    node_w = [1.0] * g.num_nodes
    levels = []  # (adj, node_w, coarse_of mapping fine->coarse of next level)
    threshold = max(2 * p, 16)
    while len(adj) > threshold:
        coarse_of, c_adj, c_w = _heavy_edge_matching(adj, node_w, rng)
        if len(c_adj) == len(adj):
            break
        levels.append((adj, node_w, coarse_of))
        adj, node_w = c_adj, c_w

    parts = _greedy_growing(adj, node_w, p, rng)
    parts = _rebalance(adj, node_w, parts, p, lo, hi, rng)
    parts = _refine(adj, node_w, parts, p, lo, hi, rng, trace)

    for fine_adj, fine_w, coarse_of in reversed(levels):
        parts = [parts[coarse_of[u]] for u in range(len(fine_adj))]
        parts = _rebalance(fine_adj, fine_w, parts, p, lo, hi, rng)
        parts = _refine(fine_adj, fine_w, parts, p, lo, hi, rng, trace)

    return _patchset_from_assignment(g, parts, p)
