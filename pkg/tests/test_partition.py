import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graph_jepa.graphs import Graph
from graph_jepa.partition import (
    PartitionError,
    balance_bounds,
    edge_cut,
    expand_one_hop,
    partition_multilevel,
    partition_random,
)

from conftest import complete_graph, path_graph, small_random_graph


def brute_force_best_cut(g, p=2, lo=None, hi=None):
    """Minimum edge cut over all balanced 2-partitions (exhaustive)."""
    if lo is None or hi is None:
        lo, hi = balance_bounds(g.num_nodes, p)
    best = None
    for size in range(lo, hi + 1):
        for part0 in itertools.combinations(range(g.num_nodes), size):
            s = set(part0)
            if not (lo <= g.num_nodes - size <= hi):
                continue
            cut = sum(1 for u, v in g.edges if (u in s) != (v in s))
            best = cut if best is None else min(best, cut)
    return best


class TestMultilevel:
    def test_p4_optimal(self):
        g = path_graph(4)
        ps = partition_multilevel(g, 2, seed=0)
        assert edge_cut(g, ps) == 1  # brute-force optimum for balanced splits

    def test_k4_cut_four(self):
        g = complete_graph(4)
        ps = partition_multilevel(g, 2, seed=0)
        assert edge_cut(g, ps) == 4
        sizes = sorted(len(p.node_ids) for p in ps.patches)
        assert sizes == [2, 2]

    def test_too_many_parts(self):
        with pytest.raises(PartitionError):
            partition_multilevel(path_graph(5), 6, seed=0)

    def test_p_below_two(self):
        with pytest.raises(PartitionError):
            partition_multilevel(path_graph(5), 1, seed=0)

    @given(st.integers(0, 200), st.integers(2, 4))
    @settings(max_examples=40, deadline=None)
    def test_disjoint_cover_nonempty(self, seed, p):
        g = small_random_graph(seed, max_n=12, min_n=4)
        if p > g.num_nodes:
            return
        ps = partition_multilevel(g, p, seed=seed)
        all_nodes = sorted(v for patch in ps.patches for v in patch.node_ids)
        assert all_nodes == list(range(g.num_nodes))
        assert all(len(patch.node_ids) >= 1 for patch in ps.patches)
        for v, part in enumerate(ps.assignment):
            assert v in ps.patches[part].node_ids

    def test_refinement_never_increases_cut(self):
        for seed in range(25):
            g = small_random_graph(seed, max_n=30, min_n=8)
            trace = []
            partition_multilevel(g, 3, seed=seed, trace=trace)
            for before, after in trace:
                assert after <= before

    def test_beats_random_median_small_graphs(self):
        wins = 0
        total = 0
        for seed in range(50):
            g = small_random_graph(seed + 1000, max_n=10, min_n=4)
            if g.num_nodes < 2:
                continue
            total += 1
            ml_cut = edge_cut(g, partition_multilevel(g, 2, seed=seed))
            rng = np.random.default_rng(seed)
            cuts = []
            n = g.num_nodes
            for _ in range(100):
                perm = rng.permutation(n)
                s = set(perm[: n // 2].tolist())
                cuts.append(sum(1 for u, v in g.edges if (u in s) != (v in s)))
            if ml_cut <= np.median(cuts):
                wins += 1
        assert wins >= 0.9 * total

    def test_handles_disconnected(self):
        g = Graph.build(6, [(0, 1), (1, 2), (3, 4), (4, 5)])
        ps = partition_multilevel(g, 2, seed=0)
        assert edge_cut(g, ps) == 0

    def test_coarsening_path_on_larger_graph(self):
        # > max(2p, 16) nodes forces at least one heavy-edge matching level
        g = small_random_graph(99, max_n=60, min_n=50)
        ps = partition_multilevel(g, 4, seed=1)
        all_nodes = sorted(v for patch in ps.patches for v in patch.node_ids)
        assert all_nodes == list(range(g.num_nodes))
        lo, hi = balance_bounds(g.num_nodes, 4)
        for patch in ps.patches:
            assert lo <= len(patch.node_ids) <= hi


class TestRandomPartition:
    def test_pigeonhole(self):
        g = complete_graph(4)
        ps = partition_random(g, 4, seed=0)
        assert sorted(len(p.node_ids) for p in ps.patches) == [1, 1, 1, 1]

    def test_seeds_differ(self):
        g = small_random_graph(5, max_n=100, min_n=100)
        a = partition_random(g, 2, seed=0).assignment
        b = partition_random(g, 2, seed=1).assignment
        assert a != b

    def test_three_nodes_two_parts(self):
        g = path_graph(3)
        ps = partition_random(g, 2, seed=3)
        assert sorted(len(p.node_ids) for p in ps.patches) == [1, 2]

    def test_rejects_oversized_p(self):
        with pytest.raises(PartitionError):
            partition_random(path_graph(3), 4, seed=0)


class TestExpansion:
    def test_p4_expansion(self):
        g = path_graph(4)
        ps = partition_multilevel(g, 2, seed=0)
        assert sorted(sorted(p.node_ids) for p in ps.patches) == [[0, 1], [2, 3]]
        exp = expand_one_hop(g, ps)
        assert sorted(sorted(p.node_ids) for p in exp.patches) == [[0, 1, 2], [1, 2, 3]]
        for patch in exp.patches:
            assert patch.local_graph.num_edges == 2
            assert patch.core_size == 2

    def test_isolated_node_unchanged(self):
        g = Graph.build(2, [])
        ps = partition_random(g, 2, seed=0)
        exp = expand_one_hop(g, ps)
        assert all(len(p.node_ids) == 1 for p in exp.patches)

    def test_k4_expands_to_whole_graph(self):
        g = complete_graph(4)
        exp = expand_one_hop(g, partition_multilevel(g, 2, seed=0))
        for patch in exp.patches:
            assert sorted(patch.node_ids) == [0, 1, 2, 3]
            assert patch.local_graph.num_edges == 6

    @given(st.integers(0, 200))
    @settings(max_examples=40, deadline=None)
    def test_expansion_superset_and_induced(self, seed):
        g = small_random_graph(seed, max_n=12, min_n=4)
        p = min(3, g.num_nodes)
        ps = partition_random(g, p, seed=seed)
        exp = expand_one_hop(g, ps)
        orig_edges = set(g.edges)
        for before, after in zip(ps.patches, exp.patches):
            assert set(before.node_ids) <= set(after.node_ids)
            ids = after.node_ids
            members = set(ids)
            induced = {
                (min(u, v), max(u, v))
                for u, v in orig_edges
                if u in members and v in members
            }
            mapped = {
                (min(ids[u], ids[v]), max(ids[u], ids[v]))
                for u, v in after.local_graph.edges
            }
            assert mapped == induced


class TestEdgeCut:
    def test_p4_split(self):
        g = path_graph(4)
        ps = partition_multilevel(g, 2, seed=0)
        assert edge_cut(g, ps) == 1

    def test_k4_balanced(self):
        g = complete_graph(4)
        assert edge_cut(g, partition_multilevel(g, 2, seed=0)) == 4

    def test_matches_brute_force_on_tiny_graphs(self):
        for seed in range(10):
            g = small_random_graph(seed + 77, max_n=8, min_n=4)
            ml = edge_cut(g, partition_multilevel(g, 2, seed=seed))
            best = brute_force_best_cut(g)
            assert ml >= best  # heuristic can't beat exhaustive optimum
