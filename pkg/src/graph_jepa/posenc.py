"""Random-walk structural encodings at node and patch level."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Graph, GraphError


@dataclass(frozen=True)
class Rwse:
    """Per-node k-step return probabilities; column j is diag((D^-1 A)^(j+1))."""

    per_node: np.ndarray  # N x k
    order: int


@dataclass(frozen=True)
class PatchPE:
    per_patch: np.ndarray  # p x k
    kind: str  # "node_max" | "relative_patch"


def _transition_matrix(adjacency):
    deg = adjacency.sum(axis=1)
    inv = np.where(deg > 0, 1.0 / np.where(deg > 0, deg, 1.0), 0.0)
    return inv[:, None] * adjacency  # rows of degree-0 nodes stay all-zero


def rwse_nodes(g, k):
    """Return probabilities of 1..k step random walks, one row per node."""
    if k < 1:
        raise GraphError("order k must be >= 1")
    m = _transition_matrix(g.adjacency())
    out = np.empty((g.num_nodes, k))
    power = m
    out[:, 0] = np.diag(power)
    for j in range(1, k):
        power = power @ m
        out[:, j] = np.diag(power)
    return Rwse(out, k)


def patch_pe_max(rwse, ps):
    """Per-patch elementwise max of member-node encodings."""
    rows = []
    for patch in ps.patches:
        if not patch.node_ids:
            raise GraphError("empty patch")
        rows.append(rwse.per_node[list(patch.node_ids)].max(axis=0))
    return PatchPE(np.stack(rows), "node_max")


def patch_pe_relative(g, ps, k):
    """Random-walk encoding over the coarse patch-overlap graph.

    Builds the patch incidence over expanded patches, forms the overlap
    matrix with zeroed diagonal, binarizes it, and runs the node-level
    encoding on that patch graph.
    """
    p = ps.num_patches
    if p < 2:
        raise GraphError("relative patch encoding needs at least 2 patches")
    b = np.zeros((p, g.num_nodes))
    for i, patch in enumerate(ps.patches):
        b[i, list(patch.node_ids)] = 1.0
    overlap = b @ b.T
    np.fill_diagonal(overlap, 0.0)
    adjacency = (overlap > 0).astype(np.float64)
    m = _transition_matrix(adjacency)
    out = np.empty((p, k))
    power = m
    out[:, 0] = np.diag(power)
    for j in range(1, k):
        power = power @ m
        out[:, j] = np.diag(power)
    return PatchPE(out, "relative_patch")
