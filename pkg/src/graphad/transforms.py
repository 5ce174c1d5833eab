"""Hand-crafted graph augmentations used by transformation prediction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Graph, canonical_edges

TRANSFORM_KINDS = ("identity", "node_drop", "edge_add", "edge_drop", "attr_mask", "subgraph")


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    ratio: float = 0.2
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"unknown transform {self.kind!r}")
        if self.kind != "identity" and not 0.0 < self.ratio < 1.0:
            raise ValueError("ratio must lie in (0, 1)")


def _count(ratio: float, n: int) -> int:
    # guard against 0.2 * 15 == 3.0000000000000004
    return int(math.ceil(ratio * n - 1e-9))


def _undirected(g: Graph) -> np.ndarray:
    e = g.edges
    return e[e[:, 0] < e[:, 1]]


def _induced(g: Graph, keep: np.ndarray) -> Graph:
    keep = np.sort(keep)
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    e = remap[g.edges]
    e = e[(e >= 0).all(axis=1)]
    return Graph(keep.size, e, g.node_attrs[keep], g.label)


def node_drop(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    k = min(_count(ratio, g.num_nodes), g.num_nodes - 1)
    keep = rng.choice(g.num_nodes, size=g.num_nodes - k, replace=False)
    return _induced(g, keep)


def edge_drop(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    und = _undirected(g)
    k = _count(ratio, und.shape[0])
    keep = rng.choice(und.shape[0], size=und.shape[0] - k, replace=False)
    return Graph(g.num_nodes, canonical_edges(und[np.sort(keep)]), g.node_attrs, g.label)


def edge_add(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    und = _undirected(g)
    n = g.num_nodes
    iu, ju = np.triu_indices(n, k=1)
    present = np.zeros((n, n), dtype=bool)
    present[und[:, 0], und[:, 1]] = True
    absent = np.flatnonzero(~present[iu, ju])
    k = min(_count(ratio, und.shape[0]), absent.size)
    pick = rng.choice(absent, size=k, replace=False)
    new = np.stack([iu[pick], ju[pick]], axis=1)
    return Graph(n, canonical_edges(np.concatenate([und, new])), g.node_attrs, g.label)


def attr_mask(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    k = _count(ratio, g.num_nodes)
    rows = rng.choice(g.num_nodes, size=k, replace=False)
    x = g.node_attrs.copy()
    x[rows] = 0.0
    return g.with_attrs(x)


def subgraph(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """Induced subgraph on the nodes visited by a random walk from a uniform start."""
    n = g.num_nodes
    if n <= 1:
        return g
    walk_len = max(1, _count(1.0 - ratio, n))
    e = g.edges[np.lexsort((g.edges[:, 1], g.edges[:, 0]))]
    nbrs = np.split(e[:, 1], np.searchsorted(e[:, 0], np.arange(1, n)))
    node = int(rng.integers(n))
    visited = {node}
    for _ in range(walk_len - 1):
        if nbrs[node].size == 0:
            break
        node = int(rng.choice(nbrs[node]))
        visited.add(node)
    return _induced(g, np.fromiter(visited, dtype=np.int64))


_IMPL = {"node_drop": node_drop, "edge_drop": edge_drop, "edge_add": edge_add,
         "attr_mask": attr_mask, "subgraph": subgraph}


def apply_transform(g: Graph, spec: TransformSpec) -> Graph:
    if g.num_nodes == 0:
        raise ValueError("cannot transform an empty graph")
    if spec.kind == "identity":
        return g
    return _IMPL[spec.kind](g, spec.ratio, np.random.default_rng(spec.rng_seed))
