"""Regenerate the TU-format fixtures bundled in src/graphad/fixtures.

FIXTURE: 80 small molecule-like graphs in two classes.
  class 0 -- a ring of 5..9 atoms with 1..3 pendant atoms, mostly atom types 0/1
  class 1 -- a random tree of 5..12 atoms, mostly atom types 2/3
TINY: a labelled triangle and a single edge.
"""

from pathlib import Path

import numpy as np

from graphad.data import Dataset, Graph, canonical_edges, write_tu_dataset

OUT = Path(__file__).resolve().parents[1] / "src" / "graphad" / "fixtures"
N_TYPES = 4


def onehot(types):
    x = np.zeros((len(types), N_TYPES), dtype=np.float32)
    x[np.arange(len(types)), types] = 1.0
    return x


def ring_graph(rng):
    ring = int(rng.integers(5, 10))
    pend = int(rng.integers(1, 4))
    edges = [(i, (i + 1) % ring) for i in range(ring)]
    for j in range(pend):
        edges.append((int(rng.integers(0, ring)), ring + j))
    n = ring + pend
    types = rng.choice(N_TYPES, size=n, p=[0.6, 0.3, 0.05, 0.05])
    return Graph(n, canonical_edges(np.array(edges)), onehot(types), 0)


def tree_graph(rng):
    n = int(rng.integers(5, 13))
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    types = rng.choice(N_TYPES, size=n, p=[0.05, 0.15, 0.5, 0.3])
    return Graph(n, canonical_edges(np.array(edges)), onehot(types), 1)


def main():
    rng = np.random.default_rng(20220405)
    graphs = [ring_graph(rng) for _ in range(40)] + [tree_graph(rng) for _ in range(40)]
    order = rng.permutation(len(graphs))
    write_tu_dataset(Dataset("FIXTURE", [graphs[i] for i in order]), OUT / "FIXTURE")

    tiny = [
        Graph(3, canonical_edges(np.array([(0, 1), (1, 2), (2, 0)])), np.eye(2, dtype=np.float32)[[0, 0, 1]], 0),
        Graph(2, canonical_edges(np.array([(0, 1)])), np.eye(2, dtype=np.float32)[[1, 0]], 1),
    ]
    write_tu_dataset(Dataset("TINY", tiny), OUT / "TINY")


if __name__ == "__main__":
    main()
