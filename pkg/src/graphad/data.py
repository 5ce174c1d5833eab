"""Graph containers, TU-format ingestion and batching."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, IntegrityError, ShapeError

ATTR_DTYPE = np.float32


@dataclass(frozen=True, eq=False)
class Graph:
    """An undirected attributed graph.

    ``edges`` holds both directions of every undirected edge as rows of an
    ``(m, 2)`` integer array, sorted lexicographically.
    """

    num_nodes: int
    edges: np.ndarray
    node_attrs: np.ndarray
    label: int = 0

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        attrs = np.asarray(self.node_attrs, dtype=ATTR_DTYPE)
        if attrs.ndim != 2 or attrs.shape[0] != self.num_nodes:
            raise ShapeError(f"node_attrs shape {attrs.shape} does not match num_nodes={self.num_nodes}")
        edges.setflags(write=False)
        attrs.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "node_attrs", attrs)
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        object.__setattr__(self, "label", int(self.label))

    @property
    def attr_dim(self) -> int:
        return self.node_attrs.shape[1]

    @property
    def num_edges(self) -> int:
        """Number of directed edge entries (twice the undirected count)."""
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges[:, 0], minlength=self.num_nodes)

    def validate(self) -> None:
        if self.num_edges:
            if self.edges.min() < 0 or self.edges.max() >= self.num_nodes:
                raise IntegrityError("edge endpoint out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise IntegrityError("self-loop present")
            fwd = {tuple(e) for e in self.edges.tolist()}
            if any((v, u) not in fwd for u, v in fwd):
                raise IntegrityError("edge list is not symmetric")
            if len(fwd) != self.num_edges:
                raise IntegrityError("duplicate edges")

    def same_as(self, other: Graph) -> bool:
        return (
            self.num_nodes == other.num_nodes
            and self.label == other.label
            and np.array_equal(self.edges, other.edges)
            and self.node_attrs.shape == other.node_attrs.shape
            and np.array_equal(self.node_attrs, other.node_attrs)
        )

    def with_attrs(self, attrs: np.ndarray) -> Graph:
        return Graph(self.num_nodes, self.edges, attrs, self.label)

    def fingerprint(self) -> int:
        """Content hash used to derive reproducible per-graph seeds."""
        h = zlib.crc32(np.int64(self.num_nodes).tobytes())
        h = zlib.crc32(np.ascontiguousarray(self.edges).tobytes(), h)
        return zlib.crc32(np.ascontiguousarray(self.node_attrs).tobytes(), h)


def canonical_edges(pairs: np.ndarray) -> np.ndarray:
    """Drop self-loops, symmetrize and deduplicate an edge list."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    both = np.concatenate([pairs, pairs[:, ::-1]], axis=0)
    if both.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(both, axis=0)


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    graphs: tuple
    class_ids: tuple = field(default=())
    attr_dim: int = 0

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if not graphs:
            raise IntegrityError(f"dataset {self.name!r} is empty")
        dims = {g.attr_dim for g in graphs}
        if len(dims) != 1:
            raise ShapeError(f"mixed attribute dimensions {sorted(dims)}")
        object.__setattr__(self, "graphs", graphs)
        object.__setattr__(self, "class_ids", tuple(sorted({g.label for g in graphs})))
        object.__setattr__(self, "attr_dim", dims.pop())

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def subset(self, idx: Iterable[int]) -> list[Graph]:
        return [self.graphs[int(i)] for i in idx]

    def max_degree(self) -> int:
        return max((int(g.degrees().max()) if g.num_nodes else 0) for g in self.graphs)

    def class_stats(self) -> dict[int, dict[str, float]]:
        """Per-class graph count and mean node / directed-edge counts."""
        out = {}
        labels = self.labels
        for c in self.class_ids:
            members = [self.graphs[i] for i in np.flatnonzero(labels == c)]
            out[c] = {
                "graphs": len(members),
                "attr_dim": self.attr_dim,
                "avg_nodes": float(np.mean([g.num_nodes for g in members])),
                "avg_edges": float(np.mean([g.num_edges for g in members])),
            }
        return out


# Per-class (graphs, attr_dim, avg nodes, avg directed edges) of the public TU datasets.
REFERENCE_STATS = {
    "DD": {0: (691, 89, 355.2, 1806.6), 1: (487, 89, 183.7, 898.9)},
    "PROTEINS": {0: (663, 3, 50.0, 188.1), 1: (450, 3, 22.9, 83.0)},
    "ENZYMES": {
        0: (100, 3, 36.2, 132.7),
        1: (100, 3, 29.9, 113.8),
        2: (100, 3, 28.9, 111.2),
        3: (100, 3, 38.2, 148.8),
        4: (100, 3, 31.4, 119.6),
        5: (100, 3, 31.2, 119.6),
    },
    "NCI1": {0: (2053, 37, 25.7, 55.3), 1: (2057, 37, 34.1, 73.9)},
    "AIDS": {0: (400, 38, 37.6, 80.5), 1: (1600, 38, 10.2, 20.4)},
    "Mutagenicity": {0: (2401, 14, 29.4, 60.6), 1: (1936, 14, 31.5, 62.7)},
    "IMDB-BINARY": {0: (500, 136, 20.1, 193.6), 1: (500, 136, 19.4, 192.6)},
    "REDDIT-BINARY": {0: (1000, 1, 641.3, 1471.9), 1: (1000, 1, 218.0, 519.1)},
    "REDDIT-MULTI-5K": {
        0: (1000, 1, 799.5, 2035.5),
        1: (1000, 1, 852.1, 1940.4),
        2: (1000, 1, 374.1, 856.5),
        3: (1000, 1, 249.6, 534.0),
        4: (1000, 1, 267.0, 581.7),
    },
}

# Attribute synthesis applied to datasets that ship without node labels.
DEFAULT_SYNTHESIS = {"IMDB-BINARY": "one_hot_degree", "REDDIT-BINARY": "constant_one", "REDDIT-MULTI-5K": "constant_one"}


def compare_with_reference(ds: Dataset, tol: float = 0.1) -> list[str]:
    """Return human-readable mismatches against ``REFERENCE_STATS`` (empty if none or unknown)."""
    ref = REFERENCE_STATS.get(ds.name)
    if ref is None:
        return []
    problems = []
    stats = ds.class_stats()
    # TU files label classes with arbitrary integers; compare in sorted order.
    if len(stats) != len(ref):
        return [f"{ds.name}: {len(stats)} classes, expected {len(ref)}"]
    for (c, got), (rc, (n, dim, nodes, edges)) in zip(sorted(stats.items()), sorted(ref.items())):
        if got["graphs"] != n:
            problems.append(f"{ds.name} class {c}: {got['graphs']} graphs, expected {n}")
        if got["attr_dim"] != dim:
            problems.append(f"{ds.name} class {c}: attr_dim {got['attr_dim']}, expected {dim}")
        if abs(got["avg_nodes"] - nodes) > tol:
            problems.append(f"{ds.name} class {c}: avg nodes {got['avg_nodes']:.2f}, expected {nodes}")
        if abs(got["avg_edges"] - edges) > tol:
            problems.append(f"{ds.name} class {c}: avg edges {got['avg_edges']:.2f}, expected {edges}")
    return problems


def _read_table(path: Path, dtype) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"cannot parse {path.name}: {exc}") from exc
    return arr


def _find_dir(root: Path, name: str) -> Path:
    for cand in (root / name, root):
        if (cand / f"{name}_A.txt").exists():
            return cand
    return root / name


def load_tu_dataset(root_dir, name: str, use_node_attrs: bool = False) -> Dataset:
    """Read a dataset in the TU text format from ``root_dir`` (or ``root_dir/name``).

    Node labels are one-hot encoded over the sorted observed alphabet.
    Continuous node attributes are appended only when ``use_node_attrs`` is
    set or when the dataset has no node labels. Datasets with neither get a
    zero-width attribute matrix; see :func:`synthesize_attrs`.
    """
    d = _find_dir(Path(root_dir), name)
    paths = {k: d / f"{name}_{k}.txt" for k in ("A", "graph_indicator", "graph_labels", "node_attributes", "node_labels")}
    for k in ("A", "graph_indicator", "graph_labels"):
        if not paths[k].exists():
            raise FormatError(f"missing mandatory file {paths[k]}")

    indicator = _read_table(paths["graph_indicator"], np.int64)[:, 0] - 1
    graph_labels = _read_table(paths["graph_labels"], np.int64)[:, 0]
    n_total = indicator.shape[0]
    n_graphs = graph_labels.shape[0]
    if n_total == 0 or indicator.min() < 0 or indicator.max() >= n_graphs:
        raise IntegrityError("graph indicator refers to a graph without a label")
    if np.any(np.diff(indicator) < 0):
        raise IntegrityError("graph indicator is not sorted")
    counts = np.bincount(indicator, minlength=n_graphs)
    if np.any(counts == 0):
        raise IntegrityError("graph without nodes")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    edges = _read_table(paths["A"], np.int64) - 1 if paths["A"].stat().st_size else np.zeros((0, 2), np.int64)
    if edges.size and (edges.min() < 0 or edges.max() >= n_total):
        raise IntegrityError("edge refers to a node index outside the graph indicator")
    if edges.size and np.any(indicator[edges[:, 0]] != indicator[edges[:, 1]]):
        raise IntegrityError("edge connects nodes of different graphs")

    blocks = []
    if paths["node_labels"].exists():
        node_labels = _read_table(paths["node_labels"], np.int64)[:, 0]
        if node_labels.shape[0] != n_total:
            raise IntegrityError("node label count differs from node count")
        alphabet, codes = np.unique(node_labels, return_inverse=True)
        onehot = np.zeros((n_total, alphabet.size), dtype=ATTR_DTYPE)
        onehot[np.arange(n_total), codes] = 1.0
        blocks.append(onehot)
    if paths["node_attributes"].exists() and (use_node_attrs or not blocks):
        attrs = _read_table(paths["node_attributes"], np.float64).astype(ATTR_DTYPE)
        if attrs.shape[0] != n_total:
            raise IntegrityError("node attribute count differs from node count")
        blocks.insert(0, attrs)
    x = np.concatenate(blocks, axis=1) if blocks else np.zeros((n_total, 0), dtype=ATTR_DTYPE)

    edges = canonical_edges(edges)
    edge_graph = indicator[edges[:, 0]] if edges.size else np.zeros(0, np.int64)
    bounds = np.searchsorted(edge_graph, np.arange(n_graphs + 1))
    graphs = []
    for gi in range(n_graphs):
        s, n = starts[gi], counts[gi]
        e = edges[bounds[gi] : bounds[gi + 1]] - s
        graphs.append(Graph(int(n), e, x[s : s + n], int(graph_labels[gi])))
    return Dataset(name, graphs)


def write_tu_dataset(ds: Dataset, out_dir, name: str | None = None, as_labels: bool = True) -> Path:
    """Write ``ds`` in the TU text format.

    With ``as_labels`` the attributes must be one-hot rows and are written as
    node labels; otherwise they are written as continuous node attributes.
    """
    name = name or ds.name
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    offset = 0
    a_lines, ind_lines, node_lines = [], [], []
    for gi, g in enumerate(ds.graphs):
        for u, v in g.edges.tolist():
            a_lines.append(f"{u + offset + 1}, {v + offset + 1}")
        ind_lines.extend([str(gi + 1)] * g.num_nodes)
        if as_labels:
            node_lines.extend(str(int(i)) for i in g.node_attrs.argmax(axis=1))
        else:
            node_lines.extend(", ".join(repr(float(v)) for v in row) for row in g.node_attrs)
        offset += g.num_nodes
    (out / f"{name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (out / f"{name}_graph_indicator.txt").write_text("\n".join(ind_lines) + "\n")
    (out / f"{name}_graph_labels.txt").write_text("\n".join(str(g.label) for g in ds.graphs) + "\n")
    kind = "node_labels" if as_labels else "node_attributes"
    (out / f"{name}_{kind}.txt").write_text("\n".join(node_lines) + "\n")
    return out


def synthesize_attrs(ds: Dataset, mode: str, cap: int | None = None) -> Dataset:
    """Replace node attributes with one-hot degrees or a constant column.

    For ``one_hot_degree`` the cap defaults to the dataset's maximum degree,
    and degrees above the cap fall into the last bucket.
    """
    if mode == "constant_one":
        graphs = [g.with_attrs(np.ones((g.num_nodes, 1), dtype=ATTR_DTYPE)) for g in ds.graphs]
    elif mode == "one_hot_degree":
        cap = ds.max_degree() if cap is None else int(cap)
        graphs = []
        for g in ds.graphs:
            deg = np.minimum(g.degrees(), cap)
            x = np.zeros((g.num_nodes, cap + 1), dtype=ATTR_DTYPE)
            x[np.arange(g.num_nodes), deg] = 1.0
            graphs.append(g.with_attrs(x))
    else:
        raise ValueError(f"unknown attribute synthesis mode {mode!r}")
    return Dataset(ds.name, graphs)


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Several graphs packed into one disjoint union.

    ``membership[i]`` is the graph index of node row ``i``; ``edge_index``
    rows are node indices already shifted by each graph's offset.
    """

    x: np.ndarray
    edge_index: np.ndarray
    membership: np.ndarray
    graph_count: int
    node_counts: np.ndarray
    edge_counts: np.ndarray
    labels: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def attr_dim(self) -> int:
        return self.x.shape[1]


def make_batch(graphs: Sequence[Graph]) -> GraphBatch:
    graphs = list(graphs)
    if not graphs:
        raise ShapeError("cannot batch an empty graph list")
    dims = {g.attr_dim for g in graphs}
    if len(dims) != 1:
        raise ShapeError(f"mixed attribute dimensions {sorted(dims)}")
    node_counts = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    edge_counts = np.array([g.num_edges for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(node_counts)[:-1]])
    x = np.concatenate([g.node_attrs for g in graphs], axis=0)
    edge_index = np.concatenate([g.edges + off for g, off in zip(graphs, offsets)], axis=0)
    membership = np.repeat(np.arange(len(graphs)), node_counts)
    labels = np.array([g.label for g in graphs], dtype=np.int64)
    return GraphBatch(x, edge_index.reshape(-1, 2), membership, len(graphs), node_counts, edge_counts, labels)


def unbatch(batch: GraphBatch) -> list[Graph]:
    n_off = np.concatenate([[0], np.cumsum(batch.node_counts)])
    e_off = np.concatenate([[0], np.cumsum(batch.edge_counts)])
    out = []
    for i in range(batch.graph_count):
        e = batch.edge_index[e_off[i] : e_off[i + 1]] - n_off[i]
        out.append(Graph(int(batch.node_counts[i]), e, batch.x[n_off[i] : n_off[i + 1]], int(batch.labels[i])))
    return out


def random_graph(rng: np.random.Generator, min_nodes: int = 1, max_nodes: int = 12, attr_dim: int = 3,
                 edge_prob: float = 0.3, label: int = 0) -> Graph:
    """Erdos-Renyi graph with Gaussian node attributes (test and verification helper)."""
    n = int(rng.integers(min_nodes, max_nodes + 1))
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < edge_prob
    edges = canonical_edges(np.stack([iu[keep], ju[keep]], axis=1))
    x = rng.normal(size=(n, attr_dim)).astype(ATTR_DTYPE)
    return Graph(n, edges, x, label)


FIXTURES = ("FIXTURE", "TINY")


def fixture_dir() -> Path:
    return Path(str(resources.files("graphad") / "fixtures"))


def load_fixture(name: str = "FIXTURE") -> Dataset:
    """Load one of the datasets bundled with the package."""
    if name not in FIXTURES:
        raise FormatError(f"unknown fixture {name!r}; available: {FIXTURES}")
    return load_tu_dataset(fixture_dir(), name)
