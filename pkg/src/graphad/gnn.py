"""GIN feature extractor: message passing, graph normalization, readout."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import GraphBatch
from .errors import ShapeError

NORM_EPS = 1e-5
NORMS = ("graph_norm", "batch_norm", "none")
POOLS = ("add", "mean", "max")


@dataclass(frozen=True)
class GinConfig:
    num_layers: int = 4
    hidden_dim: int = 32
    norm: str = "graph_norm"
    readout_pool: str = "add"
    readout_mlp_layers: int = 2
    epsilon_learnable: bool = False

    def __post_init__(self):
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ValueError("num_layers and hidden_dim must be >= 1")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")
        if self.readout_pool not in POOLS:
            raise ValueError(f"readout_pool must be one of {POOLS}")
        if self.readout_mlp_layers < 0:
            raise ValueError("readout_mlp_layers must be >= 0")

    @property
    def output_dim(self) -> int:
        return self.num_layers * self.hidden_dim


@dataclass
class TensorBatch:
    """A :class:`GraphBatch` moved to torch tensors."""

    x: torch.Tensor
    edge_index: torch.Tensor
    membership: torch.Tensor
    graph_count: int

    @classmethod
    def from_batch(cls, batch: GraphBatch, dtype=torch.float32) -> TensorBatch:
        return cls(
            torch.as_tensor(batch.x, dtype=dtype),
            torch.as_tensor(batch.edge_index, dtype=torch.long).reshape(-1, 2),
            torch.as_tensor(batch.membership, dtype=torch.long),
            batch.graph_count,
        )


def as_tensor_batch(batch, dtype=torch.float32) -> TensorBatch:
    if isinstance(batch, TensorBatch):
        if batch.x.dtype != dtype:
            return TensorBatch(batch.x.to(dtype), batch.edge_index, batch.membership, batch.graph_count)
        return batch
    return TensorBatch.from_batch(batch, dtype)


def neighbor_sum(h: torch.Tensor, edge_index: torch.Tensor) -> torch.Tensor:
    out = torch.zeros_like(h)
    if edge_index.numel():
        out.index_add_(0, edge_index[:, 0], h[edge_index[:, 1]])
    return out


def scatter_pool(h: torch.Tensor, membership: torch.Tensor, graph_count: int, pool: str) -> torch.Tensor:
    out = h.new_zeros((graph_count, h.shape[1]))
    if pool == "add":
        return out.index_add(0, membership, h)
    if pool == "mean":
        counts = torch.bincount(membership, minlength=graph_count).clamp(min=1).to(h.dtype)
        return out.index_add(0, membership, h) / counts[:, None]
    if pool == "max":
        idx = membership[:, None].expand_as(h)
        return out.scatter_reduce(0, idx, h, reduce="amax", include_self=False)
    raise ValueError(f"unknown pool {pool!r}")


def gin_layer_forward(h_prev: torch.Tensor, edge_index: torch.Tensor, eps, mlp: Callable,
                      norm: Callable | None = None, activation: Callable | None = torch.relu) -> torch.Tensor:
    """``activation(norm(mlp((1 + eps) * h_v + sum of neighbour rows)))`` per node."""
    h = mlp((1 + eps) * h_prev + neighbor_sum(h_prev, edge_index))
    if norm is not None:
        h = norm(h)
    if activation is not None:
        h = activation(h)
    return h


def graph_norm(h: torch.Tensor, membership: torch.Tensor, graph_count: int, alpha: torch.Tensor,
               gamma: torch.Tensor, beta: torch.Tensor, eps: float = NORM_EPS) -> torch.Tensor:
    """Per-graph normalization with a learnable fraction ``alpha`` of the mean removed."""
    mean = scatter_pool(h, membership, graph_count, "mean")
    centered = h - alpha * mean[membership]
    var = scatter_pool(centered * centered, membership, graph_count, "mean")
    return gamma * centered / torch.sqrt(var[membership] + eps) + beta


def readout(h_layer: torch.Tensor, membership: torch.Tensor, graph_count: int, pool: str,
            mlp: Callable | None = None) -> torch.Tensor:
    """Apply ``mlp`` to each node row, then pool rows per graph."""
    if mlp is not None:
        h_layer = mlp(h_layer)
    return scatter_pool(h_layer, membership, graph_count, pool)


class GraphNorm(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.alpha = nn.Parameter(torch.ones(dim))
        self.gamma = nn.Parameter(torch.ones(dim))
        self.beta = nn.Parameter(torch.zeros(dim))

    def forward(self, h, membership, graph_count):
        return graph_norm(h, membership, graph_count, self.alpha, self.gamma, self.beta)


class BatchNorm(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.bn = nn.BatchNorm1d(dim, eps=NORM_EPS, momentum=0.1)

    def forward(self, h, membership, graph_count):
        if self.training and h.shape[0] < 2:
            # Single-row batches carry no variance; fall back to running stats.
            return F.batch_norm(h, self.bn.running_mean, self.bn.running_var, self.bn.weight, self.bn.bias,
                                False, 0.0, self.bn.eps)
        return self.bn(h)


def mlp(in_dim: int, hidden_dim: int, out_dim: int, layers: int = 2) -> nn.Module:
    if layers == 0:
        return nn.Identity()
    if layers == 1:
        return nn.Linear(in_dim, out_dim)
    mods = [nn.Linear(in_dim, hidden_dim), nn.ReLU()]
    for _ in range(layers - 2):
        mods += [nn.Linear(hidden_dim, hidden_dim), nn.ReLU()]
    mods.append(nn.Linear(hidden_dim, out_dim))
    return nn.Sequential(*mods)


class GinLayer(nn.Module):
    def __init__(self, in_dim: int, cfg: GinConfig):
        super().__init__()
        self.mlp = mlp(in_dim, cfg.hidden_dim, cfg.hidden_dim, 2)
        eps = torch.zeros(1)
        if cfg.epsilon_learnable:
            self.eps = nn.Parameter(eps)
        else:
            self.register_buffer("eps", eps)
        if cfg.norm == "graph_norm":
            self.norm = GraphNorm(cfg.hidden_dim)
        elif cfg.norm == "batch_norm":
            self.norm = BatchNorm(cfg.hidden_dim)
        else:
            self.norm = None

    def forward(self, h, tb: TensorBatch):
        norm = None if self.norm is None else (lambda z: self.norm(z, tb.membership, tb.graph_count))
        return gin_layer_forward(h, tb.edge_index, self.eps, self.mlp, norm)


class FeatureExtractor(nn.Module):
    """A stack of GIN layers whose per-layer readouts are concatenated.

    ``forward`` returns a ``(graph_count, num_layers * hidden_dim)`` matrix.
    """

    def __init__(self, in_dim: int, cfg: GinConfig = GinConfig()):
        super().__init__()
        self.in_dim = in_dim
        self.cfg = cfg
        dims = [in_dim] + [cfg.hidden_dim] * cfg.num_layers
        self.layers = nn.ModuleList(GinLayer(dims[i], cfg) for i in range(cfg.num_layers))
        self.readouts = nn.ModuleList(
            mlp(cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.readout_mlp_layers) for _ in range(cfg.num_layers)
        )

    @property
    def output_dim(self) -> int:
        return self.cfg.output_dim

    def node_representations(self, batch) -> tuple[list[torch.Tensor], TensorBatch]:
        tb = as_tensor_batch(batch, self._dtype())
        if tb.x.shape[1] != self.in_dim:
            raise ShapeError(f"batch attr_dim {tb.x.shape[1]} != extractor input dim {self.in_dim}")
        h, hs = tb.x, []
        for layer in self.layers:
            h = layer(h, tb)
            hs.append(h)
        return hs, tb

    def forward(self, batch) -> torch.Tensor:
        hs, tb = self.node_representations(batch)
        return torch.cat(
            [readout(h, tb.membership, tb.graph_count, self.cfg.readout_pool, ro) for h, ro in zip(hs, self.readouts)],
            dim=1,
        )

    def _dtype(self):
        return next(self.parameters()).dtype


def embed(fe: nn.Module, batch) -> torch.Tensor:
    """Graph embeddings of every graph in ``batch``."""
    return fe(batch)


# -- checkpoints --------------------------------------------------------------

HEADER_KEY = "__header__"


def save_arrays(path, arrays: dict[str, np.ndarray], header: dict) -> None:
    """Write named arrays plus a JSON header to a single ``.npz`` file."""
    payload = {HEADER_KEY: np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for k, v in arrays.items():
        if k == HEADER_KEY:
            raise ValueError(f"reserved array name {k}")
        payload[k] = np.asarray(v)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(bytes(z[HEADER_KEY]).decode())
        arrays = {k: z[k] for k in z.files if k != HEADER_KEY}
    return arrays, header


def state_arrays(module: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_state_arrays(module: nn.Module, arrays: dict[str, np.ndarray]) -> None:
    ref = module.state_dict()
    module.load_state_dict({k: torch.as_tensor(arrays[k]).to(ref[k].dtype) for k in ref}, strict=True)


def save_extractor(fe: FeatureExtractor, path) -> None:
    save_arrays(path, state_arrays(fe), {"in_dim": fe.in_dim, "gin": asdict(fe.cfg)})


def load_extractor(path) -> FeatureExtractor:
    arrays, header = load_arrays(path)
    fe = FeatureExtractor(header["in_dim"], GinConfig(**header["gin"]))
    dtype = next(iter(arrays.values())).dtype if arrays else np.float32
    if dtype == np.float64:
        fe = fe.double()
    load_state_arrays(fe, arrays)
    return fe
