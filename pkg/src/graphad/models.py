"""Deep detector variants: OCGTL, GTL, OCGIN and GTP.

Every model exposes ``per_graph_loss`` (the training objective before the
batch mean) and ``score_terms`` (per-graph anomaly scores plus their
decomposition). Higher scores mean more anomalous.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .data import Graph, GraphBatch, make_batch, unbatch
from .errors import StateError
from .gnn import (FeatureExtractor, GinConfig, TensorBatch, as_tensor_batch, load_arrays, load_state_arrays,
                  save_arrays, scatter_pool, state_arrays)
from .losses import gtl_loss as _gtl_loss
from .losses import occ_loss as _occ_loss
from .losses import svdd_loss, transform_ce
from .transforms import TRANSFORM_KINDS, TransformSpec, apply_transform

KINDS = ("OCGTL", "GTL", "OCGIN", "GTP")
CENTER_MIN_ABS = 0.1


class ConstantExtractor(nn.Module):
    """Maps every graph to the same trainable vector."""

    def __init__(self, value):
        super().__init__()
        self.value = nn.Parameter(torch.as_tensor(value).clone())

    @property
    def output_dim(self):
        return self.value.shape[0]

    def forward(self, batch):
        n = batch.graph_count
        return self.value.unsqueeze(0).expand(n, -1)


class AdModel(nn.Module):
    kind = None

    def __init__(self):
        super().__init__()
        self.register_buffer("trained", torch.zeros((), dtype=torch.bool))

    def _tensor_batch(self, batch):
        if isinstance(batch, (list, tuple)):
            batch = make_batch(batch)
        return as_tensor_batch(batch, next(self.parameters()).dtype)

    def per_graph_loss(self, batch) -> torch.Tensor:
        return self.loss_terms(batch)["loss"]

    def loss_terms(self, batch) -> dict[str, torch.Tensor]:
        raise NotImplementedError

    def prepare(self, train_graphs: Sequence[Graph], batch_size: int = 128) -> None:
        """Hook run once before training."""

    @torch.no_grad()
    def score_terms(self, batch) -> dict[str, np.ndarray]:
        was_training = self.training
        self.eval()
        try:
            terms = self.loss_terms(batch)
        finally:
            self.train(was_training)
        out = {k: v.detach().cpu().double().numpy() for k, v in terms.items() if k != "loss"}
        out["score"] = terms.get("score", terms["loss"]).detach().cpu().double().numpy()
        return out

    def config(self) -> dict:
        raise NotImplementedError


class OCGTLModel(AdModel):
    """Reference extractor plus K view extractors, trained on one-class + contrastive terms."""

    kind = "OCGTL"
    use_occ = True
    use_gtl = True

    def __init__(self, in_dim: int, gin: GinConfig = GinConfig(), k: int = 6, tau: float = 0.1,
                 squared_occ: bool = False, reference: nn.Module | None = None,
                 views: Sequence[nn.Module] | None = None, center=None):
        super().__init__()
        if tau <= 0:
            raise ValueError("tau must be positive")
        if k < 2:
            raise ValueError("need at least two views")
        self.in_dim, self.gin, self.k, self.tau, self.squared_occ = in_dim, gin, k, float(tau), squared_occ
        self.reference = reference if reference is not None else FeatureExtractor(in_dim, gin)
        self.views = nn.ModuleList(views if views is not None else [FeatureExtractor(in_dim, gin) for _ in range(k)])
        if len(self.views) != k:
            raise ValueError(f"expected {k} view extractors, got {len(self.views)}")
        if self.use_occ:
            dim = self.reference.output_dim
            c = torch.zeros(dim) if center is None else torch.as_tensor(center)
            self.center = nn.Parameter(c.clone())

    def embeddings(self, batch) -> tuple[torch.Tensor, torch.Tensor]:
        tb = self._tensor_batch(batch)
        ref = self.reference(tb)
        views = torch.stack([f(tb) for f in self.views], dim=1)
        return ref, views

    def loss_terms(self, batch):
        ref, views = self.embeddings(batch)
        terms = {}
        loss = 0
        if self.use_occ:
            terms["occ"] = _occ_loss(views, self.center, squared=self.squared_occ)
            loss = loss + terms["occ"]
        if self.use_gtl:
            terms["gtl"] = _gtl_loss(ref, views, self.tau)
            loss = loss + terms["gtl"]
        terms["loss"] = loss
        return terms

    def config(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "gin": asdict(self.gin), "k": self.k, "tau": self.tau,
                "squared_occ": self.squared_occ}


class GTLModel(OCGTLModel):
    """Transformation learning alone; the contrastive loss is the score."""

    kind = "GTL"
    use_occ = False


class OCGINModel(AdModel):
    """Single GIN extractor with a fixed hypersphere center."""

    kind = "OCGIN"

    def __init__(self, in_dim: int, gin: GinConfig = GinConfig(), extractor: nn.Module | None = None):
        super().__init__()
        self.in_dim, self.gin = in_dim, gin
        self.extractor = extractor if extractor is not None else FeatureExtractor(in_dim, gin)
        self.register_buffer("center", torch.zeros(self.extractor.output_dim))
        self.register_buffer("center_ready", torch.zeros((), dtype=torch.bool))

    def loss_terms(self, batch):
        if not bool(self.center_ready):
            raise StateError("OCGIN center is not initialized; call init_center first")
        emb = self.extractor(self._tensor_batch(batch))
        d = svdd_loss(emb, self.center)
        return {"loss": d}

    def prepare(self, train_graphs, batch_size=128):
        if not bool(self.center_ready):
            init_center(self, train_graphs, batch_size)

    def config(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "gin": asdict(self.gin)}


def _seed_for(graph: Graph, t: int) -> int:
    return zlib.crc32(np.int64(t).tobytes(), graph.fingerprint())


class GTPModel(AdModel):
    """Predicts which hand-crafted transformation was applied to a graph.

    Readout per layer is pooling (add by default) followed by a linear head;
    the logits of all layers are summed.
    """

    kind = "GTP"

    def __init__(self, in_dim: int, gin: GinConfig = GinConfig(), transforms: Sequence[str] = TRANSFORM_KINDS,
                 ratio: float = 0.2, seed: int = 0):
        super().__init__()
        self.in_dim, self.ratio = in_dim, ratio
        self.transforms = tuple(transforms)
        self.gin = GinConfig(**{**asdict(gin), "readout_mlp_layers": 0})
        self.extractor = FeatureExtractor(in_dim, self.gin)
        self.heads = nn.ModuleList(nn.Linear(self.gin.hidden_dim, len(self.transforms))
                                   for _ in range(self.gin.num_layers))
        self.reseed(seed)

    def reseed(self, seed: int) -> None:
        self._rng = np.random.default_rng(seed)

    def logits(self, batch) -> torch.Tensor:
        hs, tb = self.extractor.node_representations(self._tensor_batch(batch))
        pool = self.gin.readout_pool
        return sum(head(scatter_pool(h, tb.membership, tb.graph_count, pool)) for h, head in zip(hs, self.heads))

    def transformed(self, graphs: Sequence[Graph]) -> tuple[list[Graph], np.ndarray]:
        """All transforms of every graph, graph-major; fresh randomness in train mode."""
        out, targets = [], []
        for g in graphs:
            for t, kind in enumerate(self.transforms):
                seed = int(self._rng.integers(2**31)) if self.training else _seed_for(g, t)
                out.append(apply_transform(g, TransformSpec(kind, self.ratio, seed)))
                targets.append(t)
        return out, np.asarray(targets)

    def ce_matrix(self, batch) -> torch.Tensor:
        graphs = unbatch(batch) if isinstance(batch, GraphBatch) else list(batch)
        tgraphs, targets = self.transformed(graphs)
        logits = self.logits(make_batch(tgraphs))
        ce = transform_ce(logits, torch.as_tensor(targets))
        return ce.view(len(graphs), len(self.transforms))

    def loss_terms(self, batch):
        ce = self.ce_matrix(batch)
        return {"loss": ce.mean(1), "score": ce.sum(1)}

    def config(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "gin": asdict(self.gin),
                "transforms": list(self.transforms), "ratio": self.ratio}


def build_model(kind: str, in_dim: int, gin: GinConfig = GinConfig(), k: int = 6, tau: float = 0.1,
                squared_occ: bool = False, ratio: float = 0.2, transforms=TRANSFORM_KINDS) -> AdModel:
    if kind == "OCGTL":
        return OCGTLModel(in_dim, gin, k, tau, squared_occ)
    if kind == "GTL":
        return GTLModel(in_dim, gin, k, tau)
    if kind == "OCGIN":
        return OCGINModel(in_dim, gin)
    if kind == "GTP":
        return GTPModel(in_dim, gin, transforms, ratio)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


# -- functional API -----------------------------------------------------------

def ocgtl_loss(model: OCGTLModel, batch) -> torch.Tensor:
    if model.kind != "OCGTL":
        raise TypeError("ocgtl_loss needs an OCGTL model")
    return model.per_graph_loss(batch)


def ocgin_loss(model: OCGINModel, batch) -> torch.Tensor:
    if model.kind != "OCGIN":
        raise TypeError("ocgin_loss needs an OCGIN model")
    return model.per_graph_loss(batch)


def gtp_loss(model: GTPModel, batch) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean transformation cross-entropy and the per-graph sum used as score."""
    ce = model.ce_matrix(batch)
    return ce.mean(), ce.sum(1)


@torch.no_grad()
def init_center(model: OCGINModel, train_graphs: Sequence[Graph], batch_size: int = 128) -> torch.Tensor:
    """Fix the center to the mean initial embedding, pushing near-zero coordinates to +-0.1."""
    graphs = list(train_graphs)
    if not graphs:
        raise ValueError("cannot initialize a center from an empty training set")
    was_training = model.training
    model.eval()
    total, n = 0, 0
    for i in range(0, len(graphs), batch_size):
        emb = model.extractor(model._tensor_batch(graphs[i : i + batch_size]))
        total = total + emb.sum(0)
        n += emb.shape[0]
    model.train(was_training)
    c = total / n
    small = c.abs() < CENTER_MIN_ABS
    sign = torch.where(c < 0, -1.0, 1.0).to(c.dtype)
    c = torch.where(small, sign * CENTER_MIN_ABS, c)
    model.center.copy_(c)
    model.center_ready.fill_(True)
    return model.center.clone()


def score(model: AdModel, batch) -> np.ndarray:
    return model.score_terms(batch)["score"]


def score_graphs(model: AdModel, graphs: Sequence[Graph], batch_size: int = 128) -> dict[str, np.ndarray]:
    parts = [model.score_terms(make_batch(graphs[i : i + batch_size])) for i in range(0, len(graphs), batch_size)]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


# -- checkpoints --------------------------------------------------------------

def save_model(model: AdModel, path, history: dict | None = None) -> None:
    arrays = state_arrays(model)
    for k, v in (history or {}).items():
        arrays[f"history/{k}"] = np.asarray(v, dtype=np.float64)
    header = {**model.config(), "dtype": str(next(model.parameters()).dtype).replace("torch.", "")}
    save_arrays(path, arrays, header)


def load_model(path) -> tuple[AdModel, dict[str, np.ndarray]]:
    arrays, header = load_arrays(path)
    gin = GinConfig(**header["gin"])
    kind = header["kind"]
    if kind in ("OCGTL", "GTL"):
        model = build_model(kind, header["in_dim"], gin, header["k"], header["tau"], header.get("squared_occ", False))
    elif kind == "GTP":
        model = GTPModel(header["in_dim"], gin, header["transforms"], header["ratio"])
    else:
        model = build_model(kind, header["in_dim"], gin)
    if header.get("dtype") == "float64":
        model = model.double()
    history = {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("history/")}
    load_state_arrays(model, {k: v for k, v in arrays.items() if not k.startswith("history/")})
    return model, history
