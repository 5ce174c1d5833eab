"""Per-graph loss terms. All functions broadcast over leading batch dimensions."""

import math

import torch
import torch.nn.functional as F

COS_EPS = 1e-8


def _unit(z, eps=COS_EPS):
    return z / z.norm(dim=-1, keepdim=True).clamp(min=eps)


def cosine_sim(z, z2, eps=COS_EPS):
    """Cosine similarity along the last axis; zero-norm inputs are treated as norm ``eps``."""
    z, z2 = torch.as_tensor(z), torch.as_tensor(z2)
    return (_unit(z, eps) * _unit(z2, eps)).sum(-1)


def gtl_loss(ref, views, tau):
    """Transformation-learning contrastive loss.

    ``ref`` has shape (..., D) and ``views`` (..., K, D). For every view k the
    positive pair is (view k, reference) and the negatives are the other
    views; the per-graph loss sums the K cross-entropies. Returns shape (...).
    """
    ref, views = torch.as_tensor(ref), torch.as_tensor(views)
    k = views.shape[-2]
    if k < 2:
        raise ValueError("gtl_loss needs at least two views")
    v = _unit(views)
    pos = (v * _unit(ref).unsqueeze(-2)).sum(-1) / tau  # (..., K)
    between = v @ v.transpose(-1, -2) / tau  # (..., K, K)
    diag = torch.eye(k, dtype=torch.bool, device=v.device)
    between = between.masked_fill(diag, float("-inf"))
    logits = torch.cat([pos.unsqueeze(-1), between], dim=-1)
    return (torch.logsumexp(logits, dim=-1) - pos).sum(-1)


def occ_loss(views, center, squared=False):
    """Sum over views of the Euclidean distance to ``center``."""
    views, center = torch.as_tensor(views), torch.as_tensor(center)
    d = (views - center).norm(dim=-1)
    if squared:
        d = d * d
    return d.sum(-1)


def svdd_loss(emb, center):
    """Squared distance of a single embedding to a fixed center."""
    diff = torch.as_tensor(emb) - torch.as_tensor(center)
    return (diff * diff).sum(-1)


def transform_ce(logits, targets):
    """Per-sample cross-entropy of transformation prediction."""
    return F.cross_entropy(logits, targets, reduction="none")


def uniform_gtl_value(k: int) -> float:
    """``K ln K``: the loss when every view is indistinguishable from the others."""
    return k * math.log(k)
