import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from graphad.data import load_fixture, make_batch, random_graph
from graphad.errors import StateError
from graphad.gnn import GinConfig
from graphad.losses import gtl_loss, occ_loss, transform_ce
from graphad.models import (ConstantExtractor, GTLModel, GTPModel, OCGINModel, OCGTLModel, build_model, gtp_loss,
                            init_center, load_model, ocgin_loss, ocgtl_loss, save_model, score, score_graphs)
from graphad.training import TrainConfig, train

SMALL = GinConfig(num_layers=2, hidden_dim=8)


def tiny_graphs(rng, n=3, attr_dim=3):
    return [random_graph(rng, 2, 7, attr_dim, edge_prob=0.5) for _ in range(n)]


class FixedExtractor(torch.nn.Module):
    """Returns a preset embedding per graph position (test double)."""

    def __init__(self, rows):
        super().__init__()
        self.rows = torch.nn.Parameter(torch.as_tensor(rows, dtype=torch.float64))

    @property
    def output_dim(self):
        return self.rows.shape[1]

    def forward(self, batch):
        return self.rows[: batch.graph_count]


class TestOcgtl:
    def test_constant_extractors_give_k_ln_k(self, rng):
        theta = torch.as_tensor(rng.normal(size=8))
        m = OCGTLModel(3, k=6, reference=ConstantExtractor(theta), views=[ConstantExtractor(theta) for _ in range(6)],
                       center=theta).double()
        loss = ocgtl_loss(m, tiny_graphs(rng, 5))
        np.testing.assert_allclose(loss.detach().numpy(), 6 * math.log(6), atol=1e-6)

    def test_is_sum_of_sub_losses(self, rng):
        m = OCGTLModel(3, SMALL, k=4, tau=0.2).double()
        with torch.no_grad():
            m.center.normal_()
        b = make_batch(tiny_graphs(rng))
        ref, views = m.embeddings(b)
        expected = occ_loss(views, m.center) + gtl_loss(ref, views, 0.2)
        np.testing.assert_allclose(ocgtl_loss(m, b).detach().numpy(), expected.detach().numpy(), atol=1e-12)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.99))
    def test_scaling_toward_zero_center(self, seed, s):
        rng = np.random.default_rng(seed)
        ref, views = rng.normal(size=(3, 5)), rng.normal(size=(3, 4, 5))

        def model(scale):
            return OCGTLModel(1, k=4, tau=0.5, reference=FixedExtractor(scale * ref),
                              views=[FixedExtractor(scale * views[:, i]) for i in range(4)],
                              center=torch.zeros(5, dtype=torch.float64))

        batch = make_batch([random_graph(rng, 1, 2, 1) for _ in range(3)])
        full, scaled = model(1.0).loss_terms(batch), model(s).loss_terms(batch)
        np.testing.assert_allclose(scaled["occ"].detach().numpy(), s * full["occ"].detach().numpy(), rtol=1e-10)
        np.testing.assert_allclose(scaled["gtl"].detach().numpy(), full["gtl"].detach().numpy(), atol=1e-9)
        assert np.all(scaled["loss"].detach().numpy() < full["loss"].detach().numpy())

    def test_views_share_no_parameters(self):
        m = OCGTLModel(3, SMALL, k=3)
        ids = [{id(p) for p in f.parameters()} for f in [m.reference, *m.views]]
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                assert not ids[i] & ids[j]

    def test_center_trainable_and_zero(self):
        m = OCGTLModel(3, SMALL)
        assert m.center.requires_grad
        assert float(m.center.detach().abs().sum()) == 0.0
        assert m.center.shape == (16,)

    def test_score_breakdown(self, rng):
        m = OCGTLModel(3, SMALL, k=3)
        terms = score_graphs(m, tiny_graphs(rng, 4))
        np.testing.assert_allclose(terms["score"], terms["occ"] + terms["gtl"], rtol=1e-6)

    def test_invalid_tau(self):
        with pytest.raises(ValueError):
            OCGTLModel(3, SMALL, tau=0.0)


class TestGtl:
    def test_score_is_gtl_only(self, rng):
        m = GTLModel(3, SMALL, k=3)
        assert not hasattr(m, "center")
        terms = score_graphs(m, tiny_graphs(rng))
        np.testing.assert_allclose(terms["score"], terms["gtl"])
        assert set(terms) == {"gtl", "score"}


class TestOcgin:
    def test_zero_at_center(self):
        m = OCGINModel(1, extractor=FixedExtractor([[1.0, 2.0, 3.0, 4.0]]))
        m.center.copy_(torch.tensor([1.0, 2.0, 3.0, 4.0]))
        m.center_ready.fill_(True)
        b = make_batch([random_graph(np.random.default_rng(0), 1, 2, 1)])
        assert ocgin_loss(m, b).item() == 0.0
        m.center.copy_(torch.tensor([0.0, 1.0, 2.0, 3.0]))
        assert ocgin_loss(m, b).item() == pytest.approx(4.0)

    def test_uninitialized_center(self, rng):
        m = OCGINModel(3, SMALL)
        with pytest.raises(StateError):
            score(m, make_batch(tiny_graphs(rng)))

    def test_init_center_constant_embeddings(self, rng):
        m = OCGINModel(1, extractor=ConstantExtractor(torch.tensor([2.0, 2.0])))
        c = init_center(m, [random_graph(rng, 1, 3, 1) for _ in range(5)])
        np.testing.assert_allclose(c.numpy(), [2.0, 2.0])

    def test_init_center_clamps_small_coordinates(self):
        m = OCGINModel(1, extractor=FixedExtractor([[1.0, 0.0], [-1.0, 0.0]]))
        rng = np.random.default_rng(0)
        c = init_center(m, [random_graph(rng, 1, 2, 1) for _ in range(2)], batch_size=2)
        np.testing.assert_allclose(c.numpy(), [0.1, 0.1])

    def test_init_center_keeps_sign(self):
        m = OCGINModel(1, extractor=FixedExtractor([[-0.05, 3.0], [-0.01, 1.0]]))
        rng = np.random.default_rng(0)
        c = init_center(m, [random_graph(rng, 1, 2, 1) for _ in range(2)], batch_size=2)
        np.testing.assert_allclose(c.numpy(), [-0.1, 2.0])

    def test_init_center_empty(self):
        with pytest.raises(ValueError):
            init_center(OCGINModel(3, SMALL), [])

    def test_center_frozen_during_training(self):
        ds = load_fixture("FIXTURE")
        normal = [g for g in ds.graphs if g.label == 0]
        m = OCGINModel(ds.attr_dim, SMALL)
        init_center(m, normal)
        before = m.center.clone()
        train(m, normal[4:], normal[:4], TrainConfig(max_epochs=5, batch_size=16))
        assert torch.equal(before, m.center)
        assert "center" not in dict(m.named_parameters())

    def test_loss_decreases_over_first_epochs(self):
        ds = load_fixture("FIXTURE")
        normal = [g for g in ds.graphs if g.label == 0]
        torch.manual_seed(0)
        m = OCGINModel(ds.attr_dim)
        _, hist = train(m, normal[4:], normal[:4], TrainConfig(max_epochs=8))
        assert all(b < a for a, b in zip(hist.train_loss, hist.train_loss[1:]))


class TestGtp:
    def _zero_heads(self, m):
        with torch.no_grad():
            for h in m.heads:
                h.weight.zero_()
                h.bias.zero_()

    def test_uniform_logits(self, rng):
        m = GTPModel(3, SMALL)
        self._zero_heads(m)
        mean, scores = gtp_loss(m, make_batch(tiny_graphs(rng, 4)))
        assert mean.item() == pytest.approx(math.log(6), abs=1e-6)
        np.testing.assert_allclose(scores.detach().numpy(), 6 * math.log(6), atol=1e-5)

    def test_confident_logits_drive_score_to_zero(self):
        targets = torch.arange(6)
        vals = [float(transform_ce(margin * torch.eye(6), targets).sum()) for margin in (1.0, 10.0, 50.0)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 1e-15

    def test_score_is_sum_of_six_ce_terms(self, rng):
        m = GTPModel(3, SMALL).eval()
        gs = tiny_graphs(rng, 3)
        _, scores = gtp_loss(m, make_batch(gs))
        tgraphs, targets = m.transformed(gs)
        parts = []
        for i in range(len(tgraphs)):
            logits = m.logits(make_batch([tgraphs[i]]))
            parts.append(transform_ce(logits, torch.as_tensor(targets[i : i + 1])).item())
        expected = np.array(parts).reshape(3, 6).sum(1)
        np.testing.assert_allclose(scores.detach().numpy(), expected, atol=1e-5)

    def test_eval_scores_reproducible(self, rng):
        m = GTPModel(3, SMALL)
        gs = tiny_graphs(rng, 5)
        np.testing.assert_array_equal(score(m, make_batch(gs)), score(m, make_batch(gs)))

    def test_readout_has_no_mlp(self):
        m = GTPModel(3, GinConfig(num_layers=2, hidden_dim=8, readout_mlp_layers=2))
        assert m.gin.readout_mlp_layers == 0
        assert len(m.heads) == 2


class TestScoring:
    @pytest.mark.parametrize("kind", ["OCGTL", "GTL", "OCGIN", "GTP"])
    def test_pure_and_repeatable(self, rng, kind):
        gs = tiny_graphs(rng, 6)
        m = build_model(kind, 3, GinConfig(num_layers=2, hidden_dim=8, norm="batch_norm"), k=3)
        m.prepare(gs)
        before = {k: v.clone() for k, v in m.state_dict().items()}
        a, b = score(m, make_batch(gs)), score(m, make_batch(gs))
        np.testing.assert_array_equal(a, b)
        for k, v in m.state_dict().items():
            assert torch.equal(v, before[k]), k

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            build_model("SVDD", 3)

    @pytest.mark.parametrize("kind", ["OCGTL", "GTL", "OCGIN", "GTP"])
    def test_checkpoint_round_trip(self, tmp_path, rng, kind):
        gs = tiny_graphs(rng, 4)
        m = build_model(kind, 3, SMALL, k=3)
        m.prepare(gs)
        save_model(m, tmp_path / "m.npz", {"val_loss": [1.0, 0.5]})
        back, hist = load_model(tmp_path / "m.npz")
        np.testing.assert_array_equal(score(m, make_batch(gs)), score(back, make_batch(gs)))
        np.testing.assert_array_equal(hist["val_loss"], [1.0, 0.5])

    def test_monotone_transform_preserves_order(self, rng):
        m = OCGTLModel(3, SMALL, k=3)
        s = score_graphs(m, tiny_graphs(rng, 8))["score"]
        np.testing.assert_array_equal(np.argsort(s, kind="stable"), np.argsort(np.exp(s) + 3 * s, kind="stable"))
