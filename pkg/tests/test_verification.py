import math

import numpy as np
import pytest
import torch

from graphad.errors import StateError
from graphad.models import OCGTLModel
from graphad.verification import (Check, ClaimReport, check_gradients, gradient_audit, relative_error,
                                  train_fixture_ocgtl, verify_claim1, verify_claim2)


@pytest.fixture(scope="module")
def trained():
    return train_fixture_ocgtl(seed=0, max_epochs=60)


class TestReport:
    def test_pass_derived_from_checks(self):
        rep = ClaimReport("x")
        rep.add("a", 1.0, "<", 2.0)
        assert rep.passed
        rep.add("b", 3.0, "<=", 2.0)
        assert not rep.passed
        assert rep.to_dict()["pass"] is False
        assert "[FAIL] x" in rep.render()

    def test_check_ops(self):
        assert Check("c", 1.0, ">=", 1.0).ok and not Check("c", 1.0, ">", 1.0).ok


class TestClaim1:
    def test_passes(self):
        rep = verify_claim1(seed=0)
        assert rep.passed, rep.render()
        assert rep.measured["K_lnK"] == pytest.approx(6 * math.log(6))
        assert rep.measured["occ_max"] <= 1e-7


class TestClaim2:
    def test_passes_on_fixture(self, trained):
        model, graphs = trained
        rep = verify_claim2(model, graphs)
        assert rep.passed, rep.render()
        assert rep.measured["train_gtl"] < 6 * math.log(6)
        assert rep.measured["scaled_combined"] < 6 * math.log(6)

    def test_untrained_model_rejected(self, trained):
        with pytest.raises(StateError):
            verify_claim2(OCGTLModel(4), trained[1])


class TestGradients:
    def test_relative_error(self):
        assert relative_error(torch.tensor([1.0, 0.0]), torch.tensor([1.0, 0.0])) == 0.0
        assert relative_error(torch.zeros(2), torch.zeros(2)) == 0.0
        assert relative_error(torch.tensor([1.0, 0.0]), torch.tensor([0.0, 1.0])) == pytest.approx(2 ** 0.5)

    def test_wrong_gradient_is_caught(self):
        x = torch.tensor([0.3, -0.7], dtype=torch.float64, requires_grad=True)

        class Wrong(torch.autograd.Function):
            @staticmethod
            def forward(ctx, z):
                ctx.save_for_backward(z)
                return (z ** 3).sum()

            @staticmethod
            def backward(ctx, g):
                (z,) = ctx.saved_tensors
                return g * 2 * z  # should be 3 z^2

        kinks = []
        errs = check_gradients(lambda: Wrong.apply(x), [("x", x)], excluded=kinks)
        assert errs["x"] > 0.1
        assert kinks == []

    def test_kink_is_excluded(self):
        x = torch.tensor([3e-5, 1.0], dtype=torch.float64, requires_grad=True)
        kinks = []
        errs = check_gradients(lambda: torch.relu(x).sum(), [("x", x)], excluded=kinks)
        assert kinks == [("x", 0)]
        assert errs["x"] < 1e-8

    def test_quick_audit(self):
        rep = gradient_audit(seed=3, n_instances=1, kinds=("OCGTL", "GTP"))
        assert rep.passed, rep.render()
        names = {c.name for c in rep.checks}
        assert "relative error OCGTL.center" in names
        assert "relative error gtl.tau" in names
        assert "relative error occ.theta_closed_form" in names
