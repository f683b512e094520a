import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference
from splatqa.autodiff import Tensor
from splatqa.errors import DomainError
from splatqa.losses import LossConfig, loss_lin, loss_mon, loss_total
from splatqa.rng import make_rng


class TestLossLin:
    def test_perfect_positive_affine(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])
        assert loss_lin(2 * y + 3, y) == pytest.approx(0.0, abs=1e-12)

    def test_perfect_anticorrelation(self):
        y = np.array([1.0, 2.0, 3.0])
        assert loss_lin(-y, y) == pytest.approx(2.0, abs=1e-12)

    def test_constant_predictions_degenerate_branch(self):
        y = np.array([1.0, 2.0, 3.0])
        assert loss_lin(np.full(3, 2.0), y) == 1.0

    def test_affine_invariance_property(self):
        rng = make_rng(1)
        y = rng.normal(size=16)
        yhat = rng.normal(size=16)
        base = loss_lin(yhat, y)
        for _ in range(100):
            a = float(rng.uniform(0.01, 10.0))
            b = float(rng.normal(0, 5))
            assert abs(loss_lin(a * yhat + b, y) - base) < 1e-12

    def test_range(self):
        rng = make_rng(2)
        for _ in range(50):
            v = loss_lin(rng.normal(size=8), rng.normal(size=8))
            assert 0.0 <= v <= 2.0

    def test_gradient_matches_finite_differences(self):
        rng = make_rng(3)
        y = rng.normal(size=6)
        x = rng.normal(size=6)
        t = Tensor(x.copy(), requires_grad=True)
        loss_lin(t, y).backward()
        for i in range(6):
            def f(v, i=i):
                z = x.copy()
                z[i] = v
                return loss_lin(z, y)
            fd = central_difference(f, x[i])
            assert t.grad[i] == pytest.approx(fd, abs=1e-7)

    def test_too_short_rejected(self):
        with pytest.raises(DomainError):
            loss_lin(np.array([1.0]), np.array([1.0]))


class TestLossMon:
    def test_hand_case(self):
        assert loss_mon(np.array([1.5, 1.2]), np.array([2.0, 1.0])) == pytest.approx(0.175)

    def test_correct_order_with_big_margins(self):
        y = np.array([3.0, 2.0, 1.0])
        yhat = np.array([10.0, 5.0, 0.0])
        assert loss_mon(yhat, y) == 0.0

    def test_all_targets_equal(self):
        assert loss_mon(np.array([1.0, 5.0, 2.0]), np.ones(3)) == 0.0

    def test_translation_invariance(self):
        rng = make_rng(4)
        y = rng.normal(size=10)
        yhat = rng.normal(size=10)
        assert loss_mon(yhat + 17.5, y) == pytest.approx(loss_mon(yhat, y), abs=1e-12)

    def test_nonincreasing_when_margin_grows(self):
        y = np.array([2.0, 1.0])
        l1 = loss_mon(np.array([0.3, 0.0]), y)
        l2 = loss_mon(np.array([0.6, 0.0]), y)
        assert l2 <= l1

    def test_nonnegative(self):
        rng = make_rng(5)
        for _ in range(50):
            assert loss_mon(rng.normal(size=7), rng.normal(size=7)) >= 0.0

    def test_gradient_matches_finite_differences(self):
        rng = make_rng(6)
        y = rng.normal(size=5)
        x = rng.normal(size=5)
        t = Tensor(x.copy(), requires_grad=True)
        loss_mon(t, y).backward()
        for i in range(5):
            def f(v, i=i):
                z = x.copy()
                z[i] = v
                return loss_mon(z, y)
            fd = central_difference(f, x[i])
            assert t.grad[i] == pytest.approx(fd, abs=1e-7)


class TestLossTotal:
    def test_linear_combination(self):
        # engineered so L_lin = 0 and L_mon is the only term
        y = np.array([2.0, 1.0])
        yhat = np.array([1.5, 1.2])
        cfg = LossConfig(lambda_lin=0.5, lambda_mon=0.5)
        lin = loss_lin(yhat, y)
        mon = loss_mon(yhat, y)
        assert loss_total(yhat, y, cfg) == pytest.approx(0.5 * lin + 0.5 * mon)

    def test_lambda2_zero_reduces_to_lin(self):
        rng = make_rng(7)
        y = rng.normal(size=8)
        yhat = rng.normal(size=8)
        cfg = LossConfig(lambda_lin=0.7, lambda_mon=0.0)
        assert loss_total(yhat, y, cfg) == pytest.approx(0.7 * loss_lin(yhat, y))

    def test_default_weights(self):
        assert LossConfig() == LossConfig(lambda_lin=0.5, lambda_mon=0.5)

    def test_combined_gradient(self):
        rng = make_rng(8)
        y = rng.normal(size=6)
        x = rng.normal(size=6)
        cfg = LossConfig(lambda_lin=0.4, lambda_mon=0.6)
        t = Tensor(x.copy(), requires_grad=True)
        loss_total(t, y, cfg).backward()
        for i in range(6):
            def f(v, i=i):
                z = x.copy()
                z[i] = v
                return loss_total(z, y, cfg)
            fd = central_difference(f, x[i])
            assert t.grad[i] == pytest.approx(fd, abs=1e-7)

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=12),
           st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_bounds_property(self, ys, seed):
        y = np.array(ys)
        yhat = make_rng(seed).normal(size=len(y))
        lin = loss_lin(yhat, y)
        mon = loss_mon(yhat, y)
        # bounds hold up to float rounding of the Pearson ratio
        assert -1e-12 <= lin <= 2.0 + 1e-12
        assert mon >= 0.0
