"""Adam update and the warmup-polynomial learning-rate schedule."""

import numpy as np
import pytest

import duosql.autodiff as ad
from duosql.autodiff import ContractError, ParameterStore, backward
from duosql.optim import OptimizerState, adam_step, lr_schedule


def test_zero_grads_leave_parameters_unchanged():
    store = ParameterStore(1)
    w = store.add("w", (3, 3), "glorot_uniform")
    before = w.data.copy()
    backward(ad.scale(ad.tsum(w), 0.0), store)  # zero gradient everywhere
    adam_step(store, OptimizerState(lr=0.1))
    np.testing.assert_array_equal(w.data, before)


def test_first_step_matches_hand_evaluated_adam():
    # constant gradient g, fresh state, step 1:
    # m_hat = g, v_hat = g^2, update = -lr * g / (|g| + eps)
    store = ParameterStore(2)
    w = store.add("w", (4,), "zeros")
    g = np.array([0.5, -2.0, 1e-3, 0.0])
    w.grad = g.copy()
    lr, eps = 0.01, 1e-8
    opt = OptimizerState(lr=lr, epsilon=eps)
    adam_step(store, opt)
    expected = -lr * g / (np.abs(g) + eps)
    np.testing.assert_allclose(w.data, expected, rtol=1e-12)
    assert opt.step_count == 1


def test_two_runs_same_inputs_are_identical():
    def run():
        store = ParameterStore(3)
        w = store.add("w", (5,), "glorot_uniform")
        opt = OptimizerState(lr=0.05)
        for step in range(4):
            backward(ad.tsum(ad.mul(w, w)), store)
            adam_step(store, opt)
        return w.data.copy()

    np.testing.assert_array_equal(run(), run())


def test_missing_grad_is_a_contract_error():
    store = ParameterStore(4)
    store.add("w", (2,), "zeros")
    with pytest.raises(ContractError):
        adam_step(store, OptimizerState(lr=0.1))


def test_grads_cleared_after_step():
    store = ParameterStore(5)
    w = store.add("w", (2,), "zeros")
    w.grad = np.ones(2)
    adam_step(store, OptimizerState(lr=0.1))
    assert w.grad is None


class TestLrSchedule:
    def test_ramp_start_is_zero(self):
        assert lr_schedule(0, 7.44e-4, 2000, 40000) == 0.0

    def test_ramp_end_is_base(self):
        assert lr_schedule(2000, 7.44e-4, 2000, 40000) == pytest.approx(7.44e-4)

    def test_midpoint_decay_closed_form(self):
        # (40000-21000)/(40000-2000) = 0.5, decayed by sqrt
        got = lr_schedule(21000, 7.44e-4, 2000, 40000)
        assert got == pytest.approx(7.44e-4 * 0.5 ** 0.5, rel=1e-12)
        assert got == pytest.approx(5.261e-4, abs=1e-7)

    def test_beyond_max_clamps_to_zero_with_warning(self):
        with pytest.warns(UserWarning):
            assert lr_schedule(40001, 7.44e-4, 2000, 40000) == 0.0

    def test_rate_never_negative(self):
        for step in range(0, 40001, 997):
            assert lr_schedule(step, 7.44e-4, 2000, 40000) >= 0.0

    def test_warmup_equal_to_max_is_pure_ramp(self):
        # desk config uses warmup == max_steps; ramp branch owns the boundary
        assert lr_schedule(1000, 1e-3, 2000, 2000) == pytest.approx(5e-4)
        assert lr_schedule(2000, 1e-3, 2000, 2000) == pytest.approx(1e-3)

    def test_warmup_beyond_max_rejected(self):
        with pytest.raises(ContractError):
            lr_schedule(0, 1e-3, 300, 200)
