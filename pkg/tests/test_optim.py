import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatedclip.errors import NonFiniteGradientError
from gatedclip.nn_core import ParameterSet
from gatedclip.optim import (
    AdamWState,
    OptimHyper,
    ScheduleConfig,
    adamw_step,
    clip_global_norm,
    lr_at,
)


def single_param(values) -> ParameterSet:
    params = ParameterSet()
    params.add("theta", np.asarray(values, dtype=np.float64))
    return params


class TestClipping:
    def test_three_four_five(self):
        params = single_param([0.0, 0.0])
        params["theta"].grad[...] = [3.0, 4.0]
        factor = clip_global_norm(params, 1.0)
        assert abs(factor - 0.2) < 1e-12
        assert np.allclose(params["theta"].grad, [0.6, 0.8])

    def test_below_threshold_untouched(self):
        params = single_param([0.0, 0.0])
        params["theta"].grad[...] = [0.3, 0.4]
        assert clip_global_norm(params, 1.0) == 1.0
        assert np.allclose(params["theta"].grad, [0.3, 0.4])

    def test_zero_gradients_untouched(self):
        params = single_param([1.0, 1.0])
        assert clip_global_norm(params, 1.0) == 1.0
        assert not params["theta"].grad.any()

    def test_non_finite_gradient_names_parameter(self):
        params = single_param([1.0])
        params["theta"].grad[...] = [float("nan")]
        with pytest.raises(NonFiniteGradientError, match="theta"):
            clip_global_norm(params, 1.0)

    def test_spans_multiple_tensors(self):
        params = ParameterSet()
        params.add("a", np.zeros(1))
        params.add("b", np.zeros(1))
        params["a"].grad[...] = [3.0]
        params["b"].grad[...] = [4.0]
        factor = clip_global_norm(params, 1.0)
        assert abs(factor - 0.2) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10**6), max_norm=st.floats(0.1, 5.0))
    def test_post_clip_norm_bounded(self, seed, max_norm):
        rng = np.random.default_rng(seed)
        params = ParameterSet()
        params.add("w", np.zeros((3, 3)))
        params.add("b", np.zeros(3))
        params["w"].grad[...] = rng.standard_normal((3, 3)) * 10
        params["b"].grad[...] = rng.standard_normal(3) * 10
        clip_global_norm(params, max_norm)
        norm = math.sqrt(sum(float(np.sum(t.grad**2)) for t in params))
        assert norm <= max_norm + 1e-6


class TestSchedule:
    SCHED = ScheduleConfig(peak_lr=1e-4, warmup_epochs=2, total_epochs=4, steps_per_epoch=10)

    def test_first_step(self):
        assert abs(lr_at(0, self.SCHED) - 5e-6) < 1e-18

    def test_last_warmup_step_is_exact_peak(self):
        assert lr_at(19, self.SCHED) == 1e-4

    def test_boundary_continuity(self):
        assert abs(lr_at(19, self.SCHED) - lr_at(20, self.SCHED)) <= 1e-12

    def test_cosine_midpoint_is_exact_half_peak(self):
        # warmup 20 steps, cosine span 20 steps: step 30 is t = 0.5
        assert lr_at(30, self.SCHED) == 0.5e-4

    def test_end_approaches_min_lr(self):
        assert lr_at(39, self.SCHED) < 1e-5
        sched = ScheduleConfig(
            peak_lr=1e-4, warmup_epochs=2, total_epochs=4, steps_per_epoch=10, min_lr=1e-6
        )
        assert lr_at(39, sched) >= 1e-6

    def test_nonnegative_and_bounded_everywhere(self):
        for step in range(40):
            lr = lr_at(step, self.SCHED)
            assert 0.0 <= lr <= 1e-4 + 1e-18

    def test_monotone_during_warmup(self):
        lrs = [lr_at(s, self.SCHED) for s in range(20)]
        assert all(b > a for a, b in zip(lrs, lrs[1:]))

    def test_invalid_schedule_rejected(self):
        with pytest.raises(ValueError):
            ScheduleConfig(warmup_epochs=5, total_epochs=5).validate()
        with pytest.raises(ValueError):
            ScheduleConfig(total_epochs=3, steps_per_epoch=0).validate()


class TestAdamW:
    def test_zero_grad_zero_decay_is_identity(self):
        params = single_param([1.0, -2.0, 3.0])
        state = AdamWState.for_params(params)
        before = params["theta"].values.copy()
        adamw_step(params, state, OptimHyper(weight_decay=0.0), lr=0.1)
        assert np.array_equal(params["theta"].values, before)
        assert state.step_count == 1

    def test_hand_computed_first_step(self):
        # theta=1, g=0.5, lr=0.1, defaults: m_hat=0.5, v_hat=0.25,
        # update = 0.1*(0.5/(0.5+1e-8) + 0.01) => theta' ~ 0.899
        params = single_param([1.0])
        params["theta"].grad[...] = [0.5]
        state = AdamWState.for_params(params)
        adamw_step(params, state, OptimHyper(), lr=0.1)
        assert abs(params["theta"].values[0] - 0.8990000019999999) < 1e-12

    def test_decay_only_shrinks_multiplicatively(self):
        params = single_param([2.0, -4.0])
        state = AdamWState.for_params(params)
        adamw_step(params, state, OptimHyper(weight_decay=0.01), lr=0.1)
        assert np.allclose(params["theta"].values, [2.0 * 0.999, -4.0 * 0.999], atol=1e-15)

    def test_bias_correction_uses_shared_step_count(self):
        params = ParameterSet()
        params.add("a", np.ones(1))
        params.add("b", np.ones(1))
        state = AdamWState.for_params(params)
        for _ in range(3):
            params["a"].grad[...] = [0.1]
            params["b"].grad[...] = [0.1]
            adamw_step(params, state, OptimHyper(weight_decay=0.0), lr=0.01)
        assert state.step_count == 3
        assert np.allclose(params["a"].values, params["b"].values)

    def test_non_finite_update_rejected(self):
        params = single_param([1.0])
        params["theta"].grad[...] = [float("inf")]
        state = AdamWState.for_params(params)
        with pytest.raises(NonFiniteGradientError):
            adamw_step(params, state, OptimHyper(), lr=0.1)

    def test_converges_on_quadratic(self):
        # 200 steps on ||theta - target||^2 from a random start
        rng = np.random.default_rng(42)
        target = rng.uniform(-1, 1, 8)
        params = single_param(target + rng.uniform(-0.5, 0.5, 8))
        state = AdamWState.for_params(params)
        hyper = OptimHyper(weight_decay=0.0)
        for _ in range(200):
            params["theta"].grad[...] = 2 * (params["theta"].values - target)
            adamw_step(params, state, hyper, lr=5e-3)
        assert np.linalg.norm(params["theta"].values - target) < 1e-2

    def test_state_buffers_track_moments(self):
        params = single_param([0.0])
        params["theta"].grad[...] = [1.0]
        state = AdamWState.for_params(params)
        adamw_step(params, state, OptimHyper(weight_decay=0.0), lr=0.0)
        assert abs(state.m["theta"][0] - 0.1) < 1e-15
        assert abs(state.v["theta"][0] - 0.001) < 1e-15

    def test_invalid_hyper_rejected(self):
        with pytest.raises(ValueError):
            OptimHyper(beta1=1.0).validate()
        with pytest.raises(ValueError):
            OptimHyper(eps=0.0).validate()
