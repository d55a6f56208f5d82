"""Adam update rule: hand-computed steps, determinism, error handling."""

import numpy as np
import pytest

from dbvae.optim import adam_init, adam_step
from dbvae.rng import RngStream
from dbvae.tape import tensor


class TestAdamStep:
    def test_zero_gradient_is_a_no_op_but_advances_time(self):
        p = tensor(np.array([1.0, -2.0]), name="p")
        state = adam_init([p])
        adam_step([p], {p: np.zeros(2)}, state, lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        assert state.step == 1

    def test_first_step_hand_evaluation(self):
        # m1 = 0.1*g, v1 = 0.001*g^2; bias correction divides by the same
        # factors, so the first step is exactly lr * g / (|g| + eps)
        p = tensor(1.0, name="p")
        state = adam_init([p])
        adam_step([p], {p: np.asarray(1.0)}, state, lr=0.1)
        expected = 1.0 - 0.1 / (1.0 + 1e-8)
        assert abs(float(p.data) - expected) < 1e-15
        assert abs(float(p.data) - 0.9) < 1e-8

    def test_two_steps_match_direct_formula(self):
        lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
        g1, g2 = 2.0, -1.0
        p = tensor(0.0, name="p")
        state = adam_init([p])
        adam_step([p], {p: np.asarray(g1)}, state, lr, b1, b2, eps)
        adam_step([p], {p: np.asarray(g2)}, state, lr, b1, b2, eps)

        m = (1 - b1) * g1
        v = (1 - b2) * g1 ** 2
        x = -lr * (m / (1 - b1)) / (np.sqrt(v / (1 - b2)) + eps)
        m = b1 * m + (1 - b1) * g2
        v = b2 * v + (1 - b2) * g2 ** 2
        x -= lr * (m / (1 - b1 ** 2)) / (np.sqrt(v / (1 - b2 ** 2)) + eps)
        assert abs(float(p.data) - x) < 1e-15

    def test_hundred_steps_are_bit_identical_across_runs(self):
        def run():
            rng = RngStream(14)
            p = tensor(rng.normal((4, 3)), name="w")
            state = adam_init([p])
            for _ in range(100):
                adam_step([p], {p: p.data * 2.0}, state, lr=0.01)
            return p.data

        np.testing.assert_array_equal(run(), run())

    def test_non_finite_gradient_names_parameter(self):
        p = tensor(np.zeros(3), name="conv0.weight")
        state = adam_init([p])
        bad = np.array([0.0, np.nan, 0.0])
        with pytest.raises(ValueError, match="conv0.weight"):
            adam_step([p], {p: bad}, state)

    def test_gradient_shape_mismatch_rejected(self):
        p = tensor(np.zeros((2, 2)), name="w")
        state = adam_init([p])
        with pytest.raises(ValueError, match="shape"):
            adam_step([p], {p: np.zeros(3)}, state)

    def test_descends_a_quadratic(self):
        p = tensor(5.0, name="p")
        state = adam_init([p])
        for _ in range(2000):
            adam_step([p], {p: 2.0 * p.data}, state, lr=0.05)
        assert abs(float(p.data)) < 1e-3
