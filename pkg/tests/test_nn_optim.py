import numpy as np
import pytest

from flowfuse.nn import Adam, AdamState, Tensor, adam_step


class TestAdamStep:
    def test_zero_gradient_leaves_params_unchanged(self, rng):
        p = [rng.normal(size=(4,))]
        state = AdamState.zeros_like(p)
        new_p, new_state = adam_step(p, [np.zeros(4)], state, lr=0.1)
        np.testing.assert_array_equal(new_p[0], p[0])
        assert new_state.step == 1

    def test_first_step_magnitude_is_signed_lr(self, rng):
        # m_hat = g, v_hat = g*g after bias correction, so the first update
        # is lr * g / (|g| + eps): magnitude ~ lr, direction -sign(g).
        g = rng.normal(size=(6,)) * 10.0
        p = [np.zeros(6)]
        new_p, _ = adam_step(p, [g], AdamState.zeros_like(p), lr=0.01)
        np.testing.assert_allclose(np.abs(new_p[0]), 0.01, rtol=1e-6)
        np.testing.assert_array_equal(np.sign(new_p[0]), -np.sign(g))

    def test_two_steps_reduce_quadratic(self):
        # f(x) = x^2, grad 2x, starting at x = 1.
        x = np.array([1.0])
        state = AdamState.zeros_like([x])
        for _ in range(2):
            (x,), state = adam_step([x], [2.0 * x], state, lr=0.1)
        assert x[0] ** 2 < 1.0

    def test_shape_mismatch_rejected(self):
        p = [np.zeros(3)]
        with pytest.raises(ValueError, match="shape"):
            adam_step(p, [np.zeros(4)], AdamState.zeros_like(p), lr=0.1)

    def test_functional_purity(self, rng):
        p = [rng.normal(size=(3,))]
        g = [rng.normal(size=(3,))]
        before = p[0].copy()
        adam_step(p, g, AdamState.zeros_like(p), lr=0.1)
        np.testing.assert_array_equal(p[0], before)


class TestAdamWrapper:
    def test_matches_functional_step(self, rng):
        data = rng.normal(size=(5,))
        grad = rng.normal(size=(5,))
        t = Tensor(data.copy(), requires_grad=True)
        t.grad = grad.copy()
        opt = Adam([t], lr=0.05)
        opt.step()
        (expected,), _ = adam_step([data], [grad], AdamState.zeros_like([data]), lr=0.05)
        np.testing.assert_allclose(t.data, expected)

    def test_converges_on_quadratic(self):
        t = Tensor(np.array([3.0]), requires_grad=True)
        opt = Adam([t], lr=0.1)
        for _ in range(200):
            opt.zero_grad()
            loss = (t * t).sum()
            loss.backward()
            opt.step()
        assert abs(t.data[0]) < 0.05

    def test_missing_grad_treated_as_zero(self, rng):
        t = Tensor(rng.normal(size=(3,)), requires_grad=True)
        before = t.data.copy()
        Adam([t], lr=0.1).step()
        np.testing.assert_array_equal(t.data, before)

    def test_deterministic(self, rng):
        def run():
            t = Tensor(np.ones(4), requires_grad=True)
            opt = Adam([t], lr=0.01)
            for _ in range(10):
                opt.zero_grad()
                ((t - 2.0) * (t - 2.0)).sum().backward()
                opt.step()
            return t.data.copy()

        np.testing.assert_array_equal(run(), run())
