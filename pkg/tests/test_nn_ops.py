import numpy as np
import pytest
from scipy import signal

from flowfuse.nn import (
    Tensor,
    avgpool2x,
    bilinear_upsample2x,
    concat_channels,
    conv2d,
    gradient_check,
    leaky_relu,
    set_debug_checks,
)


@pytest.fixture(autouse=True)
def debug_checks():
    set_debug_checks(True)
    yield
    set_debug_checks(False)


def randt(rng, *shape, grad=True):
    return Tensor(rng.normal(size=shape), requires_grad=grad)


class TestConv2d:
    def test_1x1_kernel_scales(self, rng):
        x = randt(rng, 2, 3, 4, 5)
        w = Tensor(np.full((3, 3, 1, 1), 0.0))
        for c in range(3):
            w.data[c, c, 0, 0] = 2.0
        b = Tensor(np.zeros(3))
        out = conv2d(x, w, b)
        np.testing.assert_allclose(out.data, 2.0 * x.data)

    def test_impulse_response_is_flipped_kernel(self, rng):
        # Cross-correlation: the response to a delta is the kernel flipped
        # in both spatial axes. Verified against scipy.signal.correlate2d.
        x = np.zeros((1, 1, 7, 7))
        x[0, 0, 3, 3] = 1.0
        k = rng.normal(size=(3, 3))
        out = conv2d(Tensor(x), Tensor(k[None, None]), Tensor(np.zeros(1)), padding=1)
        np.testing.assert_allclose(out.data[0, 0, 2:5, 2:5], k[::-1, ::-1])
        oracle = signal.correlate2d(x[0, 0], k, mode="same")
        np.testing.assert_allclose(out.data[0, 0], oracle, atol=1e-12)

    def test_matches_correlate2d_on_random_input(self, rng):
        x = rng.normal(size=(1, 1, 8, 9))
        k = rng.normal(size=(3, 3))
        out = conv2d(Tensor(x), Tensor(k[None, None]), Tensor(np.zeros(1)), padding=1)
        oracle = signal.correlate2d(x[0, 0], k, mode="same")
        np.testing.assert_allclose(out.data[0, 0], oracle, atol=1e-12)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
    def test_output_size_formula(self, rng, stride, padding):
        x = randt(rng, 1, 2, 9, 11, grad=False)
        w = randt(rng, 4, 2, 3, 3, grad=False)
        out = conv2d(x, w, Tensor(np.zeros(4)), stride=stride, padding=padding)
        expect_h = (9 + 2 * padding - 3) // stride + 1
        expect_w = (11 + 2 * padding - 3) // stride + 1
        assert out.data.shape == (1, 4, expect_h, expect_w)

    def test_channel_mismatch_rejected(self, rng):
        x = randt(rng, 1, 3, 4, 4, grad=False)
        w = randt(rng, 2, 4, 3, 3, grad=False)
        with pytest.raises(ValueError, match="channels"):
            conv2d(x, w, Tensor(np.zeros(2)), padding=1)

    def test_bad_stride_rejected(self, rng):
        x = randt(rng, 1, 1, 4, 4, grad=False)
        w = randt(rng, 1, 1, 3, 3, grad=False)
        with pytest.raises(ValueError, match="stride"):
            conv2d(x, w, Tensor(np.zeros(1)), stride=3)

    def test_gradient_vs_finite_differences(self, rng):
        # Spec case: seeded 1x2x5x5 input, 3x3 kernel, rel err < 1e-6.
        x = randt(rng, 1, 2, 5, 5)
        w = randt(rng, 3, 2, 3, 3)
        b = randt(rng, 3)
        weights = Tensor(rng.normal(size=(1, 3, 5, 5)))

        def graph():
            return (conv2d(x, w, b, stride=1, padding=1) * weights).sum()

        assert gradient_check(graph, [x, w, b]) < 1e-6

    def test_gradient_stride2(self, rng):
        x = randt(rng, 2, 3, 6, 6)
        w = randt(rng, 4, 3, 3, 3)
        b = randt(rng, 4)
        weights = Tensor(rng.normal(size=(2, 4, 3, 3)))

        def graph():
            return (conv2d(x, w, b, stride=2, padding=1) * weights).sum()

        assert gradient_check(graph, [x, w, b]) < 1e-6


class TestLeakyRelu:
    def test_values(self):
        out = leaky_relu(Tensor(np.array([[[[-1.0, 2.0]]]])))
        np.testing.assert_allclose(out.data, [[[[-0.1, 2.0]]]])

    def test_custom_slope(self):
        out = leaky_relu(Tensor(np.array([[[[-2.0]]]])), slope=0.25)
        assert out.data[0, 0, 0, 0] == -0.5

    def test_gradient(self, rng):
        x = Tensor(rng.normal(size=(1, 2, 4, 4)), requires_grad=True)
        x.data[np.abs(x.data) < 0.05] = 0.1  # keep clear of the kink
        weights = Tensor(rng.normal(size=(1, 2, 4, 4)))

        def graph():
            return (leaky_relu(x) * weights).sum()

        assert gradient_check(graph, [x]) < 1e-6


class TestBilinearUpsample:
    def test_constant_stays_constant(self):
        out = bilinear_upsample2x(Tensor(np.full((1, 2, 3, 4), 0.7)))
        assert out.data.shape == (1, 2, 6, 8)
        np.testing.assert_allclose(out.data, 0.7)

    def test_align_corners_false_ramp(self):
        # Input row [0, 1]: output samples at x = i/2 - 0.25, clamped,
        # giving [0, 0.25, 0.75, 1].
        x = Tensor(np.array([[[[0.0, 1.0]]]]))
        out = bilinear_upsample2x(x)
        np.testing.assert_allclose(out.data[0, 0, 0], [0.0, 0.25, 0.75, 1.0])

    def test_gradient(self, rng):
        x = randt(rng, 1, 2, 3, 5)
        weights = Tensor(rng.normal(size=(1, 2, 6, 10)))

        def graph():
            return (bilinear_upsample2x(x) * weights).sum()

        assert gradient_check(graph, [x]) < 1e-6


class TestConcatChannels:
    def test_order_and_values(self, rng):
        a = randt(rng, 1, 2, 3, 3, grad=False)
        b = randt(rng, 1, 1, 3, 3, grad=False)
        out = concat_channels([a, b])
        np.testing.assert_array_equal(out.data[:, :2], a.data)
        np.testing.assert_array_equal(out.data[:, 2:], b.data)

    def test_spatial_mismatch_rejected(self, rng):
        a = randt(rng, 1, 1, 3, 3, grad=False)
        b = randt(rng, 1, 1, 4, 3, grad=False)
        with pytest.raises(ValueError, match="incompatible"):
            concat_channels([a, b])

    def test_gradient(self, rng):
        a = randt(rng, 1, 2, 3, 3)
        b = randt(rng, 1, 3, 3, 3)
        weights = Tensor(rng.normal(size=(1, 5, 3, 3)))

        def graph():
            return (concat_channels([a, b]) * weights).sum()

        assert gradient_check(graph, [a, b]) < 1e-6


class TestAvgPool:
    def test_values(self):
        x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
        out = avgpool2x(x)
        np.testing.assert_allclose(out.data[0, 0], [[2.5, 4.5], [10.5, 12.5]])

    def test_odd_size_rejected(self):
        with pytest.raises(ValueError, match="even"):
            avgpool2x(Tensor(np.zeros((1, 1, 3, 4))))

    def test_gradient(self, rng):
        x = randt(rng, 2, 2, 4, 6)
        weights = Tensor(rng.normal(size=(2, 2, 2, 3)))

        def graph():
            return (avgpool2x(x) * weights).sum()

        assert gradient_check(graph, [x]) < 1e-6


class TestTensorBasics:
    def test_linear_graph_gradient_is_exact(self, rng):
        w = Tensor(rng.normal(size=(7,)), requires_grad=True)
        x = Tensor(rng.normal(size=(7,)))

        def graph():
            return (w * x).sum()

        assert gradient_check(graph, [w]) < 1e-9

    def test_backward_accumulates_without_zeroing(self, rng):
        x = Tensor(rng.normal(size=(3,)), requires_grad=True)
        (x * x).sum().backward()
        first = x.grad.copy()
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, 2.0 * first)

    def test_zero_grad_resets(self, rng):
        x = Tensor(rng.normal(size=(3,)), requires_grad=True)
        (x * x).sum().backward()
        x.zero_grad()
        assert x.grad is None

    def test_backward_needs_scalar(self, rng):
        x = Tensor(rng.normal(size=(3,)), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (x * x).backward()

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            Tensor(np.zeros(3)) + Tensor(np.zeros(4))

    def test_shared_subgraph_gradients_add(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = x * 3.0
        z = (y + y).sum()  # dz/dx = 6
        z.backward()
        np.testing.assert_allclose(x.grad, [6.0])

    def test_corrupted_backward_is_detected(self, rng):
        # Sentinel: an op whose registered backward is off by 5% must be
        # caught by the checker.
        x = Tensor(rng.normal(size=(4,)) + 3.0, requires_grad=True)

        def buggy_square(t):
            return Tensor._make(
                t.data**2, (t,), lambda g: ((t, g * 2.0 * t.data * 1.05),)
            )

        def graph():
            return buggy_square(x).sum()

        assert gradient_check(graph, [x]) > 1e-2

    def test_debug_mode_catches_nonfinite(self):
        set_debug_checks(True)
        with pytest.raises(FloatingPointError):
            Tensor(np.array([np.nan]))

    def test_pow_and_abs_chain(self, rng):
        x = Tensor(np.abs(rng.normal(size=(5,))) + 0.5, requires_grad=True)

        def graph():
            return ((x.abs() + 0.01) ** 0.4).sum()

        assert gradient_check(graph, [x]) < 1e-6
