"""Layers: conv oracle, batch norm statistics, activations, MSE, gradients."""

import numpy as np
import pytest

from csilab.convolution import (
    BACKEND,
    conv2d_forward,
    conv2d_grad_bias,
    conv2d_grad_input,
    conv2d_grad_weight,
)
from csilab.layers import (
    BatchNorm2d,
    Conv2d,
    Dense,
    conv2d,
    lrelu,
    mse_loss,
    sigmoid,
)
from csilab.tensor import Tensor

from test_tensor import check_grad


def naive_conv2d(x, w, bias):
    """Quadruple-loop same-padded cross-correlation oracle."""
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    pt, pl = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((B, O, H, W), dtype=np.float64)
    for b in range(B):
        for o in range(O):
            for h in range(H):
                for v in range(W):
                    acc = bias[o]
                    for c in range(C):
                        for i in range(kh):
                            for j in range(kw):
                                hh, vv = h + i - pt, v + j - pl
                                if 0 <= hh < H and 0 <= vv < W:
                                    acc += x[b, c, hh, vv] * w[o, c, i, j]
                    out[b, o, h, v] = acc
    return out


class TestConvOracle:
    def test_identity_1x1_kernel(self, rng):
        x = rng.standard_normal((2, 1, 5, 4))
        w = np.ones((1, 1, 1, 1))
        out = conv2d_forward(x, w, np.zeros(1))
        assert np.allclose(out, x)

    def test_hand_column_convolution(self):
        # 3x1 kernel of ones over the column [1,2,3] with zero padding.
        x = np.array([1.0, 2.0, 3.0]).reshape(1, 1, 3, 1)
        w = np.ones((1, 1, 3, 1))
        out = conv2d_forward(x, w, np.zeros(1))
        assert out.ravel().tolist() == [3.0, 6.0, 5.0]

    def test_fifty_random_configs_vs_naive(self):
        # Includes the model's kernel shapes 8x1, 1x8, 3x3, and 1x1.
        rng = np.random.default_rng(123)
        pinned = [(8, 1), (1, 8), (3, 3), (1, 1)]
        for trial in range(50):
            if trial < len(pinned):
                kh, kw = pinned[trial]
            else:
                kh, kw = rng.integers(1, 5), rng.integers(1, 5)
            B, C, O = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 5)
            H = rng.integers(max(kh, 2), 10)
            W = rng.integers(max(kw, 2), 10)
            x = rng.standard_normal((B, C, H, W))
            w = rng.standard_normal((O, C, kh, kw))
            bias = rng.standard_normal(O)
            got = conv2d_forward(x, w, bias)
            ref = naive_conv2d(x, w, bias)
            assert np.abs(got - ref).max() < 1e-10, (kh, kw, B, C, O, H, W)

    def test_even_kernel_output_extents_preserved(self, rng):
        x = rng.standard_normal((1, 2, 16, 13))
        w = rng.standard_normal((3, 2, 8, 1))
        assert conv2d_forward(x, w, np.zeros(3)).shape == (1, 3, 16, 13)

    def test_channel_mismatch_raises(self, rng):
        x = Tensor(rng.standard_normal((1, 3, 4, 4)))
        w = Tensor(rng.standard_normal((2, 4, 3, 3)))
        with pytest.raises(ValueError, match="channel mismatch"):
            conv2d(x, w, Tensor(np.zeros(2)))


class TestConvGradients:
    @pytest.mark.parametrize("kernel", [(3, 3), (8, 1), (1, 8), (2, 4)])
    def test_grad_input_weight_bias_vs_fd(self, kernel, rng):
        kh, kw = kernel
        x = rng.standard_normal((2, 3, 9, 8))
        w = rng.standard_normal((4, 3, kh, kw))
        bias = rng.standard_normal(4)
        gout = rng.standard_normal((2, 4, 9, 8))
        gx = conv2d_grad_input(gout, w)
        gw = conv2d_grad_weight(x, gout, kh, kw)
        gb = conv2d_grad_bias(gout)
        eps = 1e-6

        def f(xx, ww, bb):
            return float(np.sum(conv2d_forward(xx, ww, bb) * gout))

        for arr, grad in ((x, gx), (w, gw), (bias, gb)):
            d = rng.standard_normal(arr.shape)
            fd = (f(*(a + eps * d if a is arr else a for a in (x, w, bias)))
                  - f(*(a - eps * d if a is arr else a for a in (x, w, bias)))) / (2 * eps)
            assert abs(float((grad * d).sum()) - fd) < 1e-5 * max(abs(fd), 1.0)

    def test_layer_grad_through_tape(self, rng):
        layer = Conv2d(2, 3, (3, 3), rng)
        x0 = rng.standard_normal((2, 2, 5, 4))
        check_grad(lambda t: conv2d(t, layer.weight, layer.bias), x0, tol=1e-5)

    def test_weight_grad_through_tape_vs_fd(self, rng):
        x = Tensor(rng.standard_normal((2, 2, 5, 4)))
        w0 = rng.standard_normal((3, 2, 3, 3))
        bias = Tensor(np.zeros(3), requires_grad=True)

        def build(wt):
            return conv2d(x, wt, bias)

        wt = Tensor(w0.copy(), requires_grad=True)
        build(wt).sum().backward()
        eps = 1e-6
        d = rng.standard_normal(w0.shape)

        def f(w):
            return float(conv2d(x, Tensor(w), bias).sum().data)

        fd = (f(w0 + eps * d) - f(w0 - eps * d)) / (2 * eps)
        assert abs(float((wt.grad * d).sum()) - fd) < 1e-6 * max(abs(fd), 1.0)


class TestBatchNorm:
    def test_train_mode_statistics(self, rng):
        bn = BatchNorm2d(5)
        x = Tensor(rng.standard_normal((8, 5, 6, 7)) * 3 + 2)
        out = bn(x).data
        # gamma=1, beta=0 at init: output is the normalized activation.
        mean = out.mean(axis=(0, 2, 3))
        var = out.var(axis=(0, 2, 3))
        assert np.abs(mean).max() < 1e-6
        assert np.abs(var - 1).max() < 1e-5

    def test_eval_mode_is_affine_and_deterministic(self, rng):
        bn = BatchNorm2d(3)
        x = rng.standard_normal((4, 3, 5, 5))
        bn(Tensor(x))  # populate running stats
        bn.training = False
        a = bn(Tensor(x)).data
        b = bn(Tensor(x)).data
        assert np.array_equal(a, b)
        # Affine: f(2x) - f(x) = f(3x) - f(2x) elementwise.
        f1 = bn(Tensor(x)).data
        f2 = bn(Tensor(2 * x)).data
        f3 = bn(Tensor(3 * x)).data
        assert np.allclose(f2 - f1, f3 - f2, atol=1e-10)

    def test_running_stats_update(self, rng):
        bn = BatchNorm2d(2, momentum=0.9)
        x = rng.standard_normal((16, 2, 4, 4)) + 5.0
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        bn(Tensor(x))
        assert np.allclose(bn.running_mean, 0.9 * 0 + 0.1 * mu)
        assert np.allclose(bn.running_var, 0.9 * 1 + 0.1 * var)

    def test_shape_validation(self, rng):
        bn = BatchNorm2d(3)
        with pytest.raises(ValueError):
            bn(Tensor(rng.standard_normal((2, 4, 5, 5))))

    def test_input_gradient_vs_fd(self, rng):
        # Weighted loss: the gradient of a plain sum through batch norm is
        # identically zero (normalization removes the mean), so weight it.
        bn = BatchNorm2d(3)
        gout = rng.standard_normal((4, 3, 3, 2))
        x0 = rng.standard_normal((4, 3, 3, 2))
        check_grad(lambda t: bn(t) * Tensor(gout), x0, tol=1e-5)

    def test_gamma_beta_gradients_vs_fd(self, rng):
        x = Tensor(np.asarray(rng.standard_normal((4, 3, 3, 2))))
        bn = BatchNorm2d(3)
        gout = rng.standard_normal((4, 3, 3, 2))
        out = bn(x)
        (out * Tensor(gout)).sum().backward()
        eps = 1e-6
        for p in (bn.gamma, bn.beta):
            d = rng.standard_normal(p.shape)
            orig = p.data.copy()
            p.data = orig + eps * d
            hi = float((bn(x).data * gout).sum())
            p.data = orig - eps * d
            lo = float((bn(x).data * gout).sum())
            p.data = orig
            fd = (hi - lo) / (2 * eps)
            assert abs(float((p.grad * d).sum()) - fd) < 1e-5 * max(abs(fd), 1.0)


class TestActivations:
    def test_lrelu_paper_cases(self):
        x = Tensor(np.array([5.0, -10.0, 0.0]))
        out = lrelu(x, 0.3)
        assert np.allclose(out.data, [5.0, -3.0, 0.0])

    def test_lrelu_subgradient_at_zero_is_one(self):
        t = Tensor(np.array([0.0]), requires_grad=True)
        lrelu(t, 0.3).sum().backward()
        assert t.grad.tolist() == [1.0]

    def test_lrelu_grad_vs_fd(self, rng):
        # Keep magnitudes away from the kink so FD is clean.
        x0 = rng.standard_normal((5, 4)) + np.sign(rng.standard_normal((5, 4))) * 0.5
        check_grad(lambda t: lrelu(t, 0.3), x0)

    def test_sigmoid_range_and_grad(self, rng):
        x0 = rng.standard_normal((4, 4))
        out = sigmoid(Tensor(x0))
        assert np.all(out.data > 0) and np.all(out.data < 1)
        check_grad(lambda t: sigmoid(t), x0)

    def test_lrelu_preserves_dtype(self):
        out = lrelu(Tensor(np.ones((2, 2), dtype=np.float32)), 0.3)
        assert out.dtype == np.float32


class TestMseLoss:
    def test_equal_inputs_zero(self, rng):
        x = Tensor(rng.standard_normal((3, 2, 4)))
        assert mse_loss(x, Tensor(x.data.copy())).item() == 0.0

    def test_all_ones_difference(self):
        # Per-sample element count E: loss = E when pred - target == 1.
        pred = Tensor(np.ones((5, 2, 3, 4)))
        target = Tensor(np.zeros((5, 2, 3, 4)))
        assert mse_loss(pred, target).item() == 2 * 3 * 4

    def test_vs_loop_oracle(self, rng):
        p = rng.standard_normal((6, 3, 4))
        t = rng.standard_normal((6, 3, 4))
        want = sum(np.sum((p[i] - t[i]) ** 2) for i in range(6)) / 6
        got = mse_loss(Tensor(p), Tensor(t)).item()
        assert abs(got - want) < 1e-12 * abs(want)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


class TestDense:
    def test_forward_and_grad(self, rng):
        layer = Dense(6, 4, rng)
        x0 = rng.standard_normal((3, 6))
        want = x0 @ layer.weight.data + layer.bias.data
        assert np.allclose(layer(Tensor(x0)).data, want)
        check_grad(lambda t: layer(t), x0)


class TestModuleBookkeeping:
    def test_parameters_deduped_when_shared(self, rng):
        class Shared(Conv2d.__mro__[1]):  # Module
            def __init__(self):
                self.a = Conv2d(1, 1, (1, 1), rng)
                self.b = self.a

        mod = Shared()
        assert len(mod.parameters()) == 2  # one weight + one bias

    def test_train_eval_toggle(self, rng):
        bn = BatchNorm2d(2)

        class Wrap(Conv2d.__mro__[1]):
            def __init__(self):
                self.bn = bn

        w = Wrap()
        w.eval()
        assert bn.training is False
        w.train()
        assert bn.training is True


def test_backend_is_known():
    assert BACKEND in ("ext", "numpy")
