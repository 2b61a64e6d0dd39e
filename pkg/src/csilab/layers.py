"""Layers, activations, and the MSE loss used by the autoencoder.

Everything here composes :class:`~csilab.tensor.Tensor` primitives, so the
backward rules come either from the tape (batch norm, dense, activations) or
from the explicit conv adjoints in :mod:`csilab.convolution`.
"""

from __future__ import annotations

import numpy as np

from .convolution import (
    conv2d_forward,
    conv2d_grad_bias,
    conv2d_grad_input,
    conv2d_grad_weight,
)
from .tensor import Tensor

__all__ = [
    "Module",
    "Conv2d",
    "BatchNorm2d",
    "Dense",
    "conv2d",
    "lrelu",
    "sigmoid",
    "mse_loss",
]


class Module:
    """Base class holding named parameters and submodules."""

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        # Shared submodules (e.g. one conv path reused for both inputs) are
        # emitted once, under the first name they appear with.
        out: list[tuple[str, Tensor]] = []
        self._collect_parameters(prefix, set(), out)
        return out

    def _collect_parameters(self, prefix, seen, out) -> None:
        for name, value in vars(self).items():
            full = name if not prefix else f"{prefix}.{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                if id(value) not in seen:
                    seen.add(id(value))
                    out.append((full, value))
            elif isinstance(value, Module):
                if id(value) not in seen:
                    seen.add(id(value))
                    value._collect_parameters(full, seen, out)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module) and id(item) not in seen:
                        seen.add(id(item))
                        item._collect_parameters(f"{full}.{i}", seen, out)

    def modules(self) -> list["Module"]:
        found: list[Module] = []
        self._collect_modules(set(), found)
        return found

    def _collect_modules(self, seen, found) -> None:
        if id(self) in seen:
            return
        seen.add(id(self))
        found.append(self)
        for value in vars(self).values():
            if isinstance(value, Module):
                value._collect_modules(seen, found)
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        item._collect_modules(seen, found)

    def train(self) -> None:
        for m in self.modules():
            if hasattr(m, "training"):
                m.training = True

    def eval(self) -> None:
        for m in self.modules():
            if hasattr(m, "training"):
                m.training = False

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Same-padded cross-correlation with registered adjoints.

    ``x`` is (B, C, H, W), ``weight`` (O, C, kh, kw), ``bias`` (O,).  Output
    spatial extents equal the input's for any kernel size.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input/weight, got {x.shape}/{weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(
            f"conv2d channel mismatch: input has {x.shape[1]}, weight expects {weight.shape[1]}"
        )
    kh, kw = weight.shape[2], weight.shape[3]
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(weight.data)
    cache: dict = {}
    out_data = conv2d_forward(xd, wd, bias.data, cache)

    def backward(grad):
        grad = np.ascontiguousarray(grad)
        if x.requires_grad:
            x._accumulate(conv2d_grad_input(grad, wd))
        if weight.requires_grad:
            weight._accumulate(conv2d_grad_weight(xd, grad, kh, kw, cache))
        if bias.requires_grad:
            bias._accumulate(conv2d_grad_bias(grad))
        cache.clear()

    return Tensor._from_op(out_data, (x, weight, bias), backward)


def lrelu(x: Tensor, alpha: float = 0.3) -> Tensor:
    """Leaky ReLU; the subgradient at 0 is taken as 1 (the x >= 0 branch)."""
    mask = x.data >= 0
    a = x.dtype.type(alpha)
    y = np.where(mask, x.data, a * x.data)

    def backward(grad):
        if x.requires_grad:
            x._accumulate(np.where(mask, grad, a * grad))

    return Tensor._from_op(y, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))

    def backward(grad):
        if x.requires_grad:
            x._accumulate(grad * y * (1.0 - y))

    return Tensor._from_op(y, (x,), backward)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over the batch of per-sample squared Frobenius distance.

    The leading axis is the batch; all remaining axes are summed per sample.
    """
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    batch = pred.shape[0]
    diff = pred - target
    return (diff * diff).sum() * (1.0 / batch)


def _batchnorm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float):
    """Fused train-mode batch norm over (batch, H, W) per channel.

    Single-op forward with a closed-form backward; returns the output plus
    the batch mean/variance for the running-statistics update.
    """
    xd = x.data
    mu = xd.mean(axis=(0, 2, 3))
    xc = xd - mu[None, :, None, None]
    var = np.mean(xc * xc, axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + eps)
    xn = xc * inv[None, :, None, None]
    y = gamma.data[None, :, None, None] * xn + beta.data[None, :, None, None]

    def backward(grad):
        if beta.requires_grad:
            beta._accumulate(grad.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            gamma._accumulate((grad * xn).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxn = grad * gamma.data[None, :, None, None]
            m1 = dxn.mean(axis=(0, 2, 3))
            m2 = (dxn * xn).mean(axis=(0, 2, 3))
            dx = (dxn - m1[None, :, None, None] - xn * m2[None, :, None, None])
            dx *= inv[None, :, None, None]
            x._accumulate(dx)

    out = Tensor._from_op(y.astype(xd.dtype), (x, gamma, beta), backward)
    return out, mu, var


def _he_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    """Zero-padded 2-D convolution layer preserving spatial extents."""

    def __init__(self, in_channels, out_channels, kernel, rng, dtype=np.float64):
        kh, kw = kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = (kh, kw)
        fan_in = in_channels * kh * kw
        self.weight = Tensor(
            _he_init(rng, (out_channels, in_channels, kh, kw), fan_in, dtype),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)


class BatchNorm2d(Module):
    """Per-channel batch normalization over (batch, H, W).

    Train mode normalizes with batch statistics and updates the running
    buffers; eval mode is a fixed affine map using the running statistics.
    """

    def __init__(self, channels, eps: float = 1e-5, momentum: float = 0.9,
                 dtype=np.float64):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.training = True
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(f"batchnorm expects (B,{self.channels},H,W), got {x.shape}")
        if self.training:
            out, mu, var = _batchnorm_train(x, self.gamma, self.beta, self.eps)
            m = self.momentum
            self.running_mean = m * self.running_mean + (1 - m) * mu
            self.running_var = m * self.running_var + (1 - m) * var
            return out
        g = self.gamma.reshape(1, self.channels, 1, 1)
        b = self.beta.reshape(1, self.channels, 1, 1)
        shape = (1, self.channels, 1, 1)
        mu = self.running_mean.reshape(shape)
        inv = (1.0 / np.sqrt(self.running_var + self.eps)).reshape(shape)
        return (x - Tensor(mu)) * Tensor(inv) * g + b


class Dense(Module):
    """Fully connected layer: (B, n_in) -> (B, n_out)."""

    def __init__(self, n_in, n_out, rng, dtype=np.float64):
        self.n_in = n_in
        self.n_out = n_out
        self.weight = Tensor(
            _he_init(rng, (n_in, n_out), n_in, dtype), requires_grad=True
        )
        self.bias = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return x.matmul(self.weight) + self.bias.reshape(1, self.n_out)
