"""Dense-array reverse-mode autodiff core.

A :class:`Tensor` wraps a real-valued numpy array and records the operations
applied to it on an implicit tape (the graph of ``_parents`` links plus
per-node backward closures).  Calling :meth:`Tensor.backward` on a scalar
loss walks the tape once, in reverse topological order, and accumulates
gradients into every reachable tensor with ``requires_grad=True``.

The op set is deliberately small: exactly what the encoder/decoder stack
needs.  Broadcasting is supported for singleton dimensions (gradients are
summed back over broadcast axes); anything fancier raises.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "concat", "no_grad"]

_FLOAT_DTYPES = (np.float32, np.float64)


class GradientError(ValueError):
    """Raised when a backward contract is violated (e.g. non-scalar loss)."""


class _NoGrad:
    """Context manager that suspends tape recording."""

    _active = False

    def __enter__(self):
        self._prev = _NoGrad._active
        _NoGrad._active = True
        return self

    def __exit__(self, *exc):
        _NoGrad._active = self._prev
        return False


def no_grad() -> _NoGrad:
    return _NoGrad()


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    # Leading axes that were added by broadcasting.
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # Singleton axes that were stretched.
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Real-valued dense array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) and not _NoGrad._active
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- graph construction -------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents, backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        track = (not _NoGrad._active) and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- basic protocol -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    # -- backward pass ------------------------------------------------------

    def backward(self) -> None:
        """Populate gradients of every ``requires_grad`` ancestor.

        The receiver must be a scalar (``size == 1``).  Repeated calls
        accumulate into existing ``grad`` buffers.
        """
        if self.data.size != 1:
            raise GradientError(
                f"backward() requires a scalar loss, got shape {self.shape}"
            )
        # Reverse topological order via iterative DFS.
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(
            np.asarray(other, dtype=self.data.dtype)
        )

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other

        def backward(grad):
            if a.requires_grad:
                a._accumulate(_unbroadcast(grad, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(grad, b.shape))

        return Tensor._from_op(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self

        def backward(grad):
            if a.requires_grad:
                a._accumulate(-grad)

        return Tensor._from_op(-a.data, (a,), backward)

    def __sub__(self, other) -> "Tensor":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        a, b = self, other

        def backward(grad):
            if a.requires_grad:
                a._accumulate(_unbroadcast(grad * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(grad * a.data, b.shape))

        return Tensor._from_op(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        return self * (self._coerce(other) ** -1.0)

    def __pow__(self, exponent: float) -> "Tensor":
        a = self
        p = float(exponent)
        out_data = a.data**p

        def backward(grad):
            if a.requires_grad:
                a._accumulate(grad * p * a.data ** (p - 1.0))

        return Tensor._from_op(out_data, (a,), backward)

    def scale(self, factor: float) -> "Tensor":
        return self * float(factor)

    # -- linear algebra -----------------------------------------------------

    def matmul(self, other: "Tensor") -> "Tensor":
        a, b = self, self._coerce(other)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(
                f"matmul shape mismatch: {a.shape} x {b.shape}"
            )

        def backward(grad):
            if a.requires_grad:
                a._accumulate(grad @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ grad)

        return Tensor._from_op(a.data @ b.data, (a, b), backward)

    __matmul__ = matmul

    # -- shape ops ----------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.shape

        def backward(grad):
            if a.requires_grad:
                a._accumulate(grad.reshape(old))

        return Tensor._from_op(a.data.reshape(shape), (a,), backward)

    def transpose(self, *axes) -> "Tensor":
        a = self
        if not axes:
            axes = tuple(reversed(range(a.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(np.argsort(axes))

        def backward(grad):
            if a.requires_grad:
                a._accumulate(grad.transpose(inverse))

        return Tensor._from_op(a.data.transpose(axes), (a,), backward)

    def __getitem__(self, key) -> "Tensor":
        a = self

        def backward(grad):
            if a.requires_grad:
                full = np.zeros_like(a.data)
                np.add.at(full, key, grad)
                a._accumulate(full)

        return Tensor._from_op(a.data[key], (a,), backward)

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def backward(grad):
            if not a.requires_grad:
                return
            g = grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape).copy())

        return Tensor._from_op(np.asarray(out_data), (a,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[i] for i in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


def concat(tensors, axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; all other extents must match."""
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of empty sequence")
    ndim = tensors[0].ndim
    if not -ndim <= axis < ndim:
        raise ValueError(f"concat axis {axis} out of range for ndim {ndim}")
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            i != axis and t.shape[i] != tensors[0].shape[i] for i in range(ndim)
        ):
            raise ValueError(
                f"concat shape mismatch: {t.shape} vs {tensors[0].shape}"
            )
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(grad[tuple(sl)])

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._from_op(data, tensors, backward)
