"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps a float64 ndarray and records the operations that produced
it. Calling backward() on a scalar result walks the recorded graph in
reverse topological order and accumulates gradients into every tensor
created with requires_grad=True. Gradients accumulate across backward
calls until zero_grad() resets them.

The op set is deliberately small: elementwise arithmetic, abs, scalar
powers, reductions, and the layer kernels in flowfuse.nn.ops. There is no
general broadcasting; shapes must match except where an op documents
otherwise.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable

import numpy as np

__all__ = ["Tensor", "set_debug_checks", "debug_checks_enabled", "no_grad"]

_DEBUG_CHECKS = False
_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Skip tape recording inside the block (inference mode)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def set_debug_checks(enabled: bool) -> None:
    """Toggle finiteness assertions on every op output and gradient."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def debug_checks_enabled() -> bool:
    return _DEBUG_CHECKS


def _assert_finite(arr: np.ndarray, what: str) -> None:
    if _DEBUG_CHECKS and not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values in {what}")


class Tensor:
    """Node in the recorded computation graph.

    Attributes:
        data: float64 ndarray holding the value.
        grad: accumulated gradient, same shape as data, or None until the
            first backward pass reaches this tensor.
        requires_grad: whether backward should deposit a gradient here.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward
        _assert_finite(self.data, f"tensor {name or '<unnamed>'}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        _assert_finite(grad, f"gradient of {self.name or '<unnamed>'}")
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's grad.

        Args:
            grad: Seed gradient. Defaults to 1, which requires self to be
                a scalar.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ValueError(f"seed shape {grad.shape} != output shape {self.data.shape}")

        order = self._topo_order()
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node._accumulate(g)
            if node._backward is None:
                continue
            for parent, pg in node._backward(g):
                if not parent._needs_grad():
                    continue
                _assert_finite(pg, "backward intermediate")
                existing = grads.get(id(parent))
                # Never mutate pg in place: ops may hand the same array to
                # several parents (e.g. add passes its seed through).
                grads[id(parent)] = pg if existing is None else existing + pg

    def _needs_grad(self) -> bool:
        return self.requires_grad or self._backward is not None

    def _topo_order(self) -> list["Tensor"]:
        """Reverse topological order, iterative to handle deep graphs."""
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return order[::-1]

    # -- graph-building helpers -------------------------------------------

    @staticmethod
    def _make(data, parents: Iterable["Tensor"], backward) -> "Tensor":
        parents = tuple(parents)
        if _GRAD_ENABLED and any(p._needs_grad() for p in parents):
            return Tensor(data, _parents=parents, _backward=backward)
        return Tensor(data)

    def _binary_shapes(self, other: "Tensor", op: str) -> None:
        if self.data.shape != other.data.shape:
            raise ValueError(f"{op}: shape mismatch {self.data.shape} vs {other.data.shape}")

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            self._binary_shapes(other, "add")
            return Tensor._make(
                self.data + other.data,
                (self, other),
                lambda g: ((self, g), (other, g)),
            )
        c = float(other)
        return Tensor._make(self.data + c, (self,), lambda g: ((self, g),))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            self._binary_shapes(other, "sub")
            return Tensor._make(
                self.data - other.data,
                (self, other),
                lambda g: ((self, g), (other, -g)),
            )
        return self + (-float(other))

    def __rsub__(self, other):
        return (-self) + float(other)

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: ((self, -g),))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            self._binary_shapes(other, "mul")
            return Tensor._make(
                self.data * other.data,
                (self, other),
                lambda g: ((self, g * other.data), (other, g * self.data)),
            )
        c = float(other)
        return Tensor._make(self.data * c, (self,), lambda g: ((self, g * c),))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / float(other))

    def __pow__(self, exponent: float):
        q = float(exponent)
        base = self.data

        def backward(g):
            return ((self, g * q * base ** (q - 1.0)),)

        return Tensor._make(base**q, (self,), backward)

    def abs(self):
        sign = np.sign(self.data)
        return Tensor._make(np.abs(self.data), (self,), lambda g: ((self, g * sign),))

    def sum(self, axis=None, keepdims: bool = False):
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def backward(g):
            if axis is None:
                return ((self, np.broadcast_to(g, shape)),)
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            return ((self, np.broadcast_to(gg, shape)),)

        return Tensor._make(data, (self,), backward)

    def __repr__(self):
        grad = "grad" if self.requires_grad else "const"
        return f"Tensor(shape={self.data.shape}, {grad}, name={self.name!r})"
