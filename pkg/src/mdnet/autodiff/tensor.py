"""Dense float64 tensors on a define-by-run tape.

Every operation in :mod:`mdnet.autodiff.ops` produces a new ``Tensor``
whose ``_backward`` closure knows how to push an upstream gradient into
its parents.  The tape is rebuilt on every forward pass; ``backward``
walks it once in reverse topological order.  ``Parameter`` leaves keep
their gradient buffers across passes so separate losses can be
backpropagated and harvested independently.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable

import numpy as np

from ..errors import NumericError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation fast path)."""

    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A node of the tape: float64 data plus backward bookkeeping."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, _parents: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


class Parameter(Tensor):
    """A named trainable leaf; gradients accumulate until explicitly cleared."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def make_node(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Create an op output; drops tape info when grads are disabled."""

    if not _grad_enabled:
        return Tensor(data)
    out = Tensor(data, parents)
    out._backward = backward
    return out


def accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order  # parents precede children; root is last


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into every reachable node's ``grad``.

    Non-parameter nodes are reset first so a shared forward subgraph can
    serve several losses in turn; ``Parameter`` gradients are only ever
    added to (callers zero them via :func:`zero_grads` or ``sgd_step``).
    """

    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    order = _toposort(loss)
    for node in order:
        if not isinstance(node, Parameter):
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad = None


def sgd_step(params: Iterable[Parameter], lr: float) -> None:
    """Plain gradient descent: ``value -= lr * grad``, then clear grads.

    Parameters without an accumulated gradient are left untouched.
    """

    if lr < 0:
        raise ShapeError(f"learning rate must be >= 0, got {lr}")
    for p in params:
        if p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient for parameter {p.name!r}")
        p.data -= lr * p.grad
        p.grad = None
