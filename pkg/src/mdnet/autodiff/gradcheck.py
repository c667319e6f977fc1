"""Central finite-difference oracle for analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NumericError, ShapeError
from .tensor import Parameter, Tensor, backward, no_grad


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Per coordinate: ``|analytic - fd| / max(1, |fd|)``.  ``f`` must be a
    deterministic map from ``x`` to a scalar; determinism is probed by
    evaluating twice and comparing bit for bit.
    """

    if eps <= 0:
        raise ShapeError(f"grad_check: eps must be > 0, got {eps}")
    with no_grad():
        probe_a = f(x).data.copy()
        probe_b = f(x).data.copy()
    if probe_a.shape != () and probe_a.size != 1:
        raise ShapeError(f"grad_check: f must return a scalar, got shape {probe_a.shape}")
    if not np.array_equal(probe_a, probe_b):
        raise NumericError("grad_check: f is not deterministic over repeated evaluation")

    if isinstance(x, Parameter):
        x.grad = None
    out = f(x)
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    flat = x.data.reshape(-1)
    worst = 0.0
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(x).data.reshape(()))
            flat[i] = orig - eps
            fm = float(f(x).data.reshape(()))
            flat[i] = orig
            fd = (fp - fm) / (2 * eps)
            err = abs(analytic.reshape(-1)[i] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    return worst
