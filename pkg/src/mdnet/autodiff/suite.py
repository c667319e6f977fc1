"""Seeded gradient-check cases covering every primitive kind.

Used by the unit tests, the acceptance suite, and the ``gradcheck`` CLI
subcommand.  Each case pairs a scalar-valued function with the leaf
tensor whose gradient it probes; kinds with several differentiable
inputs get one case per input role.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import ops
from .gradcheck import grad_check
from .tensor import Tensor

Case = tuple[str, Callable[[Tensor], Tensor], Tensor]


def _weighted(out: Tensor, r: np.ndarray) -> Tensor:
    return ops.tsum(ops.mul(out, Tensor(r)))


def primitive_cases(seed: int) -> list[Case]:
    """One (label, f, x) case per primitive kind and differentiable role."""

    rng = np.random.default_rng(seed)
    cases: list[Case] = []

    def norm(*shape):
        return rng.standard_normal(shape)

    def away_from_zero(*shape, margin=0.05):
        x = norm(*shape)
        return np.where(np.abs(x) < margin, x + np.sign(x + 1e-12) * margin, x)

    # elementwise
    r23 = norm(2, 3)
    add_y = Tensor(norm(2, 3))
    mul_y = Tensor(norm(2, 3))
    cases.append(("add", lambda x: _weighted(ops.add(x, add_y), r23), Tensor(norm(2, 3))))
    cases.append(("mul", lambda x: _weighted(ops.mul(x, mul_y), r23), Tensor(norm(2, 3))))
    cases.append(("scale", lambda x: _weighted(ops.scale(x, 1.7), r23), Tensor(norm(2, 3))))
    cases.append(("log", lambda x: _weighted(ops.log(x), r23), Tensor(rng.uniform(0.4, 2.0, (2, 3)))))
    cases.append(("relu", lambda x: _weighted(ops.relu(x), r23), Tensor(away_from_zero(2, 3))))
    cases.append(("tanh", lambda x: _weighted(ops.tanh(x), r23), Tensor(norm(2, 3))))
    cases.append(("sigmoid", lambda x: _weighted(ops.sigmoid(x), r23), Tensor(norm(2, 3))))
    cases.append(("softmax", lambda x: _weighted(ops.softmax(x, axis=-1), r23), Tensor(norm(2, 3))))

    # reductions / shape
    sum_w = Tensor(norm(3))
    mean_w = Tensor(norm(2))
    cases.append(("sum", lambda x: ops.tsum(ops.mul(ops.tsum(x, axis=0), sum_w)), Tensor(norm(2, 3))))
    cases.append(("mean", lambda x: ops.tsum(ops.mul(ops.tmean(x, axis=1), mean_w)), Tensor(norm(2, 3))))
    r6 = norm(6)
    cases.append(("reshape", lambda x: _weighted(ops.reshape(x, (6,)), r6), Tensor(norm(2, 3))))
    r32 = norm(3, 2)
    cases.append(("transpose", lambda x: _weighted(ops.transpose(x, (1, 0)), r32), Tensor(norm(2, 3))))
    r25 = norm(2, 5)
    other = Tensor(norm(2, 2))
    cases.append(
        ("concat_channels", lambda x: _weighted(ops.concat_channels([x, other]), r25), Tensor(norm(2, 3)))
    )
    r22 = norm(2, 2)
    cases.append(
        ("slice_axis", lambda x: _weighted(ops.slice_axis(x, 1, 1, 2), r22), Tensor(norm(2, 4)))
    )

    # linear algebra
    w42 = Tensor(norm(4, 2))
    mm_x = Tensor(norm(3, 4))
    cases.append(("matmul", lambda x: _weighted(ops.matmul(x, w42), r32), Tensor(norm(3, 4))))
    cases.append(("matmul/rhs", lambda w: _weighted(ops.matmul(mm_x, w), r32), Tensor(norm(4, 2))))
    b342 = Tensor(norm(2, 4, 2))
    r232 = norm(2, 3, 2)
    cases.append(("bmm", lambda x: _weighted(ops.bmm(x, b342), r232), Tensor(norm(2, 3, 4))))
    lw = Tensor(norm(4, 3))
    lb = Tensor(norm(3))
    lx = Tensor(norm(2, 4))
    r23b = norm(2, 3)
    cases.append(("linear", lambda x: _weighted(ops.linear(x, lw, lb), r23b), Tensor(norm(2, 4))))
    cases.append(("linear/weight", lambda w: _weighted(ops.linear(lx, w, lb), r23b), Tensor(norm(4, 3))))
    cases.append(("linear/bias", lambda b: _weighted(ops.linear(lx, lw, b), r23b), Tensor(norm(3))))

    # convolutional stack
    cw = Tensor(norm(3, 2, 3, 3) * 0.5)
    r1355 = norm(1, 3, 5, 5)
    cases.append(
        ("conv2d", lambda x: _weighted(ops.conv2d(x, cw, stride=1, pad=1), r1355), Tensor(norm(1, 2, 5, 5)))
    )
    cx = Tensor(norm(1, 2, 5, 5))
    r1333 = norm(1, 3, 3, 3)
    cases.append(
        (
            "conv2d/weight",
            lambda w: _weighted(ops.conv2d(cx, w, stride=2, pad=1), r1333),
            Tensor(norm(3, 2, 3, 3) * 0.5),
        )
    )
    r1222 = norm(1, 2, 2, 2)
    cases.append(("avg_pool2", lambda x: _weighted(ops.avg_pool2(x), r1222), Tensor(norm(1, 2, 4, 4))))
    gap_w = norm(2, 3)
    cases.append(
        ("global_avg_pool", lambda x: _weighted(ops.global_avg_pool(x), gap_w), Tensor(norm(2, 3, 4, 4)))
    )

    # batch_norm: train mode w.r.t. x / gamma / beta, eval mode w.r.t. x
    bn_gamma = Tensor(rng.uniform(0.5, 1.5, 3))
    bn_beta = Tensor(norm(3))
    r2344 = norm(2, 3, 4, 4)

    def bn_train(x, gamma=bn_gamma, beta=bn_beta):
        state = ops.BnState.for_channels(3)
        return _weighted(ops.batch_norm(x, gamma, beta, state, training=True), r2344)

    bn_x = Tensor(norm(2, 3, 4, 4))
    cases.append(("batch_norm/train", bn_train, Tensor(norm(2, 3, 4, 4))))
    cases.append(("batch_norm/gamma", lambda g: bn_train(bn_x, gamma=g), Tensor(rng.uniform(0.5, 1.5, 3))))
    cases.append(("batch_norm/beta", lambda b: bn_train(bn_x, beta=b), Tensor(norm(3))))
    eval_state = ops.BnState.for_channels(3)
    eval_state.running_mean = norm(3) * 0.2
    eval_state.running_var = rng.uniform(0.5, 1.5, 3)
    cases.append(
        (
            "batch_norm/eval",
            lambda x: _weighted(ops.batch_norm(x, bn_gamma, bn_beta, eval_state, training=False), r2344),
            Tensor(norm(2, 3, 4, 4)),
        )
    )

    # lookup / loss
    ids = np.array([0, 2, 2, 1])
    r43 = norm(4, 3)
    cases.append(("embed_lookup", lambda t: _weighted(ops.embed_lookup(t, ids), r43), Tensor(norm(5, 3))))
    labels = np.array([1, 3, 0])
    r3 = norm(3)
    cases.append(
        (
            "nll_loss",
            lambda p: ops.tsum(ops.mul(ops.nll_loss(p, labels), Tensor(r3))),
            Tensor(rng.uniform(0.2, 1.0, (3, 4))),
        )
    )

    labels_set = {label.split("/")[0] for label, _, _ in cases}
    missing = set(ops.PRIMITIVE_KINDS) - labels_set
    if missing:
        raise AssertionError(f"primitive suite misses kinds: {sorted(missing)}")
    return cases


def run_primitive_suite(seeds=range(5), eps: float = 1e-5) -> dict[str, float]:
    """Worst grad_check error per kind across seeds."""

    worst: dict[str, float] = {}
    for seed in seeds:
        for label, f, x in primitive_cases(seed):
            err = grad_check(f, x, eps=eps)
            key = label.split("/")[0]
            worst[key] = max(worst.get(key, 0.0), err)
    return worst
