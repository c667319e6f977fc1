"""Engine tests: primitive semantics, backward routing, oracles."""

import numpy as np
import pytest

from mdnet.autodiff import (
    PRIMITIVE_KINDS,
    Parameter,
    Tensor,
    add,
    backward,
    concat_channels,
    conv2d,
    global_avg_pool,
    grad_check,
    linear,
    mul,
    nll_loss,
    relu,
    sgd_step,
    slice_axis,
    softmax,
    tensor_op,
    tsum,
)
from mdnet.autodiff.suite import primitive_cases, run_primitive_suite
from mdnet.errors import NumericError, ShapeError


def conv2d_oracle(x, w, stride=1, pad=0):
    """Direct quadruple-loop convolution, written independently of the engine."""

    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    out = np.zeros((n, f, ho, wo))
    for b in range(n):
        for oc in range(f):
            for oi in range(ho):
                for oj in range(wo):
                    acc = 0.0
                    for ic in range(c):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += (
                                    xp[b, ic, oi * stride + ki, oj * stride + kj]
                                    * w[oc, ic, ki, kj]
                                )
                    out[b, oc, oi, oj] = acc
    return out


class TestForwardExamples:
    def test_conv_identity_kernel(self):
        rng = np.random.default_rng(0)
        img = rng.standard_normal((1, 1, 6, 6))
        kernel = np.ones((1, 1, 1, 1))
        out = conv2d(Tensor(img), Tensor(kernel), stride=1, pad=0)
        np.testing.assert_array_equal(out.data, img)

    def test_global_avg_pool_mean(self):
        out = global_avg_pool(Tensor([[1.0, 2.0], [3.0, 4.0]]))
        assert out.item() == 2.5

    def test_conv_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 3, 3, 3))
        w = rng.standard_normal((2, 3, 3, 3))
        out = conv2d(Tensor(x), Tensor(w), stride=1, pad=1)
        expect = conv2d_oracle(x, w, stride=1, pad=1)
        np.testing.assert_allclose(out.data, expect, atol=1e-12)

    def test_conv_strided_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 4, 8, 8))
        w = rng.standard_normal((3, 4, 3, 3))
        out = conv2d(Tensor(x), Tensor(w), stride=2, pad=1)
        expect = conv2d_oracle(x, w, stride=2, pad=1)
        np.testing.assert_allclose(out.data, expect, atol=1e-12)

    def test_shape_mismatch_rejected_with_kind(self):
        with pytest.raises(ShapeError, match="conv2d"):
            conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
        with pytest.raises(ShapeError, match="softmax"):
            softmax(Tensor(np.zeros((2, 0))))


class TestBackward:
    def test_add_passes_gradient_unchanged(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        y = Tensor(np.ones((2, 3)))
        loss = tsum(add(x, y))
        backward(loss)
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))
        np.testing.assert_array_equal(y.grad, np.ones((2, 3)))

    def test_concat_routes_slices(self):
        rng = np.random.default_rng(3)
        a = Tensor(rng.standard_normal((2, 4, 4)))
        b = Tensor(rng.standard_normal((3, 4, 4)))
        weights = rng.standard_normal((5, 4, 4))
        loss = tsum(mul(concat_channels([a, b]), Tensor(weights)))
        backward(loss)
        np.testing.assert_array_equal(a.grad, weights[:2])
        np.testing.assert_array_equal(b.grad, weights[2:])

    def test_two_layer_network_matches_fd(self):
        rng = np.random.default_rng(4)
        w1 = Tensor(rng.standard_normal((5, 4)) * 0.5)
        w2 = Tensor(rng.standard_normal((4, 1)) * 0.5)

        def f(x):
            return tsum(linear(relu(linear(x, w1)), w2))

        err = grad_check(f, Tensor(rng.standard_normal((3, 5))))
        assert err < 1e-6

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ShapeError, match="scalar"):
            backward(Tensor(np.zeros(3)))

    def test_gradient_accumulates_across_uses(self):
        p = Parameter("p", np.array([2.0]))
        loss = tsum(add(mul(p, p), p))  # p^2 + p -> grad 2p + 1 = 5
        backward(loss)
        np.testing.assert_allclose(p.grad, [5.0])


class TestGradCheck:
    def test_sum_is_exact(self):
        # analytic gradient is all-ones; only float rounding of the
        # central difference itself remains
        x = Tensor(np.random.default_rng(5).standard_normal((3, 3)))
        assert grad_check(tsum, x) < 1e-9

    def test_relu_away_from_kink(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((4, 4))
        x = np.where(np.abs(x) < 1e-3, x + 0.1, x)
        err = grad_check(lambda t: tsum(relu(t)), Tensor(x))
        assert err < 1e-8

    def test_classifier_head(self):
        rng = np.random.default_rng(7)
        w = Tensor(rng.standard_normal((6, 4)) * 0.5)

        def f(x):
            return nll_loss(softmax(linear(x, w)), 2)

        err = grad_check(f, Tensor(rng.standard_normal(6)))
        assert err < 1e-6

    def test_nondeterministic_f_flagged(self):
        rng = np.random.default_rng(8)

        def f(x):
            return tsum(mul(x, Tensor(rng.standard_normal(x.shape))))

        with pytest.raises(NumericError, match="deterministic"):
            grad_check(f, Tensor(np.ones(3)))


class TestSgd:
    def test_zero_lr_is_identity(self):
        p = Parameter("p", np.array([1.0, -2.0]))
        p.grad = np.array([3.0, 4.0])
        sgd_step([p], 0.0)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_scalar_step(self):
        p = Parameter("p", np.array(1.0))
        p.grad = np.array(2.0)
        sgd_step([p], 0.1)
        np.testing.assert_allclose(p.data, 0.8)
        assert p.grad is None

    def test_quadratic_bowl_decay(self):
        # f(p) = p^2 from p=1 with lr 0.4 contracts by (1 - 0.8) per step
        p = Parameter("p", np.array(1.0))
        for _ in range(10):
            loss = mul(p, p)
            backward(loss)
            sgd_step([p], 0.4)
        assert abs(float(p.data)) < 0.01
        np.testing.assert_allclose(float(p.data), 0.2**10, rtol=1e-12)

    def test_nan_gradient_aborts_with_name(self):
        p = Parameter("theta", np.array(1.0))
        p.grad = np.array(np.nan)
        with pytest.raises(NumericError, match="theta"):
            sgd_step([p], 0.1)


class TestEngineInvariants:
    def test_every_primitive_kind_grad_checks(self):
        worst = run_primitive_suite(seeds=range(5))
        assert set(worst) == set(PRIMITIVE_KINDS)
        for kind, err in worst.items():
            assert err < 1e-4, f"{kind}: {err}"

    def test_concat_slice_roundtrip_bit_exact(self):
        rng = np.random.default_rng(9)
        a = Tensor(rng.standard_normal((2, 3, 3)))
        b = Tensor(rng.standard_normal((4, 3, 3)))
        cat = concat_channels([a, b])
        back_a = slice_axis(cat, 0, 0, 2)
        back_b = slice_axis(cat, 0, 2, 4)
        np.testing.assert_array_equal(back_a.data, a.data)
        np.testing.assert_array_equal(back_b.data, b.data)

    def test_concat_backward_partitions_gradient(self):
        rng = np.random.default_rng(10)
        a = Tensor(rng.standard_normal((2, 3, 3)))
        b = Tensor(rng.standard_normal((4, 3, 3)))
        weights = rng.standard_normal((6, 3, 3))
        backward(tsum(mul(concat_channels([a, b]), Tensor(weights))))
        total = np.abs(weights).sum()
        np.testing.assert_allclose(np.abs(a.grad).sum() + np.abs(b.grad).sum(), total)

    def test_eval_forward_deterministic(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((1, 2, 4, 4))
        w = rng.standard_normal((2, 2, 3, 3))
        a = conv2d(Tensor(x), Tensor(w), pad=1).data
        b = conv2d(Tensor(x), Tensor(w), pad=1).data
        np.testing.assert_array_equal(a, b)


class TestTensorOpDispatch:
    def test_dispatch_matches_direct_call(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((2, 3))
        via_op = tensor_op("softmax", [Tensor(x)], {"axis": -1})
        direct = softmax(Tensor(x), axis=-1)
        np.testing.assert_array_equal(via_op.data, direct.data)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ShapeError, match="unknown"):
            tensor_op("fft", [Tensor(np.zeros(3))])

    def test_suite_covers_registry(self):
        labels = {label.split("/")[0] for label, _, _ in primitive_cases(0)}
        assert labels == set(PRIMITIVE_KINDS)
