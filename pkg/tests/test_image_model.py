"""EcNet block, boundary, and full-model behavior."""

import numpy as np
import pytest

from mdnet.aas import AasClassifier
from mdnet.autodiff import Tensor, backward, concat_channels, grad_check, mul, tsum
from mdnet.errors import ShapeError
from mdnet.image_model import (
    BottleneckBlock,
    EcNet,
    EcNetConfig,
    EnsembleBoundary,
    decoupled_classifier_reference,
    ensemble_connect_forward,
    identity_block_forward,
)


def zero_convs(module):
    for p in module.named_params():
        if p.name.endswith("conv1.w") or p.name.endswith("conv2.w") or p.name.endswith("conv3.w"):
            p.data[:] = 0.0


def np_bn_train(x, gamma, beta, eps=1e-5):
    mean = x.mean(axis=(0, 2, 3), keepdims=True)
    var = x.var(axis=(0, 2, 3), keepdims=True)
    xhat = (x - mean) / np.sqrt(var + eps)
    return gamma[None, :, None, None] * xhat + beta[None, :, None, None]


def np_conv(x, w, stride=1, pad=0):
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    out = np.zeros((n, f, ho, wo))
    for oi in range(ho):
        for oj in range(wo):
            patch = xp[:, :, oi * stride : oi * stride + kh, oj * stride : oj * stride + kw]
            out[:, :, oi, oj] = np.einsum("ncij,fcij->nf", patch, w)
    return out


class TestBottleneckBlock:
    def test_zero_weights_exact_identity(self):
        rng = np.random.default_rng(0)
        block = BottleneckBlock("b", 8, rng)
        zero_convs(block)
        y = Tensor(rng.standard_normal((2, 8, 6, 6)))
        out = block.forward(y, training=True)
        np.testing.assert_array_equal(out.data, y.data)

    def test_zero_weights_exact_gradient_passthrough(self):
        rng = np.random.default_rng(1)
        block = BottleneckBlock("b", 8, rng)
        zero_convs(block)
        y = Tensor(rng.standard_normal((1, 8, 4, 4)))
        upstream = rng.standard_normal((1, 8, 4, 4))
        backward(tsum(mul(block.forward(y, training=True), Tensor(upstream))))
        np.testing.assert_array_equal(y.grad, upstream)

    def test_random_weights_match_unrolled_composition(self):
        rng = np.random.default_rng(2)
        block = BottleneckBlock("b", 8, rng)
        y = rng.standard_normal((1, 8, 6, 6))
        out = block.forward(Tensor(y), training=True)

        s = block.stack
        h = np_conv(np.maximum(np_bn_train(y, s.bn1.gamma.data, s.bn1.beta.data), 0), s.conv1.w.data)
        h = np_conv(
            np.maximum(np_bn_train(h, s.bn2.gamma.data, s.bn2.beta.data), 0), s.conv2.w.data, pad=1
        )
        h = np_conv(np.maximum(np_bn_train(h, s.bn3.gamma.data, s.bn3.beta.data), 0), s.conv3.w.data)
        np.testing.assert_allclose(out.data, y + h, atol=1e-12)

    def test_channel_mismatch_rejected(self):
        block = BottleneckBlock("b", 8, np.random.default_rng(3))
        with pytest.raises(ShapeError, match="channels"):
            block.forward(Tensor(np.zeros((1, 4, 6, 6))))


class TestEnsembleBoundary:
    def test_zero_transform_slices(self):
        rng = np.random.default_rng(4)
        boundary = EnsembleBoundary("x", 8, 16, rng)
        zero_convs(boundary)
        y = rng.standard_normal((1, 8, 6, 6))
        out = boundary.forward(Tensor(y), training=True)
        assert out.data.shape == (1, 24, 3, 3)
        np.testing.assert_array_equal(out.data[:, :16], 0.0)
        pooled = 0.25 * (y[:, :, 0::2, 0::2] + y[:, :, 0::2, 1::2] + y[:, :, 1::2, 0::2] + y[:, :, 1::2, 1::2])
        np.testing.assert_array_equal(out.data[:, 16:], pooled)

    def test_shape_arithmetic(self):
        rng = np.random.default_rng(5)
        boundary = EnsembleBoundary("x", 16, 32, rng)
        y = Tensor(rng.standard_normal((16, 32, 32)))
        out = ensemble_connect_forward(boundary, y)
        assert out.data.shape == (48, 16, 16)

    def test_identity_slice_gradient_through_pooling(self):
        rng = np.random.default_rng(6)
        boundary = EnsembleBoundary("x", 4, 8, rng)
        weights = rng.standard_normal((1, 4, 3, 3))

        def f(y):
            out = boundary.forward(y, training=True)
            from mdnet.autodiff import slice_axis

            return tsum(mul(slice_axis(out, 1, 8, 4), Tensor(weights)))

        err = grad_check(f, Tensor(rng.standard_normal((1, 4, 6, 6))))
        assert err < 1e-6
        # analytic check: each input pixel gets a quarter of its cell's weight
        y = Tensor(rng.standard_normal((1, 4, 6, 6)))
        backward(f(y))
        np.testing.assert_allclose(y.grad, 0.25 * np.repeat(np.repeat(weights, 2, 2), 2, 3))

    def test_odd_spatial_dims_rejected(self):
        boundary = EnsembleBoundary("x", 4, 8, np.random.default_rng(7))
        with pytest.raises(ShapeError, match="odd"):
            boundary.forward(Tensor(np.zeros((1, 4, 5, 5))))


class TestEcNet:
    def test_default_config_shapes(self):
        model = EcNet(EcNetConfig(), np.random.default_rng(8))
        image = Tensor(np.random.default_rng(9).random((32, 32, 3)))
        conv_maps, feats = model.forward_single(image)
        assert conv_maps.data.shape == (112, 8, 8)
        assert feats.data.shape == (112,)

    def test_zero_image_eval_finite(self):
        model = EcNet(EcNetConfig(), np.random.default_rng(10))
        conv_maps, feats = model.forward_single(Tensor(np.zeros((32, 32, 3))), training=False)
        assert np.all(np.isfinite(conv_maps.data))
        assert np.all(np.isfinite(feats.data))

    def test_eval_forward_bit_identical(self):
        model = EcNet(EcNetConfig(), np.random.default_rng(11))
        image = Tensor(np.random.default_rng(12).random((32, 32, 3)))
        a, _ = model.forward_single(image, training=False)
        b, _ = model.forward_single(image, training=False)
        np.testing.assert_array_equal(a.data, b.data)

    def test_wrong_input_rejected(self):
        model = EcNet(EcNetConfig(), np.random.default_rng(13))
        with pytest.raises(ShapeError, match="ecnet"):
            model.forward_single(Tensor(np.zeros((16, 16, 3))))

    def test_channel_bookkeeping(self):
        config = EcNetConfig()
        assert config.feature_channels == 112  # 16 + 32 + 64
        model = EcNet(config, np.random.default_rng(14))
        parts = model.channel_partition()
        assert parts == [("x1.transform", 0, 64), ("x0.transform", 64, 96), ("stem", 96, 112)]
        widths = [16 + 32, 16 + 32 + 64]
        assert widths == [48, 112]

    def test_state_roundtrip_rebuilds_model(self):
        model = EcNet(EcNetConfig(), np.random.default_rng(15))
        image = Tensor(np.random.default_rng(16).random((32, 32, 3)))
        before, _ = model.forward_single(image, training=False)
        clone = EcNet.from_state(model.state_dict())
        after, _ = clone.forward_single(image, training=False)
        np.testing.assert_array_equal(before.data, after.data)


class TestDecoupledClassifier:
    def test_single_block_reduces_to_plain_logit(self):
        rng = np.random.default_rng(17)
        maps = Tensor(rng.standard_normal((6, 4, 4)))
        aas = AasClassifier(6, rng)
        logits, _ = aas.classify(maps)
        ref = decoupled_classifier_reference([maps], [aas.fc.data])
        np.testing.assert_allclose(ref.data, logits.data, atol=1e-12)

    def test_matches_classify_on_concat(self):
        rng = np.random.default_rng(18)
        for _ in range(100):
            sizes = rng.integers(1, 5, size=3) * 2
            slices = [Tensor(rng.standard_normal((int(s), 3, 3))) for s in sizes]
            aas = AasClassifier(int(sizes.sum()), rng)
            logits, _ = aas.classify(concat_channels(slices))
            offsets = np.cumsum([0, *sizes])
            weights = [aas.fc.data[a:b] for a, b in zip(offsets[:-1], offsets[1:])]
            ref = decoupled_classifier_reference(slices, weights)
            assert np.max(np.abs(ref.data - logits.data)) < 1e-10

    def test_zeroed_slice_weights_remove_its_term(self):
        rng = np.random.default_rng(19)
        slices = [Tensor(rng.standard_normal((4, 3, 3))) for _ in range(2)]
        weights = [rng.standard_normal((4, 4)) for _ in range(2)]
        full = decoupled_classifier_reference(slices, weights)
        dropped = decoupled_classifier_reference(slices, [weights[0], np.zeros((4, 4))])
        term = decoupled_classifier_reference([slices[1]], [weights[1]])
        np.testing.assert_allclose(full.data - dropped.data, term.data, atol=1e-12)

    def test_bad_partition_rejected(self):
        rng = np.random.default_rng(20)
        slices = [Tensor(rng.standard_normal((4, 3, 3)))]
        with pytest.raises(ShapeError, match="weight block"):
            decoupled_classifier_reference(slices, [rng.standard_normal((3, 4))])


class TestFullModelGradient:
    def test_toy_config_grad_check(self):
        rng = np.random.default_rng(21)
        model = EcNet(
            EcNetConfig(stem_channels=8, groups=((1, 8), (1, 0)), input_hw=(8, 8)),
            rng,
        )
        aas = AasClassifier(model.config.feature_channels, rng, n_classes=3)

        def f(image):
            conv_maps, _ = model.forward_single(image, training=True)
            logits, _ = aas.classify(conv_maps)
            return aas.loss(logits, 1)

        err = grad_check(f, Tensor(rng.random((8, 8, 3))))
        assert err < 1e-4
