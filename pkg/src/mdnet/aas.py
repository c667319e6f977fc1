"""Bias-free GAP+FC conclusion classifier and class-activation embedding.

The classifier owns one weight column per conclusion class.  Because
pooling and the linear map commute and there is no bias, the spatial
mean of a class's activation map equals that class's logit exactly;
the flattened map doubles as the attention-anchoring embedding.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    bmm,
    embed_lookup,
    global_avg_pool,
    linear,
    matmul,
    nll_loss,
    reshape,
    slice_axis,
    softmax,
    tmean,
    transpose,
)
from .errors import ShapeError

N_CLASSES = 4


class AasClassifier:
    def __init__(self, feature_channels: int, rng, n_classes: int = N_CLASSES):
        std = math.sqrt(2.0 / feature_channels)
        self.fc = Parameter("aas.fc", rng.normal(0.0, std, (feature_channels, n_classes)))

    @property
    def feature_channels(self) -> int:
        return self.fc.data.shape[0]

    @property
    def n_classes(self) -> int:
        return self.fc.data.shape[1]

    def _check_channels(self, conv_maps: Tensor) -> int:
        axis = 0 if conv_maps.data.ndim == 3 else 1
        if conv_maps.data.ndim not in (3, 4) or conv_maps.data.shape[axis] != self.feature_channels:
            raise ShapeError(
                f"aas: conv maps {conv_maps.data.shape} do not carry {self.feature_channels} channels"
            )
        return axis

    def classify(self, conv_maps: Tensor) -> tuple[Tensor, Tensor]:
        """Logits and softmax probabilities from (D, H, W) or (N, D, H, W) maps."""

        self._check_channels(conv_maps)
        pooled = global_avg_pool(conv_maps)
        logits = linear(pooled, self.fc) if pooled.data.ndim == 1 else matmul(pooled, self.fc)
        return logits, softmax(logits, axis=-1)

    def cam_embedding(self, conv_maps: Tensor, cls: int) -> Tensor:
        """Class activation map for ``cls``, flattened to (H'*W',).

        Each position is the class-weighted sum over channels; its
        spatial mean reproduces the class logit.
        """

        axis = self._check_channels(conv_maps)
        if axis != 0:
            raise ShapeError("aas: cam_embedding takes a single (D, H, W) map")
        if not 0 <= cls < self.n_classes:
            raise ShapeError(f"aas: class {cls} out of range [0, {self.n_classes})")
        d, h, w = conv_maps.data.shape
        col = transpose(slice_axis(self.fc, 1, cls, 1), (1, 0))  # (1, D)
        cam = matmul(col, reshape(conv_maps, (d, h * w)))
        return reshape(cam, (h * w,))

    def cam_embedding_batch(self, conv_maps: Tensor, classes) -> Tensor:
        """Per-item CAM for (N, D, H, W) maps and an (N,) class vector -> (N, H'*W')."""

        axis = self._check_channels(conv_maps)
        if axis != 1:
            raise ShapeError("aas: cam_embedding_batch takes (N, D, H, W) maps")
        classes = np.asarray(classes, dtype=np.int64)
        n, d, h, w = conv_maps.data.shape
        if classes.shape != (n,):
            raise ShapeError(f"aas: classes {classes.shape} do not match batch {n}")
        if classes.size and (classes.min() < 0 or classes.max() >= self.n_classes):
            raise ShapeError(f"aas: class out of range [0, {self.n_classes})")
        cols = embed_lookup(transpose(self.fc, (1, 0)), classes)  # (N, D)
        cam = bmm(reshape(cols, (n, 1, d)), reshape(conv_maps, (n, d, h * w)))
        return reshape(cam, (n, h * w))

    def loss(self, logits: Tensor, labels) -> Tensor:
        """Negative log-likelihood of the true conclusion; mean over a batch."""

        probs = softmax(logits, axis=-1)
        if logits.data.ndim == 1:
            label = int(labels)
            if not 0 <= label < self.n_classes:
                raise ShapeError(f"aas: label {label} out of range [0, {self.n_classes})")
            return nll_loss(probs, label)
        return tmean(nll_loss(probs, np.asarray(labels, dtype=np.int64)))

    def params(self) -> list[Parameter]:
        return [self.fc]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {"aas.fc": self.fc.data.copy()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if state["aas.fc"].shape != self.fc.data.shape:
            raise ShapeError(
                f"checkpoint aas.fc has shape {state['aas.fc'].shape}, expected {self.fc.data.shape}"
            )
        self.fc.data = state["aas.fc"].copy()

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "AasClassifier":
        d, k = state["aas.fc"].shape
        inst = cls(d, np.random.default_rng(0), n_classes=k)
        inst.load_state(state)
        return inst
