"""EcNet: identity bottleneck groups joined by ensemble-connection.

Blocks inside a group keep their input shape and add their transform to
it; at group boundaries the transform output is concatenated with a
2x2-average-pooled copy of the input instead, so every block's
contribution reaches the classifier as its own channel slice.  The
network emits the final conv maps ``C`` and their per-channel global
average ``F``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    BnState,
    Parameter,
    Tensor,
    add,
    avg_pool2,
    batch_norm,
    concat_channels,
    conv2d,
    global_avg_pool,
    linear,
    matmul,
    relu,
    reshape,
    transpose,
)
from .errors import ShapeError


@dataclass(frozen=True)
class EcNetConfig:
    """Stem width, per-group (block count, boundary output channels), input size.

    The boundary entry of the last group must be 0 (no boundary follows it).
    """

    stem_channels: int = 16
    groups: tuple[tuple[int, int], ...] = ((2, 32), (2, 64), (2, 0))
    input_hw: tuple[int, int] = (32, 32)
    in_channels: int = 3

    def __post_init__(self):
        if not self.groups:
            raise ShapeError("EcNetConfig: need at least one group")
        if self.stem_channels % 4:
            raise ShapeError(f"EcNetConfig: stem channels {self.stem_channels} not divisible by 4")
        for blocks, grow in self.groups[:-1]:
            if blocks < 1 or grow < 4 or grow % 4:
                raise ShapeError(f"EcNetConfig: bad group entry ({blocks}, {grow})")
        if self.groups[-1][1] != 0:
            raise ShapeError("EcNetConfig: last group must not declare a boundary")
        h, w = self.input_hw
        if h % (2 ** (len(self.groups) - 1)) or w % (2 ** (len(self.groups) - 1)):
            raise ShapeError(f"EcNetConfig: input {h}x{w} not divisible by boundary poolings")

    @property
    def feature_channels(self) -> int:
        d = self.stem_channels
        for _, grow in self.groups[:-1]:
            d += grow
        return d

    @property
    def feature_hw(self) -> tuple[int, int]:
        shrink = 2 ** (len(self.groups) - 1)
        return self.input_hw[0] // shrink, self.input_hw[1] // shrink


class Conv2dLayer:
    def __init__(self, name: str, in_ch: int, out_ch: int, k: int, stride: int, pad: int, rng):
        std = math.sqrt(2.0 / (in_ch * k * k))
        self.w = Parameter(f"{name}.w", rng.normal(0.0, std, (out_ch, in_ch, k, k)))
        self.stride, self.pad = stride, pad

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, stride=self.stride, pad=self.pad)

    def named_params(self):
        yield self.w

    def named_buffers(self):
        return ()


class BatchNormLayer:
    def __init__(self, name: str, channels: int):
        self.name = name
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels))
        self.state = BnState.for_channels(channels)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return batch_norm(x, self.gamma, self.beta, self.state, training)

    def named_params(self):
        yield self.gamma
        yield self.beta

    def named_buffers(self):
        yield f"{self.name}.rmean", self.state
        yield f"{self.name}.rvar", self.state


class _PreActStack:
    """BN-ReLU-conv three times: 1x1 reduce, 3x3 (maybe strided), 1x1 expand."""

    def __init__(self, name: str, in_ch: int, out_ch: int, mid_stride: int, rng):
        mid = out_ch // 4
        self.bn1 = BatchNormLayer(f"{name}.bn1", in_ch)
        self.conv1 = Conv2dLayer(f"{name}.conv1", in_ch, mid, 1, 1, 0, rng)
        self.bn2 = BatchNormLayer(f"{name}.bn2", mid)
        self.conv2 = Conv2dLayer(f"{name}.conv2", mid, mid, 3, mid_stride, 1, rng)
        self.bn3 = BatchNormLayer(f"{name}.bn3", mid)
        self.conv3 = Conv2dLayer(f"{name}.conv3", mid, out_ch, 1, 1, 0, rng)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = self.conv1(relu(self.bn1(x, training)))
        h = self.conv2(relu(self.bn2(h, training)))
        return self.conv3(relu(self.bn3(h, training)))

    def _children(self):
        return (self.bn1, self.conv1, self.bn2, self.conv2, self.bn3, self.conv3)

    def named_params(self):
        for child in self._children():
            yield from child.named_params()

    def named_buffers(self):
        for child in self._children():
            yield from child.named_buffers()


class BottleneckBlock:
    """Identity block: ``y + F(y)`` with channel counts (C, C/4, C/4, C)."""

    def __init__(self, name: str, channels: int, rng):
        self.channels = channels
        self.stack = _PreActStack(name, channels, channels, 1, rng)

    def forward(self, y: Tensor, training: bool = True) -> Tensor:
        if y.data.shape[1] != self.channels:
            raise ShapeError(
                f"bottleneck block: expected {self.channels} channels, got {y.data.shape[1]}"
            )
        return add(y, self.stack(y, training))

    def named_params(self):
        return self.stack.named_params()

    def named_buffers(self):
        return self.stack.named_buffers()


class EnsembleBoundary:
    """Group boundary: concat(transform(y), 2x2-avg-pool(y)).

    The transform halves the spatial dims with its strided middle conv
    and maps ``in_channels`` to ``grow_channels``; the pooled identity
    keeps its channels, so the output has ``grow + in`` channels.
    """

    def __init__(self, name: str, in_channels: int, grow_channels: int, rng):
        self.in_channels = in_channels
        self.grow_channels = grow_channels
        self.stack = _PreActStack(name, in_channels, grow_channels, 2, rng)

    def forward(self, y: Tensor, training: bool = True) -> Tensor:
        if y.data.shape[1] != self.in_channels:
            raise ShapeError(
                f"ensemble boundary: expected {self.in_channels} channels, got {y.data.shape[1]}"
            )
        if y.data.shape[2] % 2 or y.data.shape[3] % 2:
            raise ShapeError(
                f"ensemble boundary: odd spatial dims {y.data.shape[2]}x{y.data.shape[3]}"
            )
        return concat_channels([self.stack(y, training), avg_pool2(y)])

    def named_params(self):
        return self.stack.named_params()

    def named_buffers(self):
        return self.stack.named_buffers()


def identity_block_forward(block: BottleneckBlock, y: Tensor, training: bool = True) -> Tensor:
    """Spec surface for a single identity block; accepts CHW or NCHW."""

    if y.data.ndim == 3:
        out = block.forward(reshape(y, (1, *y.data.shape)), training)
        return reshape(out, out.data.shape[1:])
    return block.forward(y, training)


def ensemble_connect_forward(boundary: EnsembleBoundary, y: Tensor, training: bool = True) -> Tensor:
    """Spec surface for one ensemble-connection; accepts CHW or NCHW."""

    if y.data.ndim == 3:
        out = boundary.forward(reshape(y, (1, *y.data.shape)), training)
        return reshape(out, out.data.shape[1:])
    return boundary.forward(y, training)


class EcNet:
    def __init__(self, config: EcNetConfig, rng):
        self.config = config
        self.stem = Conv2dLayer("image.stem", config.in_channels, config.stem_channels, 3, 1, 1, rng)
        self.groups: list[list[BottleneckBlock]] = []
        self.boundaries: list[EnsembleBoundary] = []
        width = config.stem_channels
        for gi, (blocks, grow) in enumerate(config.groups):
            self.groups.append(
                [BottleneckBlock(f"image.g{gi}.b{bi}", width, rng) for bi in range(blocks)]
            )
            if gi < len(config.groups) - 1:
                self.boundaries.append(EnsembleBoundary(f"image.x{gi}", width, grow, rng))
                width += grow
        self.final_bn = BatchNormLayer("image.final_bn", width)

    # -- forward ------------------------------------------------------------

    def forward(self, images: Tensor, training: bool = True) -> tuple[Tensor, Tensor]:
        """Batched forward: (N, 3, H, W) -> conv maps (N, D, H', W') and GAP features (N, D)."""

        h, w = self.config.input_hw
        expect = (self.config.in_channels, h, w)
        if images.data.ndim != 4 or images.data.shape[1:] != expect:
            raise ShapeError(
                f"ecnet: expected input (N, {expect[0]}, {expect[1]}, {expect[2]}), got {images.data.shape}"
            )
        x = self.stem(images)
        for gi, blocks in enumerate(self.groups):
            for block in blocks:
                x = block.forward(x, training)
            if gi < len(self.boundaries):
                x = self.boundaries[gi].forward(x, training)
        conv_maps = relu(self.final_bn(x, training))
        return conv_maps, global_avg_pool(conv_maps)

    def forward_single(self, image: Tensor, training: bool = False) -> tuple[Tensor, Tensor]:
        """Single image in H x W x 3 layout -> (C as (D, H', W'), F as (D,))."""

        h, w = self.config.input_hw
        if image.data.shape != (h, w, self.config.in_channels):
            raise ShapeError(
                f"ecnet: expected image ({h}, {w}, {self.config.in_channels}), got {image.data.shape}"
            )
        batched = reshape(transpose(image, (2, 0, 1)), (1, self.config.in_channels, h, w))
        conv_maps, feats = self.forward(batched, training)
        return reshape(conv_maps, conv_maps.data.shape[1:]), reshape(feats, (feats.data.shape[1],))

    # -- channel bookkeeping -------------------------------------------------

    def channel_partition(self) -> list[tuple[str, int, int]]:
        """Slices of the final conv maps by origin, outermost transform first."""

        parts: list[tuple[str, int, int]] = [("stem", 0, self.config.stem_channels)]
        for gi, boundary in enumerate(self.boundaries):
            parts = [(f"x{gi}.transform", 0, boundary.grow_channels)] + [
                (name, start + boundary.grow_channels, stop + boundary.grow_channels)
                for name, start, stop in parts
            ]
        return parts

    # -- state --------------------------------------------------------------

    def _modules(self):
        yield self.stem
        for blocks in self.groups:
            yield from blocks
        yield from self.boundaries
        yield self.final_bn

    def params(self) -> list[Parameter]:
        return [p for m in self._modules() for p in m.named_params()]

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {p.name: p.data.copy() for p in self.params()}
        for m in self._modules():
            for name, bn_state in m.named_buffers():
                which = name.rsplit(".", 1)[1]
                state[name] = (
                    bn_state.running_mean.copy() if which == "rmean" else bn_state.running_var.copy()
                )
        state["meta.input_hw"] = np.array(self.config.input_hw, dtype=np.float64)
        return state

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.params():
            if p.name not in state:
                raise ShapeError(f"checkpoint missing tensor {p.name!r}")
            if state[p.name].shape != p.data.shape:
                raise ShapeError(
                    f"checkpoint tensor {p.name!r} has shape {state[p.name].shape}, expected {p.data.shape}"
                )
            p.data = state[p.name].copy()
        for m in self._modules():
            for name, bn_state in m.named_buffers():
                which = name.rsplit(".", 1)[1]
                if which == "rmean":
                    bn_state.running_mean = state[name].copy()
                else:
                    bn_state.running_var = state[name].copy()

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "EcNet":
        """Rebuild architecture from checkpoint names and shapes."""

        stem_w = state["image.stem.w"]
        group_ids = sorted(
            {int(m.group(1)) for k in state if (m := re.match(r"image\.g(\d+)\.", k))}
        )
        groups = []
        for gi in group_ids:
            blocks = len(
                {
                    int(m.group(1))
                    for k in state
                    if (m := re.match(rf"image\.g{gi}\.b(\d+)\.conv1\.w$", k))
                }
            )
            grow = (
                state[f"image.x{gi}.conv3.w"].shape[0] if f"image.x{gi}.conv3.w" in state else 0
            )
            groups.append((blocks, grow))
        hw = state["meta.input_hw"].astype(int)
        config = EcNetConfig(
            stem_channels=stem_w.shape[0],
            groups=tuple(groups),
            input_hw=(int(hw[0]), int(hw[1])),
            in_channels=stem_w.shape[1],
        )
        model = cls(config, np.random.default_rng(0))
        model.load_state(state)
        return model


def decoupled_classifier_reference(block_outputs, per_block_weights) -> Tensor:
    """Per-slice weighted-GAP logits, summed: the decoupled-ensemble view.

    ``block_outputs`` are the channel slices that ensemble-connection
    concatenates; ``per_block_weights`` the matching (channels x classes)
    weight partition.  Equals classifying the concatenated maps with the
    stacked weights, without ever concatenating.
    """

    if len(block_outputs) != len(per_block_weights):
        raise ShapeError(
            f"decoupled reference: {len(block_outputs)} slices vs {len(per_block_weights)} weight blocks"
        )
    n_classes = None
    logits = None
    for m, (slice_m, w_m) in enumerate(zip(block_outputs, per_block_weights)):
        w_m = w_m if isinstance(w_m, Tensor) else Tensor(w_m)
        channel_axis = 0 if slice_m.data.ndim == 3 else 1
        channels = slice_m.data.shape[channel_axis]
        if w_m.data.ndim != 2 or w_m.data.shape[0] != channels:
            raise ShapeError(
                f"decoupled reference: weight block {m} has shape {w_m.data.shape}, "
                f"slice has {channels} channels"
            )
        if n_classes is None:
            n_classes = w_m.data.shape[1]
        elif w_m.data.shape[1] != n_classes:
            raise ShapeError("decoupled reference: inconsistent class counts across weight blocks")
        pooled = global_avg_pool(slice_m)
        term = linear(pooled, w_m) if pooled.data.ndim == 1 else matmul(pooled, w_m)
        logits = term if logits is None else add(logits, term)
    if logits is None:
        raise ShapeError("decoupled reference: empty slice list")
    return logits
