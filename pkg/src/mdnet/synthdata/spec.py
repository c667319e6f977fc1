"""Case specifications: attributes, lesion geometry, conclusion rule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError

LABELS = ("normal", "low-grade", "high-grade", "insufficient")
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}

# attribute order: pleomorphism, crowding, polarity loss, mitosis, nucleoli
N_TASKS = 6


@dataclass(frozen=True)
class CaseSpec:
    pleomorphism: int  # 0..2
    crowding: int  # 0..2
    polarity_loss: int  # 0..1
    mitosis: int  # 0..1
    nucleoli: int  # 0..1
    center: tuple[float, float]  # (row, col)
    axes: tuple[float, float]  # semi-axes, major first
    angle: float  # radians
    seed: int
    image_hw: tuple[int, int] = (32, 32)

    @property
    def attributes(self) -> tuple[int, int, int, int, int]:
        return (self.pleomorphism, self.crowding, self.polarity_loss, self.mitosis, self.nucleoli)

    @property
    def severity(self) -> int:
        return sum(self.attributes)

    @property
    def area_fraction(self) -> float:
        h, w = self.image_hw
        return math.pi * self.axes[0] * self.axes[1] / (h * w)


def conclusion_rule(spec: CaseSpec) -> str:
    """Label from lesion size and summed attribute severity."""

    if spec.area_fraction < 0.08:
        return "insufficient"
    s = spec.severity
    if s == 0:
        return "normal"
    if s <= 3:
        return "low-grade"
    return "high-grade"


def _draw_attributes(rng) -> tuple[int, int, int, int, int]:
    return (
        int(rng.integers(3)),
        int(rng.integers(3)),
        int(rng.integers(2)),
        int(rng.integers(2)),
        int(rng.integers(2)),
    )


def _draw_ellipse(rng, fraction: float, hw: tuple[int, int]):
    h, w = hw
    target = fraction * h * w / math.pi  # product of semi-axes
    while True:
        ratio = rng.uniform(0.65, 1.0)
        major = math.sqrt(target / ratio)
        minor = major * ratio
        angle = rng.uniform(0.0, math.pi)
        half_w = math.sqrt((major * math.cos(angle)) ** 2 + (minor * math.sin(angle)) ** 2)
        half_h = math.sqrt((major * math.sin(angle)) ** 2 + (minor * math.cos(angle)) ** 2)
        if 2 * half_h + 2 > h or 2 * half_w + 2 > w:
            continue
        cy = rng.uniform(half_h + 0.5, h - 1 - half_h - 0.5)
        cx = rng.uniform(half_w + 0.5, w - 1 - half_w - 0.5)
        return (cy, cx), (major, minor), angle


def sample_case_spec(rng, hw: tuple[int, int] = (32, 32)) -> CaseSpec:
    """Draw one case from label-balanced priors.

    The label is drawn uniformly, then attributes are rejection-sampled
    into the severity band the conclusion rule assigns to it;
    insufficient cases get a sub-threshold lesion with free attributes.
    """

    label = LABELS[int(rng.integers(len(LABELS)))]
    if label == "insufficient":
        attrs = _draw_attributes(rng)
        fraction = rng.uniform(0.03, 0.07)
    else:
        if label == "normal":
            attrs = (0, 0, 0, 0, 0)
        else:
            lo, hi = (1, 3) if label == "low-grade" else (4, 7)
            while True:
                attrs = _draw_attributes(rng)
                if lo <= sum(attrs) <= hi:
                    break
        fraction = rng.uniform(0.17, 0.40)
    center, axes, angle = _draw_ellipse(rng, fraction, hw)
    seed = int(rng.integers(1, 2**62))
    spec = CaseSpec(*attrs, center=center, axes=axes, angle=angle, seed=seed, image_hw=hw)
    assert conclusion_rule(spec) == label
    return spec


def ellipse_coverage_mask(spec: CaseSpec, supersample: int = 4) -> np.ndarray:
    """Boolean lesion mask: pixels at least half covered by the ellipse."""

    if supersample < 1:
        raise ShapeError(f"supersample must be >= 1, got {supersample}")
    h, w = spec.image_hw
    offsets = (np.arange(supersample) + 0.5) / supersample - 0.5
    ys = np.arange(h)[:, None, None, None] + offsets[None, None, :, None]
    xs = np.arange(w)[None, :, None, None] + offsets[None, None, None, :]
    cy, cx = spec.center
    cos_t, sin_t = math.cos(spec.angle), math.sin(spec.angle)
    u = (xs - cx) * cos_t + (ys - cy) * sin_t
    v = -(xs - cx) * sin_t + (ys - cy) * cos_t
    inside = (u / spec.axes[0]) ** 2 + (v / spec.axes[1]) ** 2 <= 1.0
    coverage = inside.mean(axis=(2, 3))
    return coverage >= 0.5


def point_in_ellipse(spec: CaseSpec, y: float, x: float, shrink: float = 1.0) -> bool:
    cy, cx = spec.center
    cos_t, sin_t = math.cos(spec.angle), math.sin(spec.angle)
    u = (x - cx) * cos_t + (y - cy) * sin_t
    v = -(x - cx) * sin_t + (y - cy) * cos_t
    return (u / (spec.axes[0] * shrink)) ** 2 + (v / (spec.axes[1] * shrink)) ** 2 <= 1.0
