"""Procedural case rendering: pink-noise tissue with a planted lesion.

Inside the lesion ellipse, nuclei are dark shaded disks whose count
follows the crowding level, whose radius spread follows pleomorphism,
and whose placement is row-aligned while polarity is preserved.  A
mitotic case gets bright nucleus centers; prominent nucleoli add an
off-center reddish dot.  Each nucleus keeps an extreme-valued center
pixel (very dark, or very bright when mitotic) so simple pixel
statistics can recover the attribute levels.
"""

from __future__ import annotations

import math

import numpy as np

from .spec import CaseSpec, ellipse_coverage_mask, point_in_ellipse

BACKGROUND_RGB = np.array([0.82, 0.70, 0.78])
LESION_TINT = np.array([0.025, 0.018, 0.025])
NUCLEUS_RGB = np.array([0.26, 0.12, 0.38])
CORE_DARK_RGB = np.array([0.09, 0.05, 0.12])
MITOSIS_RGB = np.array([0.99, 0.97, 0.99])
NUCLEOLUS_RGB = np.array([0.88, 0.22, 0.25])

CROWDING_COUNTS = (10, 25, 50)
BASE_AREA_FRACTION = 0.3
BASE_RADIUS = 1.8
RADIUS_SPREAD = (0.0, 0.55, 1.1)
RADIUS_MIN, RADIUS_MAX = 1.3, 3.6


def _pink_noise(rng, h: int, w: int) -> np.ndarray:
    """Zero-mean unit-std noise with 1/f amplitude spectrum."""

    white = rng.standard_normal((h, w))
    spectrum = np.fft.fft2(white)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    radius = np.sqrt(fy * fy + fx * fx)
    radius[0, 0] = 1.0
    shaped = np.fft.ifft2(spectrum / radius).real
    shaped -= shaped.mean()
    return shaped / max(shaped.std(), 1e-9)


def nucleus_count(spec: CaseSpec) -> int:
    h, w = spec.image_hw
    scale = spec.area_fraction / BASE_AREA_FRACTION
    return max(1, int(round(CROWDING_COUNTS[spec.crowding] * scale)))


def _nucleus_positions(spec: CaseSpec, rng, count: int) -> list[tuple[float, float]]:
    cy, cx = spec.center
    major = spec.axes[0]
    area = math.pi * spec.axes[0] * spec.axes[1]
    if spec.polarity_loss == 0:
        # orderly rows: lattice spacing from the target density, small jitter
        spacing = max(2.0, math.sqrt(area / count))
        points: list[tuple[float, float]] = []
        y = cy - major
        while y <= cy + major:
            x = cx - major
            while x <= cx + major:
                py = y + rng.uniform(-0.12, 0.12) * spacing
                px = x + rng.uniform(-0.12, 0.12) * spacing
                if point_in_ellipse(spec, py, px, shrink=0.9):
                    points.append((py, px))
                x += spacing
            y += spacing
        while len(points) < count:  # rounding starved the lattice; densify rows
            py = rng.uniform(cy - major, cy + major)
            px = rng.uniform(cx - major, cx + major)
            if point_in_ellipse(spec, py, px, shrink=0.9):
                snapped = cy - major + round((py - (cy - major)) / spacing) * spacing
                points.append((snapped + rng.uniform(-0.12, 0.12) * spacing, px))
        return points[:count]
    points = []
    while len(points) < count:
        py = rng.uniform(cy - major, cy + major)
        px = rng.uniform(cx - major, cx + major)
        if point_in_ellipse(spec, py, px, shrink=0.9):
            points.append((py, px))
    return points


def _paint_disk(img: np.ndarray, cy: float, cx: float, radius: float, color: np.ndarray, blend_edge: bool) -> None:
    h, w = img.shape[:2]
    lo_y = max(0, int(math.floor(cy - radius - 1)))
    hi_y = min(h, int(math.ceil(cy + radius + 2)))
    lo_x = max(0, int(math.floor(cx - radius - 1)))
    hi_x = min(w, int(math.ceil(cx + radius + 2)))
    if lo_y >= hi_y or lo_x >= hi_x:
        return
    ys = np.arange(lo_y, hi_y)[:, None]
    xs = np.arange(lo_x, hi_x)[None, :]
    dist = np.sqrt((ys - cy) ** 2 + (xs - cx) ** 2)
    region = img[lo_y:hi_y, lo_x:hi_x]
    if blend_edge:
        # shaded body: solid inside, linear blend over the outer half pixel
        weight = np.clip(radius + 0.5 - dist, 0.0, 1.0)[:, :, None]
        region[:] = region * (1 - weight) + color[None, None, :] * weight
    else:
        inside = dist <= radius
        region[inside] = color


def render_image(spec: CaseSpec) -> tuple[np.ndarray, np.ndarray]:
    """Render a case to (H x W x 3 floats in [0,1], boolean lesion mask)."""

    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 1)))
    h, w = spec.image_hw
    noise = np.clip(_pink_noise(rng, h, w), -2.0, 2.0)
    grain = rng.standard_normal((h, w, 3))
    img = BACKGROUND_RGB[None, None, :] + 0.04 * noise[:, :, None] + 0.012 * grain
    mask = ellipse_coverage_mask(spec)
    img[mask] += LESION_TINT[None, :]

    radii_sigma = RADIUS_SPREAD[spec.pleomorphism]
    nuclei = []
    for py, px in _nucleus_positions(spec, rng, nucleus_count(spec)):
        radius = float(np.clip(rng.normal(BASE_RADIUS, radii_sigma), RADIUS_MIN, RADIUS_MAX))
        shade = NUCLEUS_RGB + rng.uniform(-0.03, 0.03, 3)
        direction = rng.uniform(0.0, 2 * math.pi)
        nuclei.append((py, px, radius, shade, direction))

    # bodies first, decorations after, centers last: overlapping bodies must
    # not erase another nucleus's center anchor
    for py, px, radius, shade, _ in nuclei:
        _paint_disk(img, py, px, radius, shade, blend_edge=True)
    if spec.nucleoli:
        for py, px, radius, _, direction in nuclei:
            offset = min(max(1.0, 0.45 * radius), radius - 0.3)
            _paint_disk(
                img,
                py + offset * math.sin(direction),
                px + offset * math.cos(direction),
                0.6,
                NUCLEOLUS_RGB,
                blend_edge=False,
            )
    for py, px, radius, _, _ in nuclei:
        # extreme-valued center pixel: counting anchor, bright iff mitotic
        iy, ix = int(round(py)), int(round(px))
        if spec.mitosis:
            _paint_disk(img, py, px, 0.8, MITOSIS_RGB, blend_edge=False)
        elif 0 <= iy < h and 0 <= ix < w:
            img[iy, ix] = CORE_DARK_RGB

    return np.clip(img, 0.0, 1.0), mask
