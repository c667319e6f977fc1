"""Disk layout and deterministic generation of the synthetic corpus.

Layout under the dataset root:

    manifest.csv            id,label,split rows, train block first
    images/<id>.ppm         binary P6, 8-bit
    masks/<id>.pgm          binary P5, 0/255
    reports/<id>_<v>.txt    v in 1..5, exactly six lines, line e = task-e sentence

Train and test cases come from disjoint seed streams, so regenerating
with the same root seed is byte-identical and splits never overlap.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from ..imageio import read_pgm, read_ppm, write_pgm, write_ppm
from .render import render_image
from .reports import compose_reports
from .spec import LABELS, CaseSpec, conclusion_rule, sample_case_spec

N_VARIANTS = 5
_SPLIT_IDS = {"train": 0, "test": 1}


@dataclass
class SynthCase:
    case_id: str
    split: str
    label: str
    spec: CaseSpec | None
    image: np.ndarray  # (H, W, 3) floats in [0, 1]
    mask: np.ndarray  # (H, W) bool
    reports: list[tuple[str, ...]]  # N_VARIANTS x 6 sentences

    @property
    def label_index(self) -> int:
        return LABELS.index(self.label)


def build_case(root_seed: int, split: str, index: int, hw=(32, 32)) -> SynthCase:
    """Pure per-case generation keyed by (root seed, split, index)."""

    rng = np.random.default_rng(np.random.SeedSequence((root_seed, _SPLIT_IDS[split], index)))
    spec = sample_case_spec(rng, hw)
    image, mask = render_image(spec)
    reports = compose_reports(
        spec, np.random.default_rng(np.random.SeedSequence((spec.seed, 2))), N_VARIANTS
    )
    return SynthCase(
        case_id=f"{split}_{index:04d}",
        split=split,
        label=conclusion_rule(spec),
        spec=spec,
        image=image,
        mask=mask,
        reports=reports,
    )


def generate_dataset(out_dir, seed: int, n_train: int = 600, n_test: int = 200, hw=(32, 32)) -> dict:
    """Write the full corpus; returns a small summary."""

    if n_train < 1 or n_test < 1:
        raise ShapeError(f"dataset sizes must be >= 1, got {n_train}/{n_test}")
    out = Path(out_dir)
    for sub in ("images", "masks", "reports"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rows = []
    for split, count in (("train", n_train), ("test", n_test)):
        for i in range(count):
            case = build_case(seed, split, i, hw)
            write_ppm(out / "images" / f"{case.case_id}.ppm", case.image)
            write_pgm(out / "masks" / f"{case.case_id}.pgm", case.mask.astype(np.uint8) * 255)
            for v, sentences in enumerate(case.reports, start=1):
                text = "\n".join(sentences) + "\n"
                (out / "reports" / f"{case.case_id}_{v}.txt").write_text(text, encoding="utf-8")
            rows.append((case.case_id, case.label, split))
    with open(out / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "split"])
        writer.writerows(rows)
    return {"dir": str(out), "n_train": n_train, "n_test": n_test, "n_images": n_train + n_test,
            "n_reports": (n_train + n_test) * N_VARIANTS}


def load_dataset(root) -> list[SynthCase]:
    """Read a generated corpus back; specs are not persisted, images are."""

    root = Path(root)
    manifest = root / "manifest.csv"
    if not manifest.exists():
        raise ShapeError(f"{root}: no manifest.csv — not a dataset directory")
    cases: list[SynthCase] = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            case_id, label, split = row["id"], row["label"], row["split"]
            if label not in LABELS:
                raise ShapeError(f"{manifest}: unknown label {label!r}")
            image = read_ppm(root / "images" / f"{case_id}.ppm").astype(np.float64) / 255.0
            mask = read_pgm(root / "masks" / f"{case_id}.pgm") > 127
            reports = []
            for v in range(1, N_VARIANTS + 1):
                lines = (
                    (root / "reports" / f"{case_id}_{v}.txt")
                    .read_text(encoding="utf-8")
                    .splitlines()
                )
                if len(lines) != 6:
                    raise ShapeError(f"report {case_id}_{v} has {len(lines)} lines, expected 6")
                reports.append(tuple(lines))
            cases.append(
                SynthCase(
                    case_id=case_id,
                    split=split,
                    label=label,
                    spec=None,
                    image=image,
                    mask=mask,
                    reports=reports,
                )
            )
    return cases


def split_cases(cases: list[SynthCase], split: str) -> list[SynthCase]:
    return [c for c in cases if c.split == split]
