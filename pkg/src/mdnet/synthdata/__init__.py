"""Deterministic synthetic image/report corpus generation."""

from .dataset import N_VARIANTS, SynthCase, build_case, generate_dataset, load_dataset, split_cases
from .render import nucleus_count, render_image
from .reports import (
    CONCLUSION_KEYWORDS,
    CONCLUSION_TEMPLATES,
    DESCRIPTION_TEMPLATES,
    compose_reports,
    parse_attribute_level,
    template_vocabulary,
)
from .spec import (
    LABELS,
    LABEL_INDEX,
    N_TASKS,
    CaseSpec,
    conclusion_rule,
    ellipse_coverage_mask,
    sample_case_spec,
)

__all__ = [
    "CONCLUSION_KEYWORDS",
    "CONCLUSION_TEMPLATES",
    "CaseSpec",
    "DESCRIPTION_TEMPLATES",
    "LABELS",
    "LABEL_INDEX",
    "N_TASKS",
    "N_VARIANTS",
    "SynthCase",
    "build_case",
    "compose_reports",
    "conclusion_rule",
    "ellipse_coverage_mask",
    "generate_dataset",
    "load_dataset",
    "nucleus_count",
    "parse_attribute_level",
    "render_image",
    "sample_case_spec",
    "split_cases",
    "template_vocabulary",
]
