"""Report sentence templates and paraphrase composition.

Every attribute level owns three paraphrases; the conclusion task names
the label with exactly one class's keywords.  Description templates
avoid all conclusion keywords so retrieval queries stay clean, and each
level is recoverable from its sentence by keyword lookup.
"""

from __future__ import annotations

from ..errors import ShapeError
from .spec import CaseSpec, conclusion_rule

DESCRIPTION_TEMPLATES: dict[int, tuple[tuple[str, ...], ...]] = {
    1: (
        (
            "nuclear pleomorphism is absent .",
            "nuclei appear uniform in size and shape .",
            "no significant nuclear pleomorphism is seen .",
        ),
        (
            "nuclear pleomorphism is mild .",
            "mild nuclear pleomorphism is noted .",
            "nuclei show mild variation in size .",
        ),
        (
            "nuclear pleomorphism is severe .",
            "marked nuclear pleomorphism is present .",
            "nuclei vary markedly in size and shape .",
        ),
    ),
    2: (
        (
            "cells are evenly spaced .",
            "no cell crowding is seen .",
            "cell density is low .",
        ),
        (
            "moderate cell crowding is present .",
            "cells are moderately crowded .",
            "cell density is increased .",
        ),
        (
            "cells are severely crowded .",
            "marked cell crowding is present .",
            "cell density is strongly elevated .",
        ),
    ),
    3: (
        (
            "cell polarity is preserved .",
            "cells are arranged in orderly rows .",
            "polarity is maintained throughout .",
        ),
        (
            "cell polarity is lost .",
            "cells are arranged haphazardly .",
            "polarity is disrupted throughout .",
        ),
    ),
    4: (
        (
            "no mitotic figures are seen .",
            "mitotic figures are absent .",
            "there is no mitotic activity .",
        ),
        (
            "mitotic figures are present .",
            "mitotic activity is evident .",
            "scattered mitotic figures are seen .",
        ),
    ),
    5: (
        (
            "nucleoli are inconspicuous .",
            "no distinct nucleoli are seen .",
            "nucleoli remain inconspicuous .",
        ),
        (
            "nucleoli are prominent .",
            "prominent nucleoli are seen .",
            "nucleoli appear enlarged and prominent .",
        ),
    ),
}

CONCLUSION_TEMPLATES: dict[str, tuple[str, ...]] = {
    "normal": (
        "the tissue appears normal .",
        "findings are within normal limits .",
        "conclusion is normal urothelium .",
    ),
    "low-grade": (
        "findings are consistent with low-grade carcinoma .",
        "appearance suggests punlmp or low-grade carcinoma .",
        "conclusion is low-grade urothelial carcinoma .",
    ),
    "high-grade": (
        "findings are consistent with high-grade carcinoma .",
        "appearance indicates high-grade urothelial carcinoma .",
        "conclusion is high-grade carcinoma .",
    ),
    "insufficient": (
        "the material is insufficient for diagnosis .",
        "insufficient information is present for conclusion .",
        "sample quality is insufficient to evaluate .",
    ),
}

CONCLUSION_KEYWORDS: dict[str, frozenset[str]] = {
    "normal": frozenset({"normal"}),
    "low-grade": frozenset({"low-grade", "punlmp"}),
    "high-grade": frozenset({"high-grade"}),
    "insufficient": frozenset({"insufficient"}),
}

# higher level checked first; absence of all keywords means level 0
_LEVEL_KEYWORDS: dict[int, tuple[tuple[int, frozenset[str]], ...]] = {
    1: ((2, frozenset({"severe", "marked", "markedly"})), (1, frozenset({"mild"}))),
    2: (
        (2, frozenset({"severely", "marked", "elevated"})),
        (1, frozenset({"moderate", "moderately", "increased"})),
    ),
    3: ((1, frozenset({"lost", "haphazardly", "disrupted"})),),
    4: ((1, frozenset({"present", "evident", "scattered"})),),
    5: ((1, frozenset({"prominent", "enlarged"})),),
}


def parse_attribute_level(task: int, sentence: str) -> int:
    """Recover the attribute level a description sentence encodes."""

    if task not in DESCRIPTION_TEMPLATES:
        raise ShapeError(f"no description templates for task {task}")
    words = set(sentence.lower().split())
    for level, keywords in _LEVEL_KEYWORDS[task]:
        if words & keywords:
            return level
    return 0


def compose_reports(spec: CaseSpec, rng, n_variants: int = 5) -> list[tuple[str, ...]]:
    """Independent paraphrase variants; task 6 names the rule's conclusion."""

    label = conclusion_rule(spec)
    variants = []
    for _ in range(n_variants):
        sentences = []
        for task in range(1, 6):
            pool = DESCRIPTION_TEMPLATES[task][spec.attributes[task - 1]]
            sentences.append(pool[int(rng.integers(len(pool)))])
        pool = CONCLUSION_TEMPLATES[label]
        sentences.append(pool[int(rng.integers(len(pool)))])
        variants.append(tuple(sentences))
    return variants


def template_vocabulary() -> set[str]:
    """Every token any template can emit."""

    words: set[str] = set()
    for pools in DESCRIPTION_TEMPLATES.values():
        for pool in pools:
            for sentence in pool:
                words.update(sentence.split())
    for pool in CONCLUSION_TEMPLATES.values():
        for sentence in pool:
            words.update(sentence.split())
    return words
