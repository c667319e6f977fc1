"""Tokenization and the token<->id bijection.

Tokens are lowercase whitespace words with "." split out as its own
token.  Ids are dense: the end-of-sentence marker first, then one start
token per task, then the corpus words in sorted order.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from ..errors import ShapeError

END_TOKEN = "<end>"


def start_token(task: int) -> str:
    return f"<start_{task}>"


def tokenize(text: str) -> list[str]:
    return text.lower().replace(".", " . ").split()


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


class Vocab:
    def __init__(self, tokens: Sequence[str], n_tasks: int):
        self.tokens = list(tokens)
        self.n_tasks = n_tasks
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ShapeError("vocab: duplicate tokens")
        for special in (END_TOKEN, *(start_token(e) for e in range(1, n_tasks + 1))):
            if special not in self.index:
                raise ShapeError(f"vocab: missing special token {special!r}")
        self.end_id = self.index[END_TOKEN]

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_sentences(cls, sentences: Iterable[str], n_tasks: int) -> "Vocab":
        words: set[str] = set()
        for sentence in sentences:
            words.update(tokenize(sentence))
        specials = [END_TOKEN] + [start_token(e) for e in range(1, n_tasks + 1)]
        return cls(specials + sorted(words - set(specials)), n_tasks)

    def start_id(self, task: int) -> int:
        if not 1 <= task <= self.n_tasks:
            raise ShapeError(f"vocab: task {task} out of range [1, {self.n_tasks}]")
        return self.index[start_token(task)]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        try:
            return [self.index[t] for t in tokens]
        except KeyError as exc:
            raise ShapeError(f"vocab: unknown token {exc.args[0]!r}") from None

    def decode(self, ids: Sequence[int]) -> list[str]:
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise ShapeError(f"vocab: id {i} out of range [0, {len(self.tokens)})")
        return [self.tokens[i] for i in ids]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        tokens = Path(path).read_text(encoding="utf-8").splitlines()
        n_tasks = sum(1 for t in tokens if t.startswith("<start_"))
        return cls(tokens, n_tasks)
