"""Attention LSTM over per-task report sentences.

One LSTM serves all tasks: the first input step embeds the image
feature vector, the second a task-specific start token, then the
sentence words.  At every step a soft-attention distribution over conv
map positions is computed from the previous hidden state and the
class-activation embedding; the attended context enters the cell next
to the word embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..autodiff import (
    Parameter,
    Tensor,
    add,
    bmm,
    concat,
    embed_lookup,
    linear,
    log,
    matmul,
    mul,
    nll_loss,
    no_grad,
    reshape,
    sigmoid,
    slice_axis,
    softmax,
    tanh,
    transpose,
    tsum,
)
from ..errors import ShapeError
from .vocab import Vocab

__all__ = [
    "CaseFeatures",
    "LangConfig",
    "LangModel",
    "LstmState",
    "TaskSequence",
    "make_task_batch",
]


@dataclass(frozen=True)
class LangConfig:
    d_embed: int = 64
    d_hidden: int = 128


@dataclass
class LstmState:
    h: Tensor
    c: Tensor


@dataclass
class CaseFeatures:
    """What the image model hands over for one image."""

    conv: Tensor  # (D, positions) flattened conv maps
    feat: Tensor  # (D,) pooled feature
    cam: Tensor  # (positions,) class activation embedding

    @classmethod
    def of(cls, conv_maps: Tensor, feat: Tensor, cam: Tensor) -> "CaseFeatures":
        if conv_maps.data.ndim == 3:
            d, h, w = conv_maps.data.shape
            conv_maps = reshape(conv_maps, (d, h * w))
        return cls(conv_maps, feat, cam)


@dataclass(frozen=True)
class TaskSequence:
    """One duplicated training item: a case index, a task, its target tokens."""

    case_index: int
    task: int
    target_ids: tuple[int, ...]


def make_task_batch(
    reports: Sequence[Mapping[int, Sequence[str]]], vocab: Vocab
) -> list[TaskSequence]:
    """Duplicate each of the B cases once per task -> K*B sequences.

    ``reports[b]`` maps task number to that task's sentence tokens; all
    of tasks 1..K must be present.
    """

    sequences: list[TaskSequence] = []
    for b, report in enumerate(reports):
        for task in range(1, vocab.n_tasks + 1):
            if task not in report:
                raise ShapeError(f"task batch: case {b} is missing task {task}")
            sequences.append(TaskSequence(b, task, tuple(vocab.encode(report[task]))))
    return sequences


class LangModel:
    def __init__(self, vocab: Vocab, feature_channels: int, positions: int, config: LangConfig, rng):
        self.vocab = vocab
        self.config = config
        self.positions = positions
        self.feature_channels = feature_channels
        v, de, dh = len(vocab), config.d_embed, config.d_hidden

        def he(name, rows, cols):
            return Parameter(name, rng.normal(0.0, math.sqrt(2.0 / rows), (rows, cols)))

        self.embed = Parameter("lang.embed", rng.uniform(-0.08, 0.08, (v, de)))
        self.img_embed = he("lang.img_embed", feature_channels, de)
        self.lstm_w_in = he("lang.lstm.w_in", de + feature_channels, 4 * dh)
        self.lstm_w_rec = he("lang.lstm.w_rec", dh, 4 * dh)
        self.lstm_bias = Parameter("lang.lstm.bias", np.zeros(4 * dh))
        self.att_query = he("lang.att.query", dh, positions)
        self.att_mix = he("lang.att.mix", positions, positions)
        self.decoder = he("lang.decoder", dh, v)

    # -- single-step spec surfaces -------------------------------------------

    def attention_step(self, h_prev: Tensor, conv_flat: Tensor, cam: Tensor) -> tuple[Tensor, Tensor]:
        """Soft attention over positions: weights a and context z.

        ``a = softmax(W_mix . tanh(W_query^T h + cam))``; z is the
        attention-weighted sum of conv features per channel.
        """

        if conv_flat.data.shape != (self.feature_channels, self.positions):
            raise ShapeError(
                f"attention: conv maps {conv_flat.data.shape} != "
                f"({self.feature_channels}, {self.positions})"
            )
        if cam.data.shape != (self.positions,) or h_prev.data.shape != (self.config.d_hidden,):
            raise ShapeError(
                f"attention: cam {cam.data.shape} / hidden {h_prev.data.shape} dims inconsistent"
            )
        aligned = tanh(add(linear(h_prev, self.att_query), cam))
        weights = softmax(linear(aligned, transpose(self.att_mix, (1, 0))), axis=-1)
        context = reshape(
            matmul(conv_flat, reshape(weights, (self.positions, 1))), (self.feature_channels,)
        )
        return weights, context

    def lstm_step(
        self, state: LstmState, x_in: Tensor, context: Tensor
    ) -> tuple[LstmState, Tensor]:
        """One 4-gate cell step over [word embedding, context]; returns log-probs."""

        if x_in.data.shape != (self.config.d_embed,):
            raise ShapeError(f"lstm: input {x_in.data.shape} != ({self.config.d_embed},)")
        new_h, new_c = self._cell(
            reshape(state.h, (1, -1)),
            reshape(state.c, (1, -1)),
            reshape(x_in, (1, -1)),
            reshape(context, (1, -1)),
        )
        dh = self.config.d_hidden
        h1 = reshape(new_h, (dh,))
        log_probs = log(softmax(linear(h1, self.decoder), axis=-1))
        return LstmState(h1, reshape(new_c, (dh,))), log_probs

    def initial_state(self) -> LstmState:
        dh = self.config.d_hidden
        return LstmState(Tensor(np.zeros(dh)), Tensor(np.zeros(dh)))

    # -- batched internals -----------------------------------------------------

    def _attention_batch(self, h: Tensor, conv: Tensor, cam: Tensor) -> tuple[Tensor, Tensor]:
        n = h.data.shape[0]
        aligned = tanh(add(matmul(h, self.att_query), cam))
        weights = softmax(matmul(aligned, transpose(self.att_mix, (1, 0))), axis=-1)
        context = reshape(bmm(conv, reshape(weights, (n, self.positions, 1))), (n, -1))
        return weights, context

    def _cell(self, h: Tensor, c: Tensor, x: Tensor, z: Tensor) -> tuple[Tensor, Tensor]:
        dh = self.config.d_hidden
        gates = add(
            add(matmul(concat([x, z], axis=1), self.lstm_w_in), matmul(h, self.lstm_w_rec)),
            self.lstm_bias,
        )
        gi = sigmoid(slice_axis(gates, 1, 0, dh))
        gf = sigmoid(slice_axis(gates, 1, dh, dh))
        gg = tanh(slice_axis(gates, 1, 2 * dh, dh))
        go = sigmoid(slice_axis(gates, 1, 3 * dh, dh))
        new_c = add(mul(gf, c), mul(gi, gg))
        new_h = mul(go, tanh(new_c))
        return new_h, new_c

    def _teacher_forced(
        self,
        conv: Tensor,  # (N, D, P)
        x0: Tensor,  # (N, d_embed)
        cam: Tensor,  # (N, P)
        inputs: np.ndarray,  # (N, L) int
        targets: np.ndarray,  # (N, L) int
        mask: np.ndarray,  # (N, L) float
    ) -> Tensor:
        """Per-sequence summed NLL (N,) under teacher forcing."""

        n = conv.data.shape[0]
        dh = self.config.d_hidden
        h, c = Tensor(np.zeros((n, dh))), Tensor(np.zeros((n, dh)))
        _, z = self._attention_batch(h, conv, cam)
        h, c = self._cell(h, c, x0, z)
        total: Tensor | None = None
        for t in range(inputs.shape[1]):
            x = embed_lookup(self.embed, inputs[:, t])
            _, z = self._attention_batch(h, conv, cam)
            h, c = self._cell(h, c, x, z)
            probs = softmax(matmul(h, self.decoder), axis=-1)
            step_nll = mul(nll_loss(probs, targets[:, t]), Tensor(mask[:, t]))
            total = step_nll if total is None else add(total, step_nll)
        assert total is not None
        return total

    def _pack(self, sequences: Sequence[TaskSequence]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        end = self.vocab.end_id
        lengths = [len(s.target_ids) + 1 for s in sequences]
        width = max(lengths)
        inputs = np.full((len(sequences), width), end, dtype=np.int64)
        targets = np.full((len(sequences), width), end, dtype=np.int64)
        mask = np.zeros((len(sequences), width))
        for i, seq in enumerate(sequences):
            ids = list(seq.target_ids)
            inputs[i, 0] = self.vocab.start_id(seq.task)
            inputs[i, 1 : 1 + len(ids)] = ids
            targets[i, : len(ids)] = ids
            targets[i, len(ids)] = end
            mask[i, : len(ids) + 1] = 1.0
        return inputs, targets, mask

    def batch_nll(
        self,
        conv: Tensor,  # (B, D, P)
        feats: Tensor,  # (B, D)
        cam: Tensor,  # (B, P)
        sequences: Sequence[TaskSequence],
    ) -> Tensor:
        """Per-sequence NLL (len(sequences),) against shared case features.

        Sequences referencing the same case index share (and therefore
        merge gradients into) that case's conv/feat/cam rows.
        """

        if not sequences:
            raise ShapeError("batch_nll: empty sequence list")
        idx = np.array([s.case_index for s in sequences], dtype=np.int64)
        if idx.min() < 0 or idx.max() >= conv.data.shape[0]:
            raise ShapeError("batch_nll: case index out of range")
        x0_rows = matmul(feats, self.img_embed)
        inputs, targets, mask = self._pack(sequences)
        return self._teacher_forced(
            embed_lookup(conv, idx),
            embed_lookup(x0_rows, idx),
            embed_lookup(cam, idx),
            inputs,
            targets,
            mask,
        )

    # -- public per-case operations ---------------------------------------------

    def _single_batch(self, features: CaseFeatures) -> tuple[Tensor, Tensor, Tensor]:
        d, p = self.feature_channels, self.positions
        if features.conv.data.shape != (d, p):
            raise ShapeError(f"features: conv {features.conv.data.shape} != ({d}, {p})")
        conv = reshape(features.conv, (1, d, p))
        feats = reshape(features.feat, (1, d))
        cam = reshape(features.cam, (1, p))
        return conv, feats, cam

    def sequence_nll(self, features: CaseFeatures, task: int, tokens: Sequence[str]) -> Tensor:
        """Teacher-forced negative log-likelihood of one task sentence."""

        ids = tuple(self.vocab.encode(tokens))
        if not 1 <= task <= self.vocab.n_tasks:
            raise ShapeError(f"task {task} out of range [1, {self.vocab.n_tasks}]")
        conv, feats, cam = self._single_batch(features)
        per_item = self.batch_nll(conv, feats, cam, [TaskSequence(0, task, ids)])
        return reshape(per_item, ())

    def generate(
        self, features: CaseFeatures, task: int, max_len: int = 30
    ) -> tuple[list[str], list[np.ndarray]]:
        """Greedy decode of one task sentence plus the per-step attention maps."""

        if max_len < 1:
            raise ShapeError(f"generate: max_len must be >= 1, got {max_len}")
        conv, feats, cam = self._single_batch(features)
        with no_grad():
            tokens_rows, att_rows = self.generate_batch(conv, feats, cam, task, max_len)
        return tokens_rows[0], att_rows[0]

    def generate_batch(
        self,
        conv: Tensor,
        feats: Tensor,
        cam: Tensor,
        task: int,
        max_len: int = 30,
    ) -> tuple[list[list[str]], list[list[np.ndarray]]]:
        """Lockstep greedy decode for a batch of images on one task."""

        n = conv.data.shape[0]
        dh = self.config.d_hidden
        end = self.vocab.end_id
        with no_grad():
            x0 = matmul(feats, self.img_embed)
            h, c = Tensor(np.zeros((n, dh))), Tensor(np.zeros((n, dh)))
            _, z = self._attention_batch(h, conv, cam)
            h, c = self._cell(h, c, x0, z)
            current = np.full(n, self.vocab.start_id(task), dtype=np.int64)
            alive = np.ones(n, dtype=bool)
            token_rows: list[list[str]] = [[] for _ in range(n)]
            att_rows: list[list[np.ndarray]] = [[] for _ in range(n)]
            for _ in range(max_len):
                x = embed_lookup(self.embed, current)
                att, z = self._attention_batch(h, conv, cam)
                h, c = self._cell(h, c, x, z)
                logits = matmul(h, self.decoder)
                chosen = np.argmax(logits.data, axis=1)
                for i in range(n):
                    if alive[i] and chosen[i] != end:
                        token_rows[i].append(self.vocab.tokens[chosen[i]])
                        att_rows[i].append(att.data[i].copy())
                alive &= chosen != end
                if not alive.any():
                    break
                current = np.where(alive, chosen, end)
        return token_rows, att_rows

    def score_report(self, features: CaseFeatures, sentences: Mapping[int, Sequence[str]]) -> float:
        """Log-likelihood score of the description tasks (higher = better match).

        The query must hold exactly the non-conclusion tasks 1..K-1.
        """

        expected = set(range(1, self.vocab.n_tasks))
        if set(sentences) != expected:
            raise ShapeError(
                f"score_report: query must hold description tasks {sorted(expected)}, "
                f"got {sorted(sentences)}"
            )
        with no_grad():
            total = 0.0
            for task in sorted(sentences):
                total += self.sequence_nll(features, task, sentences[task]).item()
        return -total

    # -- state --------------------------------------------------------------

    def params(self) -> list[Parameter]:
        return [
            self.embed,
            self.img_embed,
            self.lstm_w_in,
            self.lstm_w_rec,
            self.lstm_bias,
            self.att_query,
            self.att_mix,
            self.decoder,
        ]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.params()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.params():
            if state[p.name].shape != p.data.shape:
                raise ShapeError(
                    f"checkpoint tensor {p.name!r} has shape {state[p.name].shape}, "
                    f"expected {p.data.shape}"
                )
            p.data = state[p.name].copy()

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray], vocab: Vocab) -> "LangModel":
        v, de = state["lang.embed"].shape
        d = state["lang.img_embed"].shape[0]
        dh, p = state["lang.att.query"].shape
        if v != len(vocab):
            raise ShapeError(f"checkpoint vocab size {v} != vocab file size {len(vocab)}")
        model = cls(vocab, d, p, LangConfig(d_embed=de, d_hidden=dh), np.random.default_rng(0))
        model.load_state(state)
        return model
