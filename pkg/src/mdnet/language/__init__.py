"""Report language modeling: vocabulary, attention LSTM, task batching."""

from .model import (
    CaseFeatures,
    LangConfig,
    LangModel,
    LstmState,
    TaskSequence,
    make_task_batch,
)
from .vocab import END_TOKEN, Vocab, detokenize, start_token, tokenize

__all__ = [
    "CaseFeatures",
    "END_TOKEN",
    "LangConfig",
    "LangModel",
    "LstmState",
    "TaskSequence",
    "Vocab",
    "detokenize",
    "make_task_batch",
    "start_token",
    "tokenize",
]
