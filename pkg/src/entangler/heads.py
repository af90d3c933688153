"""Word-level labeling and CLS classification heads with their losses."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .batch import Batch
from .entangle import EntangledStates
from .errors import ConfigurationError, UsageError
from .nn import Module, parameter, trunc_normal
from .tensor import Tensor

SIDES = ("subw", "char")


def _side_states(states: EntangledStates, side: str) -> Tensor:
    side = side.lower()
    if side not in SIDES:
        raise ConfigurationError(f"side must be one of {SIDES}, got {side!r}")
    h = states.subword if side == "subw" else states.char
    if h is None:
        raise UsageError(f"entangled states carry no {side} side")
    return h


class LabelingHead(Module):
    """Linear map d → K (no bias) applied to token states."""

    def __init__(self, d: int, num_labels: int, rng: np.random.Generator):
        if num_labels < 2:
            raise ConfigurationError("a labeling head needs at least two labels")
        self.weight = parameter(trunc_normal(rng, (d, num_labels)))

    def forward(self, h: Tensor) -> Tensor:
        return T.matmul(h, self.weight)


class ClassificationHead(Module):
    """softmax(classifier · tanh(pooler · h_CLS))."""

    def __init__(self, d: int, num_labels: int, rng: np.random.Generator):
        if num_labels < 2:
            raise ConfigurationError("a classification head needs at least two labels")
        self.pooler = parameter(trunc_normal(rng, (d, d)))
        self.classifier = parameter(trunc_normal(rng, (d, num_labels)))

    def forward(self, h: Tensor) -> Tensor:
        return T.matmul(T.tanh(T.matmul(h, self.pooler)), self.classifier)


def word_log_probs(states: EntangledStates, side: str, batch: Batch, head: LabelingHead) -> Tensor:
    """Log-probabilities (B, n_words, K) read off each word's first token."""
    h = _side_states(states, side)
    firsts = batch.first_subword if side.lower() == "subw" else batch.first_char
    rows = np.arange(h.shape[0])[:, None]
    gathered = h[rows, firsts]
    logits = head(gathered)
    if logits.ndim == 2:
        logits = logits.reshape(1, *logits.shape)
    return T.log_softmax(logits)


def word_probs(states: EntangledStates, side: str, batch: Batch, head: LabelingHead) -> Tensor:
    return T.exp(word_log_probs(states, side, batch, head))


def _nll(log_probs: Tensor, labels, mask) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool) & (labels >= 0)
    count = int(mask.sum())
    if count == 0:
        return T.sum_(log_probs) * 0.0
    k = log_probs.shape[-1]
    flat = log_probs.reshape(-1, k)
    idx = np.flatnonzero(mask.reshape(-1))
    picked = flat[idx, labels.reshape(-1)[idx]]
    return T.sum_(picked) * (-1.0 / count)


def labeling_loss(log_probs: Tensor, labels, word_mask) -> Tensor:
    """Mean negative log-likelihood over unmasked words (0 if none)."""
    return _nll(log_probs, labels, word_mask)


def predict_labels(probs) -> np.ndarray:
    """Per-row argmax; exact ties go to the lowest class index."""
    data = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    return np.argmax(data, axis=-1)


def class_log_probs(states: EntangledStates, side: str, head: ClassificationHead) -> Tensor:
    h = _side_states(states, side)
    cls = h[:, 0, :] if h.ndim == 3 else h[0:1, :]
    return T.log_softmax(head(cls))


def classify(states: EntangledStates, side: str, head: ClassificationHead) -> Tensor:
    return T.exp(class_log_probs(states, side, head))


def classification_loss(log_probs: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    return _nll(log_probs.reshape(-1, log_probs.shape[-1]), labels, np.ones(labels.shape, dtype=bool))
