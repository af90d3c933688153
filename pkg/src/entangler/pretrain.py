"""Masked-token and character/subword matching objectives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .batch import IGNORE_INDEX, Batch
from .errors import ConfigurationError
from .model import EntanglementModel
from .nn import Linear, Module, parameter
from .tensor import Tensor
from .tokenize import MASK_ID, SPECIAL_TOKENS


@dataclass
class MaskedBatch:
    input_ids: np.ndarray
    targets: np.ndarray  # original id where masked, IGNORE_INDEX elsewhere
    mask_positions: np.ndarray


def mask_tokens(ids, rate: float = 0.15, rng: np.random.Generator | None = None, mask_id: int = MASK_ID) -> MaskedBatch:
    """Replace each non-special token by MASK independently with probability ``rate``."""
    if not 0.0 < rate < 1.0:
        raise ConfigurationError("mask rate must lie in (0, 1)")
    if rng is None:
        raise ConfigurationError("mask_tokens needs a random generator")
    ids = np.asarray(ids, dtype=np.int64)
    eligible = ids >= len(SPECIAL_TOKENS)
    chosen = (rng.random(ids.shape) < rate) & eligible
    return MaskedBatch(
        input_ids=np.where(chosen, mask_id, ids),
        targets=np.where(chosen, ids, IGNORE_INDEX),
        mask_positions=chosen,
    )


def mlm_loss(states: Tensor, masked: MaskedBatch, projection: Linear) -> Tensor:
    """Mean NLL of the original ids at masked positions (0 if nothing is masked)."""
    pos = np.asarray(masked.mask_positions, dtype=bool)
    if not pos.any():
        return T.sum_(states) * 0.0
    d = states.shape[-1]
    rows = states.reshape(-1, d)[np.flatnonzero(pos.reshape(-1))]
    logits = projection(rows)
    return T.cross_entropy(logits, masked.targets[pos])


class MatchingScale(Module):
    """Trainable temperature a = exp(log_a) > 0."""

    def __init__(self, initial: float):
        if initial <= 0:
            raise ConfigurationError("matching scale must start positive")
        self.log_a = parameter(np.array(math.log(initial)))

    @property
    def value(self) -> Tensor:
        return T.exp(self.log_a)


def similarity(subword_states: Tensor, char_states: Tensor, scale: MatchingScale) -> Tensor:
    """S[b, i, j] = H_s[b, i] · H_c[b, j] / a."""
    return T.matmul(subword_states, char_states.swapaxes(-1, -2)) / scale.value


def matching_loss(
    subword_states: Tensor,
    char_states: Tensor,
    labels,
    char_valid,
    scale: MatchingScale,
    subword_valid=None,
) -> Tensor:
    """Each valid character classifies which subword contains it.

    Column ``j`` of the similarity matrix is the logit vector for character
    ``j``; subwords outside ``subword_valid`` are removed from the support.
    Unbatched (L, d) inputs are accepted. Mean over valid characters.
    """
    if subword_states.ndim == 2:
        subword_states = subword_states.reshape(1, *subword_states.shape)
        char_states = char_states.reshape(1, *char_states.shape)
        labels = np.asarray(labels)[None]
        char_valid = np.asarray(char_valid)[None]
        if subword_valid is not None:
            subword_valid = np.asarray(subword_valid)[None]
    labels = np.asarray(labels, dtype=np.int64)
    char_valid = np.asarray(char_valid, dtype=bool)
    b, ls, _ = subword_states.shape
    if not char_valid.any():
        return (T.sum_(subword_states) + T.sum_(char_states)) * 0.0 + scale.log_a * 0.0
    s = similarity(subword_states, char_states, scale)  # (B, Ls, Lc)
    per_char = s.swapaxes(1, 2).reshape(-1, ls)  # (B*Lc, Ls)
    flat_valid = char_valid.reshape(-1)
    idx = np.flatnonzero(flat_valid)
    logits = per_char[idx]
    support = None
    if subword_valid is not None:
        sv = np.asarray(subword_valid, dtype=bool)
        support = np.repeat(sv, char_valid.shape[1], axis=0)[idx]
    return T.cross_entropy(logits, labels.reshape(-1)[idx], mask=support)


class Pretrainer(Module):
    """Model plus the two vocabulary projections and the matching scale."""

    def __init__(self, model: EntanglementModel, rng: np.random.Generator, mask_rate: float = 0.15):
        cfg = model.config
        self.model = model
        self.subword_projection = Linear(cfg.hidden_size, cfg.subword_vocab_size, rng)
        self.char_projection = Linear(cfg.hidden_size, cfg.char_vocab_size, rng)
        self.scale = MatchingScale(math.sqrt(cfg.hidden_size))
        self.mask_rate = mask_rate

    def losses(self, batch: Batch, rng: np.random.Generator, masks: tuple[MaskedBatch, MaskedBatch] | None = None):
        """Dict of the three losses and their unweighted sum under key ``total``."""
        if masks is None:
            masks = (
                mask_tokens(batch.subword_ids, self.mask_rate, rng),
                mask_tokens(batch.char_ids, self.mask_rate, rng),
            )
        sub_masked, char_masked = masks
        states = self.model(batch, sub_masked.input_ids, char_masked.input_ids)
        parts = {
            "matching": matching_loss(
                states.subword, states.char, batch.char_labels, batch.char_valid, self.scale, batch.subword_valid
            ),
            "mlm_subword": mlm_loss(states.subword, sub_masked, self.subword_projection),
            "mlm_char": mlm_loss(states.char, char_masked, self.char_projection),
        }
        parts["total"] = parts["matching"] + parts["mlm_subword"] + parts["mlm_char"]
        return parts
