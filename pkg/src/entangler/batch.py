"""Padding a list of tokenized examples into dense arrays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tokenize import NO_WORD, PAD_ID, TokenizedPair

IGNORE_INDEX = -100


@dataclass
class Batch:
    """Padded batch. Masks are True on real positions.

    ``word_labels`` (B, max words) uses ``IGNORE_INDEX`` on padding;
    ``seq_labels`` (B,) holds one class per example. Either may be None.
    """

    pairs: list[TokenizedPair]
    subword_ids: np.ndarray
    char_ids: np.ndarray
    subword_mask: np.ndarray
    char_mask: np.ndarray
    first_subword: np.ndarray
    first_char: np.ndarray
    word_mask: np.ndarray
    char_labels: np.ndarray
    char_valid: np.ndarray
    subword_valid: np.ndarray
    word_labels: np.ndarray | None = None
    seq_labels: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.pairs)


LabeledBatch = Batch


def collate(
    pairs: Sequence[TokenizedPair],
    word_labels: Sequence[Sequence[int]] | None = None,
    seq_labels: Sequence[int] | None = None,
) -> Batch:
    pairs = list(pairs)
    b = len(pairs)
    ls = max(p.num_subwords for p in pairs)
    lc = max(p.num_chars for p in pairs)
    lw = max(p.num_words for p in pairs)
    subword_ids = np.full((b, ls), PAD_ID, dtype=np.int64)
    char_ids = np.full((b, lc), PAD_ID, dtype=np.int64)
    subword_mask = np.zeros((b, ls), dtype=bool)
    char_mask = np.zeros((b, lc), dtype=bool)
    first_subword = np.zeros((b, lw), dtype=np.int64)
    first_char = np.zeros((b, lw), dtype=np.int64)
    word_mask = np.zeros((b, lw), dtype=bool)
    char_labels = np.zeros((b, lc), dtype=np.int64)
    char_valid = np.zeros((b, lc), dtype=bool)
    subword_valid = np.zeros((b, ls), dtype=bool)
    labels = None if word_labels is None else np.full((b, lw), IGNORE_INDEX, dtype=np.int64)
    for i, p in enumerate(pairs):
        subword_ids[i, : p.num_subwords] = p.subword_ids
        char_ids[i, : p.num_chars] = p.char_ids
        subword_mask[i, : p.num_subwords] = True
        char_mask[i, : p.num_chars] = True
        first_subword[i, : p.num_words] = p.first_subword_of_word
        first_char[i, : p.num_words] = p.first_char_of_word
        word_mask[i, : p.num_words] = True
        char_labels[i, : p.num_chars] = p.char_to_subword
        char_valid[i, : p.num_chars] = np.asarray(p.char_to_word) != NO_WORD
        subword_valid[i, : p.num_subwords] = np.asarray(p.subword_to_word) != NO_WORD
        if labels is not None:
            row = list(word_labels[i])[: p.num_words]
            if len(row) != p.num_words:
                raise ValueError(f"example {i}: {len(row)} labels for {p.num_words} words")
            labels[i, : p.num_words] = row
    return Batch(
        pairs=pairs,
        subword_ids=subword_ids,
        char_ids=char_ids,
        subword_mask=subword_mask,
        char_mask=char_mask,
        first_subword=first_subword,
        first_char=first_char,
        word_mask=word_mask,
        char_labels=char_labels,
        char_valid=char_valid,
        subword_valid=subword_valid,
        word_labels=labels,
        seq_labels=None if seq_labels is None else np.asarray(seq_labels, dtype=np.int64),
    )
