"""Character and subword vocabularies, tokenization, and alignment maps.

Subwords come from a greedy byte-pair merge model trained on the corpus
itself; merges never cross a word boundary. Characters are raw code
points. Whitespace is never materialised as a token: word boundaries live
only in the alignment maps of :class:`TokenizedPair`.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, ParseError

log = logging.getLogger(__name__)

SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
NO_WORD = -1


@dataclass(frozen=True)
class Vocab:
    """Immutable token table. Ids are line numbers; specials occupy 0..4."""

    entries: tuple[str, ...]
    merges: tuple[tuple[str, str], ...] = ()
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple(self.entries)
        if entries[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ConfigurationError("vocabulary must start with the special tokens " + ",".join(SPECIAL_TOKENS))
        index = {tok: i for i, tok in enumerate(entries)}
        if len(index) != len(entries):
            raise ConfigurationError("vocabulary contains duplicate entries")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "merges", tuple(tuple(m) for m in self.merges))
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "_ranks", {pair: r for r, pair in enumerate(self.merges)})
        object.__setattr__(self, "_cache", {})

    @classmethod
    def from_tokens(cls, tokens: Iterable[str], merges=()) -> Vocab:
        entries = list(SPECIAL_TOKENS)
        seen = set(entries)
        for tok in tokens:
            if tok not in seen:
                seen.add(tok)
                entries.append(tok)
        return cls(tuple(entries), tuple(merges))

    @property
    def specials(self) -> dict[str, int]:
        return {"PAD": PAD_ID, "UNK": UNK_ID, "CLS": CLS_ID, "SEP": SEP_ID, "MASK": MASK_ID}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        i = self.index.get(token, UNK_ID)
        # a literal "[CLS]" in the text is not the special token
        return UNK_ID if i < len(SPECIAL_TOKENS) else i

    def token(self, i: int) -> str:
        return self.entries[i]

    def segment(self, word: str) -> list[str]:
        """Split one word into subword strings by applying merges in rank order."""
        cached = self._cache.get(word)
        if cached is not None:
            return list(cached)
        symbols = list(word)
        ranks = self._ranks
        while len(symbols) > 1:
            best = None
            best_rank = None
            for pair in zip(symbols, symbols[1:]):
                r = ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = pair, r
            if best is None:
                break
            symbols = _merge_pair(symbols, best)
        self._cache[word] = tuple(symbols)
        return symbols

    def save(self, path) -> None:
        """Write one token per line; merges (if any) go to ``<path>.merges``."""
        path = Path(path)
        path.write_text("\n".join(self.entries) + "\n", encoding="utf-8")
        merges_path = path.with_name(path.name + ".merges")
        if self.merges:
            merges_path.write_text("".join(f"{a} {b}\n" for a, b in self.merges), encoding="utf-8")
        elif merges_path.exists():
            merges_path.unlink()

    @classmethod
    def load(cls, path) -> Vocab:
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        merges = []
        merges_path = path.with_name(path.name + ".merges")
        if merges_path.exists():
            for lineno, line in enumerate(merges_path.read_text(encoding="utf-8").split("\n"), 1):
                if not line:
                    continue
                parts = line.split(" ")
                if len(parts) != 2:
                    raise ParseError("expected two space-separated symbols", str(merges_path), lineno)
                merges.append((parts[0], parts[1]))
        try:
            return cls(tuple(lines), tuple(merges))
        except ConfigurationError as exc:
            raise ParseError(str(exc), str(path)) from None


def _merge_pair(symbols: list[str], pair: tuple[str, str]) -> list[str]:
    a, b = pair
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def _as_words(item) -> list[str]:
    return item.split() if isinstance(item, str) else list(item)


def build_vocabs(corpus: Sequence, num_merges: int) -> tuple[Vocab, Vocab]:
    """Train (subword vocab, char vocab) on ``corpus``.

    ``corpus`` items are word lists or whitespace-separated strings. Each
    merge joins the most frequent adjacent symbol pair (ties: the
    lexicographically smallest pair). Fewer than ``num_merges`` merges are
    learned only when no adjacent pair remains anywhere in the corpus.
    """
    if num_merges < 0:
        raise ConfigurationError("num_merges must be >= 0")
    counts: Counter[str] = Counter()
    for item in corpus:
        counts.update(w for w in _as_words(item) if w)
    if not counts:
        raise ConfigurationError("cannot build vocabularies from an empty corpus")

    chars = sorted({c for w in counts for c in w})
    char_vocab = Vocab.from_tokens(chars)

    words = [list(w) for w in counts]
    freqs = list(counts.values())
    merges: list[tuple[str, str]] = []
    units: list[str] = []
    for _ in range(num_merges):
        pairs: Counter[tuple[str, str]] = Counter()
        for symbols, f in zip(words, freqs):
            for pair in zip(symbols, symbols[1:]):
                pairs[pair] += f
        candidates = [(p, c) for p, c in pairs.items() if p[0] + p[1] not in SPECIAL_TOKENS]
        if not candidates:
            log.info("stopping after %d merges: no adjacent pairs left", len(merges))
            break
        best_count = max(c for _, c in candidates)
        best = min(p for p, c in candidates if c == best_count)
        merges.append(best)
        units.append(best[0] + best[1])
        words = [_merge_pair(s, best) if len(s) > 1 else s for s in words]
    subword_vocab = Vocab.from_tokens(chars + units, merges)
    return subword_vocab, char_vocab


@dataclass(frozen=True)
class TokenizedPair:
    """One example as parallel subword and character sequences with alignments.

    All indices are 0-based positions into the respective sequences, which
    both start with CLS and end with SEP. ``char_to_word`` is ``NO_WORD``
    (-1) on the specials; ``char_to_subword`` maps CLS→CLS and SEP→SEP.
    """

    words: tuple[str, ...]
    subword_ids: tuple[int, ...]
    char_ids: tuple[int, ...]
    char_to_subword: tuple[int, ...]
    char_to_word: tuple[int, ...]
    subword_to_word: tuple[int, ...]
    first_subword_of_word: tuple[int, ...]
    first_char_of_word: tuple[int, ...]
    subword_char_span: tuple[tuple[int, int], ...]

    @property
    def num_words(self) -> int:
        return len(self.words)

    @property
    def num_subwords(self) -> int:
        return len(self.subword_ids)

    @property
    def num_chars(self) -> int:
        return len(self.char_ids)


def tokenize_pair(
    words: Sequence[str],
    subword_vocab: Vocab,
    char_vocab: Vocab,
    max_subwords: int | None = None,
    max_chars: int | None = None,
) -> TokenizedPair:
    """Tokenize a word sequence into aligned subword and character sequences.

    If the caps on sequence length (CLS/SEP included) would be exceeded,
    trailing words are dropped so that every alignment stays whole; the
    returned ``words`` reflects the truncation.
    """
    words = list(words)
    if not words:
        raise InputError("cannot tokenize an empty word sequence")
    for w in words:
        if not w:
            raise InputError("words must be non-empty strings")

    pieces = [subword_vocab.segment(w) for w in words]
    keep = len(words)
    if max_subwords is not None or max_chars is not None:
        ns = nc = 2
        for j, (w, p) in enumerate(zip(words, pieces)):
            ns += len(p)
            nc += len(w)
            if (max_subwords is not None and ns > max_subwords) or (max_chars is not None and nc > max_chars):
                keep = j
                break
        if keep == 0:
            raise InputError(f"first word {words[0]!r} alone exceeds the length caps")
        if keep < len(words):
            log.warning("truncating example from %d to %d words to respect length caps", len(words), keep)
            words, pieces = words[:keep], pieces[:keep]

    subword_ids = [CLS_ID]
    char_ids = [CLS_ID]
    char_to_subword = [0]
    char_to_word = [NO_WORD]
    subword_to_word = [NO_WORD]
    first_sub: list[int] = []
    first_char: list[int] = []
    spans = [(0, 1)]
    for j, (word, word_pieces) in enumerate(zip(words, pieces)):
        first_sub.append(len(subword_ids))
        first_char.append(len(char_ids))
        for piece in word_pieces:
            s = len(subword_ids)
            subword_ids.append(subword_vocab.id(piece))
            subword_to_word.append(j)
            start = len(char_ids)
            for c in piece:
                char_ids.append(char_vocab.id(c))
                char_to_subword.append(s)
                char_to_word.append(j)
            spans.append((start, len(char_ids)))
    sep_sub = len(subword_ids)
    spans.append((len(char_ids), len(char_ids) + 1))
    subword_ids.append(SEP_ID)
    subword_to_word.append(NO_WORD)
    char_ids.append(SEP_ID)
    char_to_subword.append(sep_sub)
    char_to_word.append(NO_WORD)

    return TokenizedPair(
        words=tuple(words),
        subword_ids=tuple(subword_ids),
        char_ids=tuple(char_ids),
        char_to_subword=tuple(char_to_subword),
        char_to_word=tuple(char_to_word),
        subword_to_word=tuple(subword_to_word),
        first_subword_of_word=tuple(first_sub),
        first_char_of_word=tuple(first_char),
        subword_char_span=tuple(spans),
    )


@dataclass(frozen=True)
class CharWordLabels:
    """For each character, the index of the subword containing it."""

    labels: np.ndarray
    valid_mask: np.ndarray


def char_word_labels(pair: TokenizedPair) -> CharWordLabels:
    labels = np.asarray(pair.char_to_subword, dtype=np.int64)
    valid = np.asarray(pair.char_to_word) != NO_WORD
    return CharWordLabels(labels=labels, valid_mask=valid)
