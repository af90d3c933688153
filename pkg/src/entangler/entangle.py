"""Paired co-attention stacks that entangle subword and character states.

Module ``i`` on the subword side computes::

    C_s = CoTRM(query=H_s[i], key=value=H_c[i])
    H_s[i+1] = TRM(C_s)

and the character side mirrors it with the roles swapped. Both sides read
the layer-``i`` states, so the two updates happen in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .encoder import sinusoidal_pe
from .errors import ConfigurationError
from .nn import Module, TransformerBlock
from .tensor import Tensor
from .tokenize import TokenizedPair

PE_STRATEGIES = ("none", "a", "b", "c")


@dataclass(frozen=True)
class CoAttentionConfig:
    num_modules: int = 1
    hidden_size: int = 64
    num_heads: int = 4
    feed_forward_size: int = 256
    dropout: float = 0.1
    pe_strategy: str = "none"

    def __post_init__(self):
        if self.num_modules < 1:
            raise ConfigurationError("num_coattention must be at least 1")
        strategy = str(self.pe_strategy).lower()
        if strategy not in PE_STRATEGIES:
            raise ConfigurationError(f"pe_strategy must be one of {PE_STRATEGIES}, got {self.pe_strategy!r}")
        object.__setattr__(self, "pe_strategy", strategy)


@dataclass
class EntangledStates:
    subword: Tensor | None
    char: Tensor | None
    subword_mask: np.ndarray
    char_mask: np.ndarray
    # per-module outputs (H_s[1..m], H_c[1..m]) for inspection
    subword_layers: list[Tensor] = field(default_factory=list)
    char_layers: list[Tensor] = field(default_factory=list)


class CoTRM(TransformerBlock):
    """Transformer block whose attention queries one sequence and reads another."""

    def forward(self, hq: Tensor, hkv: Tensor, kv_mask=None) -> Tensor:
        if hq.shape[-1] != hkv.shape[-1]:
            raise ConfigurationError(f"co-attention inputs disagree on width: {hq.shape[-1]} vs {hkv.shape[-1]}")
        return super().forward(hq, kv_mask, context=hkv)


class CoAttentionModule(Module):
    """One CO-TRM followed by one TRM, for a single side."""

    def __init__(self, config: CoAttentionConfig, rng: np.random.Generator):
        args = (config.hidden_size, config.num_heads, config.feed_forward_size, rng, config.dropout)
        self.cotrm = CoTRM(*args)
        self.trm = TransformerBlock(*args)

    def forward(self, h_self: Tensor, self_mask, h_other: Tensor, other_mask) -> Tensor:
        return self.trm(self.cotrm(h_self, h_other, other_mask), self_mask)


def pe_indices(pair: TokenizedPair, strategy: str) -> tuple[list[Fraction], list[Fraction]]:
    """Aligned position indices for (subwords, characters), specials included.

    Position 0 is CLS; real tokens start at 1 and SEP follows the last one.
    ``a``: subwords count up, characters inherit their subword's position.
    ``b``: characters count up, subwords take their first character's.
    ``c``: characters count up, subwords take the mean over their characters.
    """
    strategy = strategy.lower()
    if strategy == "a":
        sub = [Fraction(i) for i in range(pair.num_subwords)]
        char = [sub[s] for s in pair.char_to_subword]
    elif strategy == "b":
        char = [Fraction(j) for j in range(pair.num_chars)]
        sub = [char[start] for start, _ in pair.subword_char_span]
    elif strategy == "c":
        char = [Fraction(j) for j in range(pair.num_chars)]
        sub = [sum(char[start:end], Fraction(0)) / (end - start) for start, end in pair.subword_char_span]
    else:
        raise ConfigurationError(f"no position mapping for strategy {strategy!r}")
    return sub, char


def batch_positions(pairs: Sequence[TokenizedPair], strategy: str, sub_len: int, char_len: int):
    """Padded float position arrays (B, sub_len) and (B, char_len)."""
    sub_pos = np.zeros((len(pairs), sub_len))
    char_pos = np.zeros((len(pairs), char_len))
    for b, pair in enumerate(pairs):
        sp, cp = pe_indices(pair, strategy)
        sub_pos[b, : len(sp)] = [float(x) for x in sp]
        char_pos[b, : len(cp)] = [float(x) for x in cp]
    return sub_pos, char_pos


class Entangler(Module):
    def __init__(self, config: CoAttentionConfig, rng: np.random.Generator):
        self.config = config
        self.subword_modules = [CoAttentionModule(config, rng) for _ in range(config.num_modules)]
        self.char_modules = [CoAttentionModule(config, rng) for _ in range(config.num_modules)]

    def forward(
        self,
        hs0: Tensor,
        hc0: Tensor,
        subword_mask,
        char_mask,
        pairs: Sequence[TokenizedPair] | None = None,
    ) -> EntangledStates:
        d = self.config.hidden_size
        if hs0.shape[-1] != d or hc0.shape[-1] != d:
            raise ConfigurationError(f"encoder widths {hs0.shape[-1]}/{hc0.shape[-1]} do not match co-attention width {d}")
        if self.config.pe_strategy != "none":
            if pairs is None:
                raise ConfigurationError(f"pe_strategy {self.config.pe_strategy!r} needs the alignment of every example")
            sub_pos, char_pos = batch_positions(pairs, self.config.pe_strategy, hs0.shape[1], hc0.shape[1])
            hs0 = hs0 + Tensor(sinusoidal_pe(sub_pos, d), dtype=hs0.dtype)
            hc0 = hc0 + Tensor(sinusoidal_pe(char_pos, d), dtype=hc0.dtype)
        hs, hc = hs0, hc0
        states = EntangledStates(None, None, np.asarray(subword_mask, bool), np.asarray(char_mask, bool))
        for sub_mod, char_mod in zip(self.subword_modules, self.char_modules):
            hs, hc = (
                sub_mod(hs, subword_mask, hc, char_mask),
                char_mod(hc, char_mask, hs, subword_mask),
            )
            states.subword_layers.append(hs)
            states.char_layers.append(hc)
        states.subword, states.char = hs, hc
        return states
