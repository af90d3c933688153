"""Backbone encoders producing the contextual states fed to co-attention."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, InputError
from .nn import Dropout, Embedding, Module, TransformerBlock
from .tensor import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    feed_forward_size: int = 256
    dropout: float = 0.1
    max_len: int = 512

    def __post_init__(self):
        if self.hidden_size % self.num_heads:
            raise ConfigurationError(f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must lie in [0, 1)")
        if self.num_layers < 0 or self.vocab_size <= 0 or self.max_len <= 0:
            raise ConfigurationError("num_layers, vocab_size and max_len must be positive")


@dataclass
class EncoderOutput:
    hidden: Tensor
    pad_mask: np.ndarray  # (batch, L) bool, True on real tokens


def sinusoidal_pe(positions, d: int) -> np.ndarray:
    """Sinusoidal encodings for (possibly fractional) positions.

    ``out[..., 2i] = sin(p / 10000**(2i/d))`` and ``out[..., 2i+1]`` the
    matching cosine. Returns float64; callers cast.
    """
    if d % 2:
        raise ConfigurationError("sinusoidal encodings need an even width")
    p = np.asarray(positions, dtype=np.float64)[..., None]
    freq = 10000.0 ** (np.arange(0, d, 2, dtype=np.float64) / d)
    out = np.empty(p.shape[:-1] + (d,), dtype=np.float64)
    out[..., 0::2] = np.sin(p / freq)
    out[..., 1::2] = np.cos(p / freq)
    return out


class Encoder(Module):
    """Token embedding + learned absolute positions + post-norm transformer stack."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        self.token_embedding = Embedding(config.vocab_size, config.hidden_size, rng)
        self.position_embedding = Embedding(config.max_len, config.hidden_size, rng)
        self.embed_dropout = Dropout(config.dropout, rng)
        self.layers = [
            TransformerBlock(config.hidden_size, config.num_heads, config.feed_forward_size, rng, config.dropout)
            for _ in range(config.num_layers)
        ]

    def forward(self, ids, pad_mask=None) -> EncoderOutput:
        ids = np.asarray(ids)
        if ids.ndim == 1:
            ids = ids[None, :]
        b, length = ids.shape
        if length > self.config.max_len:
            raise InputError(f"sequence length {length} exceeds max_len {self.config.max_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise InputError("token id outside the vocabulary")
        if pad_mask is None:
            pad_mask = np.ones((b, length), dtype=bool)
        pad_mask = np.asarray(pad_mask, dtype=bool).reshape(b, length)
        h = self.token_embedding(ids) + self.position_embedding(np.arange(length))
        h = self.embed_dropout(h)
        for layer in self.layers:
            h = layer(h, pad_mask)
        return EncoderOutput(hidden=h, pad_mask=pad_mask)
