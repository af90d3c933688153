"""The full entanglement model: two encoders feeding the co-attention stacks."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .batch import Batch
from .encoder import Encoder, EncoderConfig, EncoderOutput
from .entangle import CoAttentionConfig, EntangledStates, Entangler
from .nn import Module


@dataclass(frozen=True)
class ModelConfig:
    subword_vocab_size: int
    char_vocab_size: int
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    feed_forward_size: int = 256
    num_coattention: int = 1
    pe_strategy: str = "none"
    dropout: float = 0.1
    max_subwords: int = 128
    max_chars: int = 512

    def subword_encoder(self) -> EncoderConfig:
        return EncoderConfig(
            self.subword_vocab_size, self.hidden_size, self.num_layers, self.num_heads,
            self.feed_forward_size, self.dropout, self.max_subwords,
        )

    def char_encoder(self) -> EncoderConfig:
        return EncoderConfig(
            self.char_vocab_size, self.hidden_size, self.num_layers, self.num_heads,
            self.feed_forward_size, self.dropout, self.max_chars,
        )

    def coattention(self) -> CoAttentionConfig:
        return CoAttentionConfig(
            self.num_coattention, self.hidden_size, self.num_heads,
            self.feed_forward_size, self.dropout, self.pe_strategy,
        )

    def to_dict(self) -> dict:
        return asdict(self)


class EntanglementModel(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.subword_encoder = Encoder(config.subword_encoder(), rng)
        self.char_encoder = Encoder(config.char_encoder(), rng)
        self.entangler = Entangler(config.coattention(), rng)
        self.last_encoded: tuple[EncoderOutput, EncoderOutput] | None = None

    def encode(self, batch: Batch, subword_ids=None, char_ids=None) -> tuple[EncoderOutput, EncoderOutput]:
        s_ids = batch.subword_ids if subword_ids is None else subword_ids
        c_ids = batch.char_ids if char_ids is None else char_ids
        return (
            self.subword_encoder(s_ids, batch.subword_mask),
            self.char_encoder(c_ids, batch.char_mask),
        )

    def forward(self, batch: Batch, subword_ids=None, char_ids=None) -> EntangledStates:
        """Entangled states for ``batch``; id overrides serve masked inputs."""
        hs0, hc0 = self.encode(batch, subword_ids, char_ids)
        self.last_encoded = (hs0, hc0)
        return self.entangler(hs0.hidden, hc0.hidden, hs0.pad_mask, hc0.pad_mask, batch.pairs)
