"""Small module system and the standard layers built on :mod:`entangler.tensor`."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigurationError
from .tensor import Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) samples redrawn until they fall within two std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=T.get_default_dtype())


class Module:
    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        seen: set[int] = set()
        for name, value in self._walk(prefix):
            if id(value) not in seen:
                seen.add(id(value))
                yield name, value

    def _walk(self, prefix):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value._walk(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator[Module]:
        yield self
        for value in vars(self).values():
            items = value if isinstance(value, (list, tuple)) else [value]
            for item in items:
                if isinstance(item, Module):
                    yield from item.modules()

    def train(self, mode: bool = True) -> Module:
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            if missing or extra:
                raise ConfigurationError(f"state mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for name, p in own.items():
            if name in state:
                value = np.asarray(state[name])
                if value.shape != p.shape:
                    raise ConfigurationError(f"shape mismatch for {name}: {value.shape} vs {p.shape}")
                p.data[...] = value

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True, std: float = 0.02):
        self.weight = parameter(trunc_normal(rng, (d_in, d_out), std))
        self.bias = parameter(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = parameter(np.ones(d))
        self.beta = parameter(np.zeros(d))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, num: int, d: int, rng: np.random.Generator, std: float = 0.02):
        self.weight = parameter(trunc_normal(rng, (num, d), std))

    def forward(self, ids) -> Tensor:
        return T.embedding(self.weight, ids)


class Dropout(Module):
    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.rate, self.rng, self.training)


class MultiHeadAttention(Module):
    """Multi-head attention; queries from one sequence, keys/values from another."""

    def __init__(self, d: int, num_heads: int, rng: np.random.Generator, dropout: float = 0.0):
        if d % num_heads:
            raise ConfigurationError(f"hidden size {d} is not divisible by {num_heads} heads")
        self.d = d
        self.num_heads = num_heads
        self.query = Linear(d, d, rng)
        self.key = Linear(d, d, rng)
        self.value = Linear(d, d, rng)
        self.output = Linear(d, d, rng)
        self.attn_dropout = Dropout(dropout, rng)
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return x.reshape(b, n, self.num_heads, self.d // self.num_heads).transpose(0, 2, 1, 3)

    def forward(self, xq: Tensor, xkv: Tensor, kv_mask=None) -> Tensor:
        """``xq`` (B, Lq, d), ``xkv`` (B, Lk, d), ``kv_mask`` (B, Lk) bool."""
        if xq.shape[-1] != self.d or xkv.shape[-1] != self.d:
            raise ConfigurationError(
                f"attention width mismatch: query {xq.shape[-1]}, key/value {xkv.shape[-1]}, layer {self.d}"
            )
        q = self._split(self.query(xq))
        k = self._split(self.key(xkv))
        v = self._split(self.value(xkv))
        mask = None if kv_mask is None else np.asarray(kv_mask, dtype=bool)[:, None, None, :]
        scale = 1.0 / math.sqrt(self.d // self.num_heads)
        scores = T.matmul(q, k.swapaxes(-1, -2)) * scale
        weights = T.softmax(scores, axis=-1, mask=mask)
        self.last_weights = weights.data
        ctx = T.matmul(self.attn_dropout(weights), v)
        b, _, n, _ = ctx.shape
        return self.output(ctx.transpose(0, 2, 1, 3).reshape(b, n, self.d))


class FeedForward(Module):
    def __init__(self, d: int, d_ff: int, rng: np.random.Generator):
        self.up = Linear(d, d_ff, rng)
        self.down = Linear(d_ff, d, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.down(T.gelu(self.up(x)))


class TransformerBlock(Module):
    """Post-norm block: x ← LN(x + Attn(x, ctx)); x ← LN(x + FFN(x)).

    With ``context`` omitted this is ordinary self-attention.
    """

    def __init__(self, d: int, num_heads: int, d_ff: int, rng: np.random.Generator, dropout: float = 0.0):
        self.attention = MultiHeadAttention(d, num_heads, rng, dropout)
        self.attn_norm = LayerNorm(d)
        self.ffn = FeedForward(d, d_ff, rng)
        self.ffn_norm = LayerNorm(d)
        self.dropout = Dropout(dropout, rng)

    def forward(self, x: Tensor, key_mask=None, context: Tensor | None = None) -> Tensor:
        kv = x if context is None else context
        x = self.attn_norm(x + self.dropout(self.attention(x, kv, key_mask)))
        return self.ffn_norm(x + self.dropout(self.ffn(x)))
