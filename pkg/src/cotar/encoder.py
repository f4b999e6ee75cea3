"""Transformer encoder blocks with a swappable token mixer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tt
from .layers import MixerKind, init_bias, init_mixer, init_weight, mix
from .tensor import ShapeError, Tensor


@dataclass
class EncoderBlock:
    kind: MixerKind
    mixer: object
    ffn_W1: Tensor
    ffn_b1: Tensor
    ffn_W2: Tensor
    ffn_b2: Tensor
    norm1_gain: Tensor
    norm1_shift: Tensor
    norm2_gain: Tensor
    norm2_shift: Tensor
    dropout_rate: float = 0.1
    pre_norm: bool = False

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def model_dim(self) -> int:
        return self.ffn_W1.shape[0]

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, kind: MixerKind | str = MixerKind.COTAR,
             ffn_hidden: int | None = None, core_dim: int | None = None,
             dropout_rate: float = 0.1, pre_norm: bool = False) -> "EncoderBlock":
        h = 2 * d if ffn_hidden is None else ffn_hidden
        kind = MixerKind(kind)
        mixer = init_mixer(kind, d, rng, core_dim)
        return cls(kind, mixer,
                   init_weight(rng, d, h), init_bias(h), init_weight(rng, h, d), init_bias(d),
                   Tensor(np.ones(d), requires_grad=True), init_bias(d),
                   Tensor(np.ones(d), requires_grad=True), init_bias(d),
                   dropout_rate, pre_norm)

    def named_parameters(self):
        out = []
        if self.mixer is not None:
            out += [(f"mixer.{n}", p) for n, p in self.mixer.named_parameters()]
        out += [("ffn_W1", self.ffn_W1), ("ffn_b1", self.ffn_b1),
                ("ffn_W2", self.ffn_W2), ("ffn_b2", self.ffn_b2),
                ("norm1_gain", self.norm1_gain), ("norm1_shift", self.norm1_shift),
                ("norm2_gain", self.norm2_gain), ("norm2_shift", self.norm2_shift)]
        return out


def _ffn(b: EncoderBlock, x: Tensor) -> Tensor:
    return tt.linear(tt.gelu(tt.linear(x, b.ffn_W1, b.ffn_b1)), b.ffn_W2, b.ffn_b2)


def block_forward(b: EncoderBlock, O: Tensor, training: bool = False,
                  rng: np.random.Generator | None = None) -> Tensor:
    if O.ndim < 2 or O.shape[-1] != b.model_dim:
        raise ShapeError(f"block expects (..., S, {b.model_dim}), got {O.shape}")
    rate = b.dropout_rate if training else 0.0
    if rate > 0.0 and rng is None:
        raise ValueError("training with dropout needs an rng")

    def drop(x):
        return tt.dropout(x, rate, rng) if rate > 0.0 else x

    def norm1(x):
        return tt.layer_norm(x, b.norm1_gain, b.norm1_shift)

    def norm2(x):
        return tt.layer_norm(x, b.norm2_gain, b.norm2_shift)

    if b.pre_norm:
        y = tt.add(O, drop(mix(b.kind, b.mixer, norm1(O))))
        return tt.add(y, drop(_ffn(b, norm2(y))))
    y = norm1(tt.add(O, drop(mix(b.kind, b.mixer, O))))
    return norm2(tt.add(y, drop(_ffn(b, y))))


@dataclass
class EncoderStack:
    blocks: list[EncoderBlock] = field(default_factory=list)

    def __post_init__(self):
        dims = {blk.model_dim for blk in self.blocks}
        if len(dims) > 1:
            raise ValueError(f"blocks disagree on model dim: {sorted(dims)}")

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @classmethod
    def init(cls, depth: int, d: int, rng: np.random.Generator, **kw) -> "EncoderStack":
        return cls([EncoderBlock.init(d, rng, **kw) for _ in range(depth)])

    def named_parameters(self):
        return [(f"blocks.{i}.{n}", p) for i, blk in enumerate(self.blocks)
                for n, p in blk.named_parameters()]


def stack_forward(s: EncoderStack, O: Tensor, training: bool = False,
                  rng: np.random.Generator | None = None) -> Tensor:
    for blk in s.blocks:
        O = block_forward(blk, O, training, rng)
    return O
