"""Token mixers over a token matrix O of shape (..., S, D).

``AttentionLayer`` is single-head scaled dot-product attention; ``CoTARLayer``
aggregates every token into one core vector with per-dimension softmax
weights and redistributes it by concatenation plus an MLP.  The two are
interchangeable inside an encoder block.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .tensor import ShapeError, Tensor


class MixerKind(str, enum.Enum):
    ATTENTION = "attention"
    COTAR = "cotar"
    NONE = "none"


def init_weight(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)


def init_bias(n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


def _check_tokens(O: Tensor, d: int) -> None:
    if O.ndim < 2 or O.shape[-1] != d:
        raise ShapeError(f"expected tokens of shape (..., S, {d}), got {O.shape}")
    if O.shape[-2] < 1:
        raise ShapeError("token matrix must hold at least one token")


@dataclass
class AttentionLayer:
    W_Q: Tensor
    W_K: Tensor
    W_V: Tensor
    b_q: Tensor
    b_k: Tensor
    b_v: Tensor

    @property
    def model_dim(self) -> int:
        return self.W_Q.shape[0]

    @classmethod
    def init(cls, d: int, rng: np.random.Generator) -> "AttentionLayer":
        return cls(init_weight(rng, d, d), init_weight(rng, d, d), init_weight(rng, d, d),
                   init_bias(d), init_bias(d), init_bias(d))

    def named_parameters(self):
        return [("W_Q", self.W_Q), ("W_K", self.W_K), ("W_V", self.W_V),
                ("b_q", self.b_q), ("b_k", self.b_k), ("b_v", self.b_v)]


@dataclass
class CoTARLayer:
    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    W3: Tensor
    b3: Tensor
    W4: Tensor
    b4: Tensor

    @property
    def model_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def core_dim(self) -> int:
        return self.W2.shape[1]

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, core_dim: int | None = None) -> "CoTARLayer":
        dc = max(1, d // 4) if core_dim is None else core_dim
        if dc < 1:
            raise ValueError("core_dim must be >= 1")
        return cls(init_weight(rng, d, d), init_bias(d),
                   init_weight(rng, d, dc), init_bias(dc),
                   init_weight(rng, d + dc, d), init_bias(d),
                   init_weight(rng, d, d), init_bias(d))

    def named_parameters(self):
        return [("W1", self.W1), ("b1", self.b1), ("W2", self.W2), ("b2", self.b2),
                ("W3", self.W3), ("b3", self.b3), ("W4", self.W4), ("b4", self.b4)]


def attention_forward(layer: AttentionLayer, O: Tensor) -> Tensor:
    d = layer.model_dim
    _check_tokens(O, d)
    q = tt.linear(O, layer.W_Q, layer.b_q)
    k = tt.linear(O, layer.W_K, layer.b_k)
    v = tt.linear(O, layer.W_V, layer.b_v)
    scores = tt.scale(tt.matmul(q, tt.transpose(k)), 1.0 / math.sqrt(d))
    return tt.matmul(tt.softmax(scores, axis=-1), v)


def _core_projection(layer: CoTARLayer, O: Tensor) -> Tensor:
    _check_tokens(O, layer.model_dim)
    return tt.linear(tt.gelu(tt.linear(O, layer.W1, layer.b1)), layer.W2, layer.b2)


def _aggregate(o_tilde: Tensor) -> Tensor:
    # one softmax per core dimension, taken over the token axis
    weights = tt.softmax(o_tilde, axis=-2)
    return tt.reduce(tt.mul(o_tilde, weights), axis=-2, kind="sum")


def core_token(layer: CoTARLayer, O: Tensor) -> Tensor:
    """The aggregated core vector, shape (..., D_c)."""
    return _aggregate(_core_projection(layer, O))


def cotar_forward(layer: CoTARLayer, O: Tensor) -> Tensor:
    s = O.shape[-2] if O.ndim >= 2 else 0
    core = core_token(layer, O)
    fused = tt.concat(O, tt.repeat_rows(core, s), axis=-1)
    return tt.linear(tt.gelu(tt.linear(fused, layer.W3, layer.b3)), layer.W4, layer.b4)


def mix(kind: MixerKind | str, layer, O: Tensor) -> Tensor:
    kind = MixerKind(kind)
    if kind is MixerKind.NONE:
        if layer is not None:
            raise TypeError("mixer kind 'none' takes no layer")
        return O
    if kind is MixerKind.ATTENTION:
        if not isinstance(layer, AttentionLayer):
            raise TypeError(f"attention mixer needs an AttentionLayer, got {type(layer).__name__}")
        return attention_forward(layer, O)
    if not isinstance(layer, CoTARLayer):
        raise TypeError(f"cotar mixer needs a CoTARLayer, got {type(layer).__name__}")
    return cotar_forward(layer, O)


def init_mixer(kind: MixerKind | str, d: int, rng: np.random.Generator, core_dim: int | None = None):
    kind = MixerKind(kind)
    if kind is MixerKind.ATTENTION:
        return AttentionLayer.init(d, rng)
    if kind is MixerKind.COTAR:
        return CoTARLayer.init(d, rng, core_dim)
    return None


# closed-form multiply-accumulate counts (matrix products plus elementwise products)

def attention_macs(s: int, d: int) -> int:
    return 3 * s * d * d + 2 * s * s * d


def cotar_macs(s: int, d: int, dc: int) -> int:
    return s * (d * d + d * dc + dc + (d + dc) * d + d * d)
