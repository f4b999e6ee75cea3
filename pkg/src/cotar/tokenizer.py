"""Temporal (patch) and channel (whole-series) token embeddings.

Inputs are raw series of shape (T, C), or (B, T, C) for a batch.  The
series are constants of the graph; only the embedding parameters carry
gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .layers import init_bias, init_weight
from .tensor import ShapeError, Tensor


def n_patches(t: int, patch_len: int) -> int:
    return math.ceil(t / patch_len)


def _as_series(X, t: int, c: int) -> np.ndarray:
    x = X.data if isinstance(X, Tensor) else np.asarray(X, dtype=np.float64)
    if x.ndim not in (2, 3) or x.shape[-2:] != (t, c):
        raise ShapeError(f"expected series of shape (..., {t}, {c}), got {x.shape}")
    return x


def patchify(x: np.ndarray, patch_len: int) -> np.ndarray:
    """(..., T, C) -> (..., P, L*C); the last patch is zero-padded in time."""
    t, c = x.shape[-2:]
    p = n_patches(t, patch_len)
    pad = p * patch_len - t
    if pad:
        widths = [(0, 0)] * (x.ndim - 2) + [(0, pad), (0, 0)]
        x = np.pad(x, widths)
    return x.reshape(*x.shape[:-2], p, patch_len * c)


@dataclass
class TemporalTokenizer:
    patch_len: int
    n_steps: int
    n_channels: int
    W_t: Tensor
    b_t: Tensor
    W_tpos: Tensor

    @property
    def n_patches(self) -> int:
        return n_patches(self.n_steps, self.patch_len)

    @classmethod
    def init(cls, t: int, c: int, d: int, patch_len: int, rng: np.random.Generator):
        if not 1 <= patch_len <= t:
            raise ValueError(f"patch length must lie in [1, {t}], got {patch_len}")
        p = n_patches(t, patch_len)
        return cls(patch_len, t, c, init_weight(rng, patch_len * c, d), init_bias(d),
                   init_weight(rng, p, d))

    def named_parameters(self):
        return [("W_t", self.W_t), ("b_t", self.b_t), ("W_tpos", self.W_tpos)]


@dataclass
class ChannelTokenizer:
    n_steps: int
    n_channels: int
    W_c: Tensor
    b_c: Tensor
    W_cpos: Tensor

    @classmethod
    def init(cls, t: int, c: int, d: int, rng: np.random.Generator):
        return cls(t, c, init_weight(rng, t, d), init_bias(d), init_weight(rng, c, d))

    def named_parameters(self):
        return [("W_c", self.W_c), ("b_c", self.b_c), ("W_cpos", self.W_cpos)]


def temporal_embed(tk: TemporalTokenizer, X) -> Tensor:
    x = _as_series(X, tk.n_steps, tk.n_channels)
    patches = Tensor(patchify(x, tk.patch_len))
    return tt.add(tt.linear(patches, tk.W_t, tk.b_t), tk.W_tpos)


def channel_embed(tk: ChannelTokenizer, X) -> Tensor:
    x = _as_series(X, tk.n_steps, tk.n_channels)
    series = Tensor(np.ascontiguousarray(np.swapaxes(x, -1, -2)))
    return tt.add(tt.linear(series, tk.W_c, tk.b_c), tk.W_cpos)
