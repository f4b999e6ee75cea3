"""TeCh classifier: dual tokenization, encoder stacks, pooled fusion, linear head.

Checkpoint layout (little-endian throughout)::

    bytes 0..7    magic  b"TECHCKPT"
    bytes 8..11   uint32 format version (1)
    bytes 12..19  uint64 length H of the JSON header
    next H bytes  UTF-8 JSON: {"kind", "config", "params": [[name, shape], ...]}
    remainder     float64 parameter data, concatenated in header order, C order

The header lists parameters in ``named_parameters()`` order, so a load
into a freshly built model of the same config restores every array.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import tensor as tt
from .encoder import EncoderStack, stack_forward
from .layers import MixerKind, init_bias, init_weight
from .tensor import ShapeError, Tensor
from .tokenizer import (ChannelTokenizer, TemporalTokenizer, channel_embed, n_patches,
                        temporal_embed)

CKPT_MAGIC = b"TECHCKPT"
CKPT_VERSION = 1


@dataclass
class TeChConfig:
    T: int
    C: int
    K: int
    D: int = 32
    D_c: int | None = None
    L: int = 1
    M: int = 1
    N: int = 1
    mixer: str = "cotar"
    dropout: float = 0.1
    ffn_hidden: int | None = None
    pre_norm: bool = False

    def __post_init__(self):
        self.mixer = MixerKind(self.mixer).value
        if self.D_c is None:
            self.D_c = max(1, self.D // 4)
        if self.ffn_hidden is None:
            self.ffn_hidden = 2 * self.D
        if min(self.T, self.C, self.K, self.D, self.D_c, self.L) < 1:
            raise ValueError("T, C, K, D, D_c and L must all be positive")
        if self.M < 0 or self.N < 0:
            raise ValueError("branch depths must be non-negative")
        if self.M + self.N < 1:
            raise ValueError("M + N must be >= 1; use LinearProbe for the no-encoder baseline")
        if self.L > self.T:
            raise ValueError(f"patch length {self.L} exceeds series length {self.T}")

    @property
    def P(self) -> int:
        return n_patches(self.T, self.L)


def _block_param_count(cfg: TeChConfig) -> int:
    d, dc, h = cfg.D, cfg.D_c, cfg.ffn_hidden
    mixer = {
        "cotar": d * d + d + d * dc + dc + (d + dc) * d + d + d * d + d,
        "attention": 3 * (d * d + d),
        "none": 0,
    }[cfg.mixer]
    return mixer + (d * h + h + h * d + d) + 4 * d


def param_count(cfg: TeChConfig) -> int:
    """Closed-form number of scalar parameters of ``TeChModel(cfg)``."""
    d = cfg.D
    n = d * cfg.K + cfg.K
    if cfg.M:
        n += cfg.L * cfg.C * d + d + cfg.P * d + cfg.M * _block_param_count(cfg)
    if cfg.N:
        n += cfg.T * d + d + cfg.C * d + cfg.N * _block_param_count(cfg)
    return n


class TeChModel:
    def __init__(self, cfg: TeChConfig, rng: np.random.Generator | int = 0):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.cfg = cfg
        block_kw = dict(kind=cfg.mixer, ffn_hidden=cfg.ffn_hidden, core_dim=cfg.D_c,
                        dropout_rate=cfg.dropout, pre_norm=cfg.pre_norm)
        self.temporal_tok = self.temporal_stack = None
        self.channel_tok = self.channel_stack = None
        if cfg.M > 0:
            self.temporal_tok = TemporalTokenizer.init(cfg.T, cfg.C, cfg.D, cfg.L, rng)
            self.temporal_stack = EncoderStack.init(cfg.M, cfg.D, rng, **block_kw)
        if cfg.N > 0:
            self.channel_tok = ChannelTokenizer.init(cfg.T, cfg.C, cfg.D, rng)
            self.channel_stack = EncoderStack.init(cfg.N, cfg.D, rng, **block_kw)
        self.W_y = init_weight(rng, cfg.D, cfg.K)
        self.b_y = init_bias(cfg.K)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        if self.temporal_tok is not None:
            out += [(f"temporal.tok.{n}", p) for n, p in self.temporal_tok.named_parameters()]
            out += [(f"temporal.enc.{n}", p) for n, p in self.temporal_stack.named_parameters()]
        if self.channel_tok is not None:
            out += [(f"channel.tok.{n}", p) for n, p in self.channel_tok.named_parameters()]
            out += [(f"channel.enc.{n}", p) for n, p in self.channel_stack.named_parameters()]
        out += [("head.W_y", self.W_y), ("head.b_y", self.b_y)]
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def n_params(self) -> int:
        return sum(p.data.size for p in self.parameters())

    # pooled branch outputs, each (..., D)
    def temporal_repr(self, x, training=False, rng=None) -> Tensor:
        tokens = stack_forward(self.temporal_stack, temporal_embed(self.temporal_tok, x), training, rng)
        return tt.mean(tokens, axis=-2)

    def channel_repr(self, x, training=False, rng=None) -> Tensor:
        tokens = stack_forward(self.channel_stack, channel_embed(self.channel_tok, x), training, rng)
        return tt.mean(tokens, axis=-2)

    def _logits(self, x: np.ndarray, training: bool, rng) -> Tensor:
        pooled = None
        if self.temporal_tok is not None:
            pooled = self.temporal_repr(x, training, rng)
        if self.channel_tok is not None:
            ch = self.channel_repr(x, training, rng)
            pooled = ch if pooled is None else tt.add(pooled, ch)
        return tt.linear(pooled, self.W_y, self.b_y)

    def forward(self, X, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Logits of shape (K,) for one (T, C) series."""
        x = _series(X)
        if x.shape != (self.cfg.T, self.cfg.C):
            raise ShapeError(f"expected series ({self.cfg.T}, {self.cfg.C}), got {x.shape}")
        return tt.reshape(self._logits(x[None], training, rng), (self.cfg.K,))

    def forward_batch(self, Xs, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Logits of shape (B, K) for a list or (B, T, C) array of series."""
        x = stack_series(Xs)
        if x.shape[1:] != (self.cfg.T, self.cfg.C):
            raise ShapeError(f"expected series ({self.cfg.T}, {self.cfg.C}), got {x.shape[1:]}")
        return self._logits(x, training, rng)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        if set(params) != set(state):
            raise KeyError("state does not match model parameters")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ShapeError(f"{name}: expected {p.shape}, got {state[name].shape}")
            p.data[...] = state[name]


class LinearProbe:
    """Raw series flattened to T*C values, one affine map to K logits."""

    def __init__(self, cfg: TeChConfig, rng: np.random.Generator | int = 0):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.cfg = cfg
        self.W = init_weight(rng, cfg.T * cfg.C, cfg.K)
        self.b = init_bias(cfg.K)

    def named_parameters(self):
        return [("probe.W", self.W), ("probe.b", self.b)]

    def parameters(self):
        return [self.W, self.b]

    def forward(self, X, training=False, rng=None) -> Tensor:
        x = _series(X).reshape(1, -1)
        return tt.reshape(tt.linear(Tensor(x), self.W, self.b), (self.cfg.K,))

    def forward_batch(self, Xs, training=False, rng=None) -> Tensor:
        x = stack_series(Xs)
        return tt.linear(Tensor(x.reshape(x.shape[0], -1)), self.W, self.b)

    state_dict = TeChModel.state_dict
    load_state_dict = TeChModel.load_state_dict


def linear_probe_forward(probe: LinearProbe, X) -> Tensor:
    return probe.forward(X)


def _series(X) -> np.ndarray:
    return X.data if isinstance(X, Tensor) else np.asarray(X, dtype=np.float64)


def stack_series(Xs) -> np.ndarray:
    if isinstance(Xs, np.ndarray):
        x = Xs.astype(np.float64, copy=False)
    else:
        items = [_series(x) for x in Xs]
        if not items:
            raise ShapeError("empty batch")
        if len({a.shape for a in items}) != 1:
            raise ShapeError(f"ragged batch: shapes {sorted({a.shape for a in items})}")
        x = np.stack(items)
    if x.ndim != 3:
        raise ShapeError(f"batch must be (B, T, C), got {x.shape}")
    return x


def build_model(cfg: TeChConfig, rng, kind: str = "tech"):
    if kind == "tech":
        return TeChModel(cfg, rng)
    if kind == "probe":
        return LinearProbe(cfg, rng)
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model) -> None:
    kind = "probe" if isinstance(model, LinearProbe) else "tech"
    named = model.named_parameters()
    header = json.dumps({
        "kind": kind,
        "config": asdict(model.cfg),
        "params": [[n, list(p.shape)] for n, p in named],
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<IQ", CKPT_VERSION, len(header)))
        fh.write(header)
        for _, p in named:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if raw[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a TeCh checkpoint")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[20:20 + hlen].decode())
    names = {f.name for f in fields(TeChConfig)}
    cfg = TeChConfig(**{k: v for k, v in header["config"].items() if k in names})
    model = build_model(cfg, 0, header["kind"])
    offset = 20 + hlen
    state = {}
    for name, shape in header["params"]:
        n = int(np.prod(shape, dtype=np.int64))
        state[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * n
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after parameter data")
    model.load_state_dict(state)
    return model
