"""Default finite-difference gradient suite over every layer type."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .encoder import EncoderBlock, block_forward
from .layers import AttentionLayer, CoTARLayer, attention_forward, cotar_forward
from .model import TeChConfig, TeChModel
from .tensor import Tensor, grad_check
from .tokenizer import ChannelTokenizer, TemporalTokenizer, channel_embed, temporal_embed


@dataclass
class CaseResult:
    name: str
    max_rel_err: float
    n_entries: int
    passed: bool


def _weighted_sum(out: Tensor, probe: np.ndarray) -> Tensor:
    # a fixed random projection keeps every output entry in the loss
    return tt.sum(tt.mul(out, Tensor(probe)))


def _layer_case(make, fwd, s, d, rng):
    layer = make(rng)
    O = Tensor(rng.normal(size=(s, d)), requires_grad=True)
    probe = rng.normal(size=(s, d))
    params = [p for _, p in layer.named_parameters()] + [O]
    return (lambda: _weighted_sum(fwd(layer, O), probe)), params


def default_cases(seed: int = 0):
    rng = np.random.default_rng(seed)
    T, C, D, Dc, K = 8, 3, 8, 2, 2
    cases = {}
    cases["cotar"] = _layer_case(lambda r: CoTARLayer.init(D, r, Dc), cotar_forward, 4, D, rng)
    cases["attention"] = _layer_case(lambda r: AttentionLayer.init(D, r), attention_forward, 4, D, rng)
    for kind in ("cotar", "attention"):
        blk = EncoderBlock.init(D, rng, kind=kind, core_dim=Dc, dropout_rate=0.0)
        cases[f"encoder_block_{kind}"] = _layer_case(
            lambda r, b=blk: b, lambda b, O: block_forward(b, O), 4, D, rng)
    X = rng.normal(size=(T, C))
    ttok = TemporalTokenizer.init(T, C, D, 3, rng)
    tprobe = rng.normal(size=(ttok.n_patches, D))
    cases["temporal_tokenizer"] = (lambda: _weighted_sum(temporal_embed(ttok, X), tprobe),
                                   [p for _, p in ttok.named_parameters()])
    ctok = ChannelTokenizer.init(T, C, D, rng)
    cprobe = rng.normal(size=(C, D))
    cases["channel_tokenizer"] = (lambda: _weighted_sum(channel_embed(ctok, X), cprobe),
                                  [p for _, p in ctok.named_parameters()])
    model = TeChModel(TeChConfig(T=T, C=C, K=K, D=D, D_c=Dc, L=2, M=1, N=1, dropout=0.0), rng)
    labels = np.array([0, 1, 1])
    Xs = rng.normal(size=(3, T, C))
    cases["tech_dual"] = (lambda: tt.softmax_cross_entropy(model.forward_batch(Xs), labels),
                          model.parameters())
    return cases


def run_suite(tol: float = 1e-5, h: float = 1e-5, seed: int = 0) -> list[CaseResult]:
    out = []
    for name, (f, params) in default_cases(seed).items():
        rep = grad_check(f, params, h=h, tol=tol)
        out.append(CaseResult(name, rep.max_rel_err, rep.n_entries, rep.passed))
    return out
