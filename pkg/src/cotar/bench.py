"""Scaling benchmark for the two token mixers.

For every (mixer, S) the harness records the median wall time of
forward+backward over ``repeats`` runs after ``warmup`` discarded runs,
plus the multiply-accumulate count and allocation profile of one forward
pass taken from :class:`~cotar.tensor.Accountant`.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .layers import AttentionLayer, CoTARLayer, attention_forward, cotar_forward
from .tensor import Accountant, Tensor

DEFAULT_GRID = (128, 256, 512, 1024, 2048)
BENCH_FIELDS = ("mixer", "S", "D", "D_c", "median_ms", "macs", "peak_live_elements", "max_buffer_elements")


@dataclass
class BenchRow:
    mixer: str
    S: int
    D: int
    D_c: int
    median_ms: float
    macs: int
    peak_live_elements: int
    max_buffer_elements: int


def make_layer(mixer: str, d: int, dc: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    if mixer == "attention":
        return AttentionLayer.init(d, rng), attention_forward
    if mixer == "cotar":
        return CoTARLayer.init(d, rng, dc), cotar_forward
    raise ValueError(f"unknown mixer {mixer!r}")


def profile_forward(mixer: str, s: int, d: int, dc: int | None = None, seed: int = 0) -> Accountant:
    """Run one forward pass under an accountant and return it."""
    dc = dc or max(1, d // 4)
    layer, fwd = make_layer(mixer, d, dc, seed)
    O = Tensor(np.random.default_rng(seed + 1).normal(size=(s, d)), requires_grad=True)
    with Accountant() as acc:
        out = fwd(layer, O)
        del out
    return acc


def time_forward_backward(mixer: str, s: int, d: int, dc: int, repeats: int = 5,
                          warmup: int = 1, seed: int = 0) -> float:
    layer, fwd = make_layer(mixer, d, dc, seed)
    O = Tensor(np.random.default_rng(seed + 1).normal(size=(s, d)), requires_grad=True)
    times = []
    for i in range(warmup + repeats):
        t0 = time.perf_counter()
        tt.backward(tt.sum(fwd(layer, O)))
        dt = time.perf_counter() - t0
        if i >= warmup:
            times.append(dt)
    return statistics.median(times)


def run_bench(grid=DEFAULT_GRID, d: int = 64, dc: int | None = None,
              mixers=("attention", "cotar"), repeats: int = 5, warmup: int = 1) -> list[BenchRow]:
    dc = dc or max(1, d // 4)
    rows = []
    for mixer in mixers:
        for s in grid:
            acc = profile_forward(mixer, s, d, dc)
            ms = 1000 * time_forward_backward(mixer, s, d, dc, repeats, warmup)
            rows.append(BenchRow(mixer, s, d, dc, ms, acc.macs, acc.peak_live, acc.max_buffer))
    return rows


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])


def fit_slopes(rows: list[BenchRow]) -> dict[str, float]:
    out = {}
    for mixer in dict.fromkeys(r.mixer for r in rows):
        sel = [r for r in rows if r.mixer == mixer]
        out[mixer] = loglog_slope([r.S for r in sel], [r.median_ms for r in sel])
    return out


def write_bench_csv(path, rows: list[BenchRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_FIELDS)
        for r in rows:
            w.writerow([r.mixer, r.S, r.D, r.D_c, f"{r.median_ms:.6f}", r.macs,
                        r.peak_live_elements, r.max_buffer_elements])
