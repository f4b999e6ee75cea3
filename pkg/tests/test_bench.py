import numpy as np
import pytest

from cotar.bench import (BENCH_FIELDS, BenchRow, fit_slopes, loglog_slope, make_layer,
                         profile_forward, run_bench, write_bench_csv)
from cotar.cli import mac_ratios
from cotar.layers import attention_macs, cotar_macs


def test_loglog_slope_of_power_law():
    xs = [1, 2, 4, 8, 16]
    assert loglog_slope(xs, [3 * x ** 1.5 for x in xs]) == pytest.approx(1.5)


def test_profile_matches_closed_forms():
    assert profile_forward("attention", 100, 16).macs == attention_macs(100, 16)
    assert profile_forward("cotar", 100, 16, 4).macs == cotar_macs(100, 16, 4)


def test_cotar_buffers_grow_linearly():
    small, big = profile_forward("cotar", 128, 16), profile_forward("cotar", 256, 16)
    assert big.max_buffer == 2 * small.max_buffer
    # affine, not proportional: the core token buffers do not scale with S
    assert small.peak_live < big.peak_live <= 2 * small.peak_live


def test_run_bench_rows_and_csv(tmp_path):
    rows = run_bench((16, 32), d=8, repeats=1)
    assert [(r.mixer, r.S) for r in rows] == [("attention", 16), ("attention", 32), ("cotar", 16), ("cotar", 32)]
    assert all(r.median_ms > 0 for r in rows)
    assert set(fit_slopes(rows)) == {"attention", "cotar"}
    write_bench_csv(tmp_path / "b.csv", rows)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == ",".join(BENCH_FIELDS) and len(lines) == 5


def test_mac_ratio_readings():
    d = 64
    rows = [BenchRow("attention", s, d, 16, 1.0, attention_macs(s, d), 0, 0) for s in (256, 512, 1024)]
    r = mac_ratios(rows)["attention"]
    assert r["ratio"]["256"] == pytest.approx((6 * d + 8 * 256) / (3 * d + 2 * 256))
    assert r["diff_ratio"]["256"] == pytest.approx((6 * d + 24 * 256) / (3 * d + 6 * 256))


def test_unknown_mixer():
    with pytest.raises(ValueError):
        make_layer("mlp", 8, 2)
