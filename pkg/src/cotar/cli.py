"""Command-line entry point.

    cotar <generate|train|eval|bench|analyze|gradcheck> [--config PATH] [--set key=value]... [--out DIR]

Every command writes the effective config to ``<out>/config.json``.  On
failure the process prints one line ``error: <Kind>: <message>`` to stderr
and exits with status 2 for config or input problems, 1 otherwise.

Output schemas (all JSON documents carry a ``schema`` key):

* ``metrics.json``     metrics/v1: seeds, ``<metric>_{mean,std,per_seed}``
* ``log.csv``          epoch,train_loss,val_f1,lr,elapsed_ms
* ``bench.csv``        mixer,S,D,D_c,median_ms,macs,peak_live_elements,max_buffer_elements
* ``bench_fit.json``   bench/v1: per-mixer log-log slope and MAC ratios
* ``sweep.csv``        beta,mixer,f1 (one row per mixer and seed)
* ``centrality.json``  centrality/v1: sci/dic means plus per-sample values
* ``gradcheck.json``   gradcheck/v1: per-case max relative error
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as bn
from . import centrality as ct
from .config import ConfigError, RunConfig, load_config
from .data import Dataset, DatasetParseError, generate, load_dataset, save_dataset, split_by_subject
from .gradcheck import run_suite
from .metrics import aggregate
from .model import build_model, load_checkpoint, save_checkpoint
from .train import evaluate, train, write_log_csv

log = logging.getLogger("cotar")

COMMANDS = ("generate", "train", "eval", "bench", "analyze", "gradcheck")
SWEEP_FIELDS = ("beta", "mixer", "seed", "f1")


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _dataset(cfg: RunConfig) -> Dataset:
    if cfg.data is not None:
        if not Path(cfg.data).is_file():
            raise FileNotFoundError(f"data file not found: {cfg.data}")
        ds = load_dataset(cfg.data)
        cfg.T, cfg.C, cfg.K = ds.T, ds.C, ds.K
        return ds
    return generate(cfg.generator_spec())


def cmd_generate(cfg: RunConfig, out: Path) -> dict:
    ds = generate(cfg.generator_spec())
    path = Path(cfg.data) if cfg.data else out / "dataset.medts"
    save_dataset(path, ds)
    return {"dataset": str(path), "samples": len(ds)}


def cmd_train(cfg: RunConfig, out: Path) -> dict:
    ds = _dataset(cfg)
    tr, va, te = split_by_subject(ds, cfg.split_spec())
    mcfg, tcfg = cfg.model_config(), cfg.train_config()
    reports = []
    for i, seed in enumerate(tcfg.seeds):
        model = build_model(mcfg, seed, cfg.model_kind)
        res = train(model, tr, va, tcfg, seed)
        reports.append(evaluate(model, te, seed))
        save_checkpoint(out / f"model_seed{seed}.ckpt", model)
        write_log_csv(out / f"log_seed{seed}.csv", res.log)
        if i == 0:
            save_checkpoint(out / "model.ckpt", model)
            write_log_csv(out / "log.csv", res.log)
        log.info("seed %d: best epoch %d, val f1 %.4f", seed, res.best_epoch, res.best_val_f1)
    report = aggregate(reports)
    _write_json(out / "metrics.json", report.to_json_dict())
    return {"accuracy_mean": report.accuracy, "f1_macro_mean": report.f1_macro}


def cmd_eval(cfg: RunConfig, out: Path) -> dict:
    ds = _dataset(cfg)
    if cfg.eval_split == "all":
        split = ds
    else:
        split = dict(zip(("train", "val", "test"), split_by_subject(ds, cfg.split_spec())))[cfg.eval_split]
    seed = cfg.seeds[0]
    if cfg.checkpoint is not None:
        if not Path(cfg.checkpoint).is_file():
            raise FileNotFoundError(f"checkpoint not found: {cfg.checkpoint}")
        model = load_checkpoint(cfg.checkpoint)
    else:
        model = build_model(cfg.model_config(), seed, cfg.model_kind)
    if cfg.zero_head:
        for p in model.parameters()[-2:]:
            p.data[...] = 0.0
    report = evaluate(model, split, seed)
    _write_json(out / "metrics.json", report.to_json_dict())
    return {"accuracy": report.accuracy, "n": len(split)}


def mac_ratios(rows) -> dict[str, dict[str, float]]:
    """Per mixer and S: count(2S)/count(S) and the growth ratio of successive differences."""
    out: dict = {}
    for mixer in dict.fromkeys(r.mixer for r in rows):
        macs = {r.S: r.macs for r in rows if r.mixer == mixer}
        ratio, diff = {}, {}
        for s in sorted(macs):
            if 2 * s in macs:
                ratio[str(s)] = macs[2 * s] / macs[s]
                if 4 * s in macs:
                    diff[str(s)] = (macs[4 * s] - macs[2 * s]) / (macs[2 * s] - macs[s])
        out[mixer] = {"ratio": ratio, "diff_ratio": diff}
    return out


def cmd_bench(cfg: RunConfig, out: Path) -> dict:
    rows = bn.run_bench(tuple(cfg.bench_grid), d=cfg.bench_D, dc=cfg.bench_D_c,
                        repeats=cfg.bench_repeats)
    bn.write_bench_csv(out / "bench.csv", rows)
    slopes = bn.fit_slopes(rows)
    _write_json(out / "bench_fit.json", {"schema": "bench/v1", "slopes": slopes,
                                         "mac_ratios": mac_ratios(rows)})
    return {"slopes": slopes}


def _sweep_train_fn(cfg: RunConfig, ds: Dataset):
    tcfg = cfg.train_config()

    def fn(mixer, tr, va, te, seed):
        model = build_model(cfg.model_config(ds.T, ds.C, ds.K, mixer=mixer), seed, "tech")
        train(model, tr, va, tcfg, seed)
        return evaluate(model, te, seed).f1_macro

    return fn


def cmd_analyze(cfg: RunConfig, out: Path) -> dict:
    ds = _dataset(cfg)
    if len(ds) == 0:
        raise ct.CentralityError("dataset has no samples")
    rep = ct.dataset_centrality([s.X for s in ds])
    _write_json(out / "centrality.json", rep)
    summary = {"sci_mean": rep["sci_mean"], "dic_mean": rep["dic_mean"]}
    if cfg.sweep:
        splits = split_by_subject(ds, cfg.split_spec())
        points = ct.noise_sweep(_sweep_train_fn(cfg, ds), splits, cfg.betas, cfg.sweep_mixers,
                                cfg.sweep_seeds, cfg.noise_seed)
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_FIELDS)
            for p in points:
                w.writerow([p.beta, p.mixer, p.seed, repr(p.f1)])
        summary["curves"] = ct.sweep_curves(points)
    return summary


class CheckFailed(RuntimeError):
    pass


def cmd_gradcheck(cfg: RunConfig, out: Path) -> dict:
    results = run_suite(tol=cfg.gradcheck_tol, h=cfg.gradcheck_h)
    doc = {"schema": "gradcheck/v1", "tol": cfg.gradcheck_tol,
           "cases": [{"name": r.name, "max_rel_err": r.max_rel_err, "n_entries": r.n_entries,
                      "passed": r.passed} for r in results],
           "passed": all(r.passed for r in results)}
    _write_json(out / "gradcheck.json", doc)
    if not doc["passed"]:
        bad = [r.name for r in results if not r.passed]
        raise CheckFailed(f"gradient check failed for: {', '.join(bad)}")
    return {"cases": len(results), "passed": True}


HANDLERS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "bench": cmd_bench, "analyze": cmd_analyze, "gradcheck": cmd_gradcheck}

# errors caused by bad input rather than a bug or a failed check
_INPUT_ERRORS = (ConfigError, FileNotFoundError, DatasetParseError, ct.CentralityError)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cotar", description="CoTAR / TeCh experiments")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat JSON config file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override one config key (repeatable)")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        summary = HANDLERS[args.command](cfg, out)
        # echoed after the command so shapes read from a data file are recorded
        _write_json(out / "config.json", cfg.to_json_dict())
    except _INPUT_ERRORS as e:
        print(f"error: {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - the CLI contract is one line, never a traceback
        log.debug("command failed", exc_info=True)
        print(f"error: {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "ok": True, **summary}, sort_keys=True, default=float))
    return 0


def _one_line(e: BaseException) -> str:
    return " ".join(str(e).split())


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
