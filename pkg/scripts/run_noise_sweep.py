"""Noise-robustness sweep: beta-scaled noise on the last channel, attention vs CoTAR.

Uses channel tokens only (M=0, N=2) so the corrupted channel is a single
token.  Writes sweep.csv (beta, mixer, seed, f1) and the seed-averaged curves.

    python3 scripts/run_noise_sweep.py --out runs/sweep [--betas 0 5 10 15 20]
"""

import argparse
import csv
import json
from pathlib import Path

from cotar.centrality import DEFAULT_BETAS, noise_sweep, sweep_curves
from cotar.data import GeneratorSpec, SplitSpec, generate, split_by_subject
from cotar.model import TeChConfig, build_model
from cotar.train import TrainConfig, evaluate, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--betas", type=float, nargs="+", default=list(DEFAULT_BETAS))
    ap.add_argument("--seeds", type=int, nargs="+", default=[42, 43, 44])
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    splits = split_by_subject(generate(GeneratorSpec()), SplitSpec())
    tcfg = TrainConfig()

    def train_fn(mixer, tr, va, te, seed):
        model = build_model(TeChConfig(T=128, C=8, K=2, D=32, L=8, M=0, N=2, mixer=mixer), seed)
        train(model, tr, va, tcfg, seed)
        f1 = evaluate(model, te, seed).f1_macro
        print(f"{mixer:9s} seed {seed} f1 {f1:.4f}", flush=True)
        return f1

    points = noise_sweep(train_fn, splits, args.betas, seeds=args.seeds)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "mixer", "seed", "f1"])
        for p in points:
            w.writerow([p.beta, p.mixer, p.seed, repr(p.f1)])
    curves = sweep_curves(points)
    (out / "curves.json").write_text(json.dumps(curves, indent=2))
    for mixer, curve in curves.items():
        print(mixer, " ".join(f"{b:g}:{f:.3f}" for b, f in curve))


if __name__ == "__main__":
    main()
