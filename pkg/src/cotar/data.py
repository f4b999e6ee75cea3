"""Synthetic multichannel datasets, the ``#medts v1`` file format, and subject splits.

File format::

    #medts v1 T=<T> C=<C> K=<K>
    <subject_id>,<label>
    <T lines of C comma-separated floats>
    <subject_id>,<label>
    ...

Floats are written with ``repr`` so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CENTRALIZED = "centralized"
DECENTRALIZED = "decentralized"


@dataclass
class LabeledSample:
    X: np.ndarray
    label: int
    subject_id: int


@dataclass
class Dataset:
    samples: list[LabeledSample]
    T: int
    C: int
    K: int

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def X(self) -> np.ndarray:
        return np.stack([s.X for s in self.samples]) if self.samples else np.zeros((0, self.T, self.C))

    @property
    def y(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def subjects(self) -> np.ndarray:
        return np.array([s.subject_id for s in self.samples], dtype=np.int64)

    def subject_ids(self) -> list[int]:
        return sorted({s.subject_id for s in self.samples})

    def subset(self, subject_ids) -> "Dataset":
        keep = set(int(s) for s in subject_ids)
        return Dataset([s for s in self.samples if s.subject_id in keep], self.T, self.C, self.K)

    def map_X(self, fn) -> "Dataset":
        return Dataset([LabeledSample(fn(s.X), s.label, s.subject_id) for s in self.samples],
                       self.T, self.C, self.K)


@dataclass
class GeneratorSpec:
    mode: str = CENTRALIZED
    subjects: int = 60
    trials_per_subject: int = 10
    T: int = 128
    C: int = 8
    K: int = 2
    coupling: float = 0.9
    noise: float = 0.3
    freqs: tuple[float, ...] = (0.05, 0.15)
    driver_lag: int = 0
    seed: int = 0

    def __post_init__(self):
        self.freqs = tuple(float(f) for f in self.freqs)
        if self.mode not in (CENTRALIZED, DECENTRALIZED):
            raise ValueError(f"mode must be {CENTRALIZED!r} or {DECENTRALIZED!r}, got {self.mode!r}")
        if min(self.subjects, self.trials_per_subject, self.T, self.C, self.K) < 1:
            raise ValueError("subjects, trials_per_subject, T, C and K must be positive")
        if len(self.freqs) != self.K:
            raise ValueError(f"need one core frequency per class ({self.K}), got {len(self.freqs)}")
        if len(set(self.freqs)) != len(self.freqs):
            raise ValueError("core frequencies must be distinct across classes")
        if not all(0.0 < f < 0.5 for f in self.freqs):
            raise ValueError("core frequencies must lie in (0, 0.5) cycles/step")
        if not 0.0 <= self.coupling <= 1.0:
            raise ValueError("coupling must lie in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise level must be non-negative")
        if not 0 <= self.driver_lag < self.T:
            raise ValueError("driver_lag must lie in [0, T)")


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per channel; constant channels become zero."""
    mu = x.mean(axis=0, keepdims=True)
    sd = x.std(axis=0, keepdims=True)
    return (x - mu) / np.where(sd > 0, sd, 1.0)


def _centralized_trial(spec: GeneratorSpec, k: int, gains: np.ndarray, amp: float,
                       rng: np.random.Generator) -> np.ndarray:
    t = np.arange(spec.T + spec.driver_lag)
    z = amp * np.sin(2 * np.pi * spec.freqs[k] * t + rng.uniform(0, 2 * np.pi))
    core = np.empty((spec.T, spec.C))
    lag = spec.driver_lag
    core[:, 0] = z[lag:]
    core[:, 1:] = z[:spec.T, None]  # followers see the core `lag` steps late
    eps = rng.normal(0.0, spec.noise, size=(spec.T, spec.C))
    return spec.coupling * gains * core + (1.0 - spec.coupling) * eps


def _decentralized_trial(spec: GeneratorSpec, k: int, phis: np.ndarray,
                         rng: np.random.Generator) -> np.ndarray:
    # independent AR(1) channels; the coefficient sets each channel's spectral tilt
    burn = 50
    e = rng.normal(0.0, max(spec.noise, 1e-3), size=(spec.T + burn, spec.C))
    x = np.zeros_like(e)
    for i in range(1, len(e)):
        x[i] = phis * x[i - 1] + e[i]
    return x[burn:]


def ar_coefficient(freq: float) -> float:
    """AR(1) coefficient whose spectrum tilts toward ``freq``: 0.9*cos(2*pi*freq)."""
    return 0.9 * math.cos(2 * math.pi * freq)


def generate(spec: GeneratorSpec) -> Dataset:
    """Draw ``subjects * trials_per_subject`` standardized trials.

    Subject ``s`` carries label ``s % K``.  Every subject gets its own rng
    stream split from ``spec.seed``, so output does not depend on order.
    """
    streams = np.random.SeedSequence(spec.seed).spawn(spec.subjects)
    samples = []
    for sid, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        k = sid % spec.K
        if spec.mode == CENTRALIZED:
            gains = rng.uniform(0.5, 1.5, size=spec.C)
            amp = rng.uniform(0.8, 1.2)
            make = lambda: _centralized_trial(spec, k, gains, amp, rng)  # noqa: E731
        else:
            phis = ar_coefficient(spec.freqs[k]) + rng.uniform(-0.05, 0.05, size=spec.C)
            make = lambda: _decentralized_trial(spec, k, phis, rng)  # noqa: E731
        for _ in range(spec.trials_per_subject):
            samples.append(LabeledSample(standardize(make()), k, sid))
    return Dataset(samples, spec.T, spec.C, spec.K)


# ---------------------------------------------------------------------------
# splits


@dataclass
class SplitSpec:
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        self.fractions = tuple(float(f) for f in self.fractions)
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ValueError("need three positive split fractions")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(self.fractions)}")


def split_by_subject(ds: Dataset, spec: SplitSpec | None = None) -> tuple[Dataset, Dataset, Dataset]:
    """Subject-disjoint (train, val, test).  Train receives the rounding remainder."""
    spec = spec or SplitSpec()
    ids = np.array(ds.subject_ids())
    if len(ids) < 3:
        raise ValueError(f"need at least 3 subjects to split, got {len(ids)}")
    ids = np.random.default_rng(spec.seed).permutation(ids)
    n = len(ids)
    n_val = max(1, math.floor(spec.fractions[1] * n + 1e-9))
    n_test = max(1, math.floor(spec.fractions[2] * n + 1e-9))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ValueError(f"too few subjects ({n}) for a non-empty training split")
    return (ds.subset(ids[:n_train]), ds.subset(ids[n_train:n_train + n_val]),
            ds.subset(ids[n_train + n_val:]))


def kfold_by_subject(ds: Dataset, k: int, seed: int = 0) -> list[tuple[Dataset, Dataset]]:
    ids = np.array(ds.subject_ids())
    if not 2 <= k <= len(ids):
        raise ValueError(f"k must lie in [2, {len(ids)}], got {k}")
    folds = np.array_split(np.random.default_rng(seed).permutation(ids), k)
    out = []
    for i, test_ids in enumerate(folds):
        train_ids = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append((ds.subset(train_ids), ds.subset(test_ids)))
    return out


# ---------------------------------------------------------------------------
# file format


class DatasetParseError(ValueError):
    def __init__(self, path, line_no: int, msg: str):
        super().__init__(f"{path}:{line_no}: {msg}")
        self.line_no = line_no


_HEADER = re.compile(r"^#medts v1 T=(\d+) C=(\d+) K=(\d+)$")


def save_dataset(path, ds: Dataset) -> None:
    with open(path, "w") as fh:
        fh.write(f"#medts v1 T={ds.T} C={ds.C} K={ds.K}\n")
        for s in ds.samples:
            fh.write(f"{s.subject_id},{s.label}\n")
            for row in s.X:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_dataset(path) -> Dataset:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DatasetParseError(path, 1, "empty file")
    m = _HEADER.match(lines[0].strip())
    if not m:
        raise DatasetParseError(path, 1, "expected header '#medts v1 T=<T> C=<C> K=<K>'")
    t, c, k = map(int, m.groups())
    samples = []
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split(",")
        try:
            sid, label = int(parts[0]), int(parts[1])
            if len(parts) != 2:
                raise ValueError
        except (ValueError, IndexError):
            raise DatasetParseError(path, i + 1, "expected '<subject_id>,<label>'") from None
        if sid < 0 or not 0 <= label < k:
            raise DatasetParseError(path, i + 1, f"subject id must be >= 0 and label in [0, {k})")
        if i + t > len(lines) - 1:
            raise DatasetParseError(path, len(lines), f"truncated sample: expected {t} rows")
        x = np.empty((t, c))
        for r in range(t):
            ln = i + 1 + r
            try:
                row = [float(v) for v in lines[ln].split(",")]
            except ValueError:
                raise DatasetParseError(path, ln + 1, "non-numeric value") from None
            if len(row) != c:
                raise DatasetParseError(path, ln + 1, f"expected {c} values, got {len(row)}")
            x[r] = row
        if not np.all(np.isfinite(x)):
            raise DatasetParseError(path, i + 1, "non-finite value in sample")
        samples.append(LabeledSample(x, label, sid))
        i += 1 + t
    return Dataset(samples, t, c, k)
