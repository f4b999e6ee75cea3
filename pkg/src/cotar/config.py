"""Flat run configuration shared by every CLI command.

A config file is a single JSON object whose keys are the field names of
:class:`RunConfig`.  Unknown keys are rejected.  ``--set key=value`` flags
override file keys; values are parsed as JSON and fall back to a bare
string, so ``--set mixer=attention`` and ``--set seeds=[42,43]`` both work.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .augment import AUGMENTATIONS, AugmentBank
from .data import GeneratorSpec, SplitSpec
from .model import TeChConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # series shape; overwritten from the file header when `data` is loaded
    T: int = 128
    C: int = 8
    K: int = 2
    # model
    model_kind: str = "tech"
    D: int = 32
    D_c: int | None = None
    L: int = 8
    M: int = 2
    N: int = 2
    mixer: str = "cotar"
    dropout: float = 0.1
    ffn_hidden: int | None = None
    pre_norm: bool = False
    # training
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seeds: list = (42, 43, 44, 45, 46)
    n_jobs: int = 1
    augment: bool = False
    # augmentation bank
    augmentations: list = AUGMENTATIONS
    flip_prob: float = 0.5
    shuffle_prob: float = 0.5
    mask_ratio: float = 0.1
    freq_ratio: float = 0.1
    jitter_scale: float = 0.1
    dropout_ratio: float = 0.1
    # generator
    gen_mode: str = "centralized"
    gen_subjects: int = 60
    gen_trials: int = 10
    gen_coupling: float = 0.9
    gen_noise: float = 0.3
    gen_freqs: list = (0.05, 0.15)
    gen_driver_lag: int = 0
    gen_seed: int = 0
    # split
    split_fractions: list = (0.6, 0.2, 0.2)
    split_seed: int = 0
    # paths
    data: str | None = None
    checkpoint: str | None = None
    # eval
    eval_split: str = "test"
    zero_head: bool = False
    # bench
    bench_grid: list = (128, 256, 512, 1024, 2048)
    bench_D: int = 64
    bench_D_c: int | None = None
    bench_repeats: int = 5
    # analyze
    sweep: bool = False
    betas: list = (0.0, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0)
    sweep_mixers: list = ("attention", "cotar")
    sweep_seeds: list = (42, 43, 44)
    noise_seed: int = 0
    # gradcheck
    gradcheck_tol: float = 1e-5
    gradcheck_h: float = 1e-5

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                setattr(self, f.name, list(v))
        if self.eval_split not in ("train", "val", "test", "all"):
            raise ConfigError(f"eval_split must be train/val/test/all, got {self.eval_split!r}")
        if self.model_kind not in ("tech", "probe"):
            raise ConfigError(f"model_kind must be 'tech' or 'probe', got {self.model_kind!r}")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")
        # build every sub-config once so invalid values fail before any work
        try:
            self.model_config()
            self.train_config()
            self.generator_spec()
            self.split_spec()
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    def model_config(self, T: int | None = None, C: int | None = None, K: int | None = None,
                     mixer: str | None = None) -> TeChConfig:
        return TeChConfig(T=T or self.T, C=C or self.C, K=K or self.K, D=self.D, D_c=self.D_c,
                          L=self.L, M=self.M, N=self.N, mixer=mixer or self.mixer,
                          dropout=self.dropout, ffn_hidden=self.ffn_hidden, pre_norm=self.pre_norm)

    def augment_bank(self) -> AugmentBank:
        return AugmentBank(enabled=self.augmentations, flip_prob=self.flip_prob,
                           shuffle_prob=self.shuffle_prob, mask_ratio=self.mask_ratio,
                           freq_ratio=self.freq_ratio, jitter_scale=self.jitter_scale,
                           dropout_ratio=self.dropout_ratio)

    def train_config(self) -> TrainConfig:
        self.augment_bank()  # validates the bank parameters
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, max_epochs=self.max_epochs,
                           patience=self.patience, seeds=self.seeds, augment=self.augment,
                           augmentations=self.augmentations)

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(mode=self.gen_mode, subjects=self.gen_subjects,
                             trials_per_subject=self.gen_trials, T=self.T, C=self.C, K=self.K,
                             coupling=self.gen_coupling, noise=self.gen_noise, freqs=self.gen_freqs,
                             driver_lag=self.gen_driver_lag, seed=self.gen_seed)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(tuple(self.split_fractions), self.split_seed)

    def to_json_dict(self) -> dict:
        return {"schema": "config/v1", **asdict(self)}


KEYS = tuple(f.name for f in fields(RunConfig))


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_override(item: str) -> tuple[str, object]:
    key, sep, value = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    return key.strip(), parse_value(value)


def build_config(doc: dict | None = None, overrides: list[str] = ()) -> RunConfig:
    merged = dict(doc or {})
    merged.pop("schema", None)
    for item in overrides:
        k, v = parse_override(item)
        merged[k] = v
    unknown = sorted(set(merged) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return RunConfig(**merged)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_config(path=None, overrides: list[str] = ()) -> RunConfig:
    doc = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    return build_config(doc, overrides)
