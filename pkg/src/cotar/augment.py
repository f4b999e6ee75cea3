"""Per-sample augmentation bank for (T, C) series.

Each call to :func:`apply` picks one enabled augmentation uniformly at
random and applies it with that augmentation's own probability or ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

AUGMENTATIONS = ("temporal_flip", "channel_shuffle", "temporal_mask",
                 "frequency_mask", "jitter", "dropout")


def temporal_flip(X: np.ndarray) -> np.ndarray:
    return X[::-1].copy()


def channel_shuffle(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return X[:, rng.permutation(X.shape[1])].copy()


def temporal_mask(X: np.ndarray, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Zero exactly floor(ratio * T) distinct timestamps across all channels."""
    _check_ratio(ratio)
    t = X.shape[0]
    out = X.copy()
    out[rng.choice(t, size=math.floor(ratio * t), replace=False)] = 0.0
    return out


def jitter(X: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    if scale < 0:
        raise ValueError("jitter scale must be non-negative")
    return X + scale * rng.uniform(0.0, 1.0, size=X.shape)


def value_dropout(X: np.ndarray, ratio: float, rng: np.random.Generator) -> np.ndarray:
    _check_ratio(ratio)
    return np.where(rng.random(X.shape) < ratio, 0.0, X)


# A direct real DFT; T stays in the low hundreds so O(T^2) is cheap.

def rdft(x: np.ndarray) -> np.ndarray:
    """Real DFT along axis 0: (T, ...) -> (T//2 + 1, ...) complex."""
    t = x.shape[0]
    k = np.arange(t // 2 + 1)[:, None]
    n = np.arange(t)[None, :]
    basis = np.exp(-2j * np.pi * k * n / t)
    return basis @ x


def irdft(spec: np.ndarray, t: int) -> np.ndarray:
    """Inverse of :func:`rdft` for a length-``t`` real signal."""
    nb = t // 2 + 1
    k = np.arange(nb)[None, :]
    n = np.arange(t)[:, None]
    weights = np.full(nb, 2.0)
    weights[0] = 1.0
    if t % 2 == 0:
        weights[-1] = 1.0
    basis = np.exp(2j * np.pi * n * k / t) * weights
    return (basis @ spec).real / t


def frequency_mask(X: np.ndarray, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Zero floor(ratio * (T//2 + 1)) random frequency bins per channel."""
    _check_ratio(ratio)
    t, c = X.shape
    spec = rdft(X)
    nb = spec.shape[0]
    n_mask = math.floor(ratio * nb)
    for j in range(c):
        spec[rng.choice(nb, size=n_mask, replace=False), j] = 0.0
    return irdft(spec, t)


def _check_ratio(r: float) -> None:
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"ratio must lie in [0, 1], got {r}")


@dataclass
class AugmentBank:
    enabled: tuple[str, ...] = AUGMENTATIONS
    flip_prob: float = 0.5
    shuffle_prob: float = 0.5
    mask_ratio: float = 0.1
    freq_ratio: float = 0.1
    jitter_scale: float = 0.1
    dropout_ratio: float = 0.1

    def __post_init__(self):
        self.enabled = tuple(self.enabled)
        unknown = set(self.enabled) - set(AUGMENTATIONS)
        if unknown:
            raise ValueError(f"unknown augmentations: {sorted(unknown)}")
        for name in ("flip_prob", "shuffle_prob", "mask_ratio", "freq_ratio", "dropout_ratio"):
            _check_ratio(getattr(self, name))
        if self.jitter_scale < 0:
            raise ValueError("jitter_scale must be non-negative")


def pick(bank: AugmentBank, rng: np.random.Generator) -> str:
    return bank.enabled[rng.integers(len(bank.enabled))]


def apply(bank: AugmentBank, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if not bank.enabled:
        return X
    return apply_named(bank, pick(bank, rng), X, rng)


def apply_named(bank: AugmentBank, name: str, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if name == "temporal_flip":
        return temporal_flip(X) if rng.random() < bank.flip_prob else X
    if name == "channel_shuffle":
        return channel_shuffle(X, rng) if rng.random() < bank.shuffle_prob else X
    if name == "temporal_mask":
        return temporal_mask(X, bank.mask_ratio, rng)
    if name == "frequency_mask":
        return frequency_mask(X, bank.freq_ratio, rng)
    if name == "jitter":
        return jitter(X, bank.jitter_scale, rng)
    return value_dropout(X, bank.dropout_ratio, rng)
