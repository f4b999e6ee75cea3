"""Centralization metrics for multichannel series and the noise-robustness sweep.

Series here are (S, T): channels by timestamps, the transpose of a sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_BETAS = (0.0, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0)
RIDGE = 1e-8


class CentralityError(ValueError):
    pass


def _as_matrix(X) -> np.ndarray:
    x = np.asarray(X, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise CentralityError(f"expected an (S, T) matrix with T >= 2, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise CentralityError("series contains non-finite values")
    return x


def covariance(X) -> np.ndarray:
    x = _as_matrix(X)
    xc = x - x.mean(axis=1, keepdims=True)
    return xc @ xc.T / (x.shape[1] - 1)


def power_iteration(A: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000,
                    seed: int = 0) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a symmetric PSD matrix.

    Stops when the Rayleigh quotient changes by less than ``tol`` relative
    to its magnitude.
    """
    n = A.shape[0]
    v = np.random.default_rng(seed).normal(size=n)
    v /= np.linalg.norm(v)
    lam = float(v @ A @ v)
    for _ in range(max_iter):
        w = A @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, v
        v = w / nw
        new = float(v @ A @ v)
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            return new, v
        lam = new
    return lam, v


def sci(X) -> float:
    """Largest covariance eigenvalue over total variance, in [1/S, 1]."""
    cov = covariance(X)
    tr = float(np.trace(cov))
    if tr <= 0.0:
        raise CentralityError("series has zero variance; SCI undefined")
    lam, _ = power_iteration(cov)
    return lam / tr


@dataclass
class VarModel:
    A: np.ndarray
    out_strengths: np.ndarray = field(init=False)

    def __post_init__(self):
        # s_i = sum_j |A_ji|: how strongly channel i drives the others
        self.out_strengths = np.abs(self.A).sum(axis=0)

    @property
    def mean_strength(self) -> float:
        return float(self.out_strengths.mean())


def fit_var1(X, ridge: float = RIDGE) -> VarModel:
    """Least-squares A in x_{t+1} = A x_t via ridge-regularized normal equations."""
    x = _as_matrix(X)
    s, t = x.shape
    Z, Y = x[:, :-1], x[:, 1:]
    gram = Z @ Z.T
    if np.trace(gram) <= 1e-12 * s:
        raise CentralityError("lagged design matrix has (near) zero energy; VAR fit undefined")
    # A (Z Z^T + ridge I) = Y Z^T
    A = np.linalg.solve(gram + ridge * np.eye(s), (Y @ Z.T).T).T
    return VarModel(A)


def dic(X, ridge: float = RIDGE) -> tuple[float, VarModel]:
    x = _as_matrix(X)
    s, t = x.shape
    if t < s + 2:
        raise CentralityError(f"need T >= S + 2 to fit a VAR(1), got S={s}, T={t}")
    model = fit_var1(x, ridge)
    st = model.out_strengths
    mean = st.mean()
    if mean <= 0.0:
        raise CentralityError("fitted transition matrix is zero; DIC undefined")
    return float((st.max() - mean) / mean), model


@dataclass
class CentralityReport:
    sci: float
    dic: float
    var_model: VarModel

    def to_json_dict(self) -> dict:
        return {"schema": "centrality/v1", "sci": self.sci, "dic": self.dic,
                "out_strengths": [float(v) for v in self.var_model.out_strengths]}


def centrality(X) -> CentralityReport:
    d, model = dic(X)
    return CentralityReport(sci(X), d, model)


def dataset_centrality(samples: Sequence[np.ndarray]) -> dict:
    """Per-sample SCI/DIC on (T, C) samples, pooled by averaging."""
    scis, dics, strengths = [], [], []
    for x in samples:
        series = np.asarray(x).T
        scis.append(sci(series))
        value, model = dic(series)
        dics.append(value)
        strengths.append([float(v) for v in model.out_strengths])
    return {"schema": "centrality/v1", "n_samples": len(scis),
            "sci_mean": float(np.mean(scis)), "dic_mean": float(np.mean(dics)),
            "out_strengths_mean": [float(v) for v in np.mean(strengths, axis=0)],
            "sci": scis, "dic": dics, "out_strengths": strengths}


# ---------------------------------------------------------------------------
# noise robustness


def perturb_last_channel(X: np.ndarray, beta: float, noise: np.ndarray) -> np.ndarray:
    out = np.array(X, dtype=np.float64, copy=True)
    out[:, -1] += beta * noise
    return out


@dataclass
class SweepPoint:
    beta: float
    mixer: str
    seed: int
    f1: float


def noise_sweep(train_fn: Callable, splits, betas: Sequence[float] = DEFAULT_BETAS,
                mixers: Sequence[str] = ("attention", "cotar"), seeds: Sequence[int] = (42,),
                noise_seed: int = 0) -> list[SweepPoint]:
    """Add beta-scaled standard-normal noise to the last channel of every split.

    ``train_fn(mixer, train, val, test, seed)`` trains one model and returns
    its test macro-F1.  The noise realization at each beta is drawn once and
    shared by every mixer and seed.
    """
    betas = list(betas)
    if not betas:
        raise ValueError("empty beta grid")
    if betas != sorted(betas) or betas[0] != 0.0:
        raise ValueError("betas must be sorted and start at 0")
    out = []
    for bi, beta in enumerate(betas):
        rng = np.random.default_rng([noise_seed, bi])
        noisy = []
        for split in splits:
            noise = rng.standard_normal((len(split), split.T))
            it = iter(noise)
            noisy.append(split.map_X(lambda x: perturb_last_channel(x, beta, next(it))))
        for mixer in mixers:
            for seed in seeds:
                out.append(SweepPoint(beta, mixer, seed, float(train_fn(mixer, *noisy, seed))))
    return out


def sweep_curves(points: list[SweepPoint]) -> dict[str, list[tuple[float, float]]]:
    """Mean F1 per (mixer, beta), averaged over seeds."""
    curves: dict[str, dict[float, list[float]]] = {}
    for p in points:
        curves.setdefault(p.mixer, {}).setdefault(p.beta, []).append(p.f1)
    return {m: [(b, float(np.mean(v))) for b, v in sorted(c.items())] for m, c in curves.items()}
