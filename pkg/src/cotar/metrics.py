"""Classification metrics: accuracy, macro P/R/F1, one-vs-rest AUROC and AUPRC."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

METRIC_NAMES = ("accuracy", "precision_macro", "recall_macro", "f1_macro", "auroc_macro", "auprc_macro")


def _binary_inputs(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    if y.all() or not y.any():
        raise ValueError("AUROC/AUPRC need both positive and negative samples")
    return s, y


def auroc_binary(scores, labels) -> float:
    """Mann-Whitney statistic with mid-ranks for ties."""
    s, y = _binary_inputs(scores, labels)
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auprc_binary(scores, labels) -> float:
    """Average precision: sum over distinct thresholds of (R_n - R_{n-1}) * P_n."""
    s, y = _binary_inputs(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tps = np.cumsum(y)
    # last index of each run of tied scores
    ends = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = tps[ends]
    precision = tp / (ends + 1.0)
    recall = tp / tp[-1]
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def confusion(y_true, y_pred, k: int) -> np.ndarray:
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def classification_metrics(y_true, probs) -> dict[str, float]:
    """All six metrics from true labels and an (n, K) matrix of class scores."""
    y = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != len(y) or len(y) == 0:
        raise ValueError("probs must be (n, K) with n == len(y_true) > 0")
    k = p.shape[1]
    pred = p.argmax(axis=1)
    cm = confusion(y, pred, k)
    tp = np.diag(cm).astype(float)
    prec = [_safe_div(tp[c], cm[:, c].sum()) for c in range(k)]
    rec = [_safe_div(tp[c], cm[c, :].sum()) for c in range(k)]
    f1 = [_safe_div(2 * pr * rc, pr + rc) for pr, rc in zip(prec, rec)]
    aurocs, auprcs = [], []
    for c in range(k):
        pos = y == c
        if not pos.any() or pos.all():
            warnings.warn(f"class {c} has no {'positives' if not pos.any() else 'negatives'}; "
                          "dropped from macro AUROC/AUPRC", RuntimeWarning, stacklevel=2)
            continue
        aurocs.append(auroc_binary(p[:, c], pos))
        auprcs.append(auprc_binary(p[:, c], pos))
    return {
        "accuracy": float(np.mean(pred == y)),
        "precision_macro": float(np.mean(prec)),
        "recall_macro": float(np.mean(rec)),
        "f1_macro": float(np.mean(f1)),
        "auroc_macro": float(np.mean(aurocs)) if aurocs else math.nan,
        "auprc_macro": float(np.mean(auprcs)) if auprcs else math.nan,
    }


def f1_macro(y_true, y_pred, k: int) -> float:
    cm = confusion(y_true, y_pred, k)
    tp = np.diag(cm).astype(float)
    out = []
    for c in range(k):
        pr = _safe_div(tp[c], cm[:, c].sum())
        rc = _safe_div(tp[c], cm[c, :].sum())
        out.append(_safe_div(2 * pr * rc, pr + rc))
    return float(np.mean(out))


@dataclass
class MetricsReport:
    """Per-seed metric values plus their mean and sample std (ddof=1).

    With a single seed the std is reported as 0.
    """

    seeds: list[int]
    per_seed: dict[str, list[float]]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in METRIC_NAMES:
            vals = np.asarray(self.per_seed[name], dtype=float)
            if len(vals) != len(self.seeds):
                raise ValueError(f"{name}: {len(vals)} values for {len(self.seeds)} seeds")
            self.mean[name] = float(vals.mean())
            self.std[name] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0

    def __getattr__(self, name):
        if name in METRIC_NAMES:
            return self.mean[name]
        raise AttributeError(name)

    @classmethod
    def single(cls, seed: int, values: dict[str, float]) -> "MetricsReport":
        return cls([seed], {k: [values[k]] for k in METRIC_NAMES})

    def to_json_dict(self) -> dict:
        """Flat object: ``<metric>_mean``, ``<metric>_std``, ``<metric>_per_seed``, ``seeds``."""
        out: dict = {"schema": "metrics/v1", "seeds": list(self.seeds)}
        for name in METRIC_NAMES:
            out[f"{name}_mean"] = self.mean[name]
            out[f"{name}_std"] = self.std[name]
            out[f"{name}_per_seed"] = list(self.per_seed[name])
        return out


def aggregate(reports: list[MetricsReport]) -> MetricsReport:
    seeds = [s for r in reports for s in r.seeds]
    per_seed = {name: [v for r in reports for v in r.per_seed[name]] for name in METRIC_NAMES}
    return MetricsReport(seeds, per_seed)

