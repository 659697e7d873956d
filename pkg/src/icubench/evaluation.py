"""Metric suite: ranking metrics, fixed-sensitivity operating point,
regression scores, fold aggregation with Student-t confidence intervals,
and Welch's two-tailed t-test for model comparison.

AUROC is the Mann–Whitney pair statistic computed from average ranks;
AUPRC is the step-wise average-precision integral over distinct score
cutoffs (no interpolation).  The operating point fixes sensitivity at 0.90
and reports the largest score threshold achieving it, classifying ties as
positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special, stats

from .errors import UndefinedMetricError

TARGET_SENSITIVITY = 0.90


def _as_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-d arrays of equal length")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0/1")
    return scores, labels.astype(np.int64)


def auroc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via average ranks."""
    scores, labels = _as_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    group_start = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg_rank = group_start + (counts + 1) / 2.0  # 1-based average rank per tie group
    rank_sum_pos = float(avg_rank[inverse][labels == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _ranked_confusion(scores, labels):
    """Cumulative TP/FP at each distinct score cutoff, descending."""
    order = np.argsort(-scores, kind="mergesort")
    y = labels[order]
    s = scores[order]
    cum_tp = np.cumsum(y)
    cum_fp = np.cumsum(1 - y)
    last_of_group = np.nonzero(np.diff(s))[0]
    idx = np.concatenate((last_of_group, [len(s) - 1]))
    return s[idx], cum_tp[idx], cum_fp[idx]


def auprc(scores, labels) -> float:
    """Average precision: sum of precision times recall increments."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC needs at least one positive")
    _, tp, fp = _ranked_confusion(scores, labels)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * precision))


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    sensitivity: float
    specificity: float
    ppv: float
    npv: float


def operating_point(scores, labels, target_sens: float = TARGET_SENSITIVITY) -> OperatingPoint:
    """Largest threshold with sensitivity >= target (score >= threshold is positive)."""
    scores, labels = _as_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("operating point needs both classes present")
    cutoffs, tp, fp = _ranked_confusion(scores, labels)
    sens = tp / n_pos
    k = int(np.argmax(sens >= target_sens))  # sens is nondecreasing along cutoffs
    tn = n_neg - fp[k]
    fn = n_pos - tp[k]
    ppv = tp[k] / (tp[k] + fp[k]) if tp[k] + fp[k] > 0 else math.nan
    npv = tn / (tn + fn) if tn + fn > 0 else math.nan
    return OperatingPoint(
        threshold=float(cutoffs[k]),
        sensitivity=float(sens[k]),
        specificity=float(tn / n_neg),
        ppv=float(ppv),
        npv=float(npv),
    )


@dataclass(frozen=True)
class ClassificationMetrics:
    auroc: float
    auprc: float
    specificity_at_sens90: float
    ppv: float
    npv: float
    sensitivity: float = TARGET_SENSITIVITY

    def to_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "auprc": self.auprc,
            "specificity_at_sens90": self.specificity_at_sens90,
            "sensitivity": self.sensitivity,
            "ppv": self.ppv,
            "npv": self.npv,
        }


@dataclass(frozen=True)
class RegressionMetrics:
    r2: float | None
    mae: float

    def to_dict(self) -> dict:
        return {"r2": self.r2, "mae": self.mae}


def classification_metrics(scores, labels) -> ClassificationMetrics:
    point = operating_point(scores, labels)
    return ClassificationMetrics(
        auroc=auroc(scores, labels),
        auprc=auprc(scores, labels),
        specificity_at_sens90=point.specificity,
        ppv=point.ppv,
        npv=point.npv,
    )


def regression_metrics(preds, targets) -> RegressionMetrics:
    """R^2 about the target mean plus MAE in days.

    Zero target variance leaves R^2 undefined; MAE is still returned
    (r2 comes back as None in that case).
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.size == 0:
        raise ValueError("predictions and targets must be nonempty arrays of equal shape")
    mae = float(np.mean(np.abs(preds - targets)))
    ss_tot = float(np.sum((targets - targets.mean()) ** 2))
    if ss_tot == 0.0:
        return RegressionMetrics(r2=None, mae=mae)
    ss_res = float(np.sum((preds - targets) ** 2))
    return RegressionMetrics(r2=1.0 - ss_res / ss_tot, mae=mae)


def aggregate_folds(values: Sequence[float]) -> tuple[float, float]:
    """Mean and 95% CI half-width from per-fold values (Student t, k-1 df)."""
    values = np.asarray(values, dtype=np.float64)
    k = len(values)
    if k < 2:
        raise UndefinedMetricError(f"fold aggregation needs >= 2 values, got {k}")
    mean = float(values.mean())
    sd = float(values.std(ddof=1))
    t_crit = float(stats.t.ppf(0.975, k - 1))
    return mean, t_crit * sd / math.sqrt(k)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant_05: bool
    significant_10: bool

    @property
    def flag(self) -> str:
        """Conventional significance markers: dagger p<0.05, double dagger p<0.1."""
        if self.significant_05:
            return "\u2020"
        if self.significant_10:
            return "\u2021"
        return "-"


def t_test(values_a: Sequence[float], values_b: Sequence[float], paired: bool = False) -> TTestResult:
    """Two-tailed t-test: Welch's unpaired by default, paired on request.

    The p-value comes from the regularized incomplete beta function
    (Welch-Satterthwaite degrees of freedom in the unpaired case, n-1 when
    pairing matched values such as per-fold metrics).
    """
    a = np.asarray(values_a, dtype=np.float64)
    b = np.asarray(values_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise UndefinedMetricError("t-test needs >= 2 values per sample")
    if paired:
        if len(a) != len(b):
            raise UndefinedMetricError("paired t-test needs samples of equal length")
        d = a - b
        sd = float(d.std(ddof=1))
        if sd == 0.0:
            return _degenerate_t(float(d.mean()))
        t_stat = d.mean() / (sd / math.sqrt(len(d)))
        df = len(d) - 1.0
    else:
        va = a.var(ddof=1) / len(a)
        vb = b.var(ddof=1) / len(b)
        diff = a.mean() - b.mean()
        if va + vb == 0.0:
            return _degenerate_t(float(diff))
        t_stat = diff / math.sqrt(va + vb)
        df = (va + vb) ** 2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t_stat**2)))
    return TTestResult(t=float(t_stat), p=p, significant_05=p < 0.05, significant_10=p < 0.1)


def _degenerate_t(mean_diff: float) -> TTestResult:
    # zero variance: identical means are certain, distinct ones maximally separated
    if mean_diff == 0.0:
        return TTestResult(t=0.0, p=1.0, significant_05=False, significant_10=False)
    t_stat = math.inf if mean_diff > 0 else -math.inf
    return TTestResult(t=t_stat, p=0.0, significant_05=True, significant_10=True)


@dataclass
class FoldedResult:
    """Per-fold metric dicts plus their aggregate (mean, ci95 half-width)."""

    per_fold: list[dict]
    mean: dict = field(default_factory=dict)
    ci95: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def aggregate_metric_dicts(per_fold: list[dict]) -> FoldedResult:
    """Aggregate each metric over the folds where it has a defined value."""
    result = FoldedResult(per_fold=per_fold)
    keys: list[str] = []
    for fold in per_fold:
        for key in fold:
            if key not in keys:
                keys.append(key)
    for key in keys:
        values = [f[key] for f in per_fold if f.get(key) is not None and not _is_nan(f.get(key))]
        if len(values) < len(per_fold):
            result.warnings.append(
                f"metric {key!r} undefined in {len(per_fold) - len(values)} of {len(per_fold)} folds"
            )
        if len(values) >= 2:
            mean, hw = aggregate_folds(values)
            result.mean[key] = mean
            result.ci95[key] = hw
        else:
            result.mean[key] = values[0] if values else None
            result.ci95[key] = None
    return result


def _is_nan(x) -> bool:
    return isinstance(x, float) and math.isnan(x)
