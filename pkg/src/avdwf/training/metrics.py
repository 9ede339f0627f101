"""Accuracy and ROC AUC (Mann-Whitney U with mid-ranks for ties)."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import AUCUndefinedError


def confusion(scores, labels, threshold: float = 0.5) -> dict[str, int]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    pred = (scores >= threshold).astype(int)
    return {
        "tp": int(np.sum((pred == 1) & (labels == 1))),
        "fp": int(np.sum((pred == 1) & (labels == 0))),
        "tn": int(np.sum((pred == 0) & (labels == 0))),
        "fn": int(np.sum((pred == 0) & (labels == 1))),
    }


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    c = confusion(scores, labels, threshold)
    return (c["tp"] + c["tn"]) / max(1, sum(c.values()))


def roc_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie); positives are label 1."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise AUCUndefinedError("AUC needs at least one positive and one negative sample")
    ranks = rankdata(scores, method="average")
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def binary_metrics(scores, labels, threshold: float = 0.5) -> dict:
    """{"acc", "auc", "confusion", "n"}; raises AUCUndefinedError on a single class."""
    metrics = {
        "acc": accuracy(scores, labels, threshold),
        "confusion": confusion(scores, labels, threshold),
        "n": int(np.asarray(labels).size),
    }
    try:
        metrics["auc"] = roc_auc(scores, labels)
    except AUCUndefinedError as exc:
        raise AUCUndefinedError(str(exc), metrics) from None
    return metrics
