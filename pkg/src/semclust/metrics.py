"""Clustering evaluation: Hungarian-matched accuracy, NMI, ARI.

All three metrics are invariant under permutations of the predicted
class ids. Natural logarithms throughout; NMI is normalized by the
geometric mean of the two label entropies.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.optimize import linear_sum_assignment

from .embedstore import LabelVector
from .errors import SizeMismatch


def contingency_table(pred: LabelVector, truth: LabelVector) -> np.ndarray:
    """c_pred x c_true count matrix; cells sum to n."""
    if pred.n != truth.n:
        raise SizeMismatch(f"pred n={pred.n} vs truth n={truth.n}")
    table = np.zeros((pred.num_classes, truth.num_classes), dtype=np.int64)
    np.add.at(table, (pred.labels, truth.labels), 1)
    return table


def hungarian_accuracy(pred: LabelVector, truth: LabelVector) -> float:
    """Best one-to-one matching accuracy, solved as linear assignment."""
    table = contingency_table(pred, truth)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum()) / pred.n


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def _canonical(labels: np.ndarray) -> np.ndarray:
    """Relabel classes by first occurrence, making partitions comparable."""
    _, canon = np.unique(labels, return_inverse=True)
    first = {}
    out = np.empty_like(labels)
    for i, v in enumerate(canon):
        if v not in first:
            first[v] = len(first)
        out[i] = first[v]
    return out


def nmi(pred: LabelVector, truth: LabelVector) -> float:
    """I(pred;truth) / sqrt(H(pred) * H(truth)); 1 for identical partitions,
    0 when either side carries no information and the partitions differ."""
    table = contingency_table(pred, truth)
    n = pred.n
    if np.array_equal(_canonical(pred.labels), _canonical(truth.labels)):
        return 1.0
    hp = _entropy(table.sum(axis=1), n)
    ht = _entropy(table.sum(axis=0), n)
    if hp == 0.0 or ht == 0.0:
        return 0.0
    a = table.sum(axis=1) / n
    b = table.sum(axis=0) / n
    nz = table > 0
    pij = table[nz] / n
    outer = (a[:, None] * b[None, :])[nz]
    mi = max(float((pij * np.log(pij / outer)).sum()), 0.0)
    return mi / np.sqrt(hp * ht)


def ari(pred: LabelVector, truth: LabelVector) -> float:
    """Adjusted Rand index with the standard pair-counting formula."""
    if pred.n < 2:
        raise SizeMismatch("ARI needs at least 2 samples")
    table = contingency_table(pred, truth)
    n = pred.n

    def comb2(v: np.ndarray) -> np.ndarray:
        return v * (v - 1) / 2.0

    index = comb2(table.astype(np.float64)).sum()
    sum_a = comb2(table.sum(axis=1).astype(np.float64)).sum()
    sum_b = comb2(table.sum(axis=0).astype(np.float64)).sum()
    expected = sum_a * sum_b / comb2(np.float64(n))
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        # both partitions place every pair identically (e.g. all singletons)
        return 1.0
    return float((index - expected) / (maximum - expected))


def metrics_report(pred: LabelVector, truth: LabelVector) -> dict:
    return {
        "acc": hungarian_accuracy(pred, truth),
        "nmi": nmi(pred, truth),
        "ari": ari(pred, truth),
        "n": pred.n,
        "c": pred.num_classes,
    }


def write_metrics(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
