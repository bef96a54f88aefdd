"""Semantic center construction and one-hot pseudo-label assignment.

Three strategies produce the c semantic centers:
  * direct: map every image to its nearest noun embedding, then run
    k-means on the mapped multiset and keep the raw centroids.
  * center: select the top-budget images per cluster column of the soft
    assignment, average them into image centers, and snap each image
    center to its single nearest noun.
  * adjusted: take the center strategy's nouns and replace each with the
    mean of its nearest noun neighbors.

Ties always break to the lowest index. Pseudo-labels are the argmax of
the image-to-center dot products (the softmax in between is monotone, so
it never changes the argmax).
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corealg import kmeans, similarity_matrix
from .embedstore import EmbeddingMatrix, LabelVector, NounLexicon
from .errors import (
    BudgetTooLarge,
    ConfigError,
    DimensionMismatch,
    EmptyColumn,
    KTooLarge,
    SizeMismatch,
)
from .metrics import hungarian_accuracy


class Strategy(enum.Enum):
    DIRECT = "direct"
    CENTER_BASED = "center"
    ADJUSTED_CENTER_BASED = "adjusted"


@dataclass(frozen=True)
class SoftAssignment:
    """Row-stochastic n x c matrix of cluster probabilities."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] < 1 or q.shape[1] < 1:
            raise DimensionMismatch(f"bad assignment shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise DimensionMismatch("assignment contains NaN or Inf")
        if np.any(q < 0.0) or np.any(q > 1.0):
            raise DimensionMismatch("assignment entries outside [0, 1]")
        if np.max(np.abs(q.sum(axis=1) - 1.0)) > 1e-6:
            raise DimensionMismatch("assignment rows must sum to 1")
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def c(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class SemanticCenters:
    centers: EmbeddingMatrix
    strategy: Strategy
    # for the center strategy: index of the chosen noun per center
    provenance: tuple[int, ...] | None = None

    @property
    def c(self) -> int:
        return self.centers.n


@dataclass(frozen=True)
class PseudoLabelSet:
    onehots: np.ndarray               # n x c, exactly one 1 per row
    strategy: Strategy
    epoch: int = 0

    def __post_init__(self):
        z = np.asarray(self.onehots, dtype=np.int8)
        if z.ndim != 2 or not np.all(z.sum(axis=1) == 1):
            raise SizeMismatch("one-hot rows must contain exactly one 1")
        object.__setattr__(self, "onehots", z)

    @property
    def n(self) -> int:
        return self.onehots.shape[0]

    @property
    def c(self) -> int:
        return self.onehots.shape[1]

    def labels(self) -> np.ndarray:
        return np.argmax(self.onehots, axis=1)

    def to_json_dict(self) -> dict:
        return {
            "labels": [int(x) for x in self.labels()],
            "strategy": self.strategy.value,
            "epoch": self.epoch,
        }


@dataclass(frozen=True)
class TopSelection:
    z: np.ndarray                     # n x c binary
    thresholds: np.ndarray            # c floats (kappa per column)
    budget: int = field(default=0)


def centers_direct(
    images: EmbeddingMatrix, semantics: EmbeddingMatrix, c: int, seed: int
) -> SemanticCenters:
    """Map each image to its nearest noun, k-means the mapped multiset."""
    if semantics.n < 1:
        raise ConfigError("semantics must be non-empty")
    sims = similarity_matrix(images.as_f64(), semantics.as_f64())
    nearest = np.argmax(sims, axis=1)     # ties -> lower index
    if len(np.unique(nearest)) < c:
        warnings.warn(
            f"images map to only {len(np.unique(nearest))} distinct nouns; "
            f"k-means with c={c} will produce duplicate centers",
            stacklevel=2,
        )
    mapped = EmbeddingMatrix(semantics.data[nearest].copy())
    km = kmeans(mapped, c, seed)
    return SemanticCenters(centers=km.centers, strategy=Strategy.DIRECT)


def select_top(q: SoftAssignment, xi_c: int) -> TopSelection:
    """Per column, mark the xi_c rows with the largest probabilities.

    kappa_l is the xi_c-th largest value of column l; ties at kappa_l are
    resolved toward lower row indices so each column holds exactly xi_c.
    """
    if not 1 <= xi_c <= q.n:
        raise BudgetTooLarge(f"budget {xi_c} outside [1, {q.n}]")
    z = np.zeros((q.n, q.c), dtype=np.int8)
    kappa = np.empty(q.c, dtype=np.float64)
    for l in range(q.c):
        order = np.argsort(-q.q[:, l], kind="stable")
        top = order[:xi_c]
        z[top, l] = 1
        kappa[l] = q.q[order[xi_c - 1], l]
    return TopSelection(z=z, thresholds=kappa, budget=xi_c)


def centers_from_selection(
    images: EmbeddingMatrix, sel: TopSelection, semantics: NounLexicon
) -> SemanticCenters:
    """Average each column's selected images and snap to the nearest noun."""
    if sel.z.shape[0] != images.n:
        raise SizeMismatch(f"selection has {sel.z.shape[0]} rows, images {images.n}")
    counts = sel.z.sum(axis=0)
    if np.any(counts == 0):
        raise EmptyColumn(f"column {int(np.argmin(counts))} selected no rows")
    u = images.as_f64()
    image_centers = (sel.z.T.astype(np.float64) @ u) / counts[:, None]
    sims = similarity_matrix(image_centers, semantics.embeddings.as_f64())
    chosen = np.argmax(sims, axis=1)      # ties -> lower index
    if len(np.unique(chosen)) < len(chosen):
        warnings.warn(
            "multiple clusters snapped to the same noun; duplicate centers",
            stacklevel=2,
        )
    centers = EmbeddingMatrix(semantics.embeddings.data[chosen].copy())
    return SemanticCenters(
        centers=centers,
        strategy=Strategy.CENTER_BASED,
        provenance=tuple(int(i) for i in chosen),
    )


def adjust_centers(
    h: SemanticCenters,
    semantics: EmbeddingMatrix,
    xi_a: int,
    renormalize: bool = False,
) -> SemanticCenters:
    """Replace each center by the mean of its xi_a nearest noun embeddings.

    A center produced by the center strategy equals a noun row exactly, so
    that row counts among its own neighbors and xi_a=1 is the identity.
    The averaged center is not re-normalized unless requested.
    """
    if h.strategy is not Strategy.CENTER_BASED:
        raise ConfigError("adjust_centers expects center-strategy input")
    if not 1 <= xi_a <= semantics.n:
        raise KTooLarge(f"xi_a={xi_a} outside [1, {semantics.n}]")
    sims = similarity_matrix(h.centers.as_f64(), semantics.as_f64())
    v = semantics.as_f64()
    out = np.empty((h.c, semantics.d), dtype=np.float64)
    for l in range(h.c):
        top = np.argsort(-sims[l], kind="stable")[:xi_a]
        out[l] = v[top].mean(axis=0)
        if renormalize:
            out[l] /= np.linalg.norm(out[l])
    return SemanticCenters(
        centers=EmbeddingMatrix(out.astype(np.float32)),
        strategy=Strategy.ADJUSTED_CENTER_BASED,
        provenance=h.provenance,
    )


def assign_pseudo_labels(
    images: EmbeddingMatrix, h: SemanticCenters, epoch: int = 0
) -> PseudoLabelSet:
    """One-hot of the most similar center per image (dot product)."""
    if images.d != h.centers.d:
        raise DimensionMismatch(
            f"image dim {images.d} vs center dim {h.centers.d}"
        )
    sims = similarity_matrix(images.as_f64(), h.centers.as_f64())
    labels = np.argmax(sims, axis=1)      # softmax is monotone; ties -> lower
    onehots = np.zeros((images.n, h.c), dtype=np.int8)
    onehots[np.arange(images.n), labels] = 1
    return PseudoLabelSet(onehots=onehots, strategy=h.strategy, epoch=epoch)


def pseudo_label_accuracy(p: PseudoLabelSet, truth: LabelVector) -> float:
    """Hungarian-matched accuracy of the pseudo-labels."""
    if p.n != truth.n:
        raise SizeMismatch(f"pseudo-labels n={p.n} vs truth n={truth.n}")
    pred = LabelVector(p.labels(), num_classes=p.c)
    return hungarian_accuracy(pred, truth)


def export_pseudo_labels(p: PseudoLabelSet, path) -> None:
    """JSON export: class indices plus the producing strategy and epoch."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(p.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
