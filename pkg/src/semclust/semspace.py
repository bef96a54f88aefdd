"""Two-step noun filtering that builds the task-relevant semantic set.

Step one drops overly general words: a noun's uniqueness score is one
minus its cosine similarity to the centroid of the full input lexicon,
and only nouns scoring at or above a threshold survive. Step two keeps,
for each k-means center of the image set, the nouns most similar to it
by dot product, deduplicated across centers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corealg import kmeans, similarity_matrix
from .embedstore import EmbeddingMatrix, NounLexicon
from .errors import DataError, EmptyResult

DEFAULT_GAMMA_U = 0.05
DEFAULT_GAMMA_R = 200


@dataclass(frozen=True)
class SemanticSpace:
    """The filtered lexicon plus the filter settings that produced it."""

    lexicon: NounLexicon
    uniqueness_threshold: float
    per_center_count: int
    source_size: int

    def __len__(self) -> int:
        return len(self.lexicon)


def uniqueness_score(w, e) -> float:
    """1 - cos(w, e); 0 for a noun aligned with the lexicon centroid."""
    w = np.asarray(w, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    nw = np.linalg.norm(w)
    ne = np.linalg.norm(e)
    if nw == 0.0 or ne == 0.0:
        raise DataError("uniqueness score undefined for zero vectors")
    return float(1.0 - (w @ e) / (nw * ne))


def uniqueness_scores(lex: NounLexicon, centroid=None) -> np.ndarray:
    """Score every noun against the centroid of the full lexicon.

    Pass `centroid` to score against a frozen center instead (the center
    is defined over the original unfiltered lexicon and is never
    recomputed after filtering).
    """
    v = lex.embeddings.as_f64()
    e = v.mean(axis=0) if centroid is None else np.asarray(centroid, np.float64)
    ne = np.linalg.norm(e)
    if ne == 0.0:
        raise DataError("lexicon centroid is the zero vector")
    norms = np.linalg.norm(v, axis=1)
    if (norms == 0.0).any():
        raise DataError("lexicon contains a zero-norm embedding")
    return 1.0 - (v @ e) / (norms * ne)


def filter_unique(lex: NounLexicon, gamma_u: float, centroid=None) -> NounLexicon:
    """Keep the nouns with uniqueness score >= gamma_u, in input order.

    The centroid defaults to the mean of the input lexicon and can be
    frozen explicitly, which makes repeated application idempotent.
    """
    scores = uniqueness_scores(lex, centroid=centroid)
    keep = np.flatnonzero(scores >= gamma_u)
    if keep.size == 0:
        raise EmptyResult(
            f"no noun has uniqueness >= {gamma_u} (max observed {scores.max():.6g})"
        )
    return lex.subset(keep)


def filter_relevant(
    lex: NounLexicon,
    images: EmbeddingMatrix,
    c: int,
    gamma_r: int,
    seed: int,
    gamma_u: float = 0.0,
    source_size: int | None = None,
) -> SemanticSpace:
    """Keep the gamma_r nouns nearest each image k-means center (dot
    product), deduplicated keeping first occurrence, so the result holds
    at most c * gamma_r nouns. `gamma_u` and `source_size` are recorded
    as provenance for the returned space."""
    if len(lex) == 0:
        raise EmptyResult("cannot filter an empty lexicon")
    gamma_r = min(gamma_r, len(lex))
    km = kmeans(images, c, seed)
    sims = similarity_matrix(km.centers.as_f64(), lex.embeddings.as_f64())
    picked: list[int] = []
    seen: set[int] = set()
    for l in range(c):
        order = np.argsort(-sims[l], kind="stable")[:gamma_r]
        for j in order:
            j = int(j)
            if j not in seen:
                seen.add(j)
                picked.append(j)
    picked.sort()
    return SemanticSpace(
        lexicon=lex.subset(picked),
        uniqueness_threshold=gamma_u,
        per_center_count=gamma_r,
        source_size=len(lex) if source_size is None else source_size,
    )


def build_semantic_space(
    lex: NounLexicon,
    images: EmbeddingMatrix,
    c: int,
    gamma_u: float,
    gamma_r: int,
    seed: int,
) -> SemanticSpace:
    """Run both filter steps on a raw lexicon."""
    unique = filter_unique(lex, gamma_u)
    return filter_relevant(
        unique, images, c, gamma_r, seed, gamma_u=gamma_u, source_size=len(lex)
    )
