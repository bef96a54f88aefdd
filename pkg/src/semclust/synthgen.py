"""Deterministic synthetic embedding generator for desk-scale tests.

Stands in for a shared image/text embedding space: c well-separated unit
directions, noisy images around each, and a noun lexicon holding one
"true noun" per cluster, cluster-local distractors, background nouns,
and a planted general word near the lexicon centroid (the word the
uniqueness filter is supposed to drop).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedstore import EmbeddingMatrix, LabelVector, NounLexicon
from .errors import ConfigError

# distractors form a loose noun family around each cluster direction,
# clearly farther out than the true noun at its default noise level but
# much closer than background nouns
_DISTRACTOR_SIGMA = 0.35
MAX_DIRECTION_ATTEMPTS = 1000
DIRECTION_MAX_DOT = 0.3


@dataclass(frozen=True)
class SynthSpec:
    c: int = 3
    n_per_cluster: int = 200
    d: int = 32
    noise_sigma: float = 0.15
    n_nouns: int = 50                 # background nouns spread on the sphere
    noun_noise: float = 0.05
    distractor_nouns: int = 5         # per cluster
    seed: int = 0

    def __post_init__(self):
        if self.c < 2 or self.d < 2:
            raise ConfigError("need c >= 2 and d >= 2")
        if self.n_per_cluster < 1:
            raise ConfigError("n_per_cluster must be >= 1")
        if self.noise_sigma < 0 or self.noun_noise < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.n_nouns < 0 or self.distractor_nouns < 0:
            raise ConfigError("noun counts must be non-negative")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _draw_directions(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample c unit directions with pairwise dot <= 0.3."""
    for _ in range(MAX_DIRECTION_ATTEMPTS):
        dirs = rng.standard_normal((spec.c, spec.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dots = dirs @ dirs.T
        np.fill_diagonal(dots, -1.0)
        if dots.max() <= DIRECTION_MAX_DOT:
            return dirs
    raise ConfigError(
        f"could not sample {spec.c} directions with pairwise dot <= "
        f"{DIRECTION_MAX_DOT} in dimension {spec.d}"
    )


def generate(
    spec: SynthSpec,
) -> tuple[EmbeddingMatrix, LabelVector, NounLexicon, list[int]]:
    """Returns (images, truth labels, lexicon, true-noun index per cluster).

    Lexicon layout: c true nouns first (index l is cluster l's noun), then
    the per-cluster distractors, then the background nouns, and the
    general word last. Bitwise deterministic per seed.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    dirs = _draw_directions(spec, rng)

    n = spec.c * spec.n_per_cluster
    images = np.repeat(dirs, spec.n_per_cluster, axis=0)
    images = images + rng.standard_normal((n, spec.d)) * spec.noise_sigma
    images /= np.linalg.norm(images, axis=1, keepdims=True)
    truth = np.repeat(np.arange(spec.c), spec.n_per_cluster)

    nouns: list[str] = []
    rows: list[np.ndarray] = []
    for l in range(spec.c):
        nouns.append(f"object{l:03d}")
        rows.append(_unit(dirs[l] + rng.standard_normal(spec.d) * spec.noun_noise))
    for l in range(spec.c):
        for j in range(spec.distractor_nouns):
            nouns.append(f"variant{l:03d}_{j}")
            rows.append(
                _unit(dirs[l] + rng.standard_normal(spec.d) * _DISTRACTOR_SIGMA)
            )
    for j in range(spec.n_nouns):
        nouns.append(f"word{j:04d}")
        rows.append(_unit(rng.standard_normal(spec.d)))
    # the centroid of many spread-out unit vectors has small norm, so the
    # general word's jitter is scaled by that norm to keep it tightly
    # aligned with the centroid (uniqueness score well under the default
    # filter threshold)
    centroid = np.mean(rows, axis=0)
    jitter = rng.standard_normal(spec.d) * (0.003 * np.linalg.norm(centroid))
    nouns.append("thing")
    rows.append(_unit(centroid + jitter))

    lexicon = NounLexicon(
        nouns=tuple(nouns),
        embeddings=EmbeddingMatrix(
            np.asarray(rows, dtype=np.float64).astype(np.float32), normalized=True
        ),
    )
    return (
        EmbeddingMatrix(images.astype(np.float32), normalized=True),
        LabelVector(truth, num_classes=spec.c),
        lexicon,
        list(range(spec.c)),
    )
