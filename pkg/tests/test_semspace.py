import numpy as np
import pytest

from semclust import semspace
from semclust.embedstore import EmbeddingMatrix, NounLexicon
from semclust.errors import DataError, EmptyResult


def make_lexicon(rows, nouns=None):
    rows = np.asarray(rows, dtype=np.float32)
    if nouns is None:
        nouns = tuple(f"w{i}" for i in range(len(rows)))
    return NounLexicon(nouns=tuple(nouns), embeddings=EmbeddingMatrix(rows))


def test_uniqueness_score_examples():
    assert semspace.uniqueness_score([1, 1], [2, 2]) == pytest.approx(0.0, abs=1e-12)
    assert semspace.uniqueness_score([1, 0], [0, 1]) == pytest.approx(1.0)
    # centroid of {[1,0],[0,1]} is [0.5,0.5]; 1 - 0.5/0.70711 = 0.29289
    got = semspace.uniqueness_score([1, 0], [0.5, 0.5])
    assert got == pytest.approx(1 - 0.5 / np.sqrt(0.5), abs=1e-6)
    assert got == pytest.approx(0.29289, abs=1e-5)
    with pytest.raises(DataError):
        semspace.uniqueness_score([0, 0], [1, 0])


def test_filter_unique_threshold_zero_keeps_all():
    lex = make_lexicon(np.eye(4))
    out = semspace.filter_unique(lex, 0.0)
    assert out.nouns == lex.nouns


def test_filter_unique_two_noun_arithmetic():
    lex = make_lexicon([[1, 0], [0, 1]])
    with pytest.raises(EmptyResult) as exc:
        semspace.filter_unique(lex, 0.3)
    assert "0.29" in str(exc.value)  # reports the max observed score
    both = semspace.filter_unique(lex, 0.29)
    assert both.nouns == lex.nouns


def test_filter_unique_order_property():
    rng = np.random.default_rng(0)
    lex = make_lexicon(rng.standard_normal((20, 6)))
    scores = semspace.uniqueness_scores(lex)
    kept = semspace.filter_unique(lex, 0.9)
    kept_scores = [scores[lex.nouns.index(w)] for w in kept.nouns]
    dropped_scores = [
        scores[i] for i, w in enumerate(lex.nouns) if w not in set(kept.nouns)
    ]
    assert min(kept_scores) >= max(dropped_scores)
    # input order preserved
    positions = [lex.nouns.index(w) for w in kept.nouns]
    assert positions == sorted(positions)


def test_filter_unique_monotone_in_threshold():
    rng = np.random.default_rng(1)
    lex = make_lexicon(rng.standard_normal((30, 5)))
    sizes = []
    for gamma in (0.0, 0.4, 0.8, 1.0, 1.2):
        try:
            sizes.append(len(semspace.filter_unique(lex, gamma)))
        except EmptyResult:
            sizes.append(0)
    assert sizes == sorted(sizes, reverse=True)


def test_filter_unique_idempotent_with_frozen_centroid():
    rng = np.random.default_rng(2)
    lex = make_lexicon(rng.standard_normal((25, 4)))
    centroid = lex.embeddings.as_f64().mean(axis=0)
    once = semspace.filter_unique(lex, 0.8, centroid=centroid)
    twice = semspace.filter_unique(once, 0.8, centroid=centroid)
    assert once.nouns == twice.nouns
    assert np.array_equal(once.embeddings.data, twice.embeddings.data)


def two_blob_instance():
    # images split around two orthogonal directions
    images = np.array(
        [[1, 0, 0], [0.99, 0.1, 0], [0, 1, 0], [0.1, 0.99, 0]], dtype=np.float32
    )
    images /= np.linalg.norm(images, axis=1, keepdims=True)
    return EmbeddingMatrix(images, normalized=True)


def test_filter_relevant_full_budget_keeps_everything():
    lex = make_lexicon(np.eye(3))
    space = semspace.filter_relevant(lex, two_blob_instance(), 2, len(lex), seed=0)
    assert space.lexicon.nouns == lex.nouns
    assert len(space) <= 2 * len(lex)


def test_filter_relevant_disjoint_nearest():
    # noun 0 is nearest the first blob, noun 1 the second; noun 2 far away
    lex = make_lexicon([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    space = semspace.filter_relevant(lex, two_blob_instance(), 2, 1, seed=0)
    assert set(space.lexicon.nouns) == {"w0", "w1"}
    # exhaustive similarity table confirms the winners
    centers_needed = {"w0", "w1"}
    assert centers_needed == set(space.lexicon.nouns)


def test_filter_relevant_shared_noun_dedups():
    # both image blobs sit closest to the same single noun direction
    images = np.array([[1, 0.05], [1, -0.05], [1, 0.04], [1, -0.04]], np.float32)
    images /= np.linalg.norm(images, axis=1, keepdims=True)
    lex = make_lexicon([[1, 0], [-1, 0]])
    space = semspace.filter_relevant(
        lex, EmbeddingMatrix(images, normalized=True), 2, 1, seed=0
    )
    assert space.lexicon.nouns == ("w0",)
    assert len(space) == 1


def test_filter_relevant_monotone_in_budget():
    rng = np.random.default_rng(3)
    imgs = rng.standard_normal((30, 5)).astype(np.float32)
    imgs /= np.linalg.norm(imgs, axis=1, keepdims=True)
    images = EmbeddingMatrix(imgs, normalized=True)
    lex = make_lexicon(rng.standard_normal((40, 5)))
    sizes = [
        len(semspace.filter_relevant(lex, images, 3, r, seed=5))
        for r in (1, 2, 5, 10, 40)
    ]
    assert sizes == sorted(sizes)


def test_semantic_space_nouns_come_from_source():
    rng = np.random.default_rng(4)
    imgs = rng.standard_normal((20, 4)).astype(np.float32)
    imgs /= np.linalg.norm(imgs, axis=1, keepdims=True)
    lex = make_lexicon(rng.standard_normal((15, 4)))
    space = semspace.build_semantic_space(
        lex, EmbeddingMatrix(imgs, normalized=True), 2, 0.5, 4, seed=1
    )
    assert set(space.lexicon.nouns) <= set(lex.nouns)
    assert space.source_size == 15
    assert len(space) <= 2 * 4
