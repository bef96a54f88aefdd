import numpy as np
import pytest

from semclust import corealg, metrics, semspace, synthgen
from semclust.embedstore import LabelVector
from semclust.errors import ConfigError
from semclust.synthgen import SynthSpec


def test_deterministic_per_seed():
    a = synthgen.generate(SynthSpec(seed=11))
    b = synthgen.generate(SynthSpec(seed=11))
    assert a[0].data.tobytes() == b[0].data.tobytes()
    assert np.array_equal(a[1].labels, b[1].labels)
    assert a[2].nouns == b[2].nouns
    assert a[2].embeddings.data.tobytes() == b[2].embeddings.data.tobytes()
    assert a[3] == b[3]
    c = synthgen.generate(SynthSpec(seed=12))
    assert c[0].data.tobytes() != a[0].data.tobytes()


def test_zero_noise_recovers_partition_exactly():
    spec = SynthSpec(c=3, n_per_cluster=10, d=8, noise_sigma=0.0, seed=5)
    images, truth, _, _ = synthgen.generate(spec)
    # every image equals its cluster direction
    for l in range(3):
        block = images.data[truth.labels == l]
        assert np.all(block == block[0])
    km = corealg.kmeans(images, 3, seed=0)
    pred = LabelVector(km.assignment, num_classes=3)
    assert metrics.hungarian_accuracy(pred, truth) == 1.0


def test_direction_separation():
    spec = SynthSpec(c=4, n_per_cluster=1, d=24, noise_sigma=0.0, seed=9)
    images, truth, _, _ = synthgen.generate(spec)
    dirs = images.as_f64()
    dots = dirs @ dirs.T
    np.fill_diagonal(dots, -1)
    assert dots.max() <= synthgen.DIRECTION_MAX_DOT + 1e-6


def test_truth_nouns_nearest_at_low_noise():
    spec = SynthSpec(c=3, n_per_cluster=2, d=16, noun_noise=0.1, seed=21)
    images, truth, lexicon, truth_nouns = synthgen.generate(spec)
    # recover the exact directions from a zero-noise twin of the same seed
    dirs, _, _, _ = synthgen.generate(
        SynthSpec(c=3, n_per_cluster=1, d=16, noise_sigma=0.0, noun_noise=0.1, seed=21)
    )
    sims = dirs.as_f64() @ lexicon.embeddings.as_f64().T
    nearest = np.argmax(sims, axis=1)
    assert nearest.tolist() == truth_nouns


def test_general_word_has_lowest_uniqueness():
    for seed in (0, 1, 2, 3, 4):
        _, _, lexicon, _ = synthgen.generate(SynthSpec(seed=seed))
        scores = semspace.uniqueness_scores(lexicon)
        assert int(np.argmin(scores)) == len(lexicon) - 1
        assert lexicon.nouns[-1] == "thing"
        assert scores[-1] < semspace.DEFAULT_GAMMA_U


def test_acceptance_scale_kmeans_oracle():
    spec = SynthSpec(c=3, n_per_cluster=200, d=32, noise_sigma=0.15, seed=7)
    images, truth, _, _ = synthgen.generate(spec)
    km = corealg.kmeans(images, 3, seed=7)
    pred = LabelVector(km.assignment, num_classes=3)
    assert metrics.hungarian_accuracy(pred, truth) >= 0.95


def test_bad_spec_rejected():
    with pytest.raises(ConfigError):
        SynthSpec(c=1)
    with pytest.raises(ConfigError):
        SynthSpec(d=1)
    with pytest.raises(ConfigError):
        SynthSpec(noise_sigma=-0.1)


def test_unsatisfiable_separation_errors():
    # far more clusters than a 2-d sphere can hold at dot <= 0.3
    with pytest.raises(ConfigError, match="directions"):
        synthgen.generate(SynthSpec(c=40, n_per_cluster=1, d=2, seed=0))


def test_lexicon_size_layout():
    spec = SynthSpec(c=3, distractor_nouns=5, n_nouns=50, seed=0)
    _, _, lexicon, truth_nouns = synthgen.generate(spec)
    assert len(lexicon) == 3 + 3 * 5 + 50 + 1
    assert truth_nouns == [0, 1, 2]
    assert lexicon.embeddings.normalized
