"""Batch clustering engine for precomputed embedding matrices.

Builds a filtered semantic space from a noun lexicon, generates one-hot
pseudo-labels from semantic centers, trains a linear-plus-softmax cluster
head with joint consistency objectives, and evaluates clusterings with
Hungarian accuracy, NMI and ARI. Submodules are imported explicitly:

    from semclust import embedstore, corealg, semspace, pseudolab
    from semclust import clusterhead, metrics, theory, synthgen
"""

__version__ = "0.1.0"
