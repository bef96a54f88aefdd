import numpy as np
import pytest

from semclust import theory
from semclust.corealg import NeighborGraph, knn_graph
from semclust.embedstore import EmbeddingMatrix
from semclust.errors import ConfigError, SizeMismatch, TooShort
from semclust.pseudolab import SoftAssignment


def mutual_pair_graph(n):
    idx = np.arange(n)
    partner = idx ^ 1
    return NeighborGraph(k=1, indices=partner[:, None])


def random_assignment(n, c, seed):
    rng = np.random.default_rng(seed)
    return SoftAssignment(rng.dirichlet(np.ones(c), size=n))


def test_constants_formula_mu_half():
    c1, c2 = theory.bound_constants(
        mu_n=0.5, mu_p=0.9, k_prime=3, lam=0.0, beta=0.0, c=4, C=1.0
    )
    assert c1 == pytest.approx(4.0, abs=1e-12)
    assert c2 == pytest.approx(8 * np.log(2.0), abs=1e-12)


def test_perfect_confidence_collapses_log_terms():
    n, c = 8, 3
    onehots = np.zeros((n, c))
    onehots[:, 1] = 1.0
    q = SoftAssignment(onehots)
    g = mutual_pair_graph(n)
    rep = theory.bound_report(q, g, lam=2.0, beta=0.7, c=c, delta=0.1, C=1.5)
    assert rep.mu_n == 1.0 and rep.mu_p == 1.0
    assert rep.c2 == pytest.approx(1.5 * 0.7, abs=1e-12)
    assert rep.c1 == pytest.approx(2.0 + 2 * 1.5 * 0.7, abs=1e-12)
    assert rep.k_prime == 1


def test_k_prime_monotonicity():
    base = dict(mu_n=0.4, mu_p=0.8, lam=1.0, beta=1.0, c=5, C=1.0)
    _, c2_small = theory.bound_constants(k_prime=2, **base)
    _, c2_large = theory.bound_constants(k_prime=4, **base)
    assert c2_large > c2_small


def test_consistency_improvement_never_raises_constants():
    base = dict(mu_p=0.7, k_prime=3, lam=2.0, beta=1.0, c=4, C=1.0)
    prev = None
    for mu_n in (0.05, 0.2, 0.5, 0.9, 1.0):
        c1, c2 = theory.bound_constants(mu_n=mu_n, **base)
        if prev is not None:
            assert c1 <= prev[0] + 1e-12
            assert c2 <= prev[1] + 1e-12
        prev = (c1, c2)


def test_mu_n_matches_brute_force():
    rng = np.random.default_rng(3)
    n, c, k = 120, 4, 5
    x = rng.standard_normal((n, 8)).astype(np.float32)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    g = knn_graph(EmbeddingMatrix(x, normalized=True), k)
    q = random_assignment(n, c, seed=4)
    got = theory.neighborhood_consistency_floor(q, g)
    brute = min(
        float(q.q[i] @ q.q[j]) for i in range(n) for j in g.indices[i]
    )
    assert got == pytest.approx(brute, abs=1e-15)


def test_bound_report_fields_and_ranges():
    q = random_assignment(60, 5, seed=9)
    g = mutual_pair_graph(60)
    rep = theory.bound_report(q, g, lam=1.0, beta=1.0, c=5)
    assert 0 < rep.mu_n <= 1
    assert 1 / 5 <= rep.mu_p <= 1
    assert rep.mu_p <= rep.mu_p_max <= 1
    assert rep.k_prime >= 1
    assert rep.bound_gap >= 0
    d = rep.to_json_dict()
    assert d["n"] == 60 and d["c"] == 5 and "bound_gap" in d


def test_gap_strictly_decreasing_in_n():
    c1, c2 = 4.0, 3.0
    gaps = [theory.excess_risk_gap(c1, c2, n, 0.05) for n in (100, 200, 400, 800)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_bound_report_validation():
    q = random_assignment(4, 2, seed=0)
    g = mutual_pair_graph(4)
    with pytest.raises(ConfigError):
        theory.bound_report(q, g, 1.0, 1.0, 2, delta=1.0)
    with pytest.raises(ConfigError):
        theory.bound_report(q, g, -1.0, 1.0, 2)
    with pytest.raises(SizeMismatch):
        theory.bound_report(q, g, 1.0, 1.0, 3)


def test_convergence_constant_norms():
    rep = theory.convergence_report([2.0, 2.0, 2.0, 2.0])
    assert rep["slope"] == pytest.approx(0.0, abs=1e-9)


def test_convergence_exact_power_law():
    t = np.arange(1, 201, dtype=np.float64)
    rep = theory.convergence_report(t ** -0.5)
    assert rep["slope"] == pytest.approx(-0.5, abs=1e-6)


def test_convergence_increasing_norms_flat_envelope():
    rep = theory.convergence_report([1.0, 2.0, 3.0, 4.0])
    assert rep["min_so_far"] == [1.0, 1.0, 1.0, 1.0]
    assert rep["slope"] == pytest.approx(0.0, abs=1e-9)


def test_convergence_too_short():
    with pytest.raises(TooShort):
        theory.convergence_report([1.0])
