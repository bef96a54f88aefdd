import dataclasses

import numpy as np
import pytest

from semclust import clusterhead, corealg, metrics, semspace, synthgen
from semclust.clusterhead import ClusterHeadParams, TrainConfig
from semclust.embedstore import EmbeddingMatrix, LabelVector
from semclust.errors import ConfigError
from semclust.pseudolab import PseudoLabelSet, SoftAssignment, Strategy


def em(rows, normalized=False):
    return EmbeddingMatrix(np.asarray(rows, dtype=np.float32), normalized=normalized)


def random_problem(seed, n=25, d=6, c=4, m=10, unit=True):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, d))
    if unit:
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    images = em(u)
    params = ClusterHeadParams(
        W=rng.standard_normal((c, d)) * 0.8,
        b=rng.standard_normal(c) * 0.4,
        tau_m=1.0,
    )
    onehots = np.zeros((n, c), dtype=np.int8)
    onehots[np.arange(n), rng.integers(0, c, n)] = 1
    p = PseudoLabelSet(onehots=onehots, strategy=Strategy.DIRECT)
    batch = rng.choice(n, size=m, replace=False)
    pairing = rng.integers(0, n, size=m)
    return images, params, p, batch, pairing, rng


def fd_gradient(params, batch, pairing, images, p, lam, beta, h=1e-5):
    """Central finite differences over every W and b entry."""
    def loss_at(pp):
        loss, _ = clusterhead.loss_and_grad_with_pairing(
            pp, batch, pairing, images, p, lam, beta
        )
        return loss.total

    dW = np.zeros_like(params.W)
    for i in range(params.c):
        for j in range(params.d):
            wp = params.W.copy()
            wp[i, j] += h
            wm = params.W.copy()
            wm[i, j] -= h
            dW[i, j] = (
                loss_at(dataclasses.replace(params, W=wp))
                - loss_at(dataclasses.replace(params, W=wm))
            ) / (2 * h)
    db = np.zeros_like(params.b)
    for i in range(params.c):
        bp = params.b.copy()
        bp[i] += h
        bm = params.b.copy()
        bm[i] -= h
        db[i] = (
            loss_at(dataclasses.replace(params, b=bp))
            - loss_at(dataclasses.replace(params, b=bm))
        ) / (2 * h)
    return dW, db


def gradient_rel_error(seed, lam, beta):
    images, params, p, batch, pairing, _ = random_problem(seed)
    _, grad = clusterhead.loss_and_grad_with_pairing(
        params, batch, pairing, images, p, lam, beta
    )
    fdW, fdb = fd_gradient(params, batch, pairing, images, p, lam, beta)
    analytic = np.concatenate([grad.dW.ravel(), grad.db])
    numeric = np.concatenate([fdW.ravel(), fdb])
    scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-10)
    return float(np.linalg.norm(analytic - numeric) / scale)


def test_init_kmeansnet_unit_centers_bias():
    km = corealg.KMeansResult(
        centers=em([[1, 0], [0, 1]], normalized=True),
        assignment=np.array([0, 1]),
        inertia=0.0,
        iterations=1,
    )
    params = clusterhead.init_from_kmeans(km, tau_m=1.0)
    np.testing.assert_allclose(params.b, [-1.0, -1.0], atol=1e-7)
    np.testing.assert_allclose(params.W, [[2, 0], [0, 2]], atol=1e-7)


def test_init_kmeansnet_example_row():
    km = corealg.KMeansResult(
        centers=em([[0.6, 0.8]], normalized=True),
        assignment=np.array([0]),
        inertia=0.0,
        iterations=1,
    )
    params = clusterhead.init_from_kmeans(km, tau_m=0.5)
    np.testing.assert_allclose(params.W, [[0.6, 0.8]], atol=1e-7)
    np.testing.assert_allclose(params.b, [-0.5], atol=1e-7)


def test_init_argmax_equals_nearest_center():
    rng = np.random.default_rng(17)
    for _ in range(10):
        n, d, c = 40, 5, 4
        x = rng.standard_normal((n, d)).astype(np.float32)
        images = em(x)
        km = corealg.kmeans(images, c, seed=int(rng.integers(10**6)))
        params = clusterhead.init_from_kmeans(km, tau_m=float(rng.uniform(0.2, 3)))
        pred = clusterhead.predict(params, images)
        assert np.array_equal(pred.labels, km.assignment)


def test_forward_uniform_and_stability():
    images = em([[1, 0], [0, 1]])
    params = ClusterHeadParams(W=np.zeros((3, 2)), b=np.zeros(3), tau_m=1.0)
    q = clusterhead.forward(params, images)
    np.testing.assert_allclose(q.q, np.full((2, 3), 1 / 3), atol=1e-12)

    big = ClusterHeadParams(W=np.array([[1000.0, 0.0], [0.0, 0.0]]), b=np.zeros(2), tau_m=1.0)
    q = clusterhead.forward(big, em([[1, 0]]))
    assert np.all(np.isfinite(q.q))
    np.testing.assert_allclose(q.q, [[1.0, 0.0]], atol=1e-12)


def test_forward_log2_closed_form():
    params = ClusterHeadParams(
        W=np.array([[np.log(2.0)], [0.0]]), b=np.zeros(2), tau_m=1.0
    )
    q = clusterhead.forward(params, em([[1.0]]))
    np.testing.assert_allclose(q.q, [[2 / 3, 1 / 3]], atol=1e-12)


def test_forward_rows_positive_sum_one():
    rng = np.random.default_rng(23)
    for _ in range(20):
        c, d, n = rng.integers(2, 6), rng.integers(2, 8), rng.integers(1, 30)
        params = ClusterHeadParams(
            W=rng.standard_normal((c, d)) * 10,
            b=rng.standard_normal(c) * 10,
            tau_m=1.0,
        )
        q = clusterhead.forward(params, em(rng.standard_normal((n, d))))
        assert np.all(q.q > 0)
        np.testing.assert_allclose(q.q.sum(axis=1), 1.0, atol=1e-6)


def test_loss_image_consistency_cases():
    onehot = np.zeros((4, 2))
    onehot[:, 0] = 1.0
    q = SoftAssignment(onehot)
    g = corealg.NeighborGraph(k=1, indices=np.array([[1], [0], [3], [2]]))
    rng = np.random.default_rng(0)
    loss, pairing = clusterhead.loss_image_consistency(q, g, rng)
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert pairing.shape == (4,)

    q = SoftAssignment(np.full((4, 2), 0.5))
    loss, _ = clusterhead.loss_image_consistency(q, g, np.random.default_rng(0))
    assert loss == pytest.approx(np.log(2), abs=1e-12)

    disjoint = SoftAssignment(np.array([[1.0, 0.0], [0.0, 1.0]]))
    g2 = corealg.NeighborGraph(k=1, indices=np.array([[1], [0]]))
    loss, _ = clusterhead.loss_image_consistency(disjoint, g2, np.random.default_rng(0))
    assert loss == pytest.approx(-np.log(1e-12), rel=1e-9)


def test_loss_image_semantic_cases():
    p = PseudoLabelSet(
        onehots=np.array([[0, 1], [1, 0]], dtype=np.int8), strategy=Strategy.DIRECT
    )
    exact = SoftAssignment(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert clusterhead.loss_image_semantic(exact, p) == pytest.approx(0.0, abs=1e-12)

    uniform = SoftAssignment(np.full((2, 2), 0.5))
    assert clusterhead.loss_image_semantic(uniform, p) == pytest.approx(np.log(2))

    q = SoftAssignment(np.array([[0.9, 0.1]]))
    p1 = PseudoLabelSet(onehots=np.array([[0, 1]], dtype=np.int8), strategy=Strategy.DIRECT)
    assert clusterhead.loss_image_semantic(q, p1) == pytest.approx(-np.log(0.1))


def test_loss_balance_cases():
    uniform = SoftAssignment(np.full((4, 2), 0.5))
    assert clusterhead.loss_balance(uniform) == pytest.approx(-np.log(2), abs=1e-12)

    collapsed = SoftAssignment(np.tile([[1.0, 0.0]], (4, 1)))
    assert clusterhead.loss_balance(collapsed) == pytest.approx(0.0, abs=1e-9)

    skewed = SoftAssignment(np.tile([[0.75, 0.25]], (4, 1)))
    expected = 0.75 * np.log(0.75) + 0.25 * np.log(0.25)
    assert clusterhead.loss_balance(skewed) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-0.5623, abs=1e-4)


def test_loss_balance_minimized_at_uniform():
    rng = np.random.default_rng(31)
    c = 4
    uniform = SoftAssignment(np.full((8, c), 1 / c))
    best = clusterhead.loss_balance(uniform)
    for _ in range(200):
        q = SoftAssignment(rng.dirichlet(np.ones(c), size=8))
        assert best <= clusterhead.loss_balance(q) + 1e-12


def test_total_loss_reduces_to_image_loss():
    images, params, p, batch, pairing, _ = random_problem(41)
    loss, _ = clusterhead.loss_and_grad_with_pairing(
        params, batch, pairing, images, p, lam=0.0, beta=0.0
    )
    q = clusterhead.forward(params, images)
    dots = np.sum(q.q[batch] * q.q[pairing], axis=1)
    expected = float(-np.mean(np.log(dots)))
    assert loss.total == pytest.approx(expected, rel=1e-12)
    assert loss.total == pytest.approx(loss.image, rel=1e-12)


def test_total_loss_and_grad_samples_neighbors():
    images, params, p, batch, _, _ = random_problem(43, n=20, m=8)
    g = corealg.knn_graph(images, 3)
    # the sampled pairing is reproducible from the rng state
    loss1, grad1 = clusterhead.total_loss_and_grad(
        params, batch, images, g, p, 2.0, 1.0, np.random.default_rng(5)
    )
    loss2, grad2 = clusterhead.total_loss_and_grad(
        params, batch, images, g, p, 2.0, 1.0, np.random.default_rng(5)
    )
    assert loss1 == loss2
    assert np.array_equal(grad1.dW, grad2.dW) and np.array_equal(grad1.db, grad2.db)
    # with lam=beta=0 it agrees with the full-set image loss on batch=all
    n = images.n
    full_loss, pairing = clusterhead.loss_image_consistency(
        clusterhead.forward(params, images), g, np.random.default_rng(9)
    )
    batch_all = np.arange(n)
    comp, _ = clusterhead.loss_and_grad_with_pairing(
        params, batch_all, pairing, images, p, 0.0, 0.0
    )
    assert comp.total == pytest.approx(full_loss, rel=1e-12)


def test_semantic_gradient_zero_at_uniform_balanced():
    # with W=0, b=0 the assignment is uniform; balanced pseudo-labels make
    # the bias gradient of the semantic term vanish
    n, c, d = 8, 4, 3
    rng = np.random.default_rng(5)
    images = em(rng.standard_normal((n, d)))
    params = ClusterHeadParams(W=np.zeros((c, d)), b=np.zeros(c), tau_m=1.0)
    onehots = np.zeros((n, c), dtype=np.int8)
    onehots[np.arange(n), np.arange(n) % c] = 1
    p = PseudoLabelSet(onehots=onehots, strategy=Strategy.DIRECT)
    batch = np.arange(n)
    pairing = (np.arange(n) + 1) % n
    _, grad = clusterhead.loss_and_grad_with_pairing(
        params, batch, pairing, images, p, lam=0.0, beta=1.0
    )
    # image term also contributes zero bias gradient at uniform q
    np.testing.assert_allclose(grad.db, np.zeros(c), atol=1e-12)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(77)
    errs = []
    for trial in range(15):
        lam = float(rng.uniform(0, 8)) if trial % 3 else 0.0
        beta = float(rng.uniform(0, 3)) if trial % 4 else 0.0
        errs.append(gradient_rel_error(seed=trial, lam=lam, beta=beta))
    assert max(errs) <= 1e-4


def test_gradient_each_loss_separately():
    for lam, beta in ((0.0, 0.0), (3.0, 0.0), (0.0, 2.0)):
        assert gradient_rel_error(seed=99, lam=lam, beta=beta) <= 1e-4


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(c=3, epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(c=3, batch_size=1)
    with pytest.raises(ConfigError):
        TrainConfig(c=3, lam=-0.5)
    with pytest.raises(ConfigError):
        TrainConfig(c=3, beta=-1.0)
    with pytest.raises(ConfigError):
        TrainConfig(c=0)


def small_benchmark(seed=7):
    spec = synthgen.SynthSpec(
        c=3, n_per_cluster=40, d=16, noise_sigma=0.12, n_nouns=20, seed=seed
    )
    images, truth, lexicon, _ = synthgen.generate(spec)
    space = semspace.build_semantic_space(lexicon, images, 3, 0.05, 200, seed=seed)
    return images, truth, space


def test_train_three_blob_accuracy():
    images, truth, space = small_benchmark()
    cfg = TrainConfig(c=3, epochs=25, batch_size=32, seed=1)
    params, trace = clusterhead.train(images, space, cfg, truth=truth)
    pred = clusterhead.predict(params, images)
    acc = metrics.hungarian_accuracy(pred, truth)
    assert acc >= 0.95
    assert len(trace) == 25
    assert trace.loss[-1] <= trace.loss[0]
    assert all(not np.isnan(a) for a in trace.pl_acc)


def test_train_deterministic():
    images, truth, space = small_benchmark(seed=3)
    cfg = TrainConfig(c=3, epochs=5, batch_size=32, seed=42)
    params1, trace1 = clusterhead.train(images, space, cfg, truth=truth)
    params2, trace2 = clusterhead.train(images, space, cfg, truth=truth)
    assert params1.W.tobytes() == params2.W.tobytes()
    assert params1.b.tobytes() == params2.b.tobytes()
    assert trace1.loss == trace2.loss
    assert trace1.grad_norm == trace2.grad_norm
    assert trace1.pl_acc == trace2.pl_acc


def test_train_rejects_small_semantic_space():
    images, truth, space = small_benchmark(seed=5)
    tiny = dataclasses.replace(space, lexicon=space.lexicon.subset([0, 1]))
    cfg = TrainConfig(c=3, epochs=2, batch_size=32, seed=0)
    with pytest.raises(ConfigError):
        clusterhead.train(images, tiny, cfg)


def test_identical_rows_stay_identical_after_step():
    # permutation-equivariance smoke check: all rows identical, all
    # neighbors identical, lam=beta=0 -> rows remain identical
    n, d, c = 6, 4, 3
    row = np.array([0.5, -0.2, 0.1, 0.7])
    images = em(np.tile(row, (n, 1)))
    params = ClusterHeadParams(
        W=np.random.default_rng(0).standard_normal((c, d)), b=np.zeros(c), tau_m=1.0
    )
    p = PseudoLabelSet(
        onehots=np.tile(np.eye(c, dtype=np.int8)[0], (n, 1)), strategy=Strategy.DIRECT
    )
    batch = np.arange(n)
    pairing = (np.arange(n) + 1) % n
    _, grad = clusterhead.loss_and_grad_with_pairing(
        params, batch, pairing, images, p, lam=0.0, beta=0.0
    )
    stepped = ClusterHeadParams(
        W=params.W - 0.1 * grad.dW, b=params.b - 0.1 * grad.db, tau_m=1.0
    )
    q = clusterhead.forward(stepped, images)
    assert np.allclose(q.q, q.q[0], atol=1e-12)


def test_predict_examples():
    params = ClusterHeadParams(
        W=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]),
        b=np.array([0.2, 0.7, 0.1]),
        tau_m=1.0,
    )
    pred = clusterhead.predict(params, em([[0.0, 1.0]]))
    assert pred.labels.tolist() == [1]
    tied = ClusterHeadParams(W=np.zeros((3, 2)), b=np.zeros(3), tau_m=1.0)
    assert clusterhead.predict(tied, em([[1, 1]])).labels.tolist() == [0]


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(13)
    params = ClusterHeadParams(
        W=rng.standard_normal((3, 5)).astype(np.float32).astype(np.float64),
        b=rng.standard_normal(3),
        tau_m=0.8,
    )
    clusterhead.save_checkpoint(params, tmp_path / "w.emb", tmp_path / "m.json", epoch=9)
    loaded, epoch = clusterhead.load_checkpoint(tmp_path / "w.emb", tmp_path / "m.json")
    assert epoch == 9
    np.testing.assert_array_equal(loaded.W, params.W)  # f32-representable W
    np.testing.assert_array_equal(loaded.b, params.b)
    assert loaded.tau_m == params.tau_m
