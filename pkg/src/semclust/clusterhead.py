"""Trainable cluster head: one linear layer plus softmax.

The head maps frozen image embeddings to soft cluster assignments. It is
initialized in closed form from k-means centers (W = 2*tau*R,
b_l = -tau*||r_l||^2), whose argmax reproduces the k-means hard
assignment. Training minimizes

    L = L_image + beta * L_semantic + lam * L_balance

with analytic gradients and Adam. L_image pulls the assignment of every
sample toward one randomly drawn nearest neighbor, L_semantic is the
cross entropy against the current pseudo-labels, and L_balance is the
negative entropy of the batch-mean assignment (so minimizing it pushes
the column means toward uniform; a flipped-sign ablation is exposed to
document that convention).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import embedstore
from .corealg import KMeansResult, NeighborGraph, kmeans, knn_graph
from .embedstore import EmbeddingMatrix, LabelVector
from .errors import ConfigError, DimensionMismatch, SizeMismatch
from .pseudolab import (
    PseudoLabelSet,
    SoftAssignment,
    Strategy,
    adjust_centers,
    assign_pseudo_labels,
    centers_direct,
    centers_from_selection,
    pseudo_label_accuracy,
    select_top,
)
from .semspace import SemanticSpace

# floor for q_i . q_j before the log; disjoint one-hots would give -inf
EPS_DOT = 1e-12
# floor for individual probabilities before logs
EPS_Q = 1e-300


@dataclass(frozen=True)
class ClusterHeadParams:
    W: np.ndarray                     # (c, d)
    b: np.ndarray                     # (c,)
    tau_m: float

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise DimensionMismatch(f"bad param shapes {W.shape}, {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise DimensionMismatch("parameters contain NaN or Inf")
        if self.tau_m <= 0:
            raise ConfigError("temperature must be positive")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def c(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    c: int
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-4
    lam: float = 5.0                  # balance weight
    beta: float = 1.0                 # pseudo-label weight
    k: int = 20                       # neighbors for the image loss
    strategy: Strategy = Strategy.ADJUSTED_CENTER_BASED
    xi_c: int | None = None           # None -> floor(0.9 * n / c)
    xi_a: int = 20
    tau_m: float = 1.0
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    kmeans_restarts: int = 10
    flip_balance_sign: bool = False   # ablation: use the loss as +entropy

    def __post_init__(self):
        if self.c < 1:
            raise ConfigError("c must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.lam < 0 or self.beta < 0:
            raise ConfigError("lam and beta must be non-negative")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.tau_m <= 0:
            raise ConfigError("tau_m must be positive")
        if self.xi_c is not None and self.xi_c < 1:
            raise ConfigError("xi_c must be >= 1")
        if self.xi_a < 1:
            raise ConfigError("xi_a must be >= 1")


@dataclass
class TrainTrace:
    """One record per completed epoch."""

    epochs: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    loss_image: list[float] = field(default_factory=list)
    loss_semantic: list[float] = field(default_factory=list)
    loss_balance: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    pl_acc: list[float] = field(default_factory=list)   # nan without truth
    wall_time: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epochs)

    def write_csv(self, path) -> None:
        """Deterministic export; wall-clock times are deliberately omitted."""
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                ["epoch", "loss", "loss_image", "loss_semantic",
                 "loss_balance", "grad_norm", "pl_acc"]
            )
            for i in range(len(self.epochs)):
                acc = self.pl_acc[i]
                w.writerow(
                    [self.epochs[i], repr(self.loss[i]), repr(self.loss_image[i]),
                     repr(self.loss_semantic[i]), repr(self.loss_balance[i]),
                     repr(self.grad_norm[i]),
                     "" if np.isnan(acc) else repr(acc)]
                )


def init_from_kmeans(km: KMeansResult, tau_m: float) -> ClusterHeadParams:
    """Closed-form head whose argmax equals the k-means assignment."""
    r = km.centers.as_f64()
    w = 2.0 * tau_m * r
    b = -tau_m * np.sum(r * r, axis=1)
    return ClusterHeadParams(W=w, b=b, tau_m=tau_m)


def init_kmeansnet(
    images: EmbeddingMatrix, c: int, tau_m: float, seed: int, restarts: int = 10
) -> ClusterHeadParams:
    return init_from_kmeans(kmeans(images, c, seed, restarts=restarts), tau_m)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _logits(params: ClusterHeadParams, u: np.ndarray) -> np.ndarray:
    return u @ params.W.T + params.b


def forward(params: ClusterHeadParams, images: EmbeddingMatrix) -> SoftAssignment:
    """Row-stochastic assignment via max-subtracted softmax."""
    if images.d != params.d:
        raise DimensionMismatch(f"image dim {images.d} vs head dim {params.d}")
    return SoftAssignment(_softmax(_logits(params, images.as_f64())))


def predict(params: ClusterHeadParams, images: EmbeddingMatrix) -> LabelVector:
    """Hard labels from the row argmax; ties break to the lower index."""
    if images.d != params.d:
        raise DimensionMismatch(f"image dim {images.d} vs head dim {params.d}")
    labels = np.argmax(_logits(params, images.as_f64()), axis=1)
    return LabelVector(labels, num_classes=params.c)


def sample_neighbors(
    neighbors: NeighborGraph, rows: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw one random neighbor (global index) for each requested row."""
    picks = rng.integers(0, neighbors.k, size=len(rows))
    return neighbors.indices[rows, picks]


def loss_image_consistency(
    q: SoftAssignment, neighbors: NeighborGraph, rng: np.random.Generator
) -> tuple[float, np.ndarray]:
    """Mean -log(q_i . q_j) over one sampled neighbor j per row."""
    if q.n != neighbors.n:
        raise SizeMismatch(f"q has {q.n} rows, graph {neighbors.n}")
    rows = np.arange(q.n)
    pairing = sample_neighbors(neighbors, rows, rng)
    dots = np.sum(q.q * q.q[pairing], axis=1)
    loss = float(-np.mean(np.log(np.maximum(dots, EPS_DOT))))
    return loss, pairing


def loss_image_semantic(q: SoftAssignment, p: PseudoLabelSet) -> float:
    """Mean cross entropy between pseudo-labels and the assignment."""
    if q.n != p.n or q.c != p.c:
        raise SizeMismatch(f"q is {q.n}x{q.c}, pseudo-labels {p.n}x{p.c}")
    picked = q.q[np.arange(q.n), p.labels()]
    return float(-np.mean(np.log(np.maximum(picked, EPS_Q))))


def loss_balance(q: SoftAssignment) -> float:
    """Negative entropy of the column means; minimal at uniform columns."""
    qbar = np.maximum(q.q.mean(axis=0), EPS_Q)
    return float(np.sum(qbar * np.log(qbar)))


@dataclass(frozen=True)
class Gradient:
    dW: np.ndarray
    db: np.ndarray

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.dW**2) + np.sum(self.db**2)))


@dataclass(frozen=True)
class BatchLoss:
    total: float
    image: float
    semantic: float
    balance: float


def loss_and_grad_with_pairing(
    params: ClusterHeadParams,
    batch: np.ndarray,
    pairing: np.ndarray,
    images: EmbeddingMatrix,
    p: PseudoLabelSet,
    lam: float,
    beta: float,
    flip_balance_sign: bool = False,
) -> tuple[BatchLoss, Gradient]:
    """Batch objective and its analytic gradient for a frozen pairing.

    The pairing maps each batch element to the global index of its drawn
    neighbor. The forward pass covers the union of batch and neighbor rows
    since the image-consistency term differentiates through both sides.
    """
    batch = np.asarray(batch, dtype=np.int64)
    pairing = np.asarray(pairing, dtype=np.int64)
    if batch.size == 0:
        raise ConfigError("batch must be non-empty")
    if batch.shape != pairing.shape:
        raise SizeMismatch("batch and pairing must align")
    m = batch.size

    rows, inverse = np.unique(np.concatenate([batch, pairing]), return_inverse=True)
    loc_batch = inverse[:m]
    loc_pair = inverse[m:]

    u = images.as_f64()[rows]
    q = _softmax(_logits(params, u))

    # image consistency over sampled pairs
    dots = np.sum(q[loc_batch] * q[loc_pair], axis=1)
    clamped = np.maximum(dots, EPS_DOT)
    l_img = float(-np.mean(np.log(clamped)))

    # cross entropy against pseudo-labels
    labels = p.labels()[batch]
    picked = q[loc_batch, labels]
    l_sem = float(-np.mean(np.log(np.maximum(picked, EPS_Q))))

    # balance on the batch-mean assignment
    qbar = q[loc_batch].mean(axis=0)
    qbar_safe = np.maximum(qbar, EPS_Q)
    l_bal = float(np.sum(qbar_safe * np.log(qbar_safe)))
    bal_sign = -1.0 if flip_balance_sign else 1.0

    total = l_img + beta * l_sem + lam * bal_sign * l_bal

    # gradient wrt q, then through the softmax
    gq = np.zeros_like(q)
    live = dots > EPS_DOT
    coeff = np.where(live, -1.0 / (m * clamped), 0.0)
    np.add.at(gq, loc_batch, coeff[:, None] * q[loc_pair])
    np.add.at(gq, loc_pair, coeff[:, None] * q[loc_batch])
    if lam != 0.0:
        gbar = np.where(
            qbar > EPS_Q, lam * bal_sign * (np.log(qbar_safe) + 1.0) / m, 0.0
        )
        np.add.at(gq, loc_batch, np.broadcast_to(gbar, (m, q.shape[1])))

    gz = q * (gq - np.sum(gq * q, axis=1, keepdims=True))
    if beta != 0.0:
        # softmax+CE composite gradient, stable even for tiny probabilities
        ce = q[loc_batch].copy()
        ce[np.arange(m), labels] -= 1.0
        np.add.at(gz, loc_batch, (beta / m) * ce)

    grad = Gradient(dW=gz.T @ u, db=gz.sum(axis=0))
    return BatchLoss(total=total, image=l_img, semantic=l_sem, balance=l_bal), grad


def total_loss_and_grad(
    params: ClusterHeadParams,
    batch: np.ndarray,
    images: EmbeddingMatrix,
    neighbors: NeighborGraph,
    p: PseudoLabelSet,
    lam: float,
    beta: float,
    rng: np.random.Generator,
) -> tuple[float, Gradient]:
    """Draw one neighbor per batch element, then evaluate loss and gradient."""
    batch = np.asarray(batch, dtype=np.int64)
    pairing = sample_neighbors(neighbors, batch, rng)
    loss, grad = loss_and_grad_with_pairing(
        params, batch, pairing, images, p, lam, beta
    )
    return loss.total, grad


class AdamState:
    """Plain Adam over the (W, b) pair."""

    def __init__(self, params: ClusterHeadParams, cfg: TrainConfig):
        self.m_w = np.zeros_like(params.W)
        self.v_w = np.zeros_like(params.W)
        self.m_b = np.zeros_like(params.b)
        self.v_b = np.zeros_like(params.b)
        self.t = 0
        self.cfg = cfg

    def step(self, params: ClusterHeadParams, grad: Gradient) -> ClusterHeadParams:
        cfg = self.cfg
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        self.m_w = b1 * self.m_w + (1 - b1) * grad.dW
        self.v_w = b2 * self.v_w + (1 - b2) * grad.dW**2
        self.m_b = b1 * self.m_b + (1 - b1) * grad.db
        self.v_b = b2 * self.v_b + (1 - b2) * grad.db**2
        corr1 = 1 - b1**self.t
        corr2 = 1 - b2**self.t
        w = params.W - cfg.lr * (self.m_w / corr1) / (
            np.sqrt(self.v_w / corr2) + cfg.adam_eps
        )
        b = params.b - cfg.lr * (self.m_b / corr1) / (
            np.sqrt(self.v_b / corr2) + cfg.adam_eps
        )
        return replace(params, W=w, b=b)


def make_centers(
    strategy: Strategy,
    images: EmbeddingMatrix,
    space: SemanticSpace,
    q: SoftAssignment,
    xi_c: int,
    xi_a: int,
    seed: int,
):
    """Dispatch to the configured semantic-center strategy."""
    if strategy is Strategy.DIRECT:
        return centers_direct(images, space.lexicon.embeddings, q.c, seed)
    sel = select_top(q, xi_c)
    h = centers_from_selection(images, sel, space.lexicon)
    if strategy is Strategy.CENTER_BASED:
        return h
    return adjust_centers(h, space.lexicon.embeddings, xi_a)


def train(
    images: EmbeddingMatrix,
    space: SemanticSpace,
    cfg: TrainConfig,
    truth: LabelVector | None = None,
) -> tuple[ClusterHeadParams, TrainTrace]:
    """Full training loop: closed-form init, then per epoch recompute the
    soft assignment, regenerate semantic centers and pseudo-labels, and
    run one shuffled minibatch sweep of Adam on the joint objective.
    Deterministic for a fixed config seed."""
    n = images.n
    if cfg.c > n:
        raise ConfigError(f"c={cfg.c} exceeds n={n}")
    if cfg.strategy is not Strategy.DIRECT and len(space.lexicon) < cfg.c:
        raise ConfigError(
            f"semantic space holds {len(space.lexicon)} nouns; need >= c={cfg.c}"
        )
    if truth is not None and truth.n != n:
        raise SizeMismatch(f"truth has {truth.n} labels for {n} images")
    if cfg.xi_c is not None:
        if cfg.xi_c > n:
            raise ConfigError(f"xi_c={cfg.xi_c} exceeds n={n}")
        xi_c = cfg.xi_c
    else:
        xi_c = max(1, int(0.9 * n / cfg.c))
    # neighbor count and adjustment width are dataset-tuned defaults; clamp
    # them to what this dataset can support
    xi_a = min(cfg.xi_a, len(space.lexicon))
    k = min(cfg.k, n - 1)

    ss = np.random.SeedSequence(cfg.seed)
    ss_kmeans, ss_shuffle, ss_neighbor, ss_strategy = ss.spawn(4)
    rng_shuffle = np.random.Generator(np.random.PCG64(ss_shuffle))
    rng_neighbor = np.random.Generator(np.random.PCG64(ss_neighbor))
    strategy_seed = int(ss_strategy.generate_state(1)[0])

    neighbors = knn_graph(images, k)
    params = init_kmeansnet(
        images, cfg.c, cfg.tau_m,
        seed=int(ss_kmeans.generate_state(1)[0]),
        restarts=cfg.kmeans_restarts,
    )
    adam = AdamState(params, cfg)
    trace = TrainTrace()

    # direct centers ignore the soft assignment, so the per-epoch refresh
    # would recompute the identical result; build them once
    direct_centers = None
    if cfg.strategy is Strategy.DIRECT:
        direct_centers = centers_direct(
            images, space.lexicon.embeddings, cfg.c, strategy_seed
        )

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        q_full = forward(params, images)
        if direct_centers is not None:
            centers = direct_centers
        else:
            centers = make_centers(
                cfg.strategy, images, space, q_full, xi_c, xi_a, strategy_seed
            )
        p = assign_pseudo_labels(images, centers, epoch=epoch)

        perm = rng_shuffle.permutation(n)
        sum_total = sum_img = sum_sem = sum_bal = 0.0
        sum_gnorm = 0.0
        steps = 0
        for start in range(0, n, cfg.batch_size):
            batch = perm[start:start + cfg.batch_size]
            pairing = sample_neighbors(neighbors, batch, rng_neighbor)
            loss, grad = loss_and_grad_with_pairing(
                params, batch, pairing, images, p, cfg.lam, cfg.beta,
                flip_balance_sign=cfg.flip_balance_sign,
            )
            params = adam.step(params, grad)
            w = len(batch) / n
            sum_total += loss.total * w
            sum_img += loss.image * w
            sum_sem += loss.semantic * w
            sum_bal += loss.balance * w
            sum_gnorm += grad.norm()
            steps += 1

        trace.epochs.append(epoch)
        trace.loss.append(sum_total)
        trace.loss_image.append(sum_img)
        trace.loss_semantic.append(sum_sem)
        trace.loss_balance.append(sum_bal)
        trace.grad_norm.append(sum_gnorm / steps)
        trace.pl_acc.append(
            pseudo_label_accuracy(p, truth) if truth is not None else float("nan")
        )
        trace.wall_time.append(time.perf_counter() - t0)

    return params, trace


def save_checkpoint(params: ClusterHeadParams, emb_path, meta_path, epoch: int = 0):
    """EMB1 matrix for W plus a JSON sidecar with b, tau_m, c, d, epoch."""
    embedstore.write_embeddings(
        EmbeddingMatrix(params.W.astype(np.float32)), emb_path
    )
    meta = {
        "b": [float(x) for x in params.b],
        "tau_m": params.tau_m,
        "c": params.c,
        "d": params.d,
        "epoch": epoch,
    }
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(emb_path, meta_path) -> tuple[ClusterHeadParams, int]:
    w = embedstore.read_embeddings(emb_path)
    with open(meta_path, "r", encoding="utf-8") as f:
        meta = json.load(f)
    params = ClusterHeadParams(
        W=w.as_f64(),
        b=np.asarray(meta["b"], dtype=np.float64),
        tau_m=float(meta["tau_m"]),
    )
    if params.c != int(meta["c"]) or params.d != int(meta["d"]):
        raise SizeMismatch("checkpoint metadata disagrees with weight shape")
    return params, int(meta.get("epoch", 0))
