"""Empirical generalization-bound constants and convergence diagnostics.

The bound report measures three quantities from a trained assignment and
its neighbor graph: the worst neighbor agreement mu_n (smallest q_i . q_j
over neighbor pairs), the confidence floor mu_p (smallest row maximum),
and the neighborhood imbalance k' (largest in-degree). From these it
evaluates the two excess-risk constants

    c1 = 2/mu_n + 2*C*beta + 2*c*lam*log(1/mu_p)
    c2 = (2 + 2*k') * log(1/mu_n) + C*beta + 2*c*lam*log(1/mu_p)

and the gap  c1/sqrt(n) + c2*sqrt(log(1/delta) / (2n)).  C is the bounded
Lagrange-type constant of the balance term's concentration step; it is
not derivable from data and enters as configuration (default 1.0).

The convergence report fits the min-so-far gradient-norm envelope of a
training trace on a log-log scale; a slope near -0.5 matches the
sublinear rate the analysis predicts. Diagnostic only, never pass/fail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corealg import NeighborGraph, max_in_degree
from .errors import ConfigError, SizeMismatch, TooShort
from .pseudolab import SoftAssignment

MU_CLAMP = 1e-12


@dataclass(frozen=True)
class BoundReport:
    mu_n: float            # min over (i, j in neighbors(i)) of q_i . q_j
    mu_p: float            # min over i of max_l q_il (confidence floor)
    mu_p_max: float        # max over i of max_l q_il, reported alongside
    k_prime: int           # max in-degree of the neighbor graph
    c1: float
    c2: float
    bound_gap: float
    n: int
    c: int
    delta: float
    C: float
    lam: float
    beta: float
    mu_n_clamped: bool     # true when the raw minimum fell below the clamp

    def to_json_dict(self) -> dict:
        return {
            "mu_n": self.mu_n,
            "mu_p": self.mu_p,
            "mu_p_max": self.mu_p_max,
            "k_prime": self.k_prime,
            "c1": self.c1,
            "c2": self.c2,
            "bound_gap": self.bound_gap,
            "n": self.n,
            "c": self.c,
            "delta": self.delta,
            "C": self.C,
            "lambda": self.lam,
            "beta": self.beta,
            "mu_n_clamped": self.mu_n_clamped,
        }


def neighborhood_consistency_floor(q: SoftAssignment, g: NeighborGraph) -> float:
    """Smallest q_i . q_j over all i and all j in i's neighbor list."""
    if q.n != g.n:
        raise SizeMismatch(f"q has {q.n} rows, graph {g.n}")
    worst = np.inf
    for start in range(0, q.n, 4096):
        stop = min(start + 4096, q.n)
        block = g.indices[start:stop]
        dots = np.einsum("ic,ijc->ij", q.q[start:stop], q.q[block])
        worst = min(worst, float(dots.min()))
    return worst


def bound_constants(
    mu_n: float, mu_p: float, k_prime: int, lam: float, beta: float, c: int, C: float
) -> tuple[float, float]:
    c1 = 2.0 / mu_n + 2.0 * C * beta + 2.0 * c * lam * np.log(1.0 / mu_p)
    c2 = (
        (2.0 + 2.0 * k_prime) * np.log(1.0 / mu_n)
        + C * beta
        + 2.0 * c * lam * np.log(1.0 / mu_p)
    )
    return float(c1), float(c2)


def excess_risk_gap(c1: float, c2: float, n: int, delta: float) -> float:
    return float(c1 / np.sqrt(n) + c2 * np.sqrt(np.log(1.0 / delta) / (2.0 * n)))


def bound_report(
    q: SoftAssignment,
    g: NeighborGraph,
    lam: float,
    beta: float,
    c: int,
    delta: float = 0.05,
    C: float = 1.0,
) -> BoundReport:
    """Measure the assumption constants empirically and evaluate the bound."""
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if lam < 0 or beta < 0:
        raise ConfigError("lam and beta must be non-negative")
    if C <= 0:
        raise ConfigError("C must be positive")
    if c != q.c:
        raise SizeMismatch(f"declared c={c} but assignment has {q.c} columns")

    raw_mu_n = neighborhood_consistency_floor(q, g)
    clamped = raw_mu_n < MU_CLAMP
    mu_n = max(raw_mu_n, MU_CLAMP)
    row_max = q.q.max(axis=1)
    mu_p = float(max(row_max.min(), MU_CLAMP))
    mu_p_max = float(row_max.max())
    k_prime = max_in_degree(g)
    c1, c2 = bound_constants(mu_n, mu_p, k_prime, lam, beta, c, C)
    return BoundReport(
        mu_n=mu_n,
        mu_p=mu_p,
        mu_p_max=mu_p_max,
        k_prime=k_prime,
        c1=c1,
        c2=c2,
        bound_gap=excess_risk_gap(c1, c2, q.n, delta),
        n=q.n,
        c=c,
        delta=delta,
        C=C,
        lam=lam,
        beta=beta,
        mu_n_clamped=clamped,
    )


def convergence_report(grad_norms) -> dict:
    """Min-so-far gradient norms plus a log-log least-squares slope fit."""
    norms = np.asarray(grad_norms, dtype=np.float64)
    if norms.ndim != 1 or norms.size < 2:
        raise TooShort("need at least 2 per-epoch gradient norms")
    envelope = np.minimum.accumulate(norms)
    t = np.arange(1, norms.size + 1, dtype=np.float64)
    y = np.log(np.maximum(envelope, 1e-300))
    x = np.log(t)
    xc = x - x.mean()
    slope = float((xc @ (y - y.mean())) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    return {
        "epochs": int(norms.size),
        "slope": slope,
        "intercept": intercept,
        "min_so_far": [float(v) for v in envelope],
    }
