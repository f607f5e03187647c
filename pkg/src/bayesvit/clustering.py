"""Clustering problems obtained by dropping the temporal prior.

With a constant path prior, maximizing p(x | y) under NIX emissions is a
1-D clustering problem.  ``nu0-limit`` is the nu0 -> infinity objective

    sum_k [ sum_{S_k} (x - xbar_k)^2 + kappa0 m_k/(kappa0 + m_k) (xbar_k - xi_k)^2
            + tau0sq ln(kappa0 + m_k) ],

and ``finite-nu0`` keeps nu0 and equals -ln p(x | y) up to an additive
constant.  Labels are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .model import NixPrior
from .numerics import log_gamma

VARIANTS = ("nu0-limit", "finite-nu0")
RULES = ("mm", "em")


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    K: int
    iterations: int = 0
    converged: bool = False
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise DomainError("labels must be a 1-D sequence")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.K):
            raise DomainError("labels outside 0..K-1")

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)


def _moments(labels, x, K):
    m = np.bincount(labels, minlength=K).astype(float)
    s = np.bincount(labels, weights=x, minlength=K)
    safe = np.where(m > 0, m, 1.0)
    xbar = np.where(m > 0, s / safe, 0.0)
    d = x - xbar[labels]
    within = np.bincount(labels, weights=d * d, minlength=K)
    return m, xbar, within


def cluster_centers(assign: ClusterAssignment, obs, prior: NixPrior) -> np.ndarray:
    """Shrunken centers (m xbar + kappa0 xi) / (kappa0 + m); xi_k for empty clusters."""
    x = np.asarray(obs, dtype=float)
    m, xbar, _ = _moments(assign.labels, x, assign.K)
    return (m * xbar + prior.kappa0 * prior.xi) / (prior.kappa0 + m)


def _penalized_spread(m, xbar, within, prior):
    """A_k = within-cluster SS + kappa0 m/(kappa0+m) (xbar - xi)^2."""
    d = xbar - prior.xi
    return within + prior.kappa0 * m / (prior.kappa0 + m) * d * d


def cluster_objective(assign: ClusterAssignment, obs, prior: NixPrior, variant: str = "nu0-limit",
                      include_size_term: bool = True) -> float:
    x = np.asarray(obs, dtype=float)
    if x.shape != assign.labels.shape:
        raise DomainError("labels and observations differ in length")
    m, xbar, within = _moments(assign.labels, x, assign.K)
    A = _penalized_spread(m, xbar, within, prior)
    if variant == "nu0-limit":
        total = A.sum()
        if include_size_term:
            total += prior.tau0sq * np.log(prior.kappa0 + m).sum()
        return float(total)
    if variant == "finite-nu0":
        nu = prior.nu0 + m
        return float(np.sum(-log_gamma(0.5 * nu) + 0.5 * np.log(prior.kappa0 + m)
                            + 0.5 * nu * np.log(prior.nu0 * prior.tau0sq + A)))
    raise DomainError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def cluster_objective_at_centers(assign: ClusterAssignment, obs, prior: NixPrior, centers) -> float:
    """sum_k [sum_{S_k} (x - mu_k)^2 + kappa0 (mu_k - xi_k)^2 + tau0sq ln(kappa0 + m_k)]."""
    x = np.asarray(obs, dtype=float)
    mu = np.asarray(centers, dtype=float)
    d = x - mu[assign.labels]
    m = assign.sizes.astype(float)
    return float(np.sum(d * d) + prior.kappa0 * np.sum((mu - prior.xi) ** 2)
                 + prior.tau0sq * np.log(prior.kappa0 + m).sum())


def _assign(x, mu, penalty):
    cost = (x[:, None] - mu[None, :]) ** 2
    if penalty is not None:
        cost = cost + penalty[None, :]
    return np.argmin(cost, axis=1).astype(np.int64)


def cluster_iterate(obs, prior: NixPrior, rule: str, init: ClusterAssignment,
                    max_iters: int = 500) -> ClusterAssignment:
    """Alternate center updates with the ``mm`` (Voronoi) or ``em`` (size-penalized) rule.

    Stops when the labels repeat.  ``history`` holds the nu0-limit objective
    after each iteration (without the size term for ``mm``).
    """
    if rule not in RULES:
        raise DomainError(f"unknown rule {rule!r}; expected one of {RULES}")
    if max_iters < 1:
        raise DomainError("max_iters must be >= 1")
    x = np.asarray(obs, dtype=float)
    K = init.K
    if prior.K != K:
        raise DomainError("prior and assignment disagree on K")
    cur = ClusterAssignment(init.labels.copy(), K)
    size_term = rule == "em"
    out = ClusterAssignment(cur.labels, K)
    out.history.append(cluster_objective(cur, x, prior, include_size_term=size_term))
    for it in range(1, max_iters + 1):
        mu = cluster_centers(cur, x, prior)
        penalty = prior.tau0sq / (cur.sizes + prior.kappa0) if rule == "em" else None
        new = ClusterAssignment(_assign(x, mu, penalty), K)
        out.history.append(cluster_objective(new, x, prior, include_size_term=size_term))
        out.iterations = it
        if np.array_equal(new.labels, cur.labels):
            out.converged = True
            break
        cur = new
    out.labels = cur.labels
    return out


def size_imbalance(assign: ClusterAssignment) -> float:
    """Largest cluster share minus smallest cluster share."""
    sizes = assign.sizes
    n = sizes.sum()
    return float((sizes.max() - sizes.min()) / n) if n else 0.0


def nearest_prior_mean(obs, prior: NixPrior) -> ClusterAssignment:
    x = np.asarray(obs, dtype=float)
    return ClusterAssignment(_assign(x, prior.xi, None), prior.K)


__all__ = [
    "ClusterAssignment", "cluster_centers", "cluster_objective", "cluster_objective_at_centers",
    "cluster_iterate", "size_imbalance", "nearest_prior_mean", "VARIANTS", "RULES",
]
