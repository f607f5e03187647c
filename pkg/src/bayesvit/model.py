"""Priors, path statistics and exact marginal scores.

Transition rows carry independent Dirichlet priors with alpha = M * Q.
Emissions are either fixed normals or normals with a Normal-Inverse-chi2
(NIX) prior.  Every score is a natural log.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ._pykernels import nix_state_term
from .errors import (DomainError, InfeasiblePathError, InfeasibleTemperatureError,
                     ModeInfeasibleError)
from .hmm import HmmParams, check_path, normal_log_density
from .numerics import Dirichlet, Normal, Rng, ScaledInvChiSq, _log_gamma_scalar, log_gamma, sample

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)


@dataclass
class DirichletPrior:
    """Row-wise Dirichlet prior on the transition matrix, alpha = M * Q.

    Entries with q_lj = 0 are structural zeros: the transition is impossible.
    """

    M: float
    Q: np.ndarray
    alpha: np.ndarray = field(init=False)

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        K = self.Q.shape[0]
        if not self.M > 0:
            raise DomainError("precision M must be positive")
        if self.Q.shape != (K, K) or np.any(self.Q < 0):
            raise DomainError("Q must be a square non-negative matrix")
        if np.any(np.abs(self.Q.sum(axis=1) - 1.0) > 1e-12):
            raise DomainError("rows of Q must sum to one")
        self.alpha = self.M * self.Q

    @classmethod
    def flat(cls, K: int) -> "DirichletPrior":
        """Uniform Dirichlet(1, ..., 1) rows."""
        prior = cls(float(K), np.full((K, K), 1.0 / K))
        prior.alpha = np.ones((K, K))
        return prior

    @property
    def K(self) -> int:
        return self.Q.shape[0]

    @property
    def support(self) -> np.ndarray:
        return self.alpha > 0


@dataclass
class NixPrior:
    """mu_k | s2 ~ N(xi_k, s2 / kappa0), s2 ~ Inv-chi2(nu0, tau0sq)."""

    xi: np.ndarray
    kappa0: float
    nu0: float
    tau0sq: float

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        if not (self.kappa0 > 0 and self.nu0 > 0 and self.tau0sq > 0):
            raise DomainError("kappa0, nu0 and tau0sq must be positive")

    @property
    def K(self) -> int:
        return self.xi.shape[0]


@dataclass
class FixedEmissions:
    """Known normal emission densities."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        if np.any(~(self.variances > 0)):
            raise DomainError("emission variances must be positive")

    def log_density(self, obs) -> np.ndarray:
        return normal_log_density(obs, self.means, self.variances)


@dataclass
class NixEmissions:
    """Normal emissions with unknown parameters under a NIX prior."""

    prior: NixPrior


EmissionMode = Union[FixedEmissions, NixEmissions]


@dataclass
class PathStats:
    """Transition counts plus per-state moment sums of the observations."""

    counts: np.ndarray
    first_state: int
    m: np.ndarray
    sums: np.ndarray
    sumsq: np.ndarray

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass
class NixPosterior:
    kappa: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    nutau2: np.ndarray

    @property
    def tau2(self) -> np.ndarray:
        return self.nutau2 / self.nu


def uniform_initial(K: int) -> np.ndarray:
    return np.full(K, 1.0 / K)


def path_stats(path, obs, K: int) -> PathStats:
    x = np.asarray(obs, dtype=float)
    y = check_path(path, K, x.shape[0])
    if y.size == 0:
        raise DomainError("empty path")
    codes = y[:-1] * K + y[1:]
    counts = np.bincount(codes, minlength=K * K).reshape(K, K).astype(np.int64)
    m = np.bincount(y, minlength=K).astype(np.int64)
    sums = np.bincount(y, weights=x, minlength=K)
    sumsq = np.bincount(y, weights=x * x, minlength=K)
    return PathStats(counts, int(y[0]), m, sums, sumsq)


def _log_initial_term(initial, first: int) -> float:
    p = float(initial[first])
    if not p > 0:
        raise InfeasiblePathError("path starts in a state with zero initial probability")
    return math.log(p)


def log_path_prior(stats: PathStats, prior: DirichletPrior, initial) -> float:
    """Marginal log-probability of a path with the transition matrix integrated out."""
    counts = stats.counts
    alpha = prior.alpha
    if np.any((alpha <= 0) & (counts > 0)):
        raise InfeasiblePathError("path uses a structurally forbidden transition")
    total = _log_initial_term(initial, stats.first_state)
    lg = _log_gamma_scalar
    K = stats.K
    cl = counts.tolist()
    al = alpha.tolist()
    for l in range(K):
        n_l = sum(cl[l])
        if n_l == 0:
            continue
        row = 0.0
        for j in range(K):
            c = cl[l][j]
            if c:
                row += lg(al[l][j] + c) - lg(al[l][j])
        a_l = float(alpha[l].sum())
        total += lg(a_l) - lg(a_l + n_l) + row
    return float(total)


def nix_posterior(stats: PathStats, prior: NixPrior) -> NixPosterior:
    m = stats.m.astype(float)
    kappa = prior.kappa0 + m
    nu = prior.nu0 + m
    safe_m = np.where(m > 0, m, 1.0)
    xbar = np.where(m > 0, stats.sums / safe_m, 0.0)
    sq = np.where(m > 1, stats.sumsq - stats.sums * xbar, 0.0)
    sq = np.maximum(sq, 0.0)
    mu = (prior.kappa0 * prior.xi + stats.sums) / kappa
    d = xbar - prior.xi
    nutau2 = prior.nu0 * prior.tau0sq + sq + prior.kappa0 * m / kappa * d * d
    return NixPosterior(kappa, nu, mu, nutau2)


def log_emission_marginal(stats: PathStats, mode: EmissionMode, obs=None) -> float:
    """ln p(x | y): exact for fixed emissions, NIX-integrated otherwise."""
    if isinstance(mode, FixedEmissions):
        m = stats.m.astype(float)
        mu, v = mode.means, mode.variances
        quad = stats.sumsq - 2.0 * mu * stats.sums + m * mu * mu
        return float(np.sum(-0.5 * m * (_LOG_2PI + np.log(v)) - quad / (2.0 * v)))
    p = mode.prior
    nu0tau0sq = p.nu0 * p.tau0sq
    total = 0.0
    for k in range(stats.K):
        total += nix_state_term(float(stats.m[k]), float(stats.sums[k]), float(stats.sumsq[k]),
                                float(p.xi[k]), p.kappa0, p.nu0, nu0tau0sq)
    return float(total)


def log_joint(path, obs, prior: DirichletPrior, mode: EmissionMode, initial=None) -> float:
    """ln p(y, x) with all parameters integrated out: the comparison score."""
    K = prior.K
    initial = uniform_initial(K) if initial is None else initial
    stats = path_stats(path, obs, K)
    return log_path_prior(stats, prior, initial) + log_emission_marginal(stats, mode, obs)


def log_joint_from_stats(stats: PathStats, prior, mode, initial=None) -> float:
    initial = uniform_initial(prior.K) if initial is None else initial
    return log_path_prior(stats, prior, initial) + log_emission_marginal(stats, mode)


def log_joint_batch(paths, obs, prior: DirichletPrior, mode: EmissionMode, initial=None) -> np.ndarray:
    """Vectorized ``log_joint`` for an (N, n) array of paths; -inf for infeasible ones."""
    P = np.asarray(paths, dtype=np.int64)
    x = np.asarray(obs, dtype=float)
    N, n = P.shape
    K = prior.K
    initial = uniform_initial(K) if initial is None else np.asarray(initial, dtype=float)
    alpha = prior.alpha
    with np.errstate(divide="ignore"):
        out = np.log(initial)[P[:, 0]]
    if n > 1:
        codes = P[:, :-1] * K + P[:, 1:]
        counts = np.zeros((N, K * K))
        for c in range(K * K):
            counts[:, c] = (codes == c).sum(axis=1)
        counts = counts.reshape(N, K, K)
        forbidden = ((alpha <= 0)[None] & (counts > 0)).any(axis=(1, 2))
        safe_alpha = np.where(alpha > 0, alpha, 1.0)
        cell = np.where(counts > 0, log_gamma(safe_alpha[None] + counts) - log_gamma(safe_alpha)[None], 0.0)
        n_l = counts.sum(axis=2)
        a_l = alpha.sum(axis=1)
        row = np.where(n_l > 0, log_gamma(a_l)[None] - log_gamma(a_l[None] + n_l), 0.0)
        out = out + row.sum(axis=1) + cell.sum(axis=(1, 2))
        out[forbidden] = -np.inf
    onehot = P[:, :, None] == np.arange(K)[None, None, :]
    if isinstance(mode, FixedEmissions):
        le = mode.log_density(x)
        out = out + le[np.arange(n)[None, :], P].sum(axis=1)
    else:
        p = mode.prior
        m = onehot.sum(axis=1).astype(float)
        s = (onehot * x[None, :, None]).sum(axis=1)
        ss = (onehot * (x * x)[None, :, None]).sum(axis=1)
        kn = p.kappa0 + m
        nn = p.nu0 + m
        safe_m = np.where(m > 0, m, 1.0)
        xbar = s / safe_m
        sq = np.where(m > 1, np.maximum(ss - s * xbar, 0.0), 0.0)
        d = xbar - p.xi[None, :]
        v = p.nu0 * p.tau0sq + sq + p.kappa0 * m / kn * d * d
        term = (log_gamma(0.5 * nn) - log_gamma(0.5 * p.nu0) + 0.5 * np.log(p.kappa0 / kn)
                + 0.5 * p.nu0 * math.log(p.nu0 * p.tau0sq) - 0.5 * nn * np.log(v) - 0.5 * m * _LOG_PI)
        out = out + np.where(m > 0, term, 0.0).sum(axis=1)
    return out


def posterior_modes(stats: PathStats, prior: DirichletPrior, mode: EmissionMode,
                    initial=None) -> HmmParams:
    """Posterior-mode parameters given one path (the segmentation-MM update).

    Transition row l: (alpha_lj + n_lj - 1) / (alpha_l + n_l - K_l), where K_l
    counts the non-structural entries.  NIX emissions: mean mu_k and variance
    nu_k tau_k^2 / (nu_k + 2).
    """
    K = prior.K
    initial = uniform_initial(K) if initial is None else initial
    alpha = prior.alpha
    support = prior.support
    post = alpha + stats.counts
    if np.any(support & ~(post > 1.0)):
        raise ModeInfeasibleError("posterior mode needs alpha_lj + n_lj > 1 for every entry")
    num = np.where(support, post - 1.0, 0.0)
    trans = num / num.sum(axis=1, keepdims=True)
    if isinstance(mode, FixedEmissions):
        means, variances = mode.means, mode.variances
    else:
        npost = nix_posterior(stats, mode.prior)
        means = npost.mu
        variances = npost.nutau2 / (npost.nu + 2.0)
    return HmmParams(initial, trans, means, variances)


# ---------------------------------------------------------------------------
# Tempered quantities for simulated annealing
# ---------------------------------------------------------------------------

def _tempered_dirichlet_params(beta: float, stats: PathStats, prior: DirichletPrior) -> np.ndarray:
    """beta (alpha + n) + 1 - beta, written so that beta = 1 is exact."""
    post = prior.alpha + stats.counts
    a = post + (beta - 1.0) * (post - 1.0)
    bad = prior.support & ~(a > 0)
    if np.any(bad):
        raise InfeasibleTemperatureError(
            f"tempered Dirichlet parameter <= 0 at beta={beta} (alpha + n too small)")
    return np.where(prior.support, a, 0.0)


def _tempered_nix_params(beta: float, npost: NixPosterior):
    """(kappa, nu, nu*tau2) of the beta-tempered NIX posterior."""
    return beta * npost.kappa, npost.nu + (beta - 1.0) * (npost.nu + 3.0), beta * npost.nutau2


def tempered_correction(beta: float, stats: PathStats, prior: DirichletPrior,
                        mode: EmissionMode) -> float:
    """log p_beta(y, x) - beta * log p(y, x); exactly 0 at beta = 1."""
    if beta < 1.0:
        raise DomainError("inverse temperature must be >= 1")
    if np.any(~prior.support & (stats.counts > 0)):
        raise InfeasiblePathError("path uses a structurally forbidden transition")
    a = _tempered_dirichlet_params(beta, stats, prior).tolist()
    post = (prior.alpha + stats.counts).tolist()
    support = prior.support.tolist()
    log_gamma = _log_gamma_scalar
    total = 0.0
    for l in range(prior.K):
        A_l = 0.0
        C_l = 0.0
        row = 0.0
        for j in range(prior.K):
            if support[l][j]:
                A_l += a[l][j]
                C_l += post[l][j]
                row += log_gamma(a[l][j]) - beta * log_gamma(post[l][j])
        total += row - (log_gamma(A_l) - beta * log_gamma(C_l))
    if isinstance(mode, NixEmissions):
        npost = nix_posterior(stats, mode.prior)
        log_b = math.log(beta)
        for k in range(prior.K):
            nu = float(npost.nu[k])
            P = 0.5 * nu + (beta - 1.0) * 0.5 * (nu + 3.0)
            V = 0.5 * float(npost.nutau2[k])
            total += (0.5 * (1.0 - beta) * math.log(2.0 * math.pi / npost.kappa[k]) - 0.5 * log_b
                      + log_gamma(P) - beta * log_gamma(0.5 * nu) - P * log_b
                      + (beta * 0.5 * nu - P) * math.log(V))
    return float(total)


def log_tempered_joint(beta: float, stats: PathStats, obs, prior: DirichletPrior,
                       mode: EmissionMode, initial=None) -> float:
    """ln of the integral of p(y, x | theta)^beta pi(theta)^beta over theta."""
    base = log_joint_from_stats(stats, prior, mode, initial)
    return beta * base + tempered_correction(beta, stats, prior, mode)


def tempered_theta_sample(beta: float, stats: PathStats, prior: DirichletPrior,
                          mode: EmissionMode, rng: Rng, initial=None) -> HmmParams:
    """Draw theta from p(theta | y, x)^beta (normalized)."""
    K = prior.K
    initial = uniform_initial(K) if initial is None else initial
    a = _tempered_dirichlet_params(beta, stats, prior)
    trans = np.zeros((K, K))
    tr_rng = rng.split("trans")
    for l in range(K):
        sup = prior.support[l]
        trans[l, sup] = sample(tr_rng, Dirichlet(tuple(a[l, sup])))
    if isinstance(mode, FixedEmissions):
        return HmmParams(initial, trans, mode.means, mode.variances)
    npost = nix_posterior(stats, mode.prior)
    kappa_b, nu_b, nutau2_b = _tempered_nix_params(beta, npost)
    em_rng = rng.split("emit")
    variances = np.empty(K)
    means = np.empty(K)
    for k in range(K):
        variances[k] = sample(em_rng, ScaledInvChiSq(nu_b[k], nutau2_b[k] / nu_b[k]))
        means[k] = sample(em_rng, Normal(npost.mu[k], variances[k] / kappa_b[k]))
    return HmmParams(initial, trans, means, variances)
