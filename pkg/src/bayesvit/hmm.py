"""HMM containers and log-domain dynamic programming.

States are 0-based integers internally (state 1 of the usual 1..K notation
is index 0).  Ties are always broken toward the lowest state index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, InfeasiblePathError
from .numerics import Categorical, Rng, sample

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class HmmParams:
    """Concrete HMM with univariate normal emissions."""

    initial: np.ndarray
    trans: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        self.trans = np.asarray(self.trans, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        K = self.initial.shape[0]
        if self.trans.shape != (K, K) or self.means.shape != (K,) or self.variances.shape != (K,):
            raise DomainError("inconsistent HMM parameter shapes")
        if np.any(self.trans < 0) or np.any(np.abs(self.trans.sum(axis=1) - 1.0) > 1e-12):
            raise DomainError("transition rows must be probability vectors")
        if np.any(self.initial < 0) or abs(self.initial.sum() - 1.0) > 1e-12:
            raise DomainError("initial distribution must be a probability vector")
        if np.any(~(self.variances > 0)):
            raise DomainError("emission variances must be positive")

    @property
    def K(self) -> int:
        return self.initial.shape[0]

    def log_emissions(self, obs) -> np.ndarray:
        return normal_log_density(obs, self.means, self.variances)

    def pseudo(self, obs, beta: float = 1.0) -> "PseudoHmm":
        """Log-domain tables of this HMM, optionally raised to power ``beta``."""
        with np.errstate(divide="ignore"):
            li = np.log(self.initial)
            lt = np.log(self.trans)
        le = self.log_emissions(obs)
        if beta != 1.0:
            li, lt, le = beta * li, beta * lt, beta * le
        return PseudoHmm(li, lt, le)


def normal_log_density(obs, means, variances) -> np.ndarray:
    """n x K table of ln N(x_t; mean_k, var_k)."""
    x = np.asarray(obs, dtype=float)[:, None]
    means = np.asarray(means, dtype=float)[None, :]
    variances = np.asarray(variances, dtype=float)[None, :]
    return -0.5 * (_LOG_2PI + np.log(variances)) - (x - means) ** 2 / (2.0 * variances)


@dataclass
class PseudoHmm:
    """Unnormalized log scores driving Viterbi and forward-backward.

    Path score = log_initial[y_0] + sum_t log_emit[t, y_t]
    + sum_t log_trans[y_t, y_t+1].  Rows need not normalize.
    """

    log_initial: np.ndarray
    log_trans: np.ndarray
    log_emit: np.ndarray

    def __post_init__(self):
        self.log_initial = np.ascontiguousarray(self.log_initial, dtype=float)
        self.log_trans = np.ascontiguousarray(self.log_trans, dtype=float)
        self.log_emit = np.ascontiguousarray(self.log_emit, dtype=float)
        K = self.log_initial.shape[0]
        if self.log_trans.shape != (K, K) or self.log_emit.ndim != 2 or self.log_emit.shape[1] != K:
            raise DomainError("inconsistent pseudo-HMM shapes")
        if self.log_emit.shape[0] == 0:
            raise DomainError("empty observation sequence")
        for arr in (self.log_initial, self.log_trans, self.log_emit):
            # a single reduction: the sum is nan or +inf only if some entry is
            total = arr.sum()
            if total != total or total == np.inf:
                if np.any(np.isnan(arr)) or np.any(arr == np.inf):
                    raise DomainError("pseudo-HMM entries must be finite or -inf")

    @property
    def K(self) -> int:
        return self.log_initial.shape[0]

    @property
    def n(self) -> int:
        return self.log_emit.shape[0]

    def path_score(self, path) -> float:
        y = np.asarray(path)
        s = self.log_initial[y[0]] + self.log_emit[np.arange(len(y)), y].sum()
        return float(s + self.log_trans[y[:-1], y[1:]].sum())


@dataclass
class PosteriorStats:
    """Posterior marginals of a (pseudo-)HMM.

    ``xi[l, j]`` is summed over t: sum_{t<n} P(Y_t = l, Y_t+1 = j | x).
    """

    gamma: np.ndarray
    xi: np.ndarray
    log_evidence: float


def viterbi(pseudo: PseudoHmm) -> np.ndarray:
    """Highest-scoring path of ``pseudo``; ties go to the lowest state."""
    return kernels.active().viterbi(pseudo.log_initial, pseudo.log_trans, pseudo.log_emit)


def forward_backward(pseudo: PseudoHmm) -> PosteriorStats:
    gamma, xi, log_evidence = kernels.active().forward_backward(
        pseudo.log_initial, pseudo.log_trans, pseudo.log_emit)
    return PosteriorStats(gamma, xi, log_evidence)


def pmap_path(stats: PosteriorStats) -> np.ndarray:
    return np.asarray(stats.gamma).argmax(axis=1).astype(np.int64)


def backward_sample(pseudo: PseudoHmm, rng: Rng) -> np.ndarray:
    """Draw one path from the normalized path measure of ``pseudo``.

    Forward filtering followed by Markovian backward sampling; consumes
    exactly n uniforms from ``rng``.
    """
    u = rng.uniform(pseudo.n)
    return kernels.active().backward_sample(
        pseudo.log_initial, pseudo.log_trans, pseudo.log_emit, np.ascontiguousarray(u))


def generate_data(params: HmmParams, n: int, rng: Rng):
    """Simulate (observations, true state path) of length ``n``."""
    if n < 1:
        raise DomainError("n must be positive")
    states_rng = rng.split("states")
    obs_rng = rng.split("obs")
    y = np.empty(n, dtype=np.int64)
    u = states_rng.uniform(n)
    cdf0 = np.cumsum(params.initial)
    cdfs = np.cumsum(params.trans, axis=1)
    y[0] = min(int(np.searchsorted(cdf0, u[0] * cdf0[-1], side="right")), params.K - 1)
    for t in range(1, n):
        row = cdfs[y[t - 1]]
        y[t] = min(int(np.searchsorted(row, u[t] * row[-1], side="right")), params.K - 1)
    z = obs_rng.gen.standard_normal(n)
    x = params.means[y] + np.sqrt(params.variances[y]) * z
    return x, y


def sample_markov_chain(trans, initial, n: int, rng: Rng) -> np.ndarray:
    """Markov chain realization using the categorical sampler."""
    y = np.empty(n, dtype=np.int64)
    y[0] = sample(rng, Categorical(tuple(initial)))
    for t in range(1, n):
        y[t] = sample(rng, Categorical(tuple(trans[y[t - 1]])))
    return y


def check_path(path, K: int, n: int | None = None) -> np.ndarray:
    y = np.asarray(path, dtype=np.int64)
    if y.ndim != 1 or (n is not None and y.shape[0] != n):
        raise DomainError("path has the wrong length")
    if y.size and (y.min() < 0 or y.max() >= K):
        raise DomainError("path contains states outside 0..K-1")
    return y


__all__ = [
    "HmmParams", "PseudoHmm", "PosteriorStats", "InfeasiblePathError",
    "viterbi", "forward_backward", "pmap_path", "backward_sample",
    "generate_data", "sample_markov_chain", "normal_log_density", "check_path",
]
