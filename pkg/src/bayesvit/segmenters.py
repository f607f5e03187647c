"""Path estimators sharing one interface.

Every estimator takes ``(obs, prior, mode, initial, init_path, cfg)`` and
returns a :class:`RunTrace` whose ``path`` is the estimate and whose
``scores`` hold ``log_joint`` of the current path after each iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import DomainError, InfeasiblePathError, ModeInfeasibleError
from .hmm import HmmParams, PseudoHmm, backward_sample, check_path, forward_backward, viterbi
from .model import (DirichletPrior, EmissionMode, FixedEmissions, NixEmissions, NixPrior,
                    log_joint, nix_posterior, path_stats, posterior_modes, tempered_correction,
                    tempered_theta_sample, uniform_initial)
from .numerics import Rng, digamma, log_gamma

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SaSchedule:
    betas: tuple
    samples_per_beta: int = 15

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.size == 0 or b[0] < 1.0 or np.any(np.diff(b) < 0):
            raise DomainError("inverse temperatures must start at >= 1 and be nondecreasing")
        if self.samples_per_beta < 1:
            raise DomainError("samples_per_beta must be positive")

    @classmethod
    def linear(cls, beta_max: float, steps: int = 47, samples_per_beta: int = 15) -> "SaSchedule":
        """``steps`` equally spaced inverse temperatures in [1, beta_max]."""
        return cls(tuple(float(b) for b in np.linspace(1.0, beta_max, steps)), samples_per_beta)


@dataclass
class SegmenterConfig:
    max_iters: int = 500
    tol: float = 1e-8
    sa_schedule: SaSchedule = field(default_factory=lambda: SaSchedule.linear(10.2))
    seed: int = 0
    max_rejections: int = 10_000
    icm_margin: float = 1e-9

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if not self.tol > 0:
            raise DomainError("tol must be positive")


@dataclass
class RunTrace:
    method: str
    path: np.ndarray
    initial_score: float
    scores: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    objective: list = field(default_factory=list)
    params: Optional[HmmParams] = None
    extras: dict = field(default_factory=dict)

    @property
    def final_score(self) -> float:
        return self.scores[-1] if self.scores else self.initial_score


class _Problem:
    """Inputs shared by all estimators, validated once."""

    def __init__(self, obs, prior: DirichletPrior, mode: EmissionMode, initial):
        self.obs = np.ascontiguousarray(obs, dtype=float)
        if self.obs.ndim != 1 or self.obs.size == 0:
            raise DomainError("observations must be a non-empty 1-D sequence")
        self.prior = prior
        self.mode = mode
        self.K = prior.K
        self.n = self.obs.shape[0]
        self.initial = uniform_initial(self.K) if initial is None else np.asarray(initial, dtype=float)
        with np.errstate(divide="ignore"):
            self.log_initial = np.log(self.initial)
        self.alpha = prior.alpha
        self.support = prior.support
        if isinstance(mode, FixedEmissions):
            self.log_f = mode.log_density(self.obs)
        else:
            self.log_f = None
        if isinstance(mode, NixEmissions) and mode.prior.K != self.K:
            raise DomainError("NIX prior and Dirichlet prior disagree on K")

    def score(self, path) -> float:
        try:
            return log_joint(path, self.obs, self.prior, self.mode, self.initial)
        except InfeasiblePathError:
            return -math.inf

    def log_u(self, counts) -> np.ndarray:
        """Expected log transition probabilities under Dir(alpha + counts)."""
        post = np.where(self.support, self.alpha + counts, 1.0)
        row = (self.alpha + counts).sum(axis=1)
        out = digamma(post) - digamma(row)[:, None]
        return np.where(self.support, out, -np.inf)

    def log_h(self, kappa, nu, mu, nutau2) -> np.ndarray:
        """Expected log emission densities under NIX(kappa, nu, mu, tau2)."""
        tau2 = nutau2 / nu
        d = self.obs[:, None] - mu[None, :]
        const = -0.5 * (_LOG_2PI + np.log(tau2)) - 0.5 * (np.log(0.5 * nu) - digamma(0.5 * nu)) \
            - 0.5 / kappa
        return const[None, :] - d * d / (2.0 * tau2[None, :])

    def require_mode_feasible(self):
        bad = self.support & ~(self.alpha > 1.0)
        if np.any(bad):
            raise ModeInfeasibleError("posterior-mode updates need M*q_lj > 1 for every allowed transition")


def _one_hot(path, K) -> np.ndarray:
    g = np.zeros((path.shape[0], K))
    g[np.arange(path.shape[0]), path] = 1.0
    return g


def _lex_key(path) -> tuple:
    return tuple(int(v) for v in path)


def _iterate_paths(method, prob: _Problem, init_path, cfg, step) -> RunTrace:
    """Path-valued fixed-point loop with exact repetition stop and cycle guard."""
    y = check_path(init_path, prob.K, prob.n).copy()
    trace = RunTrace(method, y, prob.score(y))
    history = [y]
    hist_scores = [trace.initial_score]
    seen = {y.tobytes(): 0}
    for it in range(1, cfg.max_iters + 1):
        y_new = step(y)
        s = prob.score(y_new)
        trace.scores.append(s)
        trace.iterations = it
        if np.array_equal(y_new, y):
            trace.converged = True
            break
        key = y_new.tobytes()
        if key in seen:
            j = seen[key]
            members = list(zip(hist_scores[j:], history[j:]))
            best = max(members, key=lambda m: (m[0], tuple(-v for v in _lex_key(m[1]))))
            y = best[1]
            trace.extras["cycle_length"] = len(members)
            trace.scores.append(best[0])
            break
        seen[key] = len(history)
        history.append(y_new)
        hist_scores.append(s)
        y = y_new
    trace.path = y
    return trace


def seg_em(obs, prior, mode, initial, init_path, cfg: SegmenterConfig) -> RunTrace:
    """Segmentation EM: integrate theta out against p(theta | y, x), then Viterbi."""
    prob = _Problem(obs, prior, mode, initial)

    def step(y):
        stats = path_stats(y, prob.obs, prob.K)
        log_u = prob.log_u(stats.counts)
        if prob.log_f is not None:
            log_h = prob.log_f
        else:
            npost = nix_posterior(stats, mode.prior)
            log_h = prob.log_h(npost.kappa, npost.nu, npost.mu, npost.nutau2)
        return viterbi(PseudoHmm(prob.log_initial, log_u, log_h))

    return _iterate_paths("sEM", prob, init_path, cfg, step)


def seg_mm(obs, prior, mode, initial, init_path, cfg: SegmenterConfig) -> RunTrace:
    """Segmentation MM (Bayesian Viterbi training): posterior modes, then Viterbi."""
    prob = _Problem(obs, prior, mode, initial)
    prob.require_mode_feasible()

    def step(y):
        stats = path_stats(y, prob.obs, prob.K)
        theta = posterior_modes(stats, prior, mode, prob.initial)
        return viterbi(theta.pseudo(prob.obs))

    return _iterate_paths("sMM", prob, init_path, cfg, step)


# ---------------------------------------------------------------------------
# Parameter-valued methods
# ---------------------------------------------------------------------------

def _log_inv_chi2(s2, nu, tau2):
    h = 0.5 * nu
    return h * math.log(h) - log_gamma(h) + h * math.log(tau2) - (h + 1.0) * math.log(s2) \
        - nu * tau2 / (2.0 * s2)


def _dirichlet_norm(prior: DirichletPrior) -> float:
    total = 0.0
    for l in range(prior.K):
        a = prior.alpha[l, prior.alpha[l] > 0]
        total += log_gamma(float(a.sum())) - float(np.sum(log_gamma(a)))
    return total


def log_param_prior(theta: HmmParams, prior: DirichletPrior, mode: EmissionMode,
                    _norm: Optional[float] = None) -> float:
    """ln pi(theta): Dirichlet rows times the NIX density of each state's (mu, s2)."""
    alpha = prior.alpha
    support = prior.support
    if np.any(support & ~(theta.trans > 0)):
        return -math.inf
    total = _dirichlet_norm(prior) if _norm is None else _norm
    with np.errstate(divide="ignore"):
        logp = np.log(np.where(support, theta.trans, 1.0))
    total += float(np.sum(np.where(support, (alpha - 1.0) * logp, 0.0)))
    if isinstance(mode, NixEmissions):
        pr = mode.prior
        for k in range(prior.K):
            s2 = float(theta.variances[k])
            v = s2 / pr.kappa0
            total += -0.5 * (_LOG_2PI + math.log(v)) - (theta.means[k] - pr.xi[k]) ** 2 / (2.0 * v)
            total += _log_inv_chi2(s2, pr.nu0, pr.tau0sq)
    return float(total)


def _pseudo(prob: _Problem, theta: HmmParams) -> PseudoHmm:
    if prob.log_f is None:
        return theta.pseudo(prob.obs)
    with np.errstate(divide="ignore"):
        return PseudoHmm(prob.log_initial, np.log(theta.trans), prob.log_f)


def _m_step(prob: _Problem, gamma, xi, flat: bool, prev: Optional[HmmParams]) -> HmmParams:
    K = prob.K
    support = prob.support
    if flat:
        rows = xi.sum(axis=1, keepdims=True)
        uniform = support / support.sum(axis=1, keepdims=True)
        safe = np.where(rows > 0, rows, 1.0)
        trans = np.where(rows > 0, np.where(support, xi, 0.0) / safe, uniform)
    else:
        num = np.where(support, prob.alpha + xi - 1.0, 0.0)
        trans = num / num.sum(axis=1, keepdims=True)
    trans = trans / trans.sum(axis=1, keepdims=True)
    mode = prob.mode
    if isinstance(mode, FixedEmissions):
        return HmmParams(prob.initial, trans, mode.means, mode.variances)
    pr: NixPrior = mode.prior
    x = prob.obs
    g = gamma.sum(axis=0)
    sx = gamma.T @ x
    if flat:
        floor = 1e-6 * max(float(np.var(x)), 1e-12)
        means = np.empty(K)
        variances = np.empty(K)
        for k in range(K):
            if g[k] > 1e-10:
                means[k] = sx[k] / g[k]
                d = x - means[k]
                variances[k] = max(float(gamma[:, k] @ (d * d)) / g[k], floor)
            elif prev is not None:
                means[k], variances[k] = prev.means[k], prev.variances[k]
            else:
                means[k], variances[k] = pr.xi[k], pr.tau0sq
        return HmmParams(prob.initial, trans, means, variances)
    means = (sx + pr.kappa0 * pr.xi) / (g + pr.kappa0)
    d = x[:, None] - means[None, :]
    ssd = (gamma * d * d).sum(axis=0)
    variances = (pr.nu0 * pr.tau0sq + ssd + pr.kappa0 * (means - pr.xi) ** 2) / (g + pr.nu0 + 3.0)
    return HmmParams(prob.initial, trans, means, variances)


def bayes_em(obs, prior, mode, initial, init, cfg: SegmenterConfig, flat_prior: bool = False) -> RunTrace:
    """EM for the posterior mode of theta (or the MLE when ``flat_prior``), then Viterbi.

    ``init`` is an initial path or an :class:`HmmParams`.  ``trace.objective``
    holds ln p(x | theta) + ln pi(theta) per iteration; ``trace.params`` the
    final parameters.
    """
    prob = _Problem(obs, prior, mode, initial)
    if not flat_prior:
        prob.require_mode_feasible()
    if isinstance(init, HmmParams):
        theta = init
        init_score = -math.inf
    else:
        y0 = check_path(init, prob.K, prob.n)
        init_score = prob.score(y0)
        xi0 = path_stats(y0, prob.obs, prob.K).counts.astype(float)
        theta = _m_step(prob, _one_hot(y0, prob.K), xi0, flat_prior, None)
    method = "EM" if flat_prior else "B-EM"
    trace = RunTrace(method, np.zeros(prob.n, dtype=np.int64), init_score)
    norm = None if flat_prior else _dirichlet_norm(prior)
    prev_obj = None
    for it in range(1, cfg.max_iters + 1):
        post = forward_backward(_pseudo(prob, theta))
        obj = post.log_evidence
        if not flat_prior:
            obj += log_param_prior(theta, prior, mode, norm)
        trace.objective.append(float(obj))
        trace.iterations = it
        if prev_obj is not None and abs(obj - prev_obj) < cfg.tol:
            trace.converged = True
            break
        prev_obj = obj
        theta = _m_step(prob, post.gamma, post.xi, flat_prior, theta)
    trace.params = theta
    trace.path = viterbi(_pseudo(prob, theta))
    trace.scores.append(prob.score(trace.path))
    return trace


def variational_bayes(obs, prior, mode, initial, init_path, cfg: SegmenterConfig) -> RunTrace:
    """Mean-field VB over (theta, y); the path is the Viterbi path of the final q_Y.

    ``extras['xi']`` and ``extras['log_z']`` record, per iteration, the
    expected counts defining q_theta and the log normalizer of the pseudo-HMM
    built from them.
    """
    prob = _Problem(obs, prior, mode, initial)
    y0 = check_path(init_path, prob.K, prob.n)
    gamma = _one_hot(y0, prob.K)
    xi = path_stats(y0, prob.obs, prob.K).counts.astype(float)
    trace = RunTrace("VB", y0.copy(), prob.score(y0))
    xi_hist, logz_hist = [], []
    pseudo = None
    for it in range(1, cfg.max_iters + 1):
        log_u = prob.log_u(xi)
        if prob.log_f is not None:
            log_h = prob.log_f
        else:
            log_h = prob.log_h(*_variational_nix(prob, gamma))
        pseudo = PseudoHmm(prob.log_initial, log_u, log_h)
        post = forward_backward(pseudo)
        xi_hist.append(xi.copy())
        logz_hist.append(post.log_evidence)
        delta = float(np.max(np.abs(post.gamma - gamma)))
        gamma, xi = post.gamma, post.xi
        trace.iterations = it
        trace.objective.append(delta)
        if delta < cfg.tol:
            trace.converged = True
            break
    trace.path = viterbi(pseudo)
    trace.scores.append(prob.score(trace.path))
    trace.extras["xi"] = xi_hist
    trace.extras["log_z"] = logz_hist
    return trace


def _variational_nix(prob: _Problem, gamma):
    pr: NixPrior = prob.mode.prior
    x = prob.obs
    g = gamma.sum(axis=0)
    safe = np.where(g > 0, g, 1.0)
    xt = np.where(g > 0, (gamma.T @ x) / safe, 0.0)
    d = x[:, None] - xt[None, :]
    s = (gamma * d * d).sum(axis=0)
    kappa = pr.kappa0 + g
    nu = pr.nu0 + g
    mu = (pr.kappa0 * pr.xi + g * xt) / kappa
    nutau2 = pr.nu0 * pr.tau0sq + s + pr.kappa0 * g / kappa * (xt - pr.xi) ** 2
    return kappa, nu, mu, nutau2


# ---------------------------------------------------------------------------
# ICM and simulated annealing
# ---------------------------------------------------------------------------

def icm(obs, prior, mode, initial, init_path, cfg: SegmenterConfig) -> RunTrace:
    """Iterated conditional modes on log_joint with incremental statistics.

    A site moves only when the best alternative beats the current state by
    more than ``cfg.icm_margin``.  ``extras['moves']`` lists accepted moves as
    (sweep, t, old, new, score_after).
    """
    prob = _Problem(obs, prior, mode, initial)
    y = check_path(init_path, prob.K, prob.n).copy()
    trace = RunTrace("ICM", y, prob.score(y))
    alpha = np.ascontiguousarray(prob.alpha)
    lg_alpha = np.where(alpha > 0, log_gamma(np.where(alpha > 0, alpha, 1.0)), 0.0)
    alpha_row = np.ascontiguousarray(alpha.sum(axis=1))
    lg_alpha_row = np.ascontiguousarray(log_gamma(alpha_row))
    if isinstance(mode, FixedEmissions):
        nix = None
        log_emit = np.ascontiguousarray(prob.log_f)
    else:
        p = mode.prior
        nix = (np.ascontiguousarray(p.xi), float(p.kappa0), float(p.nu0), float(p.nu0 * p.tau0sq))
        log_emit = None
    kern = kernels.active()
    moves = []
    for sweep in range(1, cfg.max_iters + 1):
        st = path_stats(y, prob.obs, prob.K)
        counts = np.ascontiguousarray(st.counts, dtype=np.int64)
        m = st.m.astype(float)
        s = st.sums.copy()
        ss = st.sumsq.copy()
        sweep_moves, _ = kern.icm_sweep(y, counts, prob.log_initial, alpha, lg_alpha, alpha_row,
                                        lg_alpha_row, log_emit, prob.obs, nix, m, s, ss,
                                        cfg.icm_margin)
        moves.extend((sweep,) + tuple(mv) for mv in sweep_moves)
        trace.scores.append(prob.score(y))
        trace.iterations = sweep
        if not sweep_moves:
            trace.converged = True
            break
    trace.path = y
    trace.extras["moves"] = moves
    return trace


def simulated_annealing(obs, prior, mode, initial, init_path, cfg: SegmenterConfig,
                        rng: Optional[Rng] = None) -> RunTrace:
    """Tempered Gibbs proposals with a Metropolis correction.

    Each proposal draws theta from the tempered posterior given the current
    path and then a path by backward sampling the tempered pseudo-HMM.  The
    acceptance log-ratio reduces to minus the change in the tempering
    correction, so it is exactly 0 at beta = 1.  The output is the best path
    among all proposals.  ``scores`` holds the running best after each slot.
    """
    prob = _Problem(obs, prior, mode, initial)
    rng = Rng(cfg.seed).split("sa") if rng is None else rng
    y = check_path(init_path, prob.K, prob.n).copy()
    stats = path_stats(y, prob.obs, prob.K)
    trace = RunTrace("SA", y, prob.score(y))
    best_path, best_score = None, -math.inf
    accept_probs = []
    proposals = 0
    exhausted = 0
    sched = cfg.sa_schedule
    for bi, beta in enumerate(sched.betas):
        d_cur = tempered_correction(beta, stats, prior, mode)
        for slot in range(sched.samples_per_beta):
            for _ in range(cfg.max_rejections):
                prop_rng = rng.split(proposals)
                proposals += 1
                theta = tempered_theta_sample(beta, stats, prior, mode, prop_rng, prob.initial)
                y_new = backward_sample(theta.pseudo(prob.obs, beta), prop_rng.split("path"))
                st_new = path_stats(y_new, prob.obs, prob.K)
                s_new = prob.score(y_new)
                if s_new > best_score:
                    best_score, best_path = s_new, y_new
                d_new = tempered_correction(beta, st_new, prior, mode)
                log_acc = d_cur - d_new
                accept_probs.append(math.exp(min(0.0, log_acc)))
                if log_acc >= 0.0 or math.log(prop_rng.split("accept").uniform()) < log_acc:
                    y, stats, d_cur = y_new, st_new, d_new
                    break
            else:
                exhausted += 1
            trace.scores.append(best_score)
        trace.iterations = bi + 1
    trace.path = best_path
    trace.converged = True
    trace.extras.update(accept_probs=accept_probs, proposals=proposals,
                        exhausted_slots=exhausted, last_state=y)
    return trace


METHODS = {
    "sEM": seg_em,
    "sMM": seg_mm,
    "B-EM": bayes_em,
    "EM": lambda obs, prior, mode, initial, init, cfg: bayes_em(obs, prior, mode, initial, init, cfg,
                                                                flat_prior=True),
    "VB": variational_bayes,
    "ICM": icm,
    "SA": simulated_annealing,
}
