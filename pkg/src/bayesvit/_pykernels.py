"""Pure-Python/numpy implementations of the dynamic-programming kernels.

This module mirrors ``_ckernels.pyx`` function for function and is used when
the compiled extension is unavailable (or when ``BAYESVIT_PURE_PYTHON=1``).
"""
from __future__ import annotations

import math

import numpy as np

from .errors import InfeasiblePathError
from .numerics import _log_gamma_scalar

BACKEND = "python"
_LOG_PI = math.log(math.pi)
NEG_INF = -math.inf


def viterbi(log_init, log_trans, log_emit):
    n, K = log_emit.shape
    back = np.zeros((n, K), dtype=np.int64)
    delta = log_init + log_emit[0]
    top = delta.max()
    if top == NEG_INF:
        raise InfeasiblePathError("no feasible state at t=0")
    delta = delta - top
    cols = np.arange(K)
    for t in range(1, n):
        cand = delta[:, None] + log_trans
        arg = cand.argmax(axis=0)
        back[t] = arg
        delta = cand[arg, cols] + log_emit[t]
        top = delta.max()
        if top == NEG_INF:
            raise InfeasiblePathError(f"no feasible state at t={t}")
        delta = delta - top
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = int(delta.argmax())
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def _scaled_inputs(log_init, log_trans, log_emit):
    c_tr = log_trans.max()
    c_init = log_init.max()
    c_emit = log_emit.max(axis=1)
    if c_tr == NEG_INF or c_init == NEG_INF or np.any(c_emit == NEG_INF):
        raise InfeasiblePathError("an all -inf row or site in the pseudo-HMM")
    A = np.exp(log_trans - c_tr)
    E = np.exp(log_emit - c_emit[:, None])
    p0 = np.exp(log_init - c_init)
    return A, E, p0, c_tr, c_init, c_emit


def _forward(A, E, p0):
    n, K = E.shape
    alpha = np.empty((n, K))
    scale = np.empty(n)
    a = p0 * E[0]
    s = a.sum()
    if not s > 0:
        raise InfeasiblePathError("forward pass vanished at t=0")
    alpha[0] = a / s
    scale[0] = s
    for t in range(1, n):
        a = (alpha[t - 1][:, None] * A).sum(axis=0) * E[t]
        s = a.sum()
        if not s > 0:
            raise InfeasiblePathError(f"forward pass vanished at t={t}")
        alpha[t] = a / s
        scale[t] = s
    return alpha, scale


def forward_backward(log_init, log_trans, log_emit):
    A, E, p0, c_tr, c_init, c_emit = _scaled_inputs(log_init, log_trans, log_emit)
    n, K = E.shape
    alpha, scale = _forward(A, E, p0)
    beta = np.empty((n, K))
    beta[n - 1] = 1.0
    xi = np.zeros((K, K))
    for t in range(n - 2, -1, -1):
        w = E[t + 1] * beta[t + 1] / scale[t + 1]
        beta[t] = (A * w[None, :]).sum(axis=1)
        xi += alpha[t][:, None] * A * w[None, :]
    gamma = alpha * beta
    log_evidence = float(c_init + c_emit.sum() + (n - 1) * c_tr + np.log(scale).sum())
    return gamma, xi, log_evidence


def backward_sample(log_init, log_trans, log_emit, uniforms):
    A, E, p0, _, _, _ = _scaled_inputs(log_init, log_trans, log_emit)
    n, K = E.shape
    alpha, _ = _forward(A, E, p0)
    path = np.empty(n, dtype=np.int64)
    w = alpha[n - 1]
    cdf = np.cumsum(w)
    path[n - 1] = min(int(np.searchsorted(cdf, uniforms[n - 1] * cdf[-1], side="right")), K - 1)
    for t in range(n - 2, -1, -1):
        w = alpha[t] * A[:, path[t + 1]]
        cdf = np.cumsum(w)
        if not cdf[-1] > 0:
            raise InfeasiblePathError(f"backward sampling dead end at t={t}")
        path[t] = min(int(np.searchsorted(cdf, uniforms[t] * cdf[-1], side="right")), K - 1)
    return path


# ---------------------------------------------------------------------------
# ICM
# ---------------------------------------------------------------------------

def _prior_score(counts, alpha, lg_alpha, alpha_row, lg_alpha_row, log_init, first):
    K = counts.shape[0]
    total = log_init[first]
    for l in range(K):
        n_l = 0
        row = 0.0
        for j in range(K):
            c = counts[l, j]
            n_l += c
            if alpha[l, j] > 0.0:
                if c:
                    row += _log_gamma_scalar(alpha[l, j] + c) - lg_alpha[l, j]
            elif c:
                return NEG_INF
        if n_l:
            total += lg_alpha_row[l] - _log_gamma_scalar(alpha_row[l] + n_l) + row
    return total


def nix_state_term(m, s, ss, xi_k, kappa0, nu0, nu0tau0sq):
    """Log marginal likelihood contribution of one state from its moment sums."""
    if m == 0:
        return 0.0
    kn = kappa0 + m
    nn = nu0 + m
    xbar = s / m
    sq = ss - s * xbar
    if m == 1 or sq < 0.0:
        sq = 0.0
    d = xbar - xi_k
    v = nu0tau0sq + sq + kappa0 * m / kn * d * d
    return (_log_gamma_scalar(0.5 * nn) - _log_gamma_scalar(0.5 * nu0)
            + 0.5 * math.log(kappa0 / kn) + 0.5 * nu0 * math.log(nu0tau0sq)
            - 0.5 * nn * math.log(v) - 0.5 * m * _LOG_PI)


def icm_sweep(path, counts, log_init, alpha, lg_alpha, alpha_row, lg_alpha_row,
              log_emit, obs, nix, m, s, ss, margin):
    """One left-to-right ICM sweep, updating ``path`` and the stats in place.

    ``nix`` is None for fixed emissions, else (xi, kappa0, nu0, nu0tau0sq).
    Returns the list of accepted moves as (t, old, new, score_after) and the
    score of the path at the end of the sweep.
    """
    n = path.shape[0]
    K = counts.shape[0]
    moves = []
    if nix is None:
        em_total = float(log_emit[np.arange(n), path].sum())
    else:
        xi, kappa0, nu0, nu0tau0sq = nix
        state_terms = [nix_state_term(m[k], s[k], ss[k], xi[k], kappa0, nu0, nu0tau0sq)
                       for k in range(K)]
    score = NEG_INF
    for t in range(n):
        a = path[t]
        p = path[t - 1] if t > 0 else -1
        q = path[t + 1] if t < n - 1 else -1
        if p >= 0:
            counts[p, a] -= 1
        if q >= 0:
            counts[a, q] -= 1
        best_b = -1
        best = NEG_INF
        cur = NEG_INF
        if nix is not None:
            x = obs[t]
            base_a = nix_state_term(m[a] - 1, s[a] - x, ss[a] - x * x, xi[a], kappa0, nu0, nu0tau0sq)
        for b in range(K):
            if p >= 0:
                counts[p, b] += 1
            if q >= 0:
                counts[b, q] += 1
            first = b if t == 0 else path[0]
            val = _prior_score(counts, alpha, lg_alpha, alpha_row, lg_alpha_row, log_init, first)
            if p >= 0:
                counts[p, b] -= 1
            if q >= 0:
                counts[b, q] -= 1
            if val != NEG_INF:
                if nix is None:
                    val += em_total - log_emit[t, a] + log_emit[t, b]
                else:
                    em = 0.0
                    for k in range(K):
                        if k == b and k == a:
                            em += state_terms[k]
                        elif k == b:
                            em += nix_state_term(m[k] + 1, s[k] + x, ss[k] + x * x, xi[k],
                                                 kappa0, nu0, nu0tau0sq)
                        elif k == a:
                            em += base_a
                        else:
                            em += state_terms[k]
                    val += em
            if b == a:
                cur = val
            if val > best:
                best = val
                best_b = b
        new = a
        if best_b >= 0 and best_b != a and (cur == NEG_INF or best > cur + margin):
            new = best_b
        if p >= 0:
            counts[p, new] += 1
        if q >= 0:
            counts[new, q] += 1
        if new != a:
            path[t] = new
            x = obs[t]
            m[a] -= 1
            s[a] -= x
            ss[a] -= x * x
            m[new] += 1
            s[new] += x
            ss[new] += x * x
            if nix is None:
                em_total += log_emit[t, new] - log_emit[t, a]
            else:
                state_terms[a] = nix_state_term(m[a], s[a], ss[a], xi[a], kappa0, nu0, nu0tau0sq)
                state_terms[new] = nix_state_term(m[new], s[new], ss[new], xi[new],
                                                  kappa0, nu0, nu0tau0sq)
            score = best
            moves.append((t, int(a), int(new), float(best)))
        else:
            score = cur
    return moves, float(score)
