# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dynamic-programming kernels (see _pykernels.py for the reference)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, INFINITY, M_PI

from .errors import InfeasiblePathError

cnp.import_array()

BACKEND = "cython"

cdef double NEG_INF = -INFINITY
cdef double _SHIFT = 8.0
cdef double _HALF_LOG_2PI = 0.5 * log(2.0 * M_PI)
cdef double _LOG_PI = log(M_PI)


cdef inline double c_log_gamma(double x) noexcept nogil:
    cdef double prod = 1.0
    cdef double r, r2, series
    while x < _SHIFT:
        prod *= x
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    series = r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (
        1.0 / 1680.0 - r2 * (1.0 / 1188.0 - r2 * (691.0 / 360360.0 - r2 / 156.0))))))
    return (x - 0.5) * log(x) - x + _HALF_LOG_2PI + series - log(prod)


cdef inline double c_digamma(double x) noexcept nogil:
    cdef double acc = 0.0
    cdef double r, r2, series
    while x < _SHIFT:
        acc -= 1.0 / x
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    series = r2 * (1.0 / 12.0 - r2 * (1.0 / 120.0 - r2 * (1.0 / 252.0 - r2 * (
        1.0 / 240.0 - r2 * (1.0 / 132.0 - r2 * (691.0 / 32760.0 - r2 / 12.0))))))
    return acc + log(x) - 0.5 * r - series


def log_gamma_array(double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = c_log_gamma(x[i])
    return out


def digamma_array(double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = c_digamma(x[i])
    return out


def viterbi(double[::1] log_init, double[:, ::1] log_trans, double[:, ::1] log_emit):
    cdef Py_ssize_t n = log_emit.shape[0], K = log_emit.shape[1]
    cdef Py_ssize_t t, l, k, arg
    cdef double best, v, top
    back_arr = np.zeros((n, K), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] back = back_arr
    delta_arr = np.empty(K)
    new_arr = np.empty(K)
    cdef double[::1] delta = delta_arr
    cdef double[::1] nd = new_arr
    path_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] path = path_arr

    top = NEG_INF
    for k in range(K):
        delta[k] = log_init[k] + log_emit[0, k]
        if delta[k] > top:
            top = delta[k]
    if top == NEG_INF:
        raise InfeasiblePathError("no feasible state at t=0")
    for k in range(K):
        delta[k] = delta[k] - top
    for t in range(1, n):
        top = NEG_INF
        for k in range(K):
            best = delta[0] + log_trans[0, k]
            arg = 0
            for l in range(1, K):
                v = delta[l] + log_trans[l, k]
                if v > best:
                    best = v
                    arg = l
            back[t, k] = arg
            nd[k] = best + log_emit[t, k]
            if nd[k] > top:
                top = nd[k]
        if top == NEG_INF:
            raise InfeasiblePathError(f"no feasible state at t={t}")
        for k in range(K):
            delta[k] = nd[k] - top
    arg = 0
    best = delta[0]
    for k in range(1, K):
        if delta[k] > best:
            best = delta[k]
            arg = k
    path[n - 1] = arg
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path_arr


cdef tuple _scaled_inputs(double[::1] log_init, double[:, ::1] log_trans, double[:, ::1] log_emit):
    cdef Py_ssize_t n = log_emit.shape[0], K = log_emit.shape[1]
    cdef Py_ssize_t t, l, k
    cdef double c_tr = NEG_INF, c_init = NEG_INF, m
    A_arr = np.empty((K, K))
    E_arr = np.empty((n, K))
    p0_arr = np.empty(K)
    c_emit_arr = np.empty(n)
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] E = E_arr
    cdef double[::1] p0 = p0_arr
    cdef double[::1] c_emit = c_emit_arr
    cdef bint dead = False
    with nogil:
        for l in range(K):
            if log_init[l] > c_init:
                c_init = log_init[l]
            for k in range(K):
                if log_trans[l, k] > c_tr:
                    c_tr = log_trans[l, k]
        if c_tr == NEG_INF or c_init == NEG_INF:
            dead = True
        else:
            for l in range(K):
                p0[l] = exp(log_init[l] - c_init)
                for k in range(K):
                    A[l, k] = exp(log_trans[l, k] - c_tr)
            for t in range(n):
                m = NEG_INF
                for k in range(K):
                    if log_emit[t, k] > m:
                        m = log_emit[t, k]
                if m == NEG_INF:
                    dead = True
                    break
                c_emit[t] = m
                for k in range(K):
                    E[t, k] = exp(log_emit[t, k] - m)
    if dead:
        raise InfeasiblePathError("an all -inf row or site in the pseudo-HMM")
    return A_arr, E_arr, p0_arr, c_tr, c_init, c_emit_arr


cdef void _forward(double[:, ::1] A, double[:, ::1] E, double[::1] p0,
                   double[:, ::1] alpha, double[::1] scale, Py_ssize_t* fail) noexcept nogil:
    cdef Py_ssize_t n = E.shape[0], K = E.shape[1]
    cdef Py_ssize_t t, l, k
    cdef double s, acc
    s = 0.0
    for k in range(K):
        alpha[0, k] = p0[k] * E[0, k]
        s += alpha[0, k]
    if not s > 0:
        fail[0] = 0
        return
    for k in range(K):
        alpha[0, k] = alpha[0, k] / s
    scale[0] = s
    for t in range(1, n):
        s = 0.0
        for k in range(K):
            acc = 0.0
            for l in range(K):
                acc = acc + alpha[t - 1, l] * A[l, k]
            alpha[t, k] = acc * E[t, k]
            s += alpha[t, k]
        if not s > 0:
            fail[0] = t
            return
        for k in range(K):
            alpha[t, k] = alpha[t, k] / s
        scale[t] = s


def forward_backward(double[::1] log_init, double[:, ::1] log_trans, double[:, ::1] log_emit):
    A_arr, E_arr, p0_arr, c_tr, c_init, c_emit = _scaled_inputs(log_init, log_trans, log_emit)
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] E = E_arr
    cdef double[::1] p0 = p0_arr
    cdef Py_ssize_t n = E.shape[0], K = E.shape[1]
    cdef Py_ssize_t t, l, k, fail = -1
    alpha_arr = np.empty((n, K))
    scale_arr = np.empty(n)
    beta_arr = np.empty((n, K))
    xi_arr = np.zeros((K, K))
    w_arr = np.empty(K)
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[::1] scale = scale_arr
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] xi = xi_arr
    cdef double[::1] w = w_arr
    cdef double acc
    with nogil:
        _forward(A, E, p0, alpha, scale, &fail)
    if fail >= 0:
        raise InfeasiblePathError(f"forward pass vanished at t={fail}")
    with nogil:
        for k in range(K):
            beta[n - 1, k] = 1.0
        for t in range(n - 2, -1, -1):
            for k in range(K):
                w[k] = E[t + 1, k] * beta[t + 1, k] / scale[t + 1]
            for l in range(K):
                acc = 0.0
                for k in range(K):
                    acc = acc + A[l, k] * w[k]
                    xi[l, k] = xi[l, k] + alpha[t, l] * A[l, k] * w[k]
                beta[t, l] = acc
        for t in range(n):
            for k in range(K):
                alpha[t, k] = alpha[t, k] * beta[t, k]
    cdef double[::1] ce = c_emit
    cdef double tot_emit = 0.0, tot_scale = 0.0
    for t in range(n):
        tot_emit += ce[t]
        tot_scale += log(scale[t])
    log_evidence = c_init + tot_emit + (n - 1) * c_tr + tot_scale
    return alpha_arr, xi_arr, log_evidence


def backward_sample(double[::1] log_init, double[:, ::1] log_trans, double[:, ::1] log_emit,
                    double[::1] uniforms):
    A_arr, E_arr, p0_arr, _, _, _ = _scaled_inputs(log_init, log_trans, log_emit)
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] E = E_arr
    cdef double[::1] p0 = p0_arr
    cdef Py_ssize_t n = E.shape[0], K = E.shape[1]
    cdef Py_ssize_t t, k, nxt, fail = -1
    alpha_arr = np.empty((n, K))
    scale_arr = np.empty(n)
    cdf_arr = np.empty(K)
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[::1] scale = scale_arr
    cdef double[::1] cdf = cdf_arr
    path_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] path = path_arr
    cdef double acc, target
    with nogil:
        _forward(A, E, p0, alpha, scale, &fail)
    if fail >= 0:
        raise InfeasiblePathError(f"forward pass vanished at t={fail}")
    for t in range(n - 1, -1, -1):
        acc = 0.0
        for k in range(K):
            if t == n - 1:
                acc = acc + alpha[t, k]
            else:
                acc = acc + alpha[t, k] * A[k, path[t + 1]]
            cdf[k] = acc
        if not acc > 0:
            raise InfeasiblePathError(f"backward sampling dead end at t={t}")
        target = uniforms[t] * acc
        nxt = K - 1
        for k in range(K):
            if cdf[k] > target:
                nxt = k
                break
        path[t] = nxt
    return path_arr


# ---------------------------------------------------------------------------
# ICM
# ---------------------------------------------------------------------------

cdef double _prior_score(cnp.int64_t[:, ::1] counts, double[:, ::1] alpha, double[:, ::1] lg_alpha,
                         double[::1] alpha_row, double[::1] lg_alpha_row, double[::1] log_init,
                         Py_ssize_t first) noexcept nogil:
    cdef Py_ssize_t K = counts.shape[0]
    cdef Py_ssize_t l, j
    cdef cnp.int64_t c, n_l
    cdef double total = log_init[first]
    cdef double row
    for l in range(K):
        n_l = 0
        row = 0.0
        for j in range(K):
            c = counts[l, j]
            n_l += c
            if alpha[l, j] > 0.0:
                if c:
                    row += c_log_gamma(alpha[l, j] + c) - lg_alpha[l, j]
            elif c:
                return NEG_INF
        if n_l:
            total += lg_alpha_row[l] - c_log_gamma(alpha_row[l] + n_l) + row
    return total


cdef double _nix_state_term(double m, double s, double ss, double xi_k, double kappa0,
                            double nu0, double nu0tau0sq) noexcept nogil:
    cdef double kn, nn, xbar, sq, d, v
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
    return (c_log_gamma(0.5 * nn) - c_log_gamma(0.5 * nu0)
            + 0.5 * log(kappa0 / kn) + 0.5 * nu0 * log(nu0tau0sq)
            - 0.5 * nn * log(v) - 0.5 * m * _LOG_PI)


def nix_state_term(double m, double s, double ss, double xi_k, double kappa0, double nu0,
                   double nu0tau0sq):
    return _nix_state_term(m, s, ss, xi_k, kappa0, nu0, nu0tau0sq)


def icm_sweep(cnp.int64_t[::1] path, cnp.int64_t[:, ::1] counts, double[::1] log_init,
              double[:, ::1] alpha, double[:, ::1] lg_alpha, double[::1] alpha_row,
              double[::1] lg_alpha_row, log_emit_obj, obs_obj, nix, m_obj, s_obj, ss_obj,
              double margin):
    cdef Py_ssize_t n = path.shape[0], K = counts.shape[0]
    cdef Py_ssize_t t, k, a, b, p, q, best_b, new, first
    cdef double best, cur, val, em, x = 0.0, base_a = 0.0, em_total = 0.0, score = NEG_INF
    cdef bint is_nix = nix is not None
    cdef double[:, ::1] log_emit
    cdef double[::1] obs, m, s, ss, xi, terms
    cdef double kappa0 = 0.0, nu0 = 0.0, nu0tau0sq = 0.0
    moves = []
    terms_arr = np.zeros(K)
    terms = terms_arr
    obs = obs_obj
    m = m_obj
    s = s_obj
    ss = ss_obj
    if is_nix:
        xi = np.ascontiguousarray(nix[0], dtype=float)
        kappa0 = nix[1]
        nu0 = nix[2]
        nu0tau0sq = nix[3]
        for k in range(K):
            terms[k] = _nix_state_term(m[k], s[k], ss[k], xi[k], kappa0, nu0, nu0tau0sq)
    else:
        log_emit = log_emit_obj
        # numpy pairwise summation, as in the reference backend
        em_total = float(np.asarray(log_emit_obj)[np.arange(n), np.asarray(path)].sum())
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
        if is_nix:
            x = obs[t]
            base_a = _nix_state_term(m[a] - 1, s[a] - x, ss[a] - x * x, xi[a], kappa0, nu0, nu0tau0sq)
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
                if not is_nix:
                    val += em_total - log_emit[t, a] + log_emit[t, b]
                else:
                    em = 0.0
                    for k in range(K):
                        if k == b and k == a:
                            em += terms[k]
                        elif k == b:
                            em += _nix_state_term(m[k] + 1, s[k] + x, ss[k] + x * x, xi[k],
                                                  kappa0, nu0, nu0tau0sq)
                        elif k == a:
                            em += base_a
                        else:
                            em += terms[k]
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
            if not is_nix:
                em_total += log_emit[t, new] - log_emit[t, a]
            else:
                terms[a] = _nix_state_term(m[a], s[a], ss[a], xi[a], kappa0, nu0, nu0tau0sq)
                terms[new] = _nix_state_term(m[new], s[new], ss[new], xi[new], kappa0, nu0, nu0tau0sq)
            score = best
            moves.append((t, int(a), int(new), float(best)))
        else:
            score = cur
    return moves, float(score)
