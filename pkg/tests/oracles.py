"""Independent reference computations used by the tests.

None of these call into the package's scoring code; they are written from
the model definitions directly (sequential predictives, quadrature, plain
enumeration) so they can catch algebra mistakes in the closed forms.
"""
import itertools
import math

import numpy as np
from scipy import integrate, special, stats


def polya_urn_log_prior(path, alpha, initial):
    """ln p(y) as a product of sequential Dirichlet predictive probabilities."""
    K = alpha.shape[0]
    counts = np.zeros((K, K))
    total = math.log(initial[path[0]])
    for a, b in zip(path[:-1], path[1:]):
        total += math.log((alpha[a, b] + counts[a, b]) / (alpha[a].sum() + counts[a].sum()))
        counts[a, b] += 1
    return total


def student_t_sequential(xs, xi, kappa0, nu0, tau0sq):
    """ln p(x_1..x_m) under one NIX-normal state, as a product of predictives."""
    kappa, nu, mu, nutau2 = kappa0, nu0, xi, nu0 * tau0sq
    total = 0.0
    for x in xs:
        scale2 = nutau2 / nu * (1.0 + 1.0 / kappa)
        total += stats.t.logpdf(x, df=nu, loc=mu, scale=math.sqrt(scale2))
        # one-point conjugate update
        nutau2 += kappa / (kappa + 1.0) * (x - mu) ** 2
        mu = (kappa * mu + x) / (kappa + 1.0)
        kappa += 1.0
        nu += 1.0
    return total


def enumerate_log_joint(obs, K, score):
    """(paths, scores) over all K^n paths with a caller-supplied scorer."""
    n = len(obs)
    paths = np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64)
    return paths, np.array([score(p) for p in paths])


def _log_nix_density(mu, s2, xi, kappa0, nu0, tau0sq):
    log_norm = -0.5 * math.log(2 * math.pi * s2 / kappa0) - kappa0 * (mu - xi) ** 2 / (2 * s2)
    h = 0.5 * nu0
    log_ich = (h * math.log(h * tau0sq) - special.gammaln(h) - (h + 1) * math.log(s2)
               - nu0 * tau0sq / (2 * s2))
    return log_norm + log_ich


def tempered_nix_quadrature(xs, beta, xi, kappa0, nu0, tau0sq):
    """ln of the double integral of [prod N(x|mu,s2) NIX(mu,s2)]^beta over (mu, ln s2)."""
    xs = np.asarray(xs, dtype=float)

    def logf(mu, ls2):
        s2 = math.exp(ls2)
        ll = float(np.sum(-0.5 * math.log(2 * math.pi * s2) - (xs - mu) ** 2 / (2 * s2)))
        return beta * (ll + _log_nix_density(mu, s2, xi, kappa0, nu0, tau0sq)) + ls2

    # shift by the integrand's maximum on a coarse grid
    grid_mu = np.linspace(-3, 3, 121)
    grid_ls = np.linspace(-6, 4, 121)
    shift = max(logf(m, s) for m in grid_mu for s in grid_ls)
    val, _ = integrate.dblquad(lambda mu, ls2: math.exp(logf(mu, ls2) - shift),
                               -12.0, 8.0, -12.0, 12.0, epsabs=1e-13, epsrel=1e-11)
    return math.log(val) + shift


def tempered_two_state_quadrature(x, y, beta, alpha, means, variances, initial):
    """K=2 fixed emissions: ln of the integral over (p11, p22) of [p(y,x|P) pi(P)]^beta."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    n = np.zeros((2, 2))
    np.add.at(n, (y[:-1], y[1:]), 1)
    ll_emit = float(np.sum(-0.5 * np.log(2 * np.pi * variances[y])
                           - (x - means[y]) ** 2 / (2 * variances[y])))
    const = beta * (math.log(initial[y[0]]) + ll_emit)
    log_b = [special.gammaln(alpha[l].sum()) - special.gammaln(alpha[l]).sum() for l in range(2)]

    def row(p, l):
        # p = P(stay in l); row l is (p, 1-p) for l=0 and (1-p, p) for l=1
        q = (p, 1 - p) if l == 0 else (1 - p, p)
        a = alpha[l]
        logv = log_b[l]
        for j in range(2):
            logv += (a[j] - 1 + n[l, j]) * math.log(q[j])
        return math.exp(beta * logv)

    val, _ = integrate.dblquad(lambda p22, p11: row(p11, 0) * row(p22, 1), 0, 1, 0, 1,
                               epsabs=1e-14, epsrel=1e-11)
    return const + math.log(val)
