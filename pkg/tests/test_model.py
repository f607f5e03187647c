import math

import numpy as np
import pytest
from oracles import (polya_urn_log_prior, student_t_sequential, tempered_nix_quadrature,
                     tempered_two_state_quadrature)

from bayesvit.errors import (DomainError, InfeasiblePathError, InfeasibleTemperatureError,
                             ModeInfeasibleError)
from bayesvit.model import (DirichletPrior, FixedEmissions, NixEmissions, NixPrior,
                            log_emission_marginal, log_joint, log_joint_batch, log_path_prior,
                            log_tempered_joint, nix_posterior, path_stats, posterior_modes,
                            tempered_correction, tempered_theta_sample, uniform_initial)
from bayesvit.numerics import Rng

# Frozen: ln of the Student-t(50, 0, 0.25*1.1) density at 1.0 (mpmath, 40 digits)
T_PREDICTIVE_AT_ONE = -2.068654705541200247437


def _nix(xi=(0.0,), kappa0=10.0, nu0=50.0, tau0sq=0.25):
    return NixEmissions(NixPrior(np.asarray(xi, dtype=float), kappa0, nu0, tau0sq))


# --- path_stats -------------------------------------------------------------

def test_path_stats_examples():
    s = path_stats([0, 0, 0], [1.0, 2.0, 3.0], 2)
    assert s.counts.tolist() == [[2, 0], [0, 0]]
    assert s.m.tolist() == [3, 0] and s.sums.tolist() == [6.0, 0.0]
    assert s.sumsq.tolist() == [14.0, 0.0]
    s = path_stats([0, 1, 0, 1], np.zeros(4), 2)
    assert s.counts.tolist() == [[0, 2], [1, 0]]
    assert s.first_state == 0


def test_path_stats_rescan():
    g = np.random.default_rng(3)
    y = g.integers(0, 4, size=50)
    x = g.normal(size=50)
    s = path_stats(y, x, 4)
    counts = np.zeros((4, 4), dtype=int)
    for t in range(49):
        counts[y[t], y[t + 1]] += 1
    assert np.array_equal(s.counts, counts)
    for k in range(4):
        sel = [x[t] for t in range(50) if y[t] == k]
        assert s.m[k] == len(sel)
        assert s.sums[k] == pytest.approx(sum(sel), abs=1e-12)
        assert s.sumsq[k] == pytest.approx(sum(v * v for v in sel), abs=1e-12)
    assert s.row_totals.sum() == 49 and s.m.sum() == 50


def test_path_stats_rejects_bad_path():
    with pytest.raises(DomainError):
        path_stats([0, 2], [0.0, 0.0], 2)
    with pytest.raises(DomainError):
        path_stats([0, 1], [0.0], 2)


# --- path prior ----------------------------------------------------------------

def test_log_path_prior_single_site():
    prior = DirichletPrior(2.0, [[0.5, 0.5], [0.5, 0.5]])
    s = path_stats([1], [0.0], 2)
    assert log_path_prior(s, prior, [0.3, 0.7]) == pytest.approx(math.log(0.7), abs=1e-15)


def test_log_path_prior_uniform_example():
    prior = DirichletPrior(2.0, [[0.5, 0.5], [0.5, 0.5]])
    v = log_path_prior(path_stats([0, 0, 0], np.zeros(3), 2), prior, [0.5, 0.5])
    assert abs(v - math.log(1 / 6)) < 1e-12
    assert abs(math.log(0.5 * 0.5 * (2 / 3)) - math.log(1 / 6)) < 1e-15


@pytest.mark.parametrize("seed", range(10))
def test_log_path_prior_polya_urn(seed):
    g = np.random.default_rng(seed)
    K = int(g.integers(2, 5))
    n = int(g.integers(2, 51))
    Q = g.dirichlet(np.ones(K), size=K)
    prior = DirichletPrior(float(g.uniform(0.5, 50)), Q)
    initial = g.dirichlet(np.ones(K))
    y = g.integers(0, K, size=n)
    v = log_path_prior(path_stats(y, np.zeros(n), K), prior, initial)
    assert abs(v - polya_urn_log_prior(y, prior.alpha, initial)) < 1e-10


def test_log_path_prior_monte_carlo():
    g = np.random.default_rng(7)
    Q = np.array([[0.7, 0.3], [0.4, 0.6]])
    prior = DirichletPrior(4.0, Q)
    initial = np.array([0.5, 0.5])
    y = np.array([0, 0, 1, 1, 0])
    N = 100_000
    rows = [g.dirichlet(prior.alpha[l], size=N) for l in range(2)]
    lik = np.full(N, initial[y[0]])
    for a, b in zip(y[:-1], y[1:]):
        lik *= rows[a][:, b]
    se = lik.std(ddof=1) / math.sqrt(N)
    exact = math.exp(log_path_prior(path_stats(y, np.zeros(5), 2), prior, initial))
    assert abs(lik.mean() - exact) <= 3 * se


def test_structural_zero_is_infeasible():
    prior = DirichletPrior(5.0, [[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(InfeasiblePathError):
        log_path_prior(path_stats([0, 1], np.zeros(2), 2), prior, [0.5, 0.5])
    batch = log_joint_batch([[0, 1], [0, 0]], np.zeros(2), prior, FixedEmissions([0, 0], [1, 1]))
    assert batch[0] == -np.inf and np.isfinite(batch[1])


def test_dirichlet_prior_validation():
    with pytest.raises(DomainError):
        DirichletPrior(0.0, [[1.0]])
    with pytest.raises(DomainError):
        DirichletPrior(1.0, [[0.5, 0.4], [0.5, 0.5]])
    assert np.array_equal(DirichletPrior.flat(3).alpha, np.ones((3, 3)))


# --- emission marginal ----------------------------------------------------------

def test_empty_state_contributes_nothing():
    mode = _nix(xi=(0.0, 1.0))
    s = path_stats([0, 0], [0.3, -0.1], 2)
    only = path_stats([0, 0], [0.3, -0.1], 1)
    assert log_emission_marginal(s, mode) == pytest.approx(
        log_emission_marginal(only, _nix(xi=(0.0,))), abs=1e-14)


def test_one_point_student_t():
    v = log_emission_marginal(path_stats([0], [1.0], 1), _nix())
    assert abs(v - T_PREDICTIVE_AT_ONE) < 1e-12
    assert abs(student_t_sequential([1.0], 0.0, 10.0, 50.0, 0.25) - T_PREDICTIVE_AT_ONE) < 1e-12


@pytest.mark.parametrize("seed", range(8))
def test_chain_rule_any_order(seed):
    g = np.random.default_rng(seed)
    m = int(g.integers(2, 12))
    x = g.normal(0.5, 1.0, size=m)
    xi, k0, nu0, t2 = float(g.normal()), float(g.uniform(0.5, 20)), float(g.uniform(1, 60)), float(
        g.uniform(0.1, 2))
    mode = _nix(xi=(xi,), kappa0=k0, nu0=nu0, tau0sq=t2)
    v = log_emission_marginal(path_stats(np.zeros(m, dtype=int), x, 1), mode)
    assert abs(v - student_t_sequential(x, xi, k0, nu0, t2)) < 1e-9
    assert abs(v - student_t_sequential(g.permutation(x), xi, k0, nu0, t2)) < 1e-9


def test_emission_marginal_monte_carlo():
    g = np.random.default_rng(17)
    x = np.array([0.2, -0.4, 0.9])
    xi, k0, nu0, t2 = 0.1, 2.0, 6.0, 0.5
    N = 100_000
    s2 = nu0 * t2 / g.chisquare(nu0, size=N)
    mu = g.normal(xi, np.sqrt(s2 / k0))
    ll = np.sum(-0.5 * np.log(2 * np.pi * s2[:, None]) - (x[None] - mu[:, None]) ** 2
                / (2 * s2[:, None]), axis=1)
    lik = np.exp(ll)
    exact = math.exp(log_emission_marginal(path_stats([0, 0, 0], x, 1),
                                           _nix(xi=(xi,), kappa0=k0, nu0=nu0, tau0sq=t2)))
    assert abs(lik.mean() - exact) <= 3 * lik.std(ddof=1) / math.sqrt(N)


def test_fixed_mode_emission_marginal():
    x = np.array([0.1, 1.2, -0.3])
    mode = FixedEmissions([0.0, 1.0], [0.5, 2.0])
    y = [0, 1, 0]
    expected = sum(-0.5 * math.log(2 * math.pi * mode.variances[k])
                   - (xt - mode.means[k]) ** 2 / (2 * mode.variances[k]) for xt, k in zip(x, y))
    assert log_emission_marginal(path_stats(y, x, 2), mode) == pytest.approx(expected, abs=1e-12)


# --- log_joint -------------------------------------------------------------------

def test_log_joint_composition_and_batch():
    g = np.random.default_rng(4)
    x = g.normal(size=9)
    prior = DirichletPrior(6.0, g.dirichlet(np.ones(3), size=3))
    paths = g.integers(0, 3, size=(20, 9))
    for mode in (FixedEmissions([-1, 0, 1], [0.5, 0.5, 1.0]), _nix(xi=(-1, 0, 1))):
        batch = log_joint_batch(paths, x, prior, mode)
        for p, b in zip(paths, batch):
            s = path_stats(p, x, 3)
            parts = log_path_prior(s, prior, uniform_initial(3)) + log_emission_marginal(s, mode)
            assert log_joint(p, x, prior, mode) == parts
            assert b == pytest.approx(parts, abs=1e-9)


def test_log_joint_relabeling():
    g = np.random.default_rng(5)
    x = g.normal(size=8)
    Q = g.dirichlet(np.ones(3), size=3)
    init = g.dirichlet(np.ones(3))
    y = g.integers(0, 3, size=8)
    perm = np.array([2, 0, 1])  # new label of old state k is perm[k]
    inv = np.argsort(perm)
    means, var = np.array([-1.0, 0.2, 0.9]), np.array([0.3, 0.5, 0.8])
    a = log_joint(y, x, DirichletPrior(4.0, Q), FixedEmissions(means, var), init)
    b = log_joint(perm[y], x, DirichletPrior(4.0, Q[np.ix_(inv, inv)]),
                  FixedEmissions(means[inv], var[inv]), init[inv])
    assert a == pytest.approx(b, abs=1e-10)
    a = log_joint(y, x, DirichletPrior(4.0, Q), _nix(xi=means), init)
    b = log_joint(perm[y], x, DirichletPrior(4.0, Q[np.ix_(inv, inv)]), _nix(xi=means[inv]),
                  init[inv])
    assert a == pytest.approx(b, abs=1e-10)


# --- posterior updates and modes ---------------------------------------------------

def test_nix_posterior_hand_example():
    post = nix_posterior(path_stats([0], [1.0], 1), NixPrior([0.0], 10.0, 50.0, 0.25))
    assert post.kappa[0] == 11 and post.nu[0] == 51
    assert post.mu[0] == pytest.approx(1 / 11, abs=1e-15)
    assert post.nutau2[0] == pytest.approx(12.5 + 10 / 11, abs=1e-12)


def test_nix_posterior_limits():
    prior = NixPrior([0.5, -0.5], 10.0, 50.0, 0.25)
    post = nix_posterior(path_stats([0, 0, 0], [1.0, 2.0, 3.0], 2), prior)
    assert post.kappa[1] == 10 and post.nu[1] == 50 and post.mu[1] == -0.5
    assert post.nutau2[1] == pytest.approx(12.5)
    strong = NixPrior([0.5], 1e12, 50.0, 0.25)
    assert abs(nix_posterior(path_stats([0, 0], [4.0, 5.0], 1), strong).mu[0] - 0.5) < 1e-6


def test_posterior_modes_examples():
    fixed = FixedEmissions([0, 1], [1, 1])
    p = posterior_modes(path_stats([0, 1], [0, 0], 2), DirichletPrior(4.0, np.full((2, 2), 0.5)),
                        fixed)
    assert p.trans[1].tolist() == [0.5, 0.5]
    y = [0, 0, 0, 0, 1]
    p = posterior_modes(path_stats(y, np.zeros(5), 2), DirichletPrior(4.0, np.full((2, 2), 0.5)),
                        fixed)
    assert p.trans[0, 0] == pytest.approx(2 / 3, abs=1e-15)
    q = np.full((4, 4), 0.2) + np.eye(4) * 0.2
    with pytest.raises(ModeInfeasibleError):
        posterior_modes(path_stats(np.arange(4), np.zeros(4), 4), DirichletPrior(5.0, q / q.sum(1)),
                        FixedEmissions(np.zeros(4), np.ones(4)))


def test_posterior_modes_nix_variance():
    mode = _nix(xi=(0.0,))
    s = path_stats([0, 0, 0], [0.5, 1.0, -0.2], 1)
    p = posterior_modes(s, DirichletPrior(3.0, [[1.0]]), mode)
    post = nix_posterior(s, mode.prior)
    assert p.means[0] == post.mu[0]
    assert p.variances[0] == pytest.approx(post.nutau2[0] / (post.nu[0] + 2))


def test_posterior_mode_is_local_max():
    g = np.random.default_rng(9)
    prior = DirichletPrior(8.0, g.dirichlet(np.ones(3) * 3, size=3))
    y = g.integers(0, 3, size=40)
    s = path_stats(y, np.zeros(40), 3)
    P = posterior_modes(s, prior, FixedEmissions(np.zeros(3), np.ones(3))).trans
    a = prior.alpha + s.counts

    def logdens(P):
        return float(np.sum((a - 1) * np.log(P)))

    base = logdens(P)
    for l in range(3):
        for i in range(3):
            for j in range(3):
                if i == j:
                    continue
                Pp = P.copy()
                Pp[l, i] += 1e-6
                Pp[l, j] -= 1e-6
                assert logdens(Pp) < base


# --- tempering ---------------------------------------------------------------------------

def test_tempered_beta_one_is_log_joint():
    g = np.random.default_rng(2)
    x = g.normal(size=7)
    prior = DirichletPrior(5.0, g.dirichlet(np.ones(2), size=2))
    for mode in (FixedEmissions([0, 1], [1, 1]), _nix(xi=(0.0, 1.0))):
        for _ in range(5):
            y = g.integers(0, 2, size=7)
            s = path_stats(y, x, 2)
            assert tempered_correction(1.0, s, prior, mode) == 0.0
            assert log_tempered_joint(1.0, s, x, prior, mode) == log_joint(y, x, prior, mode)


def test_tempered_nix_quadrature_beta_two():
    x = [0.3, -0.5, 1.1]
    mode = _nix(xi=(0.1,), kappa0=2.0, nu0=4.0, tau0sq=0.5)
    v = log_tempered_joint(2.0, path_stats([0, 0, 0], x, 1), x, DirichletPrior(3.0, [[1.0]]), mode)
    assert abs(v - tempered_nix_quadrature(x, 2.0, 0.1, 2.0, 4.0, 0.5)) < 1e-5


def test_tempered_dirichlet_quadrature_beta_two():
    Q = np.array([[0.6, 0.4], [0.3, 0.7]])
    prior = DirichletPrior(3.0, Q)
    mode = FixedEmissions([0.0, 1.0], [1.0, 1.0])
    x = [0.2, 0.9, -0.1, 1.3]
    y = [0, 1, 1, 0]
    v = log_tempered_joint(2.0, path_stats(y, x, 2), x, prior, mode)
    ref = tempered_two_state_quadrature(x, y, 2.0, prior.alpha, mode.means, mode.variances,
                                        [0.5, 0.5])
    assert abs(v - ref) < 1e-5


def test_tempered_infeasible():
    q = np.full((2, 2), 0.1) + np.eye(2) * 0.8
    prior = DirichletPrior(5.0, q)  # off-diagonal alpha = 0.5
    s = path_stats([0, 0, 0], np.zeros(3), 2)
    with pytest.raises(InfeasibleTemperatureError):
        tempered_correction(3.0, s, prior, FixedEmissions([0, 1], [1, 1]))
    with pytest.raises(DomainError):
        tempered_correction(0.5, s, prior, FixedEmissions([0, 1], [1, 1]))


def test_tempered_sample_beta_one_mean():
    prior = DirichletPrior(4.0, [[0.5, 0.5], [0.25, 0.75]])
    y = [0, 0, 1, 1, 1, 0, 1]
    s = path_stats(y, np.zeros(7), 2)
    rng = Rng(12)
    N = 100_000
    draws = np.array([tempered_theta_sample(1.0, s, prior, FixedEmissions([0, 1], [1, 1]),
                                            rng.split(i)).trans for i in range(N)])
    a = prior.alpha + s.counts
    for l in range(2):
        d = draws[:, l, 0]
        assert abs(d.mean() - a[l, 0] / a[l].sum()) <= 3 * d.std(ddof=1) / math.sqrt(N)


def test_tempered_sample_concentrates():
    prior = DirichletPrior(4.0, [[0.5, 0.5], [0.5, 0.5]])
    mode = _nix(xi=(0.0, 1.0))
    x = np.array([0.1, -0.2, 0.3, 1.1, 0.9, 1.2])
    s = path_stats([0, 0, 0, 1, 1, 1], x, 2)
    variances = []
    for beta in (1.0, 5.0, 50.0):
        rng = Rng(int(beta))
        th = [tempered_theta_sample(beta, s, prior, mode, rng.split(i)) for i in range(10_000)]
        variances.append((np.var([t.trans[0, 0] for t in th]), np.var([t.means[0] for t in th]),
                          np.var([t.variances[0] for t in th])))
    for a, b in zip(variances, variances[1:]):
        assert all(bi < ai for ai, bi in zip(a, b))


def test_tempered_sample_deterministic():
    prior = DirichletPrior(4.0, [[0.5, 0.5], [0.5, 0.5]])
    s = path_stats([0, 1, 1], [0.0, 1.0, 1.2], 2)
    a = tempered_theta_sample(3.0, s, prior, _nix(xi=(0, 1)), Rng(4))
    b = tempered_theta_sample(3.0, s, prior, _nix(xi=(0, 1)), Rng(4))
    assert np.array_equal(a.trans, b.trans) and np.array_equal(a.means, b.means)
