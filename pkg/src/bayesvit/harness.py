"""Experiment protocol: initial sequences, exhaustive oracle and comparison sweeps."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (BayesVitError, DomainError, InfeasiblePathError,
                     InfeasibleTemperatureError, InstanceTooLargeError, ModeInfeasibleError)
from .hmm import HmmParams, generate_data, sample_markov_chain, viterbi
from .model import DirichletPrior, FixedEmissions, NixEmissions, NixPrior, log_joint, log_joint_batch
from .numerics import Dirichlet, Rng, sample
from .segmenters import METHODS, SaSchedule, SegmenterConfig

PAPER_MEANS = (-0.7, 0.0, 0.7, 1.4)
PAPER_VARIANCE = 0.25
PAPER_N = 600
PAPER_M_GRID = (600, 150, 50, 10, 5)
INIT_ALPHAS = (0.3, 0.5, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.5, 1.7, 1.9)
REALIZATIONS = 3
METHOD_ORDER = ("sEM", "sMM", "ICM", "VB", "B-EM", "EM", "SA")
TIE_TOL = 1e-6
MAX_ENUMERATION = 2 ** 20


def paper_truth() -> HmmParams:
    trans = np.full((4, 4), 0.4 / 3)
    np.fill_diagonal(trans, 0.6)
    return HmmParams(np.full(4, 0.25), trans, np.array(PAPER_MEANS), np.full(4, PAPER_VARIANCE))


def paper_q_matrices() -> dict:
    q3 = np.full((4, 4), 0.2)
    np.fill_diagonal(q3, 0.4)
    return {"Q1": np.full((4, 4), 0.25), "Q2": paper_truth().trans, "Q3": q3}


# ---------------------------------------------------------------------------
# Initial sequences
# ---------------------------------------------------------------------------

def stationary_distribution(B, tol: float = 1e-12):
    """Stationary vector of a row-stochastic matrix and a fallback flag.

    Returns (uniform, True) when the eigenvalue 1 is not simple or the
    residual cannot be brought below ``tol``.
    """
    B = np.asarray(B, dtype=float)
    K = B.shape[0]
    vals, vecs = np.linalg.eig(B.T)
    near_one = np.abs(vals - 1.0) < 1e-8
    if near_one.sum() != 1:
        return np.full(K, 1.0 / K), True
    v = np.real(vecs[:, int(np.argmax(near_one))])
    v = np.abs(v) / np.abs(v).sum()
    for _ in range(200):
        if np.max(np.abs(v @ B - v)) <= tol:
            return v, False
        v = v @ B
        v = v / v.sum()
    return np.full(K, 1.0 / K), True


@dataclass
class InitialSequences:
    paths: list
    labels: list
    fallback: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.paths)


def base_init_matrices(K: int, rng: Rng) -> list:
    """B_1..B_3 = Q1..Q3 (K=4 only) followed by 12 Dirichlet-row matrices."""
    mats = []
    if K == 4:
        mats.extend((name, q) for name, q in paper_q_matrices().items())
    for i, a in enumerate(INIT_ALPHAS):
        r = rng.split(("B", i))
        B = np.vstack([sample(r, Dirichlet((a,) * K)) for _ in range(K)])
        mats.append((f"Dir({a})", B))
    return mats


def generate_initial_sequences(emissions: FixedEmissions, Q, obs, rng: Rng) -> InitialSequences:
    """The 47-path protocol: 15 matrices x 3 chains + pointwise-max + Viterbi under Q.

    Only the final path depends on ``Q``.
    """
    x = np.asarray(obs, dtype=float)
    n = x.shape[0]
    K = emissions.means.shape[0]
    seqs = InitialSequences([], [], [])
    for bi, (name, B) in enumerate(base_init_matrices(K, rng.split("matrices"))):
        pi, flag = stationary_distribution(B)
        for r in range(REALIZATIONS):
            seqs.paths.append(sample_markov_chain(B, pi, n, rng.split(("chain", bi, r))))
            # flagged in the label so the fallback shows up in per_init.csv
            seqs.labels.append(f"B{bi + 1}:{name}#{r + 1}" + ("[uniform-start]" if flag else ""))
            seqs.fallback.append(flag)
    log_f = emissions.log_density(x)
    seqs.paths.append(np.argmax(log_f, axis=1).astype(np.int64))
    seqs.labels.append("pointwise-max")
    seqs.fallback.append(False)
    params = HmmParams(np.full(K, 1.0 / K), Q, emissions.means, emissions.variances)
    seqs.paths.append(viterbi(params.pseudo(x)))
    seqs.labels.append("viterbi-Q")
    seqs.fallback.append(False)
    return seqs


# ---------------------------------------------------------------------------
# Oracle and comparison
# ---------------------------------------------------------------------------

def _decode(indices, K, n):
    out = np.empty((indices.shape[0], n), dtype=np.int64)
    rem = indices.copy()
    for t in range(n - 1, -1, -1):
        out[:, t] = rem % K
        rem //= K
    return out


def enumerate_scores(obs, prior, mode, initial, K: int, n: int, chunk: int = 1 << 15) -> np.ndarray:
    """log_joint of every path, in lexicographic path order (vectorized)."""
    total = K ** n
    if total > MAX_ENUMERATION:
        raise InstanceTooLargeError(f"K^n = {total} exceeds {MAX_ENUMERATION}")
    out = np.empty(total)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        out[idx] = log_joint_batch(_decode(idx, K, n), obs, prior, mode, initial)
    return out


def brute_force_map(obs, prior, mode, initial, K: int, n: int):
    """Exact MAP path and its log_joint; ties go to the lexicographically first path.

    Near-maximal candidates from the vectorized pass are rescored with the
    scalar ``log_joint`` so the returned score is bit-identical to what the
    estimators report.
    """
    x = np.asarray(obs, dtype=float)
    if x.shape[0] != n:
        raise DomainError("n does not match the observations")
    scores = enumerate_scores(x, prior, mode, initial, K, n)
    top = scores.max()
    if top == -math.inf:
        raise InfeasiblePathError("every path is infeasible")
    cand = np.flatnonzero(scores >= top - 1e-9 * max(1.0, abs(top)))
    best_path, best = None, -math.inf
    for path in _decode(cand, K, n):
        s = log_joint(path, x, prior, mode, initial)
        if s > best:
            best, best_path = s, path
    return best_path, best


def compare_paths(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DomainError("paths differ in length")
    return int(np.count_nonzero(a != b))


# ---------------------------------------------------------------------------
# Sweep configuration
# ---------------------------------------------------------------------------

@dataclass
class EmissionConfig:
    mode: str = "fixed"
    xi: Optional[tuple] = None
    kappa0: float = 10.0
    nu0: float = 50.0
    tau0sq: float = 0.25

    def build(self, truth: HmmParams):
        if self.mode == "fixed":
            return FixedEmissions(truth.means, truth.variances)
        if self.mode == "nix":
            xi = truth.means if self.xi is None else np.asarray(self.xi, dtype=float)
            return NixEmissions(NixPrior(xi, self.kappa0, self.nu0, self.tau0sq))
        raise DomainError(f"unknown emission mode {self.mode!r}")


@dataclass
class ExperimentConfig:
    truth: HmmParams
    n: int
    q_ids: tuple
    m_values: tuple
    emission: EmissionConfig
    methods: tuple
    seeds: dict
    datasets: int = 1
    custom_q: dict = field(default_factory=dict)
    sa_beta_max: float = 10.2
    sa_steps: int = 47
    sa_samples: int = 15
    max_iters: int = 500
    tol: float = 1e-8
    vb_tol: Optional[float] = None
    inits: str = "paper47"

    def __post_init__(self):
        for key in ("data", "init", "sa"):
            if key not in self.seeds:
                raise DomainError(f"seed '{key}' is required")
        if not self.q_ids or not self.m_values:
            raise DomainError("hyperparameter grid must be non-empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise DomainError(f"unknown methods: {unknown}")
        if self.datasets < 1 or self.n < 1:
            raise DomainError("datasets and n must be positive")
        if self.inits not in ("paper47", "viterbi-only"):
            raise DomainError("inits must be 'paper47' or 'viterbi-only'")

    def q_matrix(self, qid: str) -> np.ndarray:
        if qid in self.custom_q:
            return np.asarray(self.custom_q[qid], dtype=float)
        mats = paper_q_matrices()
        if qid in mats and self.truth.K == 4:
            return mats[qid]
        raise DomainError(f"unknown Q matrix {qid!r}")

    def segmenter_config(self, sa_seed: int) -> SegmenterConfig:
        return SegmenterConfig(max_iters=self.max_iters, tol=self.tol,
                               sa_schedule=SaSchedule.linear(self.sa_beta_max, self.sa_steps, self.sa_samples),
                               seed=sa_seed)

    def dataset_seed(self, index: int) -> int:
        """Seed that alone reproduces dataset ``index`` (written to dataset files)."""
        r = Rng(int(self.seeds["data"])).split(("dataset", index))
        return int(r.gen.integers(2 ** 63))

    def dataset(self, index: int):
        return generate_data(self.truth, self.n, Rng(self.dataset_seed(index)))


@dataclass
class ResultRow:
    dataset: int
    q_id: str
    M: float
    method: str
    best_lnp: Optional[float]
    distinct_outputs: Optional[int]
    per_init: list
    best_path: Optional[np.ndarray] = None
    hamming_to_best: Optional[int] = None
    note: str = ""

    @property
    def feasible(self) -> bool:
        return self.best_lnp is not None

    @property
    def key(self):
        return (self.dataset, self.q_id, float(self.M), METHOD_ORDER.index(self.method)
                if self.method in METHOD_ORDER else len(METHOD_ORDER), self.method)


@dataclass
class SweepResult:
    rows: list
    init_labels: dict


_NA_ERRORS = (ModeInfeasibleError, InfeasibleTemperatureError, InfeasiblePathError)


def _best_index(scores, paths):
    best = None
    for i, s in enumerate(scores):
        if s is None:
            continue
        if best is None or s > scores[best]:
            best = i
    return best


def _run_dataset(cfg: ExperimentConfig, d: int):
    x, _ = cfg.dataset(d)
    truth = cfg.truth
    known = FixedEmissions(truth.means, truth.variances)
    mode = cfg.emission.build(truth)
    init_rng = Rng(int(cfg.seeds["init"])).split(("inits", d))
    rows = []
    labels = {}
    em_cache = {}
    for qid in cfg.q_ids:
        Q = cfg.q_matrix(qid)
        if cfg.inits == "paper47":
            seqs = generate_initial_sequences(known, Q, x, init_rng)
        else:
            params = HmmParams(np.full(truth.K, 1.0 / truth.K), Q, truth.means, truth.variances)
            seqs = InitialSequences([viterbi(params.pseudo(x))], ["viterbi-Q"], [False])
        labels[(d, qid)] = seqs.labels
        for M in cfg.m_values:
            prior = DirichletPrior(float(M), Q)
            sa_seed = int(Rng(int(cfg.seeds["sa"])).split(("sa", d, qid, repr(float(M)))).gen.integers(2 ** 63))
            scfg = cfg.segmenter_config(sa_seed)
            for method in cfg.methods:
                rows.append(_run_cell(cfg, method, x, prior, mode, truth.initial, seqs, scfg, d, qid, M,
                                      em_cache))
    return rows, labels


def _run_cell(cfg, method, x, prior, mode, initial, seqs, scfg, d, qid, M, em_cache) -> ResultRow:
    fn = METHODS[method]
    inits = [seqs.paths[-1]] if method == "SA" else seqs.paths
    if method == "VB" and cfg.vb_tol is not None:
        scfg = SegmenterConfig(scfg.max_iters, cfg.vb_tol, scfg.sa_schedule, scfg.seed)
    scores, paths = [], []
    note = ""
    for init in inits:
        try:
            if method == "EM":
                key = init.tobytes()
                if key not in em_cache:
                    em_cache[key] = fn(x, prior, mode, initial, init, scfg).path
                path = em_cache[key]
                s = log_joint(path, x, prior, mode, initial)
            else:
                tr = fn(x, prior, mode, initial, init, scfg)
                path, s = tr.path, tr.final_score
        except _NA_ERRORS as exc:
            note = type(exc).__name__
            return ResultRow(d, qid, M, method, None, None, [], None, None, note)
        scores.append(float(s))
        paths.append(path)
    b = _best_index(scores, paths)
    distinct = len({p.tobytes() for p in paths})
    return ResultRow(d, qid, M, method, scores[b], distinct, scores, paths[b], None, note)


def _attach_hamming(rows):
    cells = {}
    for r in rows:
        cells.setdefault((r.dataset, r.q_id, float(r.M)), []).append(r)
    for group in cells.values():
        feas = [r for r in group if r.feasible]
        if not feas:
            continue
        ref = max(feas, key=lambda r: (r.best_lnp, -r.key[3]))
        for r in feas:
            r.hamming_to_best = compare_paths(r.best_path, ref.best_path)


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> SweepResult:
    """Run every (dataset, Q, M, method) cell; infeasible cells become 'na' rows."""
    rows, labels = [], {}
    if jobs > 1 and cfg.datasets > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for r, lab in pool.map(_run_dataset, [cfg] * cfg.datasets, range(cfg.datasets)):
                rows.extend(r)
                labels.update(lab)
    else:
        for d in range(cfg.datasets):
            r, lab = _run_dataset(cfg, d)
            rows.extend(r)
            labels.update(lab)
    rows.sort(key=lambda r: r.key)
    _attach_hamming(rows)
    return SweepResult(rows, labels)


def winner_loser_counts(rows, methods=("SA", "sEM", "sMM"), tol: float = TIE_TOL) -> dict:
    """Per (Q, M): how often each method attains the best score, and how often it is
    strictly worst, among ``methods`` over datasets.  Infeasible methods are skipped."""
    by_cell = {}
    for r in rows:
        if r.method in methods:
            by_cell.setdefault((r.q_id, float(r.M)), {}).setdefault(r.dataset, {})[r.method] = r
    out = {}
    for cell, datasets in by_cell.items():
        counts = {m: [0, 0] for m in methods}
        for per in datasets.values():
            feas = {m: r.best_lnp for m, r in per.items() if r.feasible}
            if not feas:
                continue
            top = max(feas.values())
            for m, s in feas.items():
                if s >= top - tol:
                    counts[m][0] += 1
                others = [v for k, v in feas.items() if k != m]
                if others and s < min(others) - tol:
                    counts[m][1] += 1
        for m in methods:
            if not any(m in per and per[m].feasible for per in datasets.values()):
                counts[m] = [None, None]
        out[cell] = counts
    return out


__all__ = [
    "paper_truth", "paper_q_matrices", "stationary_distribution", "InitialSequences",
    "generate_initial_sequences", "enumerate_scores", "brute_force_map", "compare_paths",
    "EmissionConfig", "ExperimentConfig", "ResultRow", "SweepResult", "run_sweep",
    "winner_loser_counts", "BayesVitError",
]
