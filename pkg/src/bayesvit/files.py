"""Config, dataset and CSV file formats."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DomainError
from .harness import (EmissionConfig, ExperimentConfig, SweepResult, paper_truth,
                      winner_loser_counts)
from .hmm import HmmParams

_TOP_KEYS = {"truth", "n", "datasets", "grid", "custom_q", "emission", "methods", "inits", "sa",
             "iterations", "seeds"}


def _check_keys(section: dict, allowed: set, where: str):
    extra = set(section) - allowed
    if extra:
        raise DomainError(f"unknown keys in {where}: {sorted(extra)}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    _check_keys(doc, _TOP_KEYS, "config")
    if "seeds" not in doc:
        raise DomainError("config must define seeds {data, init, sa}")
    truth_doc = doc.get("truth", "paper")
    if truth_doc == "paper":
        truth = paper_truth()
    else:
        _check_keys(truth_doc, {"initial", "trans", "means", "variances"}, "truth")
        truth = HmmParams(truth_doc["initial"], truth_doc["trans"], truth_doc["means"],
                          truth_doc["variances"])
    grid = doc.get("grid", {})
    _check_keys(grid, {"Q", "M"}, "grid")
    em = doc.get("emission", {"mode": "fixed"})
    _check_keys(em, {"mode", "xi", "kappa0", "nu0", "tau0sq"}, "emission")
    sa = doc.get("sa", {})
    _check_keys(sa, {"beta_max", "steps", "samples_per_beta"}, "sa")
    it = doc.get("iterations", {})
    _check_keys(it, {"max_iters", "tol", "vb_tol"}, "iterations")
    emission = EmissionConfig(mode=em.get("mode", "fixed"),
                              xi=tuple(em["xi"]) if em.get("xi") is not None else None,
                              kappa0=float(em.get("kappa0", 10.0)), nu0=float(em.get("nu0", 50.0)),
                              tau0sq=float(em.get("tau0sq", 0.25)))
    return ExperimentConfig(
        truth=truth,
        n=int(doc.get("n", 600)),
        q_ids=tuple(grid.get("Q", ("Q1", "Q2", "Q3"))),
        m_values=tuple(grid.get("M", (600, 150, 50, 10, 5))),
        emission=emission,
        methods=tuple(doc.get("methods", ("sEM", "sMM", "ICM", "VB", "B-EM", "EM", "SA"))),
        seeds={k: int(v) for k, v in doc["seeds"].items()},
        datasets=int(doc.get("datasets", 1)),
        custom_q={k: np.asarray(v, dtype=float) for k, v in doc.get("custom_q", {}).items()},
        sa_beta_max=float(sa.get("beta_max", 10.2)),
        sa_steps=int(sa.get("steps", 47)),
        sa_samples=int(sa.get("samples_per_beta", 15)),
        max_iters=int(it.get("max_iters", 500)),
        tol=float(it.get("tol", 1e-8)),
        vb_tol=None if it.get("vb_tol") is None else float(it["vb_tol"]),
        inits=doc.get("inits", "paper47"),
    )


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Dataset files: "n K seed" header, then "x, y" lines with 1-based states
# ---------------------------------------------------------------------------

def write_dataset(path, obs, states, K: int, seed: int) -> None:
    obs = np.asarray(obs, dtype=float)
    states = np.asarray(states, dtype=np.int64)
    if obs.shape != states.shape:
        raise DomainError("observations and states differ in length")
    lines = [f"{obs.shape[0]} {K} {seed}"]
    lines.extend(f"{x:.17g}, {int(y) + 1}" for x, y in zip(obs.tolist(), states.tolist()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset(path):
    """Returns (obs, states (0-based), K, seed)."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text:
        raise DomainError("empty dataset file")
    try:
        n, K, seed = (int(v) for v in text[0].split())
    except ValueError:
        raise DomainError("dataset header must be 'n K seed'") from None
    rows = [ln for ln in text[1:] if ln.strip()]
    if len(rows) != n:
        raise DomainError(f"header says n={n} but file has {len(rows)} rows")
    obs = np.empty(n)
    states = np.empty(n, dtype=np.int64)
    for i, ln in enumerate(rows):
        x, y = ln.split(",")
        obs[i] = float(x)
        states[i] = int(y) - 1
    if states.min() < 0 or states.max() >= K:
        raise DomainError("states outside 1..K in dataset file")
    return obs, states, K, seed


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def _fmt_m(M) -> str:
    M = float(M)
    return str(int(M)) if M.is_integer() else repr(M)


def _fmt(v) -> str:
    if v is None:
        return "na"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_tables(result: SweepResult, out_dir) -> list:
    """Write table1/2/3 and per_init CSVs; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = result.rows
    paths = []

    def dump(name, header, body):
        p = out / name
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(body)
        paths.append(p)

    dump("table1.csv", ["dataset", "Q", "M", "method", "best_lnp", "distinct_outputs"],
         [[r.dataset, r.q_id, _fmt_m(r.M), r.method, _fmt(r.best_lnp), _fmt(r.distinct_outputs)]
          for r in rows])
    dump("table2.csv", ["dataset", "Q", "M", "method", "hamming_to_best"],
         [[r.dataset, r.q_id, _fmt_m(r.M), r.method, _fmt(r.hamming_to_best)] for r in rows])
    counts = winner_loser_counts(rows)
    body = []
    for (qid, M), per in sorted(counts.items(), key=lambda kv: (kv[0][0], -kv[0][1])):
        for method, (win, lose) in per.items():
            body.append([qid, _fmt_m(M), method, _fmt(win), _fmt(lose)])
    dump("table3.csv", ["Q", "M", "method", "winner_count", "loser_count"], body)
    per_init = []
    for r in rows:
        labels = result.init_labels.get((r.dataset, r.q_id), [])
        if r.method == "SA":
            labels = labels[-1:]
        for i, s in enumerate(r.per_init):
            per_init.append([r.dataset, r.q_id, _fmt_m(r.M), r.method, i,
                             labels[i] if i < len(labels) else "", _fmt(s)])
    dump("per_init.csv", ["dataset", "Q", "M", "method", "init_index", "init_label", "log_joint"],
         per_init)
    return paths


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
