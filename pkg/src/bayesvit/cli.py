"""Command line entry point: ``bayesvit {generate,run,oracle,cluster,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import kernels
from .clustering import ClusterAssignment, cluster_iterate, cluster_objective, nearest_prior_mean
from .errors import BayesVitError
from .files import load_config, read_dataset, write_dataset, write_tables
from .harness import brute_force_map, run_sweep
from .model import DirichletPrior, NixPrior
from .report import render_report

log = logging.getLogger("bayesvit")


def _cmd_generate(args) -> int:
    cfg = load_config(args.config)
    x, y = cfg.dataset(args.dataset)
    write_dataset(args.out, x, y, cfg.truth.K, cfg.dataset_seed(args.dataset))
    if args.truth_out:
        t = cfg.truth
        doc = {"initial": t.initial.tolist(), "trans": t.trans.tolist(),
               "means": t.means.tolist(), "variances": t.variances.tolist()}
        with open(args.truth_out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    print(f"wrote {cfg.n} observations to {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    log.info("sweep: %d dataset(s), %d cells, methods %s, kernels=%s", cfg.datasets,
             len(cfg.q_ids) * len(cfg.m_values), ",".join(cfg.methods), kernels.backend_name())
    t0 = time.perf_counter()
    result = run_sweep(cfg, jobs=args.jobs)
    paths = write_tables(result, args.out)
    log.info("finished in %.1f s", time.perf_counter() - t0)
    for p in paths:
        print(p)
    return 0


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    x, _, K, _ = read_dataset(args.data)
    if K != cfg.truth.K:
        raise BayesVitError("dataset K differs from the config's model")
    prior = DirichletPrior(args.M, cfg.q_matrix(args.q))
    mode = cfg.emission.build(cfg.truth)
    path, score = brute_force_map(x, prior, mode, cfg.truth.initial, K, x.shape[0])
    print(f"log_joint {score!r}")
    print("path " + " ".join(str(int(v) + 1) for v in path))
    return 0


def _cmd_cluster(args) -> int:
    x, _, _, _ = read_dataset(args.data)
    xi = np.asarray(args.xi, dtype=float)
    prior = NixPrior(xi, args.kappa0, args.nu0, args.tau0sq)
    init = nearest_prior_mean(x, prior)
    res = cluster_iterate(x, prior, args.rule, init, args.max_iters)
    assign = ClusterAssignment(res.labels, prior.K)
    print(f"rule {args.rule}  iterations {res.iterations}  converged {res.converged}")
    print("sizes " + " ".join(str(int(s)) for s in assign.sizes))
    print(f"objective[{args.variant}] {cluster_objective(assign, x, prior, args.variant):.6f}")
    if args.labels:
        print("labels " + " ".join(str(int(v) + 1) for v in assign.labels))
    return 0


def _cmd_report(args) -> int:
    text = render_report(args.dir)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayesvit", description="Bayesian HMM MAP-path experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a dataset from the config's model")
    g.add_argument("--config", required=True)
    g.add_argument("--dataset", type=int, default=0, help="dataset index (default 0)")
    g.add_argument("--out", required=True)
    g.add_argument("--truth-out", help="also write the true parameters as JSON")
    g.set_defaults(func=_cmd_generate)

    r = sub.add_parser("run", help="run a comparison sweep and write CSV tables")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--jobs", type=int, default=1, help="worker processes (one dataset each)")
    r.set_defaults(func=_cmd_run)

    o = sub.add_parser("oracle", help="exhaustive MAP path of a small dataset")
    o.add_argument("--config", required=True)
    o.add_argument("--data", required=True)
    o.add_argument("--q", default="Q1", help="Q matrix id from the config")
    o.add_argument("--M", type=float, default=10.0)
    o.set_defaults(func=_cmd_oracle)

    c = sub.add_parser("cluster", help="NIX-regularized k-means iteration")
    c.add_argument("--data", required=True)
    c.add_argument("--xi", type=float, nargs="+", required=True, help="prior means, one per cluster")
    c.add_argument("--kappa0", type=float, default=1.0)
    c.add_argument("--nu0", type=float, default=50.0)
    c.add_argument("--tau0sq", type=float, default=0.25)
    c.add_argument("--rule", choices=("mm", "em"), default="mm")
    c.add_argument("--variant", choices=("nu0-limit", "finite-nu0"), default="nu0-limit")
    c.add_argument("--max-iters", type=int, default=500)
    c.add_argument("--labels", action="store_true", help="print the final labels")
    c.set_defaults(func=_cmd_cluster)

    rep = sub.add_parser("report", help="render sweep CSVs as aligned text tables")
    rep.add_argument("dir")
    rep.add_argument("--out")
    rep.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (BayesVitError, OSError, json.JSONDecodeError) as exc:
        print(f"bayesvit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
