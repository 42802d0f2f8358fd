"""Command line entry point ``srmc``.

Exit codes: 0 success, 2 argument error, 3 stage failure.
"""
import argparse
import json
import os
from pathlib import Path
import sys

import numpy as np

from .completion import (Factorization, GroundTruth, PGDConfig, RegularizerParams,
                         recovery_error, solve_pgd, svd_initialize)
from .errors import ArgumentError
from . import harness
from .reweight import ReweightConfig, WeightMatrix, estimate_beta, reweight
from .semirandom import (AdversaryStrategy, ObservationSet, adversary_add,
                         counterexample_rank1, counterexample_rank2,
                         make_ground_truth, sample_uniform_observations,
                         weighted_to_semirandom)
from .spectral_core import read_edges, write_edges

EXIT_OK, EXIT_ARG, EXIT_STAGE = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARG, f"{self.prog}: error: {message}\n")


def _json_arg(s):
    try:
        return json.loads(s)
    except json.JSONDecodeError as err:
        raise argparse.ArgumentTypeError(f"not JSON: {s!r}") from err


def _beta(s):
    return s if s == "auto" else float(s)


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=harness._jsonable)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _fresh(path):
    if os.path.exists(path):
        raise ArgumentError(f"{path} exists; artifacts are never overwritten")
    return path


# --------------------------------------------------------------------------

def cmd_generate(a):
    out = Path(a.out)
    if out.exists() and any(out.iterdir()):
        raise ArgumentError(f"{out} is not empty")
    out.mkdir(parents=True, exist_ok=True)
    if a.kind == "rank1":
        gt, W, _ = counterexample_rank1(a.n1, a.beta)
    elif a.kind == "rank2":
        gt, W = counterexample_rank2(a.n1)
    else:
        gt = make_ground_truth(a.n1, a.n2, a.rank, a.spectrum, a.profile, a.seed)
        W = None
    if W is not None and a.weighted:
        obs = weighted_to_semirandom(W, a.p, gt, a.seed)
    else:
        obs = sample_uniform_observations(gt, a.p, a.seed)
    gt.save(str(out / "truth"))
    obs.to_csv(out / "observations.csv")
    write_edges(out / "edges.mtx", obs.edges())
    _dump(dict(gt.meta(), observed=int(obs.size), adversarial=int(obs.adversarial.sum())))


def cmd_corrupt(a):
    gt = GroundTruth.load(a.truth)
    obs = ObservationSet.from_csv(a.obs)
    params = dict(a.params or {})
    if a.kind == "probability_matrix" and "P_file" in params:
        params["P"] = np.loadtxt(params.pop("P_file"), delimiter=",", ndmin=2)
    out = adversary_add(obs, gt, AdversaryStrategy(a.kind, params, a.seed))
    out.to_csv(_fresh(a.out))
    if a.edges:
        write_edges(_fresh(a.edges), out.edges())
    _dump({"observed": int(out.size), "added": int(out.size - obs.size)})


def _load_edges_and_obs(path):
    if str(path).endswith(".mtx"):
        return read_edges(path), None
    obs = ObservationSet.from_csv(path)
    return obs.edges(), obs


def cmd_reweight(a):
    edges, _ = _load_edges_and_obs(a.edges)
    cfg = ReweightConfig(beta=0.05 if a.beta == "auto" else a.beta, eps=a.eps,
                         backend=a.backend, seed=a.seed)
    if a.beta == "auto":
        beta, res = estimate_beta(edges, a.eps, cfg)
    else:
        beta, res = a.beta, reweight(edges, cfg)
    _fresh(a.out)
    WeightMatrix(edges.n1, edges.n2, edges.rows, edges.cols, res.weights).to_csv(a.out)
    log = {"beta": beta, "eps": a.eps, "backend": a.backend, "seed": a.seed,
           "iterations": res.iterations, "u": res.u, "ell": res.ell,
           "lam_min": res.lam_min, "lam_max": res.lam_max,
           "iterates": [{k: e[k] for k in ("j", "u", "ell", "rho", "phi",
                                            "delta_u", "delta_ell")}
                        for e in res.log]}
    _dump(log, a.log or str(Path(a.out).with_suffix(".log.json")))
    _dump({k: log[k] for k in log if k != "iterates"})


def cmd_solve(a):
    obs = ObservationSet.from_csv(a.obs)
    if a.weights:
        W = WeightMatrix.from_csv(a.weights, obs.n1, obs.n2).toarray()
    else:
        W = obs.mask.astype(float)
    gt = GroundTruth.load(a.truth) if a.truth else None
    if gt is not None:
        params = RegularizerParams.for_ground_truth(gt, a.C)
    else:
        params = RegularizerParams.estimate(obs, W, a.rank, a.C)
    if a.init == "svd":
        init = svd_initialize(obs, W, a.rank, a.symmetric)
    else:
        rng = np.random.default_rng(a.seed)
        U = rng.standard_normal((obs.n1, a.rank)) * a.init_scale
        V = None if a.symmetric else rng.standard_normal((obs.n2, a.rank)) * a.init_scale
        init = Factorization(U, V)
    hyper = PGDConfig(max_iter=a.max_iter, tol_rel=a.tol_rel, seed=a.seed,
                      perturb=not a.no_perturb)
    res = solve_pgd(init, obs, W, params, hyper)
    for suffix in ("_U.csv",) + (() if a.symmetric else ("_V.csv",)):
        _fresh(a.out + suffix)
    res.factors.save(a.out)
    _dump(res.trace, a.trace or a.out + "_trace.json")
    summary = {"iterations": res.iterations, "grad_norm": res.grad_norm,
               "converged": res.converged, "perturbations": res.perturbations}
    if gt is not None:
        summary["recovery_error"] = recovery_error(res.factors, gt)
    _dump(summary)


def cmd_verify(a):
    section = harness.verify_lemmas(a.dir)
    _dump(section)
    return EXIT_OK if section["pass"] else EXIT_STAGE


def _config(a):
    cfg = harness.PipelineConfig.from_json(a.config) if a.config else harness.PipelineConfig()
    return cfg.override(a.set or [])


def cmd_pipeline(a):
    rep = harness.run_pipeline(_config(a), a.out_root)
    _dump(rep)
    return EXIT_OK if rep["status"] == "ok" else EXIT_STAGE


def cmd_sweep(a):
    grid = {}
    for g in a.grid:
        key, sep, vals = g.partition("=")
        if not sep:
            raise ArgumentError(f"grid entry {g!r} is not key=[values]")
        v = _json_arg(vals)
        grid[key] = v if isinstance(v, list) else [v]
    rows = harness.run_sweep(_config(a), grid, a.out_root, a.jobs)
    root = harness.output_root(a.out_root)
    root.mkdir(parents=True, exist_ok=True)
    name = root / f"sweep-{_config(a).digest()}.csv"
    harness._write_rows(name, rows, list(rows[0]) if rows else [])
    _dump(rows)
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_STAGE


def build_parser():
    p = _Parser(prog="srmc", description="Semi-random matrix completion toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="ground truth and observations")
    g.add_argument("--kind", choices=["planted", "rank1", "rank2"], default="planted")
    g.add_argument("--n1", type=int, default=50)
    g.add_argument("--n2", type=int, default=50)
    g.add_argument("--rank", type=int, default=2)
    g.add_argument("--spectrum", type=_json_arg, default=None)
    g.add_argument("--profile", choices=["haar", "spiky", "flat"], default="haar")
    g.add_argument("--p", type=float, default=0.5)
    g.add_argument("--beta", type=float, default=0.9, help="rank1 construction parameter")
    g.add_argument("--weighted", action="store_true",
                   help="reveal counter-example instances with probability p*W")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("corrupt", help="adversarial extra reveals")
    c.add_argument("--truth", required=True, help="truth prefix (PREFIX_U.csv ...)")
    c.add_argument("--obs", required=True)
    c.add_argument("--kind", choices=AdversaryStrategy.KINDS, required=True)
    c.add_argument("--params", type=_json_arg, default=None)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.add_argument("--edges", default=None, help="also write the pattern as .mtx")
    c.set_defaults(func=cmd_corrupt)

    r = sub.add_parser("reweight", help="spectral reweighting of an observation graph")
    r.add_argument("--edges", required=True, help=".mtx pattern or observation CSV")
    r.add_argument("--beta", type=_beta, default=0.05)
    r.add_argument("--eps", type=float, default=0.05)
    r.add_argument("--backend", choices=["exact", "fast"], default="exact")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.add_argument("--log", default=None)
    r.set_defaults(func=cmd_reweight)

    s = sub.add_parser("solve", help="weighted non-convex completion")
    s.add_argument("--obs", required=True)
    s.add_argument("--weights", default=None)
    s.add_argument("--rank", type=int, required=True)
    s.add_argument("--C", type=float, default=10.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="factor prefix")
    s.add_argument("--truth", default=None)
    s.add_argument("--symmetric", action="store_true")
    s.add_argument("--init", choices=["svd", "random"], default="svd")
    s.add_argument("--init-scale", type=float, default=0.1)
    s.add_argument("--max-iter", type=int, default=100000)
    s.add_argument("--tol-rel", type=float, default=1e-7)
    s.add_argument("--no-perturb", action="store_true")
    s.add_argument("--trace", default=None)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="lemma checks on a run directory")
    v.add_argument("dir")
    v.set_defaults(func=cmd_verify)

    for name, fn, hlp in (("pipeline", cmd_pipeline, "full run from a JSON config"),
                          ("sweep", cmd_sweep, "grid of pipeline runs")):
        q = sub.add_parser(name, help=hlp)
        q.add_argument("--config", default=None)
        q.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config leaf (JSON value)")
        q.add_argument("--out-root", default=None,
                       help=f"defaults to ${harness.OUTPUT_ENV} or ./srmc-runs")
        if name == "sweep":
            q.add_argument("--grid", action="append", required=True,
                           metavar="KEY=[V1,V2]")
            q.add_argument("--jobs", type=int, default=1)
        q.set_defaults(func=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except ArgumentError as err:
        print(f"srmc: error: {err}", file=sys.stderr)
        return EXIT_ARG
    except OSError as err:
        print(f"srmc: error: {err}", file=sys.stderr)
        return EXIT_ARG
    except (RuntimeError, ValueError, np.linalg.LinAlgError) as err:
        print(f"srmc: {args.command} failed: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
