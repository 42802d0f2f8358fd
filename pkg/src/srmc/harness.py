"""End-to-end runs: generate, corrupt, reweight, solve, evaluate.

Each run lives in ``<root>/run-<digest>`` where the digest hashes the
canonical JSON config, so identical configs map to the same directory and
nothing is overwritten. Everything except the ``timings`` section of the
report is a deterministic function of the config.
"""
from dataclasses import dataclass, field
import copy
import csv
import hashlib
import itertools
import json
import math
import os
from pathlib import Path
import time
import traceback

import numpy as np

from .completion import (Factorization, GroundTruth, PGDConfig, RegularizerParams,
                         check_norm_preservation, check_norm_relations,
                         objective, recovery_error, solve_pgd, svd_initialize)
from .errors import ArgumentError
from .reweight import (ReweightConfig, ReweightProblem, WeightMatrix, estimate_beta,
                       reweight as run_reweight)
from .reweight import checks
from .semirandom import (AdversaryStrategy, ObservationSet, adversary_add,
                         counterexample_rank1, counterexample_rank2,
                         make_ground_truth, sample_uniform_observations,
                         weighted_to_semirandom)

SCHEMA_VERSION = 1
OUTPUT_ENV = "SRMC_OUTPUT_ROOT"

DEFAULTS = {
    "instance": {
        "kind": "planted",          # planted | rank1 | rank2
        "n1": 50, "n2": 50, "r": 2,
        "spectrum": None, "profile": "haar", "spike": 0.5,
        "p": 0.5, "seed": 0,
        "pattern": None,            # None | "rank1" | "rank2": reveal with p * W
        "pattern_beta": 0.9,
        "truth_prefix": None, "observations_file": None,
    },
    "adversary": {"kind": "none", "params": {}, "seed": 0},
    "reweight": {
        "enabled": True, "beta": 0.05, "eps": 0.05, "backend": "exact",
        "seed": 0, "options": {}, "weights_file": None,
    },
    "solver": {
        "C": 10.0, "rank": None, "symmetric": False,
        "init": "svd",              # svd | random | truth | bad_point
        "init_seed": 0, "init_scale": 1.0,
        "step": None, "max_iter": 100000, "tol_rel": 1e-7,
        "perturb": True, "interval": 500, "seed": 0,
    },
    "verify": {"c_w": checks.C_W_DERIVED, "probes": 3, "seed": 0},
}


class MissingArtifacts(ArgumentError):
    def __init__(self, directory, missing):
        super().__init__(f"{directory}: missing {', '.join(missing)}")
        self.missing = list(missing)


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise ArgumentError(f"unknown config key {path + k!r}")
        if isinstance(out[k], dict) and k not in ("params", "options"):
            if not isinstance(v, dict):
                raise ArgumentError(f"{path + k} must be an object")
            out[k] = _merge(out[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class PipelineConfig:
    """Nested dict config with defaults, dotted-path overrides and a digest."""

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d):
        return cls(_merge(DEFAULTS, d))

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except FileNotFoundError as err:
            raise ArgumentError(f"config file {path} not found") from err
        except json.JSONDecodeError as err:
            raise ArgumentError(f"config file {path}: {err}") from err

    def override(self, assignments):
        """Apply ``a.b.c=value`` strings; values parse as JSON, else string."""
        d = copy.deepcopy(self.data)
        for a in assignments:
            key, sep, raw = a.partition("=")
            if not sep:
                raise ArgumentError(f"override {a!r} is not key=value")
            try:
                val = json.loads(raw)
            except json.JSONDecodeError:
                val = raw
            node = d
            parts = key.split(".")
            for k in parts[:-1]:
                if not isinstance(node, dict) or k not in node:
                    raise ArgumentError(f"unknown config key {key!r}")
                node = node[k]
            free = len(parts) > 1 and parts[-2] in ("params", "options")
            if not isinstance(node, dict) or (parts[-1] not in node and not free):
                raise ArgumentError(f"unknown config key {key!r}")
            node[parts[-1]] = val
        return PipelineConfig(d)

    def __getitem__(self, k):
        return self.data[k]

    def canonical(self):
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def referenced_files(self):
        out = []
        for sec, key in (("instance", "truth_prefix"), ("instance", "observations_file"),
                         ("reweight", "weights_file")):
            v = self.data[sec].get(key)
            if v is None:
                continue
            if key == "truth_prefix":
                out += [f"{v}_U.csv", f"{v}_V.csv", f"{v}.json"]
            else:
                out.append(v)
        return out

    def validate(self):
        missing = [f for f in self.referenced_files() if not os.path.exists(f)]
        if missing:
            raise ArgumentError("config references missing files: " + ", ".join(missing))
        inst = self.data["instance"]
        if inst["kind"] not in ("planted", "rank1", "rank2"):
            raise ArgumentError(f"unknown instance kind {inst['kind']!r}")
        beta = self.data["reweight"]["beta"]
        if beta != "auto" and not isinstance(beta, (int, float)):
            raise ArgumentError("reweight.beta must be a number or 'auto'")
        AdversaryStrategy.from_dict(self.data["adversary"])


def output_root(root=None):
    return Path(root or os.environ.get(OUTPUT_ENV) or "srmc-runs")


# --------------------------------------------------------------------------
# stages

def stage_generate(cfg):
    """Ground truth and base observations (and pattern weights if any)."""
    inst = cfg["instance"]
    if inst["truth_prefix"]:
        gt = GroundTruth.load(inst["truth_prefix"])
        pattern = None
    elif inst["kind"] == "rank1":
        gt, pattern, _ = counterexample_rank1(inst["n1"], inst["pattern_beta"])
    elif inst["kind"] == "rank2":
        gt, pattern = counterexample_rank2(inst["n1"])
    else:
        gt = make_ground_truth(inst["n1"], inst["n2"], inst["r"], inst["spectrum"],
                               inst["profile"], inst["seed"], inst["spike"])
        pattern = None
    if inst["pattern"] is not None:
        n = gt.shape[0]
        if gt.shape[0] != gt.shape[1]:
            raise ArgumentError("block patterns need a square instance")
        pattern = (counterexample_rank1(n, inst["pattern_beta"])[1]
                   if inst["pattern"] == "rank1" else counterexample_rank2(n)[1])
    if inst["observations_file"]:
        obs = ObservationSet.from_csv(inst["observations_file"])
    elif pattern is not None:
        obs = weighted_to_semirandom(pattern, inst["p"], gt, inst["seed"])
    else:
        obs = sample_uniform_observations(gt, inst["p"], inst["seed"])
    return gt, obs


def stage_corrupt(cfg, gt, obs):
    return adversary_add(obs, gt, AdversaryStrategy.from_dict(cfg["adversary"]))


def stage_reweight(cfg, obs):
    """``(W dense, section, log)``; the indicator of ``obs`` when disabled."""
    rw = cfg["reweight"]
    if rw["weights_file"]:
        W = WeightMatrix.from_csv(rw["weights_file"], obs.n1, obs.n2)
        return W.toarray(), {"source": rw["weights_file"]}, []
    if not rw["enabled"]:
        return obs.mask.astype(float), {"skipped": "disabled; observation indicator used"}, []
    rc = ReweightConfig(beta=0.05 if rw["beta"] == "auto" else rw["beta"],
                        eps=rw["eps"], backend=rw["backend"], seed=rw["seed"],
                        **rw["options"])
    edges = obs.edges()
    if rw["beta"] == "auto":
        beta, res = estimate_beta(edges, rw["eps"], rc)
    else:
        beta, res = rw["beta"], run_reweight(edges, rc)
    W = WeightMatrix(obs.n1, obs.n2, edges.rows, edges.cols, res.weights)
    Wd = W.toarray()
    dist = float(np.linalg.norm(Wd - 1.0, 2))
    section = {
        "beta": beta, "eps": rw["eps"], "backend": rw["backend"],
        "iterations": res.iterations, "u": res.u, "ell": res.ell,
        "ratio": res.ratio, "lam_min": res.lam_min, "lam_max": res.lam_max,
        "dist_to_J": dist, "dist_to_J_normalized": dist / math.sqrt(obs.n1 * obs.n2),
        "max_row_sum": float(Wd.sum(axis=1).max()),
        "max_col_sum": float(Wd.sum(axis=0).max()),
        "adversarial_weight_share": float(
            res.weights[obs.adversarial].sum() / max(res.weights.sum(), 1e-300)),
    }
    return Wd, section, res.log


def _initial(cfg, gt, obs, W, params):
    sv = cfg["solver"]
    r = sv["rank"] or gt.r
    sym = sv["symmetric"]
    kind = sv["init"]
    if kind == "svd":
        return svd_initialize(obs, W, r, sym)
    if kind == "truth":
        return Factorization(gt.U, None if sym else gt.V)
    if kind == "bad_point":
        inst = cfg["instance"]
        if inst["kind"] != "rank1":
            raise ArgumentError("bad_point init needs the rank1 instance")
        u = counterexample_rank1(gt.shape[0], inst["pattern_beta"])[2]
        return Factorization(u, None if sym else u.copy())
    if kind == "random":
        rng = np.random.default_rng(sv["init_seed"])
        n1, n2 = gt.shape
        # rows of the size a balanced factor of the observed scale would have
        s1 = float(np.linalg.norm(W * obs.dense()[0], 2))
        sc = sv["init_scale"] * math.sqrt(s1 / (r * max(n1, n2)))
        U = sc * rng.standard_normal((n1, r))
        return Factorization(U, None if sym else sc * rng.standard_normal((n2, r)))
    raise ArgumentError(f"unknown init {kind!r}")


def stage_solve(cfg, gt, obs, W):
    sv = cfg["solver"]
    params = RegularizerParams.for_ground_truth(gt, sv["C"])
    init = _initial(cfg, gt, obs, W, params)
    hyper = PGDConfig(step=sv["step"], max_iter=sv["max_iter"], tol_rel=sv["tol_rel"],
                      perturb=sv["perturb"], interval=sv["interval"], seed=sv["seed"])
    res = solve_pgd(init, obs, W, params, hyper)
    section = {
        "iterations": res.iterations, "grad_norm": res.grad_norm,
        "converged": res.converged, "perturbations": res.perturbations,
        "objective": objective(res.factors, obs, W, params),
        "recovery_error": recovery_error(res.factors, gt),
        "initial_error": recovery_error(init, gt),
        "grad_tol": res.settings["grad_tol"], "step": res.settings["step"],
        "regularizer": params.to_dict(),
    }
    return res, section


# --------------------------------------------------------------------------
# artifacts

def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _write_rows(path, rows, keys):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(r[k])) if isinstance(r[k], float) else r[k])
                        for k in keys})


def _save_weights(path, W):
    r, c = np.nonzero(W)
    WeightMatrix(W.shape[0], W.shape[1], r, c, W[r, c]).to_csv(path)


POTENTIAL_KEYS = ["j", "u", "ell", "rho", "phi", "phi_next", "delta_u", "delta_ell",
                  "sdp_objective", "sdp_target", "target_met", "cap_halved"]
TRACE_KEYS = ["iter", "objective", "grad_norm", "max_row_norm"]


def run_pipeline(config, root=None):
    """Run all stages and return the report dict.

    The report (``report.json``) is written even when a stage fails; the
    failing stage and error are recorded and ``status`` is ``"failed"``.
    An existing run directory for the same config is reused as is.
    """
    cfg = config if isinstance(config, PipelineConfig) else PipelineConfig.from_dict(config)
    cfg.validate()
    run_dir = output_root(root) / f"run-{cfg.digest()}"
    if (run_dir / "report.json").exists():
        with open(run_dir / "report.json") as fh:
            return json.load(fh)
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_json(run_dir / "config.json", cfg.data)
    report = {"schema_version": SCHEMA_VERSION, "digest": cfg.digest(),
              "status": "ok", "failed_stage": None, "error": None,
              "instance": {"skipped": "not reached"},
              "reweight": {"skipped": "not reached"},
              "solver": {"skipped": "not reached"},
              "lemmas": {"skipped": "not reached"}, "timings": {}}
    stage = None
    try:
        stage = "generate"
        t = time.perf_counter()
        gt, obs = stage_generate(cfg)
        gt.save(str(run_dir / "truth"))
        obs.to_csv(run_dir / "observations_base.csv")
        report["timings"]["generate"] = time.perf_counter() - t

        stage = "corrupt"
        t = time.perf_counter()
        obs = stage_corrupt(cfg, gt, obs)
        obs.to_csv(run_dir / "observations.csv")
        report["instance"] = dict(gt.meta(), observed=int(obs.size),
                                  adversarial=int(obs.adversarial.sum()))
        report["timings"]["corrupt"] = time.perf_counter() - t

        stage = "reweight"
        t = time.perf_counter()
        W, report["reweight"], log = stage_reweight(cfg, obs)
        _save_weights(run_dir / "weights.csv", W)
        _write_json(run_dir / "reweight.json", report["reweight"])
        if log:
            _write_rows(run_dir / "potential.csv", log, POTENTIAL_KEYS)
            _write_json(run_dir / "reweight_log.json", log)
        report["timings"]["reweight"] = time.perf_counter() - t

        stage = "solve"
        t = time.perf_counter()
        res, report["solver"] = stage_solve(cfg, gt, obs, W)
        res.factors.save(str(run_dir / "factors"))
        _write_json(run_dir / "trace.json", res.trace)
        _write_rows(run_dir / "error.csv", res.trace, TRACE_KEYS)
        report["timings"]["solve"] = time.perf_counter() - t

        stage = "evaluate"
        t = time.perf_counter()
        report["lemmas"] = verify_lemmas(run_dir, cfg)
        report["timings"]["evaluate"] = time.perf_counter() - t
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as err:
        report.update(status="failed", failed_stage=stage,
                      error=f"{type(err).__name__}: {err}")
        with open(run_dir / "failure.txt", "w") as fh:
            fh.write(traceback.format_exc())
    _write_json(run_dir / "report.json", report)
    return report


def strip_timings(report):
    return {k: v for k, v in report.items() if k != "timings"}


# --------------------------------------------------------------------------
# lemma checks on stored artifacts

REQUIRED = ["config.json", "truth_U.csv", "truth_V.csv", "truth.json",
            "observations.csv", "weights.csv"]


def verify_lemmas(directory, cfg=None):
    """Run numeric checks against a run directory.

    Returns a dict of named checks, each with ``pass`` and a margin, or
    ``skipped`` with a reason. Raises :class:`MissingArtifacts` when the core
    artifacts are absent.
    """
    d = Path(directory)
    missing = [f for f in REQUIRED if not (d / f).exists()]
    if missing:
        raise MissingArtifacts(d, missing)
    if cfg is None:
        cfg = PipelineConfig.from_json(d / "config.json")
    gt = GroundTruth.load(str(d / "truth"))
    obs = ObservationSet.from_csv(d / "observations.csv")
    W = WeightMatrix.from_csv(d / "weights.csv", obs.n1, obs.n2).toarray()
    rw = {}
    if (d / "reweight.json").exists():
        with open(d / "reweight.json") as fh:
            rw = json.load(fh)
    vcfg = cfg["verify"]
    out = {}
    reweighted = "u" in rw

    # potential monotonicity
    if (d / "reweight_log.json").exists():
        with open(d / "reweight_log.json") as fh:
            out["potential_monotone"] = checks.potential_monotone(json.load(fh))
    else:
        out["potential_monotone"] = {"skipped": "no reweighting log"}

    # output spectrum and weight contract
    if reweighted:
        lap = checks.laplacian_to_adjacency(W)
        lo = 1.0 - lap["eps"]
        out["spectrum"] = {
            "upper": lap["upper"],
            "lower": checks._margin(rw["ratio"] - 1e-9, lo),
            "ratio_floor": checks._margin(1 - 10 * (rw["beta"] + rw["eps"]), rw["ratio"]),
        }
        wc = checks.weight_contract(W, rw["beta"], rw["eps"], vcfg["c_w"])
        out["weight_contract"] = wc
        out["laplacian_to_adjacency"] = {k: lap[k] for k in
                                         ("degrees_low", "degrees_high", "adjacency")}
        out["potential_first_order"] = _first_order(obs, W, rw, vcfg)
    else:
        for k in ("spectrum", "weight_contract", "laplacian_to_adjacency",
                  "potential_first_order"):
            out[k] = {"skipped": "weights were not produced by reweighting"}

    # norm preservation on the truth factors and on the solution
    out["norm_preservation"] = {"truth": _np_check(gt.U, gt.V, W)}
    sym = cfg["solver"]["symmetric"]
    fac = d / "factors_U.csv"
    if fac.exists():
        F = Factorization.load(str(d / "factors"), symmetric=sym)
        Vf = F.U if sym else F.V
        out["norm_preservation"]["solution"] = _np_check(F.U, Vf, W)
        Zs = gt.U if sym else np.vstack([gt.U, gt.V])
        rel = check_norm_relations(F.Z, Zs)
        out["norm_relations"] = {
            "outer": checks._margin(rel["outer_lhs"], rel["outer_rhs"] * (1 + 1e-10) + 1e-300),
            "distance": checks._margin(rel["dist_lhs"], rel["dist_rhs"] * (1 + 1e-10) + 1e-300)}
    else:
        out["norm_relations"] = {"skipped": "no solution factors"}
    out["pass"] = all(_passes(v) for v in out.values())
    return out


def _np_check(X, Y, W):
    r = check_norm_preservation(X, Y, W)
    m = checks._margin(r.lhs, r.rhs)
    m["routes_agree"] = r.routes_agree
    m["pass"] = m["pass"] and r.routes_agree
    return m


def _passes(v):
    if not isinstance(v, dict):
        return True
    if "skipped" in v:
        return True
    if "pass" in v and not isinstance(v["pass"], dict):
        return bool(v["pass"])
    return all(_passes(x) for x in v.values() if isinstance(x, dict))


def _first_order(obs, W, rw, vcfg):
    """First-order potential inequalities at the final barrier state with
    admissible random rank-one edge directions."""
    edges = obs.edges()
    prob = ReweightProblem(edges)
    raw = W[edges.rows, edges.cols] * rw["u"]
    A = prob.normalized_operator(raw)
    eps = min(rw["eps"], 0.1)
    # the loop stops once u - ell > 1; tighten ell to meet the precondition
    u, ell = rw["u"], max(rw["ell"], rw["u"] - 1.0)
    lam = np.linalg.eigvalsh(A)
    if lam[-1] >= u:
        return {"skipped": "stored weights put the spectrum above the upper barrier"}
    if lam[0] <= ell:
        return {"skipped": "final spectrum too close to the tightened lower barrier"}
    rng = np.random.default_rng(vcfg["seed"])
    S = prob.S
    results = []
    for _ in range(vcfg["probes"]):
        pick = rng.choice(edges.m, size=min(3, edges.m), replace=False)
        V = np.stack([S[edges.heads[e]] - S[edges.tails[e]] for e in pick], axis=1)
        D = checks.admissible_direction(A, V, u, ell, eps)
        results.append(checks.potential_first_order(A, D, u, ell, eps))
    out = {}
    for key in results[0]:
        worst = min((r[key] for r in results), key=lambda m: m["margin"])
        out[key] = worst
    return out


# --------------------------------------------------------------------------
# sweeps

def expand_grid(cfg, grid):
    """Configs for the cartesian product of ``{dotted_key: [values]}``."""
    keys = sorted(grid)
    for combo in itertools.product(*(grid[k] for k in keys)):
        yield cfg.override([f"{k}={json.dumps(v)}" for k, v in zip(keys, combo)])


def run_sweep(cfg, grid, root=None, jobs=1):
    """Run every grid point; returns rows of (overrides, status, key metrics)."""
    cfgs = list(expand_grid(cfg, grid))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as ex:
            reports = list(ex.map(run_pipeline, cfgs, itertools.repeat(root)))
    else:
        reports = [run_pipeline(c, root) for c in cfgs]
    rows = []
    for c, rep in zip(cfgs, reports):
        row = {k: _get(c.data, k) for k in sorted(grid)}
        row.update(digest=rep["digest"], status=rep["status"],
                   recovery_error=rep["solver"].get("recovery_error"),
                   reweight_iterations=rep["reweight"].get("iterations"),
                   lemmas_pass=(rep["lemmas"].get("pass")
                                if isinstance(rep["lemmas"], dict) else None))
        rows.append(row)
    return rows


def _get(d, dotted):
    for k in dotted.split("."):
        d = d[k]
    return d
