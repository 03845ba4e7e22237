"""Batch commands: modal, osp, identify, noise-sweep.

Every command reads one JSON config (one section per stage), lets flags
override it, stages its outputs in a temporary directory and promotes them
into ``--out`` together with a ``manifest.json`` only when the run succeeds.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import ConfigError, NumericalError, bits_to_str, str_to_bits
from .damage_bayes import (
    IdentificationProblem, mh_sample, posterior_summary, run_noise_study, synthetic_measurement,
)
from .modal import model_modes
from .moo_engine import ALGORITHMS, optimize
from .moo_engine.lichtenberg import MolaParams, build_lichtenberg_figure
from .moo_engine.pareto import SubsetEvaluator, exhaustive_front, hypervolume, normalization_bounds
from .osp_criteria import CRITERIA, CriterionContext, all_subsets, write_batch_csv
from .structural_model import JacketModel, assemble_global, build_default_jacket, damage_vector, save_damage

log = logging.getLogger("jacket_shm")

SELECTION_FILE = "selection.json"


class _ArgParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class RunOutput:
    """Stage files in a temp dir; promote them plus a digest manifest on success."""

    def __init__(self, out_dir, command, config):
        self.out = Path(out_dir)
        self.command = command
        self.config = config
        self.timings = {}
        self.files = []
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.out.name}.", dir=self.out.parent))

    def path(self, name):
        self.files.append(name)
        return self.tmp / name

    def timed(self, stage):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[stage] = round(time.perf_counter() - self.t0, 6)
                return False

        return _Timer()

    def commit(self):
        self.out.mkdir(parents=True, exist_ok=True)
        inventory = {}
        for name in self.files:
            data = (self.tmp / name).read_bytes()
            inventory[name] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
            os.replace(self.tmp / name, self.out / name)
        manifest = {
            "tool": "jacket-shm",
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "timings": self.timings,
            "files": inventory,
        }
        tmp_manifest = self.tmp / "manifest.json"
        tmp_manifest.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        os.replace(tmp_manifest, self.out / "manifest.json")
        shutil.rmtree(self.tmp, ignore_errors=True)

    def abort(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def verify_manifest(out_dir) -> bool:
    """True when every file listed in the manifest matches its digest."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    for name, meta in manifest["files"].items():
        if hashlib.sha256((out / name).read_bytes()).hexdigest() != meta["sha256"]:
            return False
    return True


# config handling ---------------------------------------------------------

def load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    base = p.parent
    cfg.setdefault("_base", str(base))
    return cfg


def _resolve(cfg, path):
    p = Path(path)
    return p if p.is_absolute() else Path(cfg.get("_base", ".")) / p


def build_model(cfg) -> JacketModel:
    model_cfg = cfg.get("model", {}) or {}
    if "file" in model_cfg:
        path = _resolve(cfg, model_cfg["file"])
        if not path.is_file():
            raise ConfigError(f"model file not found: {path}")
        try:
            return JacketModel.load(path)
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"malformed model file {path}: {exc}") from None
    return build_default_jacket(model_cfg.get("generator"))


def _section(cfg, name):
    sec = cfg.get(name, {}) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be an object")
    return sec


def _seed(cfg, args):
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    return seed


def resolve_selection(cfg, sec, model: JacketModel) -> np.ndarray:
    """Sensor selection over candidate nodes from a selection file, node list or bitstring."""
    n = len(model.candidate_sensor_nodes)
    if "selection_file" in sec:
        path = _resolve(cfg, sec["selection_file"])
        if not path.is_file():
            raise ConfigError(f"selection file not found: {path}")
        bits = str_to_bits(json.loads(path.read_text())["selection"])
    elif "sensors" in sec:
        sensors = sec["sensors"]
        if sensors == "all":
            bits = np.ones(n, dtype=bool)
        else:
            index = {node + 1: i for i, node in enumerate(model.candidate_sensor_nodes)}
            bits = np.zeros(n, dtype=bool)
            for node in sensors:
                if node not in index:
                    raise ConfigError(f"node {node} is not a candidate sensor location")
                bits[index[node]] = True
    elif "selection" in sec:
        bits = str_to_bits(sec["selection"])
    else:
        raise ConfigError("no sensor selection given (selection_file, sensors or selection)")
    if len(bits) != n or not bits.any():
        raise ConfigError(f"selection must cover {n} candidates with at least one sensor")
    return bits


def _estimated(sec, model):
    est = sec.get("estimated_elements")
    if est is None:
        return None
    est = [int(str(e).lstrip("Ee")) - 1 for e in est]
    if any(not 0 <= e < model.n_elements for e in est):
        raise ConfigError("estimated element out of range")
    return est


# commands ----------------------------------------------------------------

def cmd_modal(cfg, args, run: RunOutput):
    sec = _section(cfg, "modal")
    model = build_model(cfg)
    n_modes = int(sec.get("n_modes", 6))
    alpha = damage_vector(model.n_elements, sec.get("damage"))
    with run.timed("modal"):
        modal = model_modes(model, assemble_global(model, alpha), n_modes)
    modal.write_csv(run.path("modes.csv"))
    print("Mode  Frequency (Hz)")
    for i, f in enumerate(modal.frequencies, 1):
        print(f"{i:>4}  {f:.4f}")
    return modal


def _algo_params(sec, algo):
    params = dict((sec.get("params") or {}).get(algo, {}))
    params.pop("seed", None)
    return params


def cmd_osp(cfg, args, run: RunOutput):
    sec = _section(cfg, "osp")
    model = build_model(cfg)
    seed = _seed(cfg, args)
    criterion = (args.criterion or sec.get("criterion", "evp")).lower()
    algo = (args.algo or sec.get("algorithm", "mola")).lower()
    budget = args.budget if args.budget is not None else int(sec.get("budget", 8))
    if criterion not in CRITERIA:
        raise ConfigError(f"unknown criterion {criterion!r}")
    algos = list(ALGORITHMS) if algo == "all" else [algo]
    if any(a not in ALGORITHMS for a in algos):
        raise ConfigError(f"unknown algorithm {algo!r}")
    if budget < 1:
        raise ConfigError("budget must be at least 1")

    with run.timed("context"):
        ctx = CriterionContext.from_model(model, int(sec.get("n_modes", 6)))
    fronts = {}
    for a in algos:
        with run.timed(f"{criterion}_{a}"):
            fronts[a] = optimize(a, criterion, ctx, seed=seed, **_algo_params(sec, a))
        fronts[a].write_csv(run.path(f"front_{criterion}_{a}.csv"))
    if "exhaustive" in algos and sec.get("export_batch", True):
        ev = SubsetEvaluator(criterion, ctx)
        write_batch_csv(run.path(f"criterion_{criterion}.csv"),
                        ((b, ev(b).J) for b in all_subsets(ctx.n_candidates)), criterion)
    if "mola" in algos:
        mp = MolaParams(seed=seed, **_algo_params(sec, "mola"))
        rng = np.random.default_rng(seed)
        build_lichtenberg_figure(mp.Np, mp.Rc, mp.S, int(rng.integers(2**31))).write_csv(
            run.path("lichtenberg.csv"))

    chosen = fronts[algos[0]].best_at_budget(budget)
    if chosen is None:
        raise NumericalError(f"front has no entry with at most {budget} sensors")
    nodes = [int(model.candidate_sensor_nodes[i]) + 1 for i in np.flatnonzero(chosen.selection)]
    payload = {"criterion": criterion, "algorithm": algos[0], "budget": budget, "seed": seed,
               "selection": bits_to_str(chosen.selection), "nodes": nodes, "J": float(chosen.J)}
    run.path(SELECTION_FILE).write_text(json.dumps(payload, indent=2))
    print(f"{criterion.upper()} / {algos[0]}: {len(nodes)} sensors at nodes {nodes} (J = {chosen.J:.6g})")

    runs = int(sec.get("hv_runs", 10 if sec.get("compare") or args.compare else 0))
    if runs > 0:
        hv_table(sec, ctx, seed, runs, run)
    return fronts, payload


def hv_table(sec, ctx, seed, runs, run: RunOutput):
    """Hypervolume of every (criterion, algorithm, seed) front, normalized per criterion."""
    criteria = [c.lower() for c in sec.get("hv_criteria", CRITERIA)]
    algos = [a for a in sec.get("hv_algorithms", ["mola", "nsga2"])]
    seeds = list(sec.get("hv_seeds", range(seed, seed + runs)))
    rows, summary = [], []
    for crit in criteria:
        fronts = {}
        with run.timed(f"hv_{crit}"):
            reference = [exhaustive_front(crit, ctx)] if ctx.n_candidates <= 20 else []
            for a in algos:
                for s in seeds:
                    fronts[a, s] = optimize(a, crit, ctx, seed=int(s), **_algo_params(sec, a))
        bounds = normalization_bounds(list(fronts.values()) + reference)
        for a in algos:
            hvs = [hypervolume(fronts[a, s], bounds=bounds) for s in seeds]
            rows += [(crit, a, s, h) for s, h in zip(seeds, hvs)]
            summary.append((crit, a, float(np.mean(hvs)), float(np.std(hvs))))
    with open(run.path("hypervolume.csv"), "w") as fh:
        fh.write("criterion,algorithm,seed,hypervolume\n")
        for crit, a, s, h in rows:
            fh.write(f"{crit},{a},{s},{h!r}\n")
    with open(run.path("hypervolume_summary.csv"), "w") as fh:
        fh.write("criterion,algorithm,mean,std\n")
        for crit, a, m, sd in summary:
            fh.write(f"{crit},{a},{m!r},{sd!r}\n")
    print("criterion  algorithm  mean HV")
    for crit, a, m, _ in summary:
        print(f"{crit:<9}  {a:<9}  {m:.4f}")
    return summary


def cmd_identify(cfg, args, run: RunOutput):
    sec = _section(cfg, "identify")
    model = build_model(cfg)
    seed = _seed(cfg, args)
    selection = resolve_selection(cfg, sec, model)
    truth = damage_vector(model.n_elements, sec.get("damage", {"E3": 0.8}))
    noise = float(sec.get("noise", 0.01))
    if noise < 0:
        raise ConfigError("noise must be non-negative")
    data_seed, chain_seed = np.random.SeedSequence(seed).spawn(2)
    with run.timed("measurement"):
        measured = synthetic_measurement(model, selection, truth, noise, np.random.default_rng(data_seed),
                                         int(sec.get("n_modes", 6)))
    problem = IdentificationProblem(model, measured, selection, _estimated(sec, model),
                                    float(sec.get("alpha_max", 0.95)),
                                    float(sec.get("sigma", max(noise, 0.01))))
    with run.timed("sampling"):
        chain = mh_sample(problem, int(sec.get("n_iter", 15000)), int(sec.get("burn_in", 5000)),
                          np.random.default_rng(chain_seed))
    summary = posterior_summary(chain)
    measured.write_csv(run.path("measured_modes.csv"))
    chain.write_csv(run.path("chain.csv"))
    summary.write_csv(run.path("summary.csv"))
    summary.write_kde_csv(run.path("kde.csv"))
    identified = problem.full_damage(summary.most_probable)
    save_damage(run.path("model_update.json"), identified)
    print(f"acceptance rate {chain.acceptance_rate:.3f}")
    print("element  mean     95% interval")
    for j, m in enumerate(summary.most_probable):
        if truth[problem.estimated_elements[j]] > 0 or m >= 0.05:
            lo, hi = summary.ci95[j]
            print(f"E{problem.estimated_elements[j] + 1:<7} {m:.4f}   [{lo:.4f}, {hi:.4f}]")
    return chain, summary, identified


def _levels(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level list {text!r}") from None


def cmd_noise_sweep(cfg, args, run: RunOutput):
    sec = _section(cfg, "noise_sweep")
    model = build_model(cfg)
    seed = _seed(cfg, args)
    selection = resolve_selection(cfg, sec, model)
    truth = damage_vector(model.n_elements, sec.get("damage", {"E3": 0.8, "E9": 0.5}))
    levels = args.levels if args.levels is not None else list(sec.get("levels", [0.01, 0.05, 0.10, 0.15]))
    replicates = args.replicates if args.replicates is not None else int(sec.get("replicates", 5))
    if not levels or any(lv < 0 for lv in levels):
        raise ConfigError("noise levels must be a non-empty list of non-negative numbers")
    if replicates < 1:
        raise ConfigError("replicates must be at least 1")
    seeds = sec.get("seeds") or [seed + r for r in range(replicates)]
    kw = {}
    if sec.get("sigma") is not None:
        kw["sigma"] = float(sec["sigma"])
    with run.timed("noise_study"):
        study = run_noise_study(model, selection, truth, levels, replicates, seeds,
                                int(sec.get("n_iter", 15000)), int(sec.get("burn_in", 5000)),
                                estimated_elements=_estimated(sec, model), **kw)
    study.write_csv(run.path("noise_errors.csv"))
    study.write_frequency_csv(run.path("noise_frequencies.csv"))
    print("noise level  mean |error|")
    for level, m in study.level_means.items():
        print(f"{level:>11.3f}  {m:.4f}")
    return study


COMMANDS = {"modal": cmd_modal, "osp": cmd_osp, "identify": cmd_identify, "noise-sweep": cmd_noise_sweep}


def make_parser():
    parser = _ArgParser(prog="jacket-shm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgParser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--criterion", choices=CRITERIA)
        p.add_argument("--algo", choices=list(ALGORITHMS) + ["all"])
        p.add_argument("--budget", type=int)
        p.add_argument("--levels", type=_levels, help="comma separated noise levels")
        p.add_argument("--replicates", type=int)
        p.add_argument("--compare", action="store_true", help="run the multi-seed hypervolume table")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = None
    try:
        cfg = load_config(args.config)
        snapshot = {k: v for k, v in cfg.items() if k != "_base"}
        snapshot["cli"] = {k: v for k, v in vars(args).items()
                           if k not in ("config", "out", "verbose", "command") and v not in (None, False)}
        run = RunOutput(args.out, args.command, snapshot)
        COMMANDS[args.command](cfg, args, run)
        run.commit()
    except (ConfigError, FileNotFoundError, KeyError, TypeError, ValueError) as exc:
        if run is not None:
            run.abort()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        if run is not None:
            run.abort()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except BaseException:
        if run is not None:
            run.abort()
        raise
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
