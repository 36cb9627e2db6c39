"""Command-line front end: ``ppbr simulate | fit | predict | evaluate``."""

from __future__ import annotations

import argparse
import glob as globlib
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluation, io
from .backfitter import predict, run_chain
from .data_model import Chain, Dataset, FitConfig, SSLHyper, UniformPrior
from .exceptions import PPBRError
from .simulation import ScenarioSpec, gen_scenario
from .streams import stream

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("ppbr")

# [section] -> allowed keys
CONFIG_SCHEMA = {
    "model": {"K", "J", "rho"},
    "priors": {"kind", "h0", "h1", "alpha_w", "beta_w", "mu", "sigma2"},
    "mcmc": {"T", "warmup", "lambda_init", "chains", "seed"},
    "grid": {"rho", "J", "h0"},
}


class UsageError(PPBRError):
    pass


# ---------------------------------------------------------------- config


@dataclass
class FitPlan:
    base: FitConfig
    rho: list[float]
    J: list[int]
    h0: list[float]
    chains: int


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for section, body in doc.items():
        if section not in CONFIG_SCHEMA:
            raise UsageError(f"{path}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise UsageError(f"{path}: [{section}] must be a table")
        for key in body:
            if key not in CONFIG_SCHEMA[section]:
                raise UsageError(f"{path}: unknown field {section}.{key}")
    return doc


def _as_list(value, cast, field: str) -> list:
    values = value if isinstance(value, list) else [value]
    try:
        return [cast(v) for v in values]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid value for {field}: {value!r}") from exc


def build_plan(args, doc: dict) -> FitPlan:
    model, priors = doc.get("model", {}), doc.get("priors", {})
    mcmc, grid = doc.get("mcmc", {}), doc.get("grid", {})

    def pick(flag, section, key, default):
        value = getattr(args, flag, None)
        if value is not None:
            return value
        return section.get(key, default)

    kind = args.prior or priors.get("kind", "spike_slab")
    if kind in ("ss", "spike_slab"):
        kind = "spike_slab"
    elif kind != "uniform":
        raise UsageError(f"priors.kind must be 'spike_slab' or 'uniform', got {kind!r}")

    rho = _as_list(pick("rho", grid, "rho", model.get("rho", 0.1)), float, "rho")
    J = _as_list(pick("J", grid, "J", model.get("J", 4)), int, "J")
    h0 = _as_list(pick("h0", grid, "h0", priors.get("h0", 0.05)), float, "h0")
    h1 = float(priors.get("h1", 1.0))
    try:
        base = FitConfig(
            K=int(pick("K", model, "K", 2)),
            J=J[0],
            rho=rho[0],
            prior=UniformPrior() if kind == "uniform" else SSLHyper(
                h0[0], h1, float(priors.get("alpha_w", 1.0)), float(priors.get("beta_w", 1.0))),
            mu_prior=tuple(float(v) for v in priors.get("mu", (0.0, 9.0))),
            sigma2_prior=tuple(float(v) for v in priors.get("sigma2", (1.0, 1.0))),
            T=int(pick("T", mcmc, "T", 13000)),
            T_warmup=int(pick("warmup", mcmc, "warmup", 10000)),
            seed=int(pick("seed", mcmc, "seed", 0)),
            lambda_init=float(pick("lambda_init", mcmc, "lambda_init", 1e4)),
        )
        for value in h0:
            if kind == "spike_slab":
                SSLHyper(value, h1)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    if kind == "uniform":
        h0 = [float("nan")]
    chains = int(pick("chains", mcmc, "chains", 1))
    if chains < 1:
        raise UsageError("mcmc.chains must be >= 1")
    return FitPlan(base, rho, J, h0, chains)


def grid_points(plan: FitPlan) -> list[FitConfig]:
    points = []
    for rho, J, h0 in itertools.product(plan.rho, plan.J, plan.h0):
        prior = plan.base.prior
        if isinstance(prior, SSLHyper):
            prior = SSLHyper(h0, prior.h1, prior.alpha_w, prior.beta_w)
        points.append(plan.base.with_(rho=rho, J=J, prior=prior))
    return points


# ---------------------------------------------------------------- helpers


def _prepare_out(path: Path, force: bool) -> Path:
    path = Path(path)
    if path.exists() and any(path.iterdir()) and not force:
        raise UsageError(f"output directory {path} is not empty (use --force to overwrite)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("PPBR_JOBS", "1")))
    except ValueError:
        return 1


def _fit_job(job):
    dataset, config, gp, rep, out = job
    rng = stream(config.seed, "fit", f"gridpoint-{gp}", f"rep-{rep}")
    start = time.perf_counter()
    chain = run_chain(rng, dataset, config)
    elapsed = time.perf_counter() - start
    io.save_chain(out, chain, {"seed": config.seed, "stream": ["fit", f"gridpoint-{gp}", f"rep-{rep}"],
                               "timings": {"run_seconds": elapsed}})
    return gp, rep, chain.loglik


def _chain_dirs(args) -> list[Path]:
    if getattr(args, "fit", None):
        sel = io.read_json(Path(args.fit) / "selection.json")
        return [Path(args.fit) / d for d in sel["selected"]["chains"]]
    return [Path(d) for d in (args.chain or [])]


def _pool_chains(dirs: list[Path]) -> Chain:
    chains = [io.load_chain(d) for d in dirs]
    if not chains:
        raise UsageError("no chain directories given")
    draws = [s for c in chains for s in c.draws]
    return Chain(draws, np.hstack([c.loglik for c in chains]), chains[0].p, chains[0].config)


def _read_predictions(path: Path) -> np.ndarray:
    import csv

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return np.array([float(row["y_hat"]) for row in reader])


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> None:
    out = _prepare_out(args.out, args.force)
    spec = ScenarioSpec(kind=args.scenario, p=args.p, K=args.K, r=args.r, n_train=args.n_train,
                        n_test=args.n_test, sigma2=args.sigma2, seed=args.seed)
    train, test, truth = gen_scenario(spec)
    io.write_dataset(out / "train.csv", train)
    if test is not None:
        io.write_dataset(out / "test.csv", test)
    io.write_json(out / "truth.json", truth)
    io.write_json(out / "spec.json", {
        **spec.to_dict(),
        "files": {"train": {"p": spec.p, "n": spec.n_train}, "test": {"p": spec.p, "n": spec.n_test}},
        "generator": {"package": "ppbr", "streams": ["predictors", "coefficients", "noise"]},
    })


def cmd_fit(args) -> None:
    dataset = io.read_dataset(args.train)
    plan = build_plan(args, load_config(args.config))
    out = _prepare_out(args.out, args.force)
    points = grid_points(plan)
    jobs = []
    for gp, config in enumerate(points):
        for rep in range(plan.chains):
            jobs.append((dataset, config, gp, rep, out / f"gp-{gp}" / f"rep-{rep}"))
    n_jobs = args.jobs or _default_jobs()
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_fit_job, jobs))
    else:
        results = [_fit_job(job) for job in jobs]

    pooled: dict[int, list[np.ndarray]] = {}
    for gp, rep, ll in sorted(results, key=lambda r: (r[0], r[1])):
        pooled.setdefault(gp, []).append(ll)
    table = []
    for gp, config in enumerate(points):
        score = evaluation.waic(np.hstack(pooled[gp]))
        table.append({
            "gridpoint": gp,
            "rho": config.rho,
            "J": config.J,
            "h0": config.prior.h0 if isinstance(config.prior, SSLHyper) else None,
            "prior": "spike_slab" if isinstance(config.prior, SSLHyper) else "uniform",
            "waic": score,
            "chains": [f"gp-{gp}/rep-{rep}" for rep in range(plan.chains)],
        })
    best = min(table, key=lambda row: row["waic"])
    io.write_json(out / "selection.json", {"grid": table, "selected": best})


def cmd_predict(args) -> None:
    dirs = _chain_dirs(args)
    for d in dirs:
        if not Path(d).is_dir():
            raise UsageError(f"chain directory {d} does not exist")
    chain = _pool_chains(dirs)
    data = io.read_dataset(args.data)
    if data.p != chain.p:
        raise UsageError(f"data has p={data.p} but the chain was fitted with p={chain.p}")
    point, per_draw = predict(chain, data)
    out = Path(args.out)
    io.atomic_write(out, io._csv_text(["subject", "y_hat"], ([str(i + 1), v] for i, v in enumerate(point))))
    if args.per_draw:
        header = [f"s{i + 1}" for i in range(data.n)]
        io.atomic_write(out.with_name(out.stem + "_draws.csv"), io._csv_text(header, per_draw))


def cmd_evaluate(args) -> None:
    out = _prepare_out(args.out, args.force)
    if args.glob:
        aggregate(sorted(globlib.glob(args.glob)), out)
        return
    if not (args.predictions and args.data):
        raise UsageError("evaluate needs --predictions and --data (or --glob)")
    data = io.read_dataset(args.data)
    pred = _read_predictions(args.predictions)
    metrics: dict = {"mspe": evaluation.mspe(pred, data.responses), "waic": None,
                     "acs_median": None, "cover_ci": None, "len_ci": None}
    dirs = _chain_dirs(args)
    truth = io.read_json(args.truth) if args.truth else None
    if not dirs:
        io.write_json(out / "metrics.json", metrics)
        return
    chain = _pool_chains(dirs)
    metrics["waic"] = evaluation.waic(chain.loglik)
    train = io.read_dataset(args.train) if args.train else None
    directions = truth.get("directions") if truth else None

    if args.align == "truth" and directions is not None and len(directions) == chain.K:
        alignment = evaluation.align(chain, directions)
        acs = evaluation.acs_samples(chain, alignment, directions)
        metrics["acs_median"] = np.median(acs, axis=0).tolist()
        io.atomic_write(out / "acs.csv", io._csv_text([f"k{k + 1}" for k in range(chain.K)], acs))
        report = evaluation.coverage_report(chain, alignment, directions)
        metrics["cover_ci"] = [row["cover"] for row in report]
        metrics["len_ci"] = [row["length"] for row in report]
        io.atomic_write(out / "coverage.csv", io._csv_text(
            ["k", "l", "truth", "lo", "hi", "cover", "length"],
            ([r["k"], r["l"], r["truth"], r["lo"], r["hi"], r["cover"], r["length"]] for r in report)))
        grids = evaluation.truth_grids(train, directions) if train is not None else None
    elif args.align == "by-monotonicity" and train is not None:
        alignment = evaluation.align_by_monotonicity(chain, train)
        bounds = evaluation.posterior_index_bounds(chain, train, alignment)
        grids = evaluation.pooled_grids([bounds])
    else:
        alignment, grids = None, None

    if alignment is not None and grids is not None:
        summary = evaluation.ridge_summary(chain, alignment, grids)
        rows = ([s["k"], g, m, lo, hi] for s in summary
                for g, m, lo, hi in zip(s["grid"], s["median"], s["lo"], s["hi"]))
        io.atomic_write(out / "ridge_summary.csv", io._csv_text(["k", "grid", "median", "lo", "hi"], rows))
    io.write_json(out / "metrics.json", metrics)


def aggregate(paths: list[str], out: Path) -> None:
    """Average metrics over runs (CoverCI/LenCI element-wise)."""
    if not paths:
        raise UsageError("--glob matched no metrics files")
    runs = [io.read_json(p) for p in paths]
    result: dict = {"runs": len(runs), "files": paths}
    for key in ("mspe", "waic"):
        vals = [r[key] for r in runs if r.get(key) is not None]
        result[key] = float(np.mean(vals)) if vals else None
    for key in ("cover_ci", "len_ci", "acs_median"):
        vals = [r[key] for r in runs if r.get(key) is not None]
        if vals and len({len(v) for v in vals}) == 1:
            result[key] = np.mean(np.array(vals, dtype=float), axis=0).tolist()
        else:
            result[key] = None
    io.write_json(out / "aggregate.json", result)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppbr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic train/test replication")
    sim.add_argument("--scenario", choices=["correct", "misspec"], default="correct")
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--K", type=int, default=2)
    sim.add_argument("--r", type=int, default=2)
    sim.add_argument("--n-train", type=int, default=400)
    sim.add_argument("--n-test", type=int, default=1000)
    sim.add_argument("--sigma2", type=float, default=1.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", type=Path, required=True)
    sim.add_argument("--force", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="run chains over a hyperparameter grid and select by WAIC")
    fit.add_argument("--train", type=Path, required=True)
    fit.add_argument("--config", type=Path)
    fit.add_argument("--out", type=Path, required=True)
    fit.add_argument("--K", type=int)
    fit.add_argument("--J", type=int, nargs="+")
    fit.add_argument("--rho", type=float, nargs="+")
    fit.add_argument("--h0", type=float, nargs="+")
    fit.add_argument("--prior", choices=["ss", "spike_slab", "uniform"])
    fit.add_argument("--T", type=int)
    fit.add_argument("--warmup", type=int)
    fit.add_argument("--lambda-init", dest="lambda_init", type=float)
    fit.add_argument("--chains", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--jobs", type=int)
    fit.add_argument("--force", action="store_true")
    fit.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="posterior-mean predictions from fitted chains")
    src = pr.add_mutually_exclusive_group(required=True)
    src.add_argument("--chain", type=Path, nargs="+")
    src.add_argument("--fit", type=Path, help="fit directory; uses the WAIC-selected grid point")
    pr.add_argument("--data", type=Path, required=True)
    pr.add_argument("--out", type=Path, required=True)
    pr.add_argument("--per-draw", action="store_true")
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="MSPE, WAIC, ACS, coverage and ridge summaries")
    ev.add_argument("--predictions", type=Path)
    ev.add_argument("--data", type=Path, help="dataset holding the observed responses")
    ev.add_argument("--truth", type=Path)
    ev.add_argument("--train", type=Path, help="training data, for ridge grids and alignment")
    evsrc = ev.add_mutually_exclusive_group()
    evsrc.add_argument("--chain", type=Path, nargs="+")
    evsrc.add_argument("--fit", type=Path)
    ev.add_argument("--align", choices=["truth", "by-monotonicity"], default="truth")
    ev.add_argument("--glob", help="aggregate existing metrics.json files instead")
    ev.add_argument("--out", type=Path, required=True)
    ev.add_argument("--force", action="store_true")
    ev.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (PPBRError, ValueError, OSError, KeyError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc), "command": args.command}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
