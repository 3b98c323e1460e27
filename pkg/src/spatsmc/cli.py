"""Command-line front end.

Subcommands (all driven by a JSON config file; flags override file values):

    spatsmc simulate --config cfg.json [--seed N --threads N --out DIR]
    spatsmc filter   --config cfg.json [--seed N --threads N --out results.csv]
    spatsmc search   --config cfg.json [--seed N --threads N --out DIR]
    spatsmc profile  --config cfg.json [--seed N --threads N --out profile.csv]
    spatsmc mcap     --config cfg.json [--out mcap.csv]

Exit codes: 0 success, 2 config validation error (every violated field is
reported before exit), 1 runtime error.  All outputs are CSV; results are
deterministic given (config, seed) and independent of the thread count.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
import pandas as pd

from . import filters as _filters
from . import inference as _inference
from .errors import SpatsmcError, ValidationError
from .kalman import kf_loglik
from .model import simulate as _simulate
from .models.bm import bm_build, bm_to_lgspec
from .models.measles import measles_build
from .rng import RngStream

FILTER_METHODS = ("pfilter", "girf", "abf", "enkf", "bpfilter")
SEARCH_METHODS = ("igirf", "ienkf", "iubf")

_REQUIRED_OPTIONS = {
    "pfilter": ("Np",),
    "girf": ("Np", "Ninter", "Nguide", "Lookahead"),
    "abf": ("Nrep", "Np"),
    "enkf": ("Np",),
    "bpfilter": ("Np",),
    "igirf": ("Ngirf", "Np", "Ninter", "Nguide", "Lookahead", "rw_sd",
              "cooling"),
    "ienkf": ("Nenkf", "Np", "rw_sd", "cooling"),
    "iubf": ("Nubf", "Nparam", "Nrep_per_param", "prop", "rw_sd", "cooling"),
}


def _load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _validate_model(cfg: dict, errors: list, allow_sweep: bool):
    model = cfg.get("model")
    if not isinstance(model, dict):
        errors.append("model: required object is missing")
        return
    name = model.get("name")
    if name not in ("bm", "measles"):
        errors.append(f"model.name: must be 'bm' or 'measles', got {name!r}")
    u = model.get("U")
    if isinstance(u, list):
        if not allow_sweep:
            errors.append("model.U: a list is only allowed for `filter` sweeps")
        elif not all(isinstance(v, int) and v >= 1 for v in u):
            errors.append("model.U: sweep entries must be positive integers")
    elif u is not None and (not isinstance(u, int) or u < 1):
        errors.append("model.U: must be a positive integer")
    if name == "bm" and not model.get("N"):
        errors.append("model.N: required for the bm model")
    if name == "measles":
        for v in (u if isinstance(u, list) else [u or 5]):
            if isinstance(v, int) and v > 5:
                errors.append("model.U: the measles model packages 5 cities")
    params = model.get("params", {})
    if params and not isinstance(params, dict):
        errors.append("model.params: must be an object of name -> value")


def _validate_options(method: str, options: dict, errors: list):
    for field in _REQUIRED_OPTIONS.get(method, ()):
        if field not in options:
            errors.append(f"options.{field}: required by method {method!r}")
    if method == "bpfilter":
        if ("block_size" in options) == ("block_list" in options):
            errors.append("options: bpfilter needs exactly one of block_size "
                          "or block_list")
    if "nbhd" in options:
        nb = options["nbhd"]
        ok = nb == "full" or (isinstance(nb, str) and nb.startswith("lag")
                              and nb[3:].isdigit())
        if not ok:
            errors.append(f"options.nbhd: unknown preset {nb!r} "
                          "(use 'full' or 'lagK')")
    if "rw_sd" in options and not isinstance(options["rw_sd"], dict):
        errors.append("options.rw_sd: must be an object of name -> sd")


def _validate(cfg: dict, command: str) -> list:
    errors: list = []
    if command in ("simulate", "filter", "search", "profile"):
        _validate_model(cfg, errors, allow_sweep=(command == "filter"))
    seed = cfg.get("seed")
    if seed is not None and not isinstance(seed, int):
        errors.append("seed: must be an integer")
    threads = cfg.get("threads")
    if threads is not None and (not isinstance(threads, int) or threads < 1):
        errors.append("threads: must be a positive integer")
    if command == "filter":
        methods = cfg.get("method")
        methods = methods if isinstance(methods, list) else [methods]
        for m in methods:
            if m not in FILTER_METHODS:
                errors.append(f"method: {m!r} is not one of {FILTER_METHODS}")
            else:
                _validate_options(m, cfg.get("options", {}), errors)
        reps = cfg.get("replicates", 1)
        if not isinstance(reps, int) or reps < 1:
            errors.append("replicates: must be a positive integer")
    elif command == "search":
        method = cfg.get("method")
        if method not in SEARCH_METHODS:
            errors.append(f"method: {method!r} is not one of {SEARCH_METHODS}")
        else:
            _validate_options(method, cfg.get("options", {}), errors)
    elif command == "simulate":
        nsim = cfg.get("nsim", 1)
        if not isinstance(nsim, int) or nsim < 1:
            errors.append("nsim: must be a positive integer")
    elif command == "profile":
        prof = cfg.get("profile")
        if not isinstance(prof, dict):
            errors.append("profile: required object is missing")
        else:
            for field in ("parameter", "grid", "lower", "upper", "nprof"):
                if field not in prof:
                    errors.append(f"profile.{field}: required")
            grid = prof.get("grid")
            if isinstance(grid, dict):
                for field in ("from", "to", "length"):
                    if field not in grid:
                        errors.append(f"profile.grid.{field}: required")
            elif grid is not None and not isinstance(grid, list):
                errors.append("profile.grid: must be a list or "
                              "{from, to, length}")
        method = cfg.get("method", "igirf")
        if method not in SEARCH_METHODS:
            errors.append(f"method: {method!r} is not one of {SEARCH_METHODS}")
        else:
            _validate_options(method, cfg.get("options", {}), errors)
    elif command == "mcap":
        mc = cfg.get("mcap")
        if not isinstance(mc, dict):
            errors.append("mcap: required object is missing")
        else:
            for field in ("profile_csv", "parameter"):
                if field not in mc:
                    errors.append(f"mcap.{field}: required")
            level = mc.get("level", 0.95)
            if not 0.0 < level < 1.0:
                errors.append("mcap.level: must be in (0, 1)")
            if "profile_csv" in mc and "parameter" in mc:
                _validate_profile_csv(mc, errors)
    return errors


def _validate_profile_csv(mc: dict, errors: list):
    try:
        prof = pd.read_csv(mc["profile_csv"])
    except OSError as exc:
        errors.append(f"mcap.profile_csv: cannot read ({exc})")
        return
    for column in (mc["parameter"], "loglik"):
        if column not in prof.columns:
            errors.append(f"mcap.profile_csv: lacks column {column!r}")
    if mc["parameter"] in prof.columns \
            and prof[mc["parameter"]].nunique() < 5:
        errors.append("mcap.profile_csv: needs at least 5 distinct profile "
                      "points")


def _build_model(cfg: dict, stream: RngStream, u_override: Optional[int] = None):
    model_cfg = cfg["model"]
    name = model_cfg["name"]
    params = model_cfg.get("params", {})
    u = u_override if u_override is not None else model_cfg.get("U")
    if name == "bm":
        u = u or 10
        return bm_build(u, model_cfg["N"], model_cfg.get("dt_obs", 1.0),
                        params=params, rng=stream.child("data", u))
    data = model_cfg.get("data")
    covar = model_cfg.get("covar")
    return measles_build(
        u or 5,
        data=pd.read_csv(data) if data else None,
        covar=pd.read_csv(covar) if covar else None,
        params=params)


def _nbhd_arg(model, options: dict):
    preset = options.get("nbhd", "full")
    if preset == "full":
        return _filters.nbhd_full(model.n_units)
    return _filters.nbhd_lagged(int(preset[3:]))


def _run_filter_once(model, method: str, options: dict, stream: RngStream):
    if method == "pfilter":
        return _filters.pfilter(model, j=options["Np"], rng=stream)
    if method == "girf":
        return _filters.girf(model, j=options["Np"], ninter=options["Ninter"],
                             nguide=options["Nguide"],
                             lookahead=options["Lookahead"], rng=stream)
    if method == "abf":
        return _filters.abf(model, nrep=options["Nrep"], j=options["Np"],
                            nbhd=_nbhd_arg(model, options), rng=stream)
    if method == "enkf":
        return _filters.enkf(model, j=options["Np"], rng=stream)
    if method == "bpfilter":
        return _filters.bpfilter(model, j=options["Np"],
                                 block_size=options.get("block_size"),
                                 block_list=options.get("block_list"),
                                 rng=stream)
    raise ValidationError(f"unknown filter method {method!r}")


def _run_search(model, method: str, options: dict, stream: RngStream):
    rw_sd = options["rw_sd"]
    cooling = options["cooling"]
    if method == "igirf":
        return _inference.igirf(
            model, ngirf=options["Ngirf"], j=options["Np"],
            ninter=options["Ninter"], nguide=options["Nguide"],
            lookahead=options["Lookahead"], rw_sd=rw_sd, cooling=cooling,
            rng=stream)
    if method == "ienkf":
        return _inference.ienkf(model, nenkf=options["Nenkf"],
                                j=options["Np"], rw_sd=rw_sd,
                                cooling=cooling, rng=stream)
    if method == "iubf":
        return _inference.iubf(
            model, nubf=options["Nubf"], nparam=options["Nparam"],
            nrep_per_param=options["Nrep_per_param"],
            nbhd=_nbhd_arg(model, options), prop=options["prop"],
            rw_sd=rw_sd, cooling=cooling, rng=stream)
    raise ValidationError(f"unknown search method {method!r}")


def _long_format(times, units, values, variable_names) -> pd.DataFrame:
    rows = []
    for i, t in enumerate(times):
        for u, unit in enumerate(units):
            for v, var in enumerate(variable_names):
                rows.append((t, unit, var, values[i, u, v]))
    return pd.DataFrame(rows, columns=["time", "unit", "variable", "value"])


def cmd_simulate(cfg: dict, out: str, stream: RngStream) -> None:
    import pathlib

    model = _build_model(cfg, stream)
    nsim = cfg.get("nsim", 1)
    sims = _simulate(model, rng=stream.child("simulate"), nsim=nsim)
    outdir = pathlib.Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, sim in enumerate(sims):
        suffix = "" if nsim == 1 else f"_{i + 1:03d}"
        times_ext = np.concatenate([[sim.t0], sim.times])
        states = _long_format(times_ext, model.unit_names, sim.states,
                              model.unit_statenames)
        obs = _long_format(sim.times, model.unit_names, sim.obs[:, :, None],
                           [model.obs.unit_obsname])
        states.to_csv(outdir / f"states{suffix}.csv", index=False)
        obs.to_csv(outdir / f"obs{suffix}.csv", index=False)


def cmd_filter(cfg: dict, out: str, stream: RngStream, threads: int) -> None:
    model_cfg = cfg["model"]
    methods = cfg["method"]
    methods = methods if isinstance(methods, list) else [methods]
    u_values = model_cfg.get("U")
    u_values = u_values if isinstance(u_values, list) else [u_values]
    replicates = cfg.get("replicates", 1)
    options = cfg.get("options", {})

    tasks = []
    for u in u_values:
        model = _build_model(cfg, stream, u_override=u)
        exact = None
        if model_cfg["name"] == "bm":
            exact = kf_loglik(bm_to_lgspec(model), model.obs.values).loglik
        for method in methods:
            for rep in range(1, replicates + 1):
                tasks.append((model, u or model.n_units, method, rep, exact))

    def run(task):
        model, u, method, rep, exact = task
        run_stream = stream.child("filter", method, u, rep)
        t0 = time.perf_counter()
        result = _run_filter_once(model, method, options, run_stream)
        elapsed = time.perf_counter() - t0
        row = {"run_id": f"{method}-U{u}-rep{rep}", "method": method,
               "U": u, "rep": rep}
        row.update({k: float(np.asarray(v)) for k, v in model.params.items()})
        row["loglik"] = result.loglik
        row["loglik.se"] = np.nan
        if exact is not None:
            row["exact_kf_loglik"] = exact
        row["wall_time"] = round(elapsed, 6)
        row["n_failures"] = result.n_failures
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, tasks))
    else:
        rows = [run(t) for t in tasks]

    if replicates > 1:
        aggregates = []
        frame = pd.DataFrame(rows)
        for (method, u), group in frame.groupby(["method", "U"], sort=False):
            est, se = _inference.logmeanexp(group["loglik"].to_numpy(), se=True)
            agg = dict(group.iloc[0])
            agg.update({"run_id": f"{method}-U{u}-aggregate", "rep": 0,
                        "loglik": est, "loglik.se": se,
                        "wall_time": round(float(group["wall_time"].sum()), 6),
                        "n_failures": int(group["n_failures"].sum())})
            aggregates.append(agg)
        rows.extend(aggregates)
    pd.DataFrame(rows).to_csv(out, index=False)


def cmd_search(cfg: dict, out: str, stream: RngStream) -> None:
    import pathlib

    model = _build_model(cfg, stream)
    method = cfg["method"]
    options = cfg.get("options", {})
    rw_sd = options.get("rw_sd", {})
    missing = [name for name in model.params if name not in rw_sd]
    if missing:
        raise ValidationError(
            "options.rw_sd must list every model parameter (zeros allowed); "
            "missing: " + ", ".join(sorted(missing)))
    result = _run_search(model, method, options, stream.child("search"))
    outdir = pathlib.Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    result.trace.to_csv(outdir / "trace.csv", index=False)
    final = pd.DataFrame([result.params])
    final.insert(0, "method", method)
    final.to_csv(outdir / "final_params.csv", index=False)


def cmd_profile(cfg: dict, out: str, stream: RngStream, threads: int) -> None:
    model = _build_model(cfg, stream)
    prof = cfg["profile"]
    grid = prof["grid"]
    if isinstance(grid, dict):
        grid = np.linspace(grid["from"], grid["to"], int(grid["length"]))
    else:
        grid = np.asarray(grid, dtype=np.float64)
    design = _inference.profile_design(
        prof["parameter"], grid, prof["lower"], prof["upper"],
        int(prof["nprof"]), rng=stream.child("design"),
        transform=model.transform)

    method = cfg.get("method", "igirf")
    options = dict(cfg.get("options", {}))
    rw_sd = dict(options.get("rw_sd", {}))
    rw_sd[prof["parameter"]] = 0.0  # profiled parameter stays fixed
    options["rw_sd"] = rw_sd
    eval_cfg = prof.get("eval", {})
    eval_method = eval_cfg.get("method", "enkf")
    eval_reps = int(eval_cfg.get("replicates", 10))
    eval_np = int(eval_cfg.get("Np", options.get("Np", 1000)))

    def run(item):
        idx, start = item
        row_stream = stream.child("profile", idx)
        row_model = model.with_params(start)
        result = _run_search(row_model, method, options,
                             row_stream.child("search"))
        eval_model = row_model.with_params(result.params)
        lls = [
            _run_filter_once(eval_model, eval_method, {"Np": eval_np},
                             row_stream.child("eval", k)).loglik
            for k in range(eval_reps)
        ]
        est, se = _inference.logmeanexp(np.asarray(lls), se=True)
        row = {k: float(np.asarray(v)) for k, v in result.params.items()}
        row[prof["parameter"]] = float(start[prof["parameter"]])
        row["loglik"] = est
        row["loglik.se"] = se
        return idx, row

    items = list(enumerate(design.starts))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = dict(pool.map(run, items))
    else:
        rows = dict(run(it) for it in items)
    frame = pd.DataFrame([rows[i] for i in range(len(items))])
    frame.to_csv(out, index=False)


def cmd_mcap(cfg: dict, out: str) -> None:
    mc = cfg["mcap"]
    prof = pd.read_csv(mc["profile_csv"])
    name = mc["parameter"]
    for column in (name, "loglik"):
        if column not in prof.columns:
            raise ValidationError(f"profile csv lacks column {column!r}")
    if prof[name].nunique() < 5:
        raise ValidationError("mcap needs at least 5 distinct profile points")
    result = _inference.mcap(prof["loglik"].to_numpy(),
                             prof[name].to_numpy(),
                             level=float(mc.get("level", 0.95)),
                             span=float(mc.get("span", 0.75)))
    frame = pd.DataFrame({
        "parameter": result.parameter_grid,
        "smoothed_loglik": result.smoothed,
    })
    frame["mle"] = result.mle
    frame["cutoff"] = result.cutoff
    frame["ci_lo"] = result.ci[0]
    frame["ci_hi"] = result.ci[1]
    frame["level"] = result.level
    frame.to_csv(out, index=False)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatsmc",
        description="Simulation, filtering and inference for spatiotemporal "
                    "partially observed Markov processes")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "filter", "search", "profile", "mcap"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.out is not None:
        cfg["out"] = args.out

    errors = _validate(cfg, args.command)
    if not cfg.get("out"):
        errors.append("out: required (flag --out or config key)")
    if errors:
        for err in errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2

    stream = RngStream(int(cfg.get("seed", 0)))
    threads = int(cfg.get("threads", 1))
    out = cfg["out"]
    try:
        if args.command == "simulate":
            cmd_simulate(cfg, out, stream)
        elif args.command == "filter":
            cmd_filter(cfg, out, stream, threads)
        elif args.command == "search":
            cmd_search(cfg, out, stream)
        elif args.command == "profile":
            cmd_profile(cfg, out, stream, threads)
        elif args.command == "mcap":
            cmd_mcap(cfg, out)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SpatsmcError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
