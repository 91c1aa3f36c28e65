"""Command-line front end.

Exit codes: 0 success, 2 bad arguments, 3 data errors, 4 estimation failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .complexity import (
    ConstantMeanProcedure,
    EstimationError,
    FFNNProcedure,
    IdentityProcedure,
    gdf_horizontal,
    gdf_vertical,
    null_dof,
    p_cv,
)
from .datagen import Scenario, ScenarioSpec, gen_intercept_only, gen_scenario
from .experiments import (
    COMPARE_COLUMNS,
    SUBSET_COLUMNS,
    ExperimentSpec,
    ParseError,
    RealDataSchema,
    _dump_json,
    best_subset_select,
    bundled_path,
    bundled_spec,
    list_bundled_specs,
    load_csv,
    real_data_compare,
    run_experiment,
    write_csv,
    write_manifest,
)
from .ffnn import FitError, ModelConfig
from .parallel import default_threads
from .seeding import child_rng

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_ESTIMATION = 4

logger = logging.getLogger("dofnet")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _folds(text):
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"--folds must be at least 2, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return value


def _add_common(p, seed_required=True):
    p.add_argument("--seed", type=int, required=False, help="master seed" + (" (required)" if seed_required else ""))
    p.add_argument("--threads", type=_positive_int, default=None, help="worker threads (default: DOFNET_THREADS or CPU count)")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_data(p):
    g = p.add_argument_group("data source (one of --data or --scenario)")
    g.add_argument("--data", help="CSV file, or 'lowbwt' for the bundled low birth weight data")
    g.add_argument("--schema", help="schema TOML for --data (default: bundled low birth weight schema)")
    g.add_argument("--covariates", help="comma-separated covariates to keep from --data")
    g.add_argument("--scenario", help="simulate null data: 1 binary, 2 continuous, 3 mixed inputs")
    g.add_argument("--n", type=_positive_int, default=200)
    g.add_argument("--p", type=int, default=2)
    g.add_argument("--m", type=int, default=None, help="binary inputs in the mixed scenario (default p/2)")
    g.add_argument("--prevalence", type=float, default=0.3)


def _add_model(p):
    p.add_argument("--hidden", type=_positive_int, default=2, help="hidden units H")
    p.add_argument("--decay", type=_nonneg_float, default=0.01, help="weight decay lambda")
    p.add_argument("--standardize", action="store_true", help="z-score inputs before training")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dofnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gdf", help="generalized degrees of freedom")
    _add_data(g)
    _add_model(g)
    _add_common(g)
    g.add_argument("--method", choices=["vertical", "horizontal"], default="horizontal")
    g.add_argument("--k", type=_positive_int, default=None, help="flips per step (default 10%% of n)")
    g.add_argument("--reps", type=_positive_int, default=100, help="internal replications N")
    g.add_argument("--oracle", choices=["identity", "constant"], help="use an oracle procedure instead of a network")

    c = sub.add_parser("pcv", help="cross-validated effective number of parameters")
    _add_data(c)
    _add_model(c)
    _add_common(c)
    c.add_argument("--folds", type=_folds, default=10, help="fold count K")
    c.add_argument("--reps", type=_positive_int, default=100, help="internal replications N")
    c.add_argument("--oracle", choices=["constant"], help="use an oracle procedure instead of a network")

    nd = sub.add_parser("nulldof", help="mean likelihood-ratio statistic under a null scenario")
    _add_data(nd)
    _add_model(nd)
    _add_common(nd)
    nd.add_argument("--reps", type=_positive_int, default=100, help="number of null datasets")

    e = sub.add_parser("experiment", help="run a study from a spec file")
    e.add_argument("spec", nargs="?", help="spec file path or bundled spec name")
    e.add_argument("--list", action="store_true", help="list bundled specs and exit")
    e.add_argument("--reps", type=_positive_int, default=None, help="override external_reps")
    e.add_argument("--internal-reps", type=_positive_int, default=None, help="override internal_reps")
    e.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a spec key (TOML value)")
    e.add_argument("--seed", type=int, default=None, help="override master_seed")
    e.add_argument("--threads", type=_positive_int, default=None)
    e.add_argument("--out", default=None, help="output directory (default: the spec's output_dir)")
    e.add_argument("-v", "--verbose", action="count", default=0)

    s = sub.add_parser("select", help="best-subset selection by cross-validated log-likelihood")
    _add_data(s)
    _add_model(s)
    _add_common(s)
    s.add_argument("--folds", type=_folds, default=10)
    s.add_argument("--reps", type=_positive_int, default=10, help="CV replications per subset")

    cm = sub.add_parser("compare", help="best / intercept-only / full model comparison")
    _add_data(cm)
    _add_model(cm)
    _add_common(cm)
    cm.add_argument("--best", help="comma-separated best subset (default: run the subset search)")
    cm.add_argument("--folds", type=_folds, default=10)
    cm.add_argument("--reps", type=_positive_int, default=100, help="internal replications N")
    cm.add_argument("--subset-reps", type=_positive_int, default=10)
    cm.add_argument("--k", type=_positive_int, default=None)
    return parser


def _setup_logging(verbosity):
    level = logging.WARNING - 10 * min(verbosity, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _require_seed(args):
    if args.seed is None:
        raise UsageError("--seed is required")
    return args.seed


def _load_data(args):
    if args.data and args.scenario:
        raise UsageError("give either --data or --scenario, not both")
    if args.data:
        path = bundled_path("lowbwt.csv") if args.data == "lowbwt" else Path(args.data)
        schema_path = args.schema or bundled_path("lowbwt_schema.toml")
        try:
            data = load_csv(path, RealDataSchema.from_toml(schema_path))
            if args.covariates:
                data = data.select([c.strip() for c in args.covariates.split(",") if c.strip()])
        except (OSError, ParseError, KeyError, ValueError, tomllib.TOMLDecodeError) as exc:
            raise DataError(str(exc)) from exc
        return data
    if args.scenario:
        try:
            spec = ScenarioSpec(Scenario.parse(args.scenario), args.n, args.p, args.m, args.prevalence)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        return gen_scenario(spec, child_rng(args.seed or 0, "cli-data"))
    return None


def _config(args):
    return ModelConfig(hidden_units=args.hidden, decay=args.decay, standardize=args.standardize)


def _report(args, name, estimate):
    out = Path(args.out)
    payload = {
        "command": args.command,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in ("threads", "verbose", "out")},
        "estimate": estimate.as_dict(),
    }
    _dump_json(payload, out / f"{name}.json")
    write_manifest(out, {"command": args.command, "arguments": payload["arguments"], "outputs": [f"{name}.json"]})
    print(f"{estimate.method.value}: {estimate.value:.4f} (se {estimate.std_error:.4f}, reps {estimate.internal_reps})")


def cmd_gdf(args) -> int:
    if args.oracle is None:
        _require_seed(args)
    data = _load_data(args)
    if args.oracle:
        if data is None:
            data = gen_intercept_only(args.n, 0, 0.5, child_rng(args.seed or 0, "cli-data"))
        proc = IdentityProcedure(data.n) if args.oracle == "identity" else ConstantMeanProcedure(data.n)
    else:
        if data is None:
            raise UsageError("a data source (--data or --scenario) is required")
        proc = FFNNProcedure(data.X, _config(args))
    seed = args.seed or 0
    if args.method == "vertical":
        est = gdf_vertical(proc, data, N=args.reps, seed=seed, threads=args.threads)
    else:
        if args.reps < 2:
            raise UsageError("horizontal GDF needs --reps >= 2")
        if args.k is not None and args.k > data.n:
            raise UsageError(f"--k must not exceed n={data.n}")
        est = gdf_horizontal(proc, data, k=args.k, N=args.reps, seed=seed, threads=args.threads)
    _report(args, "gdf", est)
    return EXIT_OK


def cmd_pcv(args) -> int:
    if args.oracle is None:
        _require_seed(args)
    data = _load_data(args)
    if data is None:
        raise UsageError("a data source (--data or --scenario) is required")
    if data.n1 == 0 or data.n0 == 0:
        raise DataError("cross-validation needs both response classes")
    if args.folds > data.n:
        raise UsageError(f"--folds must not exceed n={data.n}")
    proc = ConstantMeanProcedure(data.n) if args.oracle else FFNNProcedure(data.X, _config(args))
    est = p_cv(proc, data, K=args.folds, N=args.reps, seed=args.seed or 0, threads=args.threads)
    _report(args, "pcv", est)
    print(f"-l_CV: {est.detail['neg_lcv']:.4f} (se {est.detail['neg_lcv_se']:.4f})")
    return EXIT_OK


def cmd_nulldof(args) -> int:
    seed = _require_seed(args)
    if args.data:
        raise UsageError("nulldof simulates its own data; use --scenario")
    if not args.scenario:
        raise UsageError("--scenario is required")
    if args.reps < 2:
        raise UsageError("--reps must be at least 2")
    try:
        spec = ScenarioSpec(Scenario.parse(args.scenario), args.n, args.p, args.m, args.prevalence)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    config = _config(args)
    est = null_dof(
        lambda d: FFNNProcedure(d.X, config),
        lambda rng: gen_scenario(spec, rng),
        reps=args.reps,
        seed=seed,
        threads=args.threads,
    )
    _report(args, "nulldof", est)
    return EXIT_OK


def _parse_override(text):
    if "=" not in text:
        raise UsageError(f"--set expects KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    try:
        parsed = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value
    return key.strip(), parsed


def cmd_experiment(args) -> int:
    if args.list:
        for name in list_bundled_specs():
            print(name)
        return EXIT_OK
    if not args.spec:
        raise UsageError("a spec file or bundled spec name is required")
    path = Path(args.spec)
    if not path.is_file():
        try:
            path = bundled_spec(args.spec)
        except FileNotFoundError as exc:
            raise DataError(str(exc)) from exc
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    for item in args.set:
        key, value = _parse_override(item)
        raw[key] = value
    if args.reps is not None:
        raw["external_reps"] = args.reps
    if args.internal_reps is not None:
        raw["internal_reps"] = args.internal_reps
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if "master_seed" not in raw:
        raise UsageError("experiment needs a master seed (spec key master_seed or --seed)")
    try:
        spec = ExperimentSpec.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid spec: {exc}") from exc
    try:
        files = run_experiment(spec, threads=args.threads, output_dir=args.out)
    except (ParseError, OSError) as exc:
        raise DataError(str(exc)) from exc
    for f in files:
        print(f)
    return EXIT_OK


def _real_data_args(args):
    seed = _require_seed(args)
    data = _load_data(args)
    if data is None or args.scenario:
        raise UsageError("--data is required")
    return seed, data


def cmd_select(args) -> int:
    seed, data = _real_data_args(args)
    best, table = best_subset_select(
        data, args.hidden, args.decay, K=args.folds, seed=seed, reps=args.reps, threads=args.threads
    )
    out = Path(args.out)
    rows = [{"H": args.hidden, "decay": args.decay, **r} for r in table]
    write_csv(rows, out / "select.csv", SUBSET_COLUMNS)
    arguments = {k: v for k, v in sorted(vars(args).items()) if k not in ("threads", "verbose", "out")}
    write_manifest(out, {"command": "select", "arguments": arguments, "outputs": ["select.csv"]})
    print("best subset:", "+".join(best) if best else "(intercept)")
    return EXIT_OK


def cmd_compare(args) -> int:
    seed, data = _real_data_args(args)
    if args.best is not None:
        best = [c.strip() for c in args.best.split(",") if c.strip()]
        unknown = [c for c in best if c not in (data.groups or {})]
        if unknown:
            raise UsageError(f"unknown covariate(s) in --best: {', '.join(unknown)}")
    else:
        best, _ = best_subset_select(
            data, args.hidden, args.decay, K=args.folds, seed=seed, reps=args.subset_reps, threads=args.threads
        )
    rows = real_data_compare(
        data, args.hidden, args.decay, best, K=args.folds, N=args.reps, k=args.k, seed=seed, threads=args.threads
    )
    out = Path(args.out)
    write_csv([{"H": args.hidden, "decay": args.decay, "status": "ok", **r} for r in rows], out / "compare.csv", COMPARE_COLUMNS)
    arguments = {k: v for k, v in sorted(vars(args).items()) if k not in ("threads", "verbose", "out")}
    write_manifest(out, {"command": "compare", "arguments": arguments, "outputs": ["compare.csv"]})
    for r in rows:
        print(
            f"{r['model']} {r['covariates']:<30} -l_CV {r['neg_lcv']:8.2f}  p_cv {r['pcv']:7.2f}  GDF {r['gdf']:7.2f}"
        )
    return EXIT_OK


COMMANDS = {
    "gdf": cmd_gdf,
    "pcv": cmd_pcv,
    "nulldof": cmd_nulldof,
    "experiment": cmd_experiment,
    "select": cmd_select,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.verbose)
    if getattr(args, "threads", None) is None:
        args.threads = default_threads()
    start = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dofnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"dofnet {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, FitError) as exc:
        print(f"dofnet {args.command}: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    logger.info("finished in %.1f s", time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
