"""Command-line interface.

Exit status is 0 on success, 2 for usage and input errors (bad flags,
unreadable or malformed files, unresolvable alignments) and 1 when a
computation fails.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict
from io import StringIO
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import expit

from . import __version__
from ._parallel import WORKERS_ENV, derive_seed
from .debias import DebiasConfig, cv_lambda_losses, default_lambda_grid
from .detect import DetectConfig, detect_transferable
from .errors import (AmbiguousAlignment, DuplicateNode, LSMError, MissingNode, ParseError,
                     SelfLoop)
from .io import (Model, config_hash, dump_model, load_graph, load_model, load_problem,
                 read_pairs, save_graph)
from .lsm import FitConfig
from .metrics import (CSV_COLUMNS, benchmark, holdout_experiment, relative_errors,
                      replicate_seed, summarize)
from .pipeline import METHODS, PipelineConfig, TransferCache, estimate, two_stage
from .synth import ScenarioConfig, generate
from .transfer import TransferProblem

log = logging.getLogger("lsmtransfer")

TMPDIR_ENV = "LSMTRANSFER_TMPDIR"
INPUT_ERRORS = (OSError, ParseError, MissingNode, AmbiguousAlignment, DuplicateNode, SelfLoop)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- output helpers

def _atomic_write(path: str, text: str) -> None:
    """Write via a temporary file in the target's directory (or the configured temp dir)."""
    directory = os.environ.get(TMPDIR_ENV) or os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".lsmtransfer-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        _atomic_write(path, text)


def _csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: _fmt(row.get(c)) for c in columns})
    return buf.getvalue()


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if np.isnan(x) else repr(x)
    return x


# ---------------------------------------------------------------- argument parsing

def _logit_bound(text: str):
    if text.lower() == "auto":
        return "auto"
    if text.lower() == "none":
        return None
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number, 'auto' or 'none'") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _add_fit_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("optimizer")
    g.add_argument("--k", type=int, default=2, help="latent dimension")
    g.add_argument("--max-iter", type=int, default=2000)
    g.add_argument("--tol", type=float, default=1e-6, help="relative objective change to stop at")
    g.add_argument("--max-logit", type=_logit_bound, default="auto",
                   help="bound on |log-odds| for target fits: a number, 'auto' (3 log n) or 'none'")
    g.add_argument("--no-backtracking", action="store_true")


def _add_source_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("target", help="target edge list")
    p.add_argument("--target-nodes", help="node file fixing the target's node set and order")
    p.add_argument("--source", action="append", default=[], metavar="EDGES",
                   help="source edge list (repeatable)")
    p.add_argument("--source-nodes", action="append", metavar="NODES",
                   help="node file per source, in --source order")
    p.add_argument("--align", action="append", metavar="MAP",
                   help="alignment file per source, in --source order; default: match labels")


def _add_detect_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detection")
    g.add_argument("--iota", type=float, default=0.5, help="threshold in baseline sds")
    g.add_argument("--replicates", type=int, default=3)
    g.add_argument("--sample-fraction", type=float, default=0.8)
    g.add_argument("--lambda-policy", choices=("scaled", "once", "per-replicate"), default="scaled")
    g.add_argument("--lambda-scale", type=float, default=2.0,
                   help="penalty is this multiple of n under --lambda-policy scaled")


def _add_lambda_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("debiasing penalty")
    g.add_argument("--lambda", dest="lam", type=float,
                   help="fixed penalty; default: choose by cross-validation")
    g.add_argument("--grid", type=float, nargs="+", help="candidate penalties")
    g.add_argument("--folds", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    common.add_argument("--config", help="JSON file of option defaults, keyed by option name")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="lsmtransfer",
        description="Transfer learning for latent space network models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fit", parents=[common], help="single-network fit of the target")
    p.add_argument("target")
    p.add_argument("--target-nodes")
    p.add_argument("--truth", help="ground-truth JSON written by 'simulate --export'")
    p.add_argument("-o", "--out", help="model file (JSON)")
    _add_fit_options(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("transfer", parents=[common],
                       help="two-stage transfer from a given set of sources")
    _add_source_options(p)
    p.add_argument("--transferable", nargs="+",
                   help="sources to use, by 1-based position or file stem (default: all)")
    p.add_argument("--truth")
    p.add_argument("-o", "--out")
    _add_fit_options(p)
    _add_lambda_options(p)
    p.set_defaults(handler=cmd_transfer)

    p = sub.add_parser("detect", parents=[common], help="detect transferable sources")
    _add_source_options(p)
    p.add_argument("-o", "--out", help="report file (JSON)")
    p.add_argument("--table", help="per-replicate loss table (CSV)")
    _add_fit_options(p)
    _add_detect_options(p)
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("tld", parents=[common], help="detect, then transfer from the detected set")
    _add_source_options(p)
    p.add_argument("--truth")
    p.add_argument("-o", "--out", help="model file (JSON)")
    p.add_argument("--report", help="detection report (JSON)")
    _add_fit_options(p)
    _add_detect_options(p)
    _add_lambda_options(p)
    p.set_defaults(handler=cmd_tld)

    p = sub.add_parser("simulate", parents=[common], help="benchmark on synthetic ensembles")
    p.add_argument("--scenario", choices=("1", "2", "3"), default="2",
                   help="source sizes: 1 all n, 2 mixed, 3 all 2n")
    p.add_argument("--delta-case", choices=("i", "ii", "iii"), default="i")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--L", type=int, default=10)
    p.add_argument("--a", dest="a_size", type=int, default=5, help="number of informative sources")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--export", metavar="DIR", help="also write each replicate's networks and truth")
    p.add_argument("--export-only", action="store_true", help="write ensembles, skip the benchmark")
    p.add_argument("-o", "--out", help="CSV file (default: stdout)")
    _add_fit_options(p)
    _add_detect_options(p)
    _add_lambda_options(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("predict", parents=[common],
                       help="export edge probabilities or run a link-prediction holdout")
    p.add_argument("target", nargs="?", help="target edge list (holdout mode)")
    p.add_argument("--model", help="model file: export its edge probabilities")
    p.add_argument("--pairs", help="pair file restricting the export (two labels per line)")
    p.add_argument("--target-nodes")
    p.add_argument("--source", action="append", default=[], metavar="EDGES")
    p.add_argument("--source-nodes", action="append", metavar="NODES")
    p.add_argument("--align", action="append", metavar="MAP")
    p.add_argument("--method", nargs="+", choices=METHODS, default=["TLD", "one-mode"])
    p.add_argument("--transferable", nargs="+", help="known informative sources, for TLK")
    p.add_argument("--missing", type=float, nargs="+", default=[0.1, 0.2],
                   help="share of target pairs hidden per repeat")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("-o", "--out", help="CSV file (default: stdout)")
    _add_fit_options(p)
    _add_detect_options(p)
    _add_lambda_options(p)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("cv-lambda", parents=[common],
                       help="cross-validate the debiasing penalty")
    _add_source_options(p)
    p.add_argument("--transferable", nargs="+")
    p.add_argument("-o", "--out", help="CSV of mean held-out loss per penalty")
    _add_fit_options(p)
    _add_lambda_options(p)
    p.set_defaults(handler=cmd_cv_lambda)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                defaults = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config: {exc}")
        if not isinstance(defaults, dict):
            parser.error("--config must hold a JSON object")
        known = vars(args)
        unknown = [k for k in defaults if k.replace("-", "_") not in known]
        if unknown:
            parser.error(f"unknown keys in --config: {', '.join(sorted(unknown))}")
        # flags given on the command line win over the file
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        subparser.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
        args = parser.parse_args(argv)
    args.argv = argv
    return args


# ---------------------------------------------------------------- config builders

def _fit_config(args) -> FitConfig:
    return FitConfig(k=args.k, max_iter=args.max_iter, tol=args.tol,
                     backtracking=not args.no_backtracking, seed=args.seed,
                     max_logit=args.max_logit)


def _debias_config(args) -> DebiasConfig:
    return DebiasConfig(**asdict(_fit_config(args)))


def _detect_config(args) -> DetectConfig:
    return DetectConfig(replicates=args.replicates, sample_fraction=args.sample_fraction,
                        iota=args.iota, lambda_policy=args.lambda_policy,
                        lambda_scale=args.lambda_scale, seed=args.seed)


def _pipeline_config(args) -> PipelineConfig:
    det = _detect_config(args) if hasattr(args, "iota") else DetectConfig(seed=args.seed)
    return PipelineConfig(_fit_config(args), _debias_config(args), det,
                          lam=getattr(args, "lam", None), grid=getattr(args, "grid", None),
                          folds=getattr(args, "folds", 5), seed=args.seed)


def _provenance(args) -> dict:
    # output destinations and runtime knobs do not change the result
    skip = ("handler", "verbose", "workers", "cfg", "argv", "out", "report", "table")
    settings = {k: v for k, v in vars(args).items() if k not in skip}
    return {"command": args.command, "argv": args.argv, "seed": args.seed,
            "config": json.loads(json.dumps(settings, default=str)),
            "config_hash": config_hash(settings), "version": __version__}


def _problem(args):
    align = args.align
    if align is not None and len(align) != len(args.source):
        raise UsageError("give one --align per --source")
    if args.source_nodes is not None and len(args.source_nodes) != len(args.source):
        raise UsageError("give one --source-nodes per --source")
    if not args.source:
        raise UsageError("at least one --source is required")
    return load_problem(args.target, args.source, align, args.target_nodes, args.source_nodes)


def _source_index(problem, names: Optional[Sequence[str]]) -> List[int]:
    if names is None:
        return list(range(problem.L))
    stems = {g.name: l for l, g in enumerate(problem.sources)}
    out = []
    for name in names:
        if name in stems:
            out.append(stems[name])
        elif name.isdigit() and 1 <= int(name) <= problem.L:
            out.append(int(name) - 1)
        else:
            raise UsageError(f"unknown source {name!r}; use a 1-based position or a file stem")
    return sorted(set(out))


def _load_truth(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return np.asarray(doc["alpha_t"], dtype=float), np.asarray(doc["z_t"], dtype=float), doc


def _report_metrics(args, alpha, z) -> None:
    if getattr(args, "truth", None):
        a_star, z_star, _ = _load_truth(args.truth)
        err = relative_errors((a_star, z_star), (alpha, z))
        print(json.dumps(err._asdict()))


def _write_model(args, labels, alpha, z, extra=None) -> None:
    prov = _provenance(args)
    if extra:
        prov.update(extra)
    if args.out:
        _atomic_write(args.out, dump_model(Model(list(labels), np.asarray(alpha), np.asarray(z), prov)))
        log.info("model written to %s", args.out)


# ---------------------------------------------------------------- commands

def cmd_fit(args) -> int:
    graph = load_graph(args.target, args.target_nodes, name="target")
    cfg = args.cfg
    est = estimate("one-mode", graph, cfg)
    _write_model(args, graph.labels, est.alpha, est.z, {"method": "one-mode"})
    _report_metrics(args, est.alpha, est.z)
    return 0


def cmd_transfer(args) -> int:
    problem = _problem(args)
    index = _source_index(problem, args.transferable)
    cfg = args.cfg
    est = two_stage(problem, index, cfg, method="TLK")
    names = [problem.sources[l].name for l in index]
    _write_model(args, problem.target.labels, est.alpha, est.z,
                 {"method": "transfer", "sources": names, "lambda": est.lam})
    log.info("transferred from %s with lambda=%g", ", ".join(names), est.lam)
    _report_metrics(args, est.alpha, est.z)
    return 0


def cmd_detect(args) -> int:
    problem = _problem(args)
    cfg = args.cfg
    report = detect_transferable(problem, cfg.detect, cfg.fit, cfg.debias, args.workers)
    _emit(report.to_json(indent=1) + "\n", args.out)
    if args.table:
        _atomic_write(args.table, _csv_text(report.rows(), ("source", "replicate", "lambda", "loss")))
    if args.out not in (None, "-"):
        print("selected: " + " ".join(report.source_names[l] for l in report.selected))
    return 0


def cmd_tld(args) -> int:
    problem = _problem(args)
    cfg = args.cfg
    est = estimate("TLD", problem, cfg, workers=args.workers)
    report = est.detection
    if args.report:
        _atomic_write(args.report, report.to_json(indent=1) + "\n")
    names = [report.source_names[l] for l in report.selected]
    _write_model(args, problem.target.labels, est.alpha, est.z,
                 {"method": "TLD", "sources": names, "lambda": est.lam})
    print("selected: " + " ".join(names))
    _report_metrics(args, est.alpha, est.z)
    return 0


def _export_ensemble(directory: str, ens) -> None:
    os.makedirs(directory, exist_ok=True)
    save_graph(ens.target, os.path.join(directory, "target.edges"),
               os.path.join(directory, "target.nodes"))
    for g in ens.sources:
        save_graph(g, os.path.join(directory, f"{g.name}.edges"),
                   os.path.join(directory, f"{g.name}.nodes"))
    t = ens.truth
    doc = {"alpha_t": t.alpha_t_star.tolist(), "z_t": t.z_t_star.tolist(),
           "sources": [{"name": g.name, "informative": s.informative, "delta": s.delta_l}
                       for g, s in zip(ens.sources, t.sources)],
           "config": asdict(ens.config)}
    with open(os.path.join(directory, "truth.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def cmd_simulate(args) -> int:
    try:
        scenario = ScenarioConfig(n=args.n, L=args.L, a_size=args.a_size, k=args.k,
                                  size_scenario=args.scenario, delta_case=args.delta_case)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    if args.export:
        for r in range(args.reps):
            ens = generate(scenario.with_(seed=replicate_seed(args.seed, r)))
            _export_ensemble(os.path.join(args.export, f"rep{r + 1:03d}"), ens)
        if args.export_only:
            return 0
    cfg = args.cfg
    records = benchmark(scenario, args.methods, args.reps, args.seed, cfg, args.workers)
    _emit(_csv_text(summarize(records, scenario), CSV_COLUMNS), args.out)
    return 0


def _export_probabilities(args) -> int:
    model = load_model(args.model)
    p = expit(model.theta)
    index = {lab: i for i, lab in enumerate(model.labels)}
    rows = []
    if args.pairs:
        for lineno, u, v in read_pairs(args.pairs):
            if u not in index or v not in index:
                raise ParseError(f"unknown node in pair {u} {v}", args.pairs, lineno)
            rows.append({"u": u, "v": v, "probability": float(p[index[u], index[v]])})
    else:
        iu, ju = np.triu_indices(len(model.labels), 1)
        rows = [{"u": model.labels[i], "v": model.labels[j], "probability": float(p[i, j])}
                for i, j in zip(iu, ju)]
    _emit(_csv_text(rows, ("u", "v", "probability")), args.out)
    return 0


def cmd_predict(args) -> int:
    if args.model:
        return _export_probabilities(args)
    if not args.target:
        raise UsageError("give a target edge list or --model")
    if any(m != "one-mode" for m in args.method):
        problem = _problem(args)
    else:
        problem = TransferProblem(load_graph(args.target, args.target_nodes, name="target"), [])
    informative = None
    if "TLK" in args.method:
        if not args.transferable:
            raise UsageError("TLK needs --transferable")
        chosen = set(_source_index(problem, args.transferable))
        informative = [l in chosen for l in range(problem.L)]
    cfg = args.cfg
    cache = TransferCache()
    rows = []
    for p in args.missing:
        if not 0 < p < 1:
            raise UsageError("--missing values must lie in (0, 1)")
        for method in args.method:
            res = holdout_experiment(problem, method, p, args.repeats, args.seed, cfg,
                                     informative, cache, args.workers)
            rows.append({"method": method, "missing_ratio": p, "metric": "brier",
                         "mean": res.mean, "sd": res.sd, "repeats": args.repeats})
    _emit(_csv_text(rows, ("method", "missing_ratio", "metric", "mean", "sd", "repeats")), args.out)
    return 0


def cmd_cv_lambda(args) -> int:
    problem = _problem(args)
    index = _source_index(problem, args.transferable)
    cfg = args.cfg
    cache = TransferCache()
    u0 = cache.transfer("full", problem, index, cfg.fit).u0
    grid = default_lambda_grid(problem.n) if args.grid is None else np.unique(args.grid)
    losses = cv_lambda_losses(problem.target, u0, grid, args.folds, derive_seed(args.seed, 1),
                              cfg.debias)
    mean = losses.mean(axis=0)
    best = float(grid[np.flatnonzero(mean == mean.min()).max()])
    rows = [{"lambda": float(lam), "mean_loss": float(m), "sd_loss": float(s),
             "selected": lam == best}
            for lam, m, s in zip(grid, mean, losses.std(axis=0, ddof=1))]
    _emit(_csv_text(rows, ("lambda", "mean_loss", "sd_loss", "selected")), args.out)
    if args.out not in (None, "-"):
        print(f"lambda: {best!r}")
    return 0


# ---------------------------------------------------------------- entry point

def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s")
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        args.cfg = _pipeline_config(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LSMError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
