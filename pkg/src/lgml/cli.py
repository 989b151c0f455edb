"""Command-line entry point: run experiments, compute baselines, and use
the verifier standalone.

Exit codes are a stable contract: 0 success/proof, 2 budget exhausted,
3 counterexample found, 1 any error.  Diagnostics go to standard error;
computation output (verify/emit-smt) goes to standard output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any

from .bench import (BenchError, CurveRecorder, EXPERIMENTS, apply_overrides,
                    config_from_settings, default_settings, run_baseline,
                    run_from_settings, write_baseline_csv)
from .expr import ExprError, Relation, parse_truth
from .intervals import Box, Interval, IntervalError
from .loop import LoopError, write_trace_csv
from .model import Mlp, ModelError
from .smt import SmtError, UnsupportedNodeError
from .verify import (BnbBackend, BnbOptions, Proof, SmtBackend, VerifyError,
                     build_violation, emit_smtlib, find_eps_star)

__all__ = ["main"]

_ERRORS = (BenchError, ExprError, IntervalError, LoopError, ModelError,
           SmtError, VerifyError, OSError, ValueError)


def _fail(message: str) -> int:
    print(f"lgml: {message}", file=sys.stderr)
    return 1


def _parse_value(text: str) -> Any:
    """`--set` values: JSON when it parses, comma list of numbers, else the
    raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        try:
            return [float(part) for part in text.split(",")]
        except ValueError:
            pass
    return text


def _collect_overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise BenchError(f"--set wants KEY=VALUE, got {item!r}")
        overrides[key.strip()] = _parse_value(value.strip())
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "backend", None) is not None:
        overrides["backend"] = args.backend
    if getattr(args, "solver", None) is not None:
        overrides["solver"] = args.solver
    if getattr(args, "threads", None) is not None:
        overrides["threads"] = args.threads
    return overrides


def _load_config_file(path: str) -> dict[str, Any]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BenchError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise BenchError(f"{path}: config must be a JSON object")
    # A saved report reproduces its run: its snapshot is a config.
    if "settings" in doc and isinstance(doc["settings"], dict):
        doc = doc["settings"]
    return doc


def _merged_settings(args: argparse.Namespace) -> dict[str, Any]:
    file_doc: dict[str, Any] = {}
    if getattr(args, "config", None):
        file_doc = _load_config_file(args.config)
    experiment = (getattr(args, "experiment", None)
                  or file_doc.get("experiment"))
    if experiment is None:
        raise BenchError("no experiment selected; pass --experiment or a "
                         "config file naming one")
    settings = default_settings(experiment)
    file_doc.pop("experiment", None)
    # Flatten the file's nested dicts into dotted overrides so unknown keys
    # are rejected by the same gate.
    flat: dict[str, Any] = {}
    for key, value in file_doc.items():
        if isinstance(value, dict):
            for sub, subvalue in value.items():
                flat[f"{key}.{sub}"] = subvalue
        else:
            flat[key] = value
    settings = apply_overrides(settings, flat)
    return apply_overrides(settings, _collect_overrides(args))


def _parse_domain(spec: str) -> Box:
    """`name=lo:hi` pairs, comma separated."""
    bounds = {}
    for part in spec.split(","):
        name, sep, rng = part.partition("=")
        lo, sep2, hi = rng.partition(":")
        if not sep or not sep2:
            raise BenchError(f"domain wants name=lo:hi, got {part!r}")
        bounds[name.strip()] = Interval(float(lo), float(hi))
    if not bounds:
        raise BenchError("empty domain spec")
    return Box(bounds)


def _verify_backend(args: argparse.Namespace):
    opts = BnbOptions(threads=args.threads or 1)
    if args.backend == "smt":
        command = args.solver or os.environ.get("LGML_SOLVER")
        if not command:
            raise BenchError("--backend smt needs --solver or LGML_SOLVER")
        return SmtBackend(command)
    return BnbBackend(opts)


def _cmd_run(args: argparse.Namespace) -> int:
    settings = _merged_settings(args)
    config_from_settings(settings)   # validate before touching the disk
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    recorder = (CurveRecorder(settings) if len(settings["domain"]) == 1
                else None)
    report, result = run_from_settings(settings, on_iteration=recorder)
    features = tuple(settings["domain"])
    write_trace_csv(result.trace, features, outdir / "trace.csv")
    report.save(outdir / "report.json")
    result.model.save(outdir / "model.json")
    if recorder is not None:
        recorder.write_csv(outdir / "curves.csv")
    print(f"lgml: {report.status}, final rmse {report.final_rmse:.6f}, "
          f"files in {outdir}", file=sys.stderr)
    if report.status == "Proved":
        return 0
    if report.status == "BudgetExhausted":
        return 2
    return 1


def _cmd_baseline(args: argparse.Namespace) -> int:
    try:
        sizes = [int(part) for part in args.sizes.split(",")]
    except ValueError as exc:
        raise BenchError(f"--sizes wants comma-separated counts: {exc}")
    overrides = _collect_overrides(args)
    seed = overrides.pop("seed", 0)
    entries = run_baseline(sizes, args.trials, seed=seed,
                           experiment=args.experiment, overrides=overrides)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    write_baseline_csv(entries, outdir / "baseline.csv")
    for entry in entries:
        print(f"lgml: size {entry.size}: mean rmse {entry.rmse:.6f} over "
              f"{entry.trials - entry.failures}/{entry.trials} trials",
              file=sys.stderr)
    return 0


def _load_violation(args: argparse.Namespace):
    model = Mlp.load(args.model)
    truth = parse_truth(args.truth)
    domain = _parse_domain(args.domain)
    fhat, grads = model.to_expr()
    return truth, build_violation(truth, fhat, grads, domain,
                                  features=model.feature_names)


def _cmd_verify(args: argparse.Namespace) -> int:
    _, violation = _load_violation(args)
    backend = _verify_backend(args)
    outcome = find_eps_star(violation, args.rho, backend,
                            bisection_tol=args.bisection_tol)
    if isinstance(outcome, Proof):
        print(json.dumps({
            "verdict": "Proof",
            "certified_upper_bound": outcome.certified_upper_bound,
        }, indent=2))
        return 0
    print(json.dumps({
        "verdict": "Counterexample",
        "eps_star": outcome.eps_star,
        "strongest_point": outcome.strongest_point,
    }, indent=2))
    return 3


def _cmd_emit_smt(args: argparse.Namespace) -> int:
    truth, violation = _load_violation(args)
    if args.eps < 0 and truth.relation is Relation.EQUALITY:
        raise BenchError("eps < 0 is meaningless for an equality truth: "
                         "the violation |alpha - beta| is never negative")
    sys.stdout.write(emit_smtlib(violation, args.eps, args.encoding))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lgml",
        description="Learn a function from data under an auxiliary truth.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, backend: bool = True) -> None:
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--set", action="append", metavar="K=V",
                       help="override one setting (repeatable)")
        if backend:
            p.add_argument("--backend", choices=("bnb", "smt"), default=None)
            p.add_argument("--solver", default=None,
                           help="SMT solver command (default: $LGML_SOLVER)")
            p.add_argument("--threads", type=int, default=None)

    p_run = sub.add_parser("run", help="run an experiment end to end")
    p_run.add_argument("--experiment", choices=sorted(EXPERIMENTS))
    p_run.add_argument("--config", help="JSON settings (or a saved report)")
    p_run.add_argument("--output", default=".", help="output directory")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_base = sub.add_parser("baseline", help="plain-training RMSE curve")
    p_base.add_argument("--experiment", choices=sorted(EXPERIMENTS),
                        default="sine")
    p_base.add_argument("--sizes", default="10,100,1000")
    p_base.add_argument("--trials", type=int, default=3)
    p_base.add_argument("--output", default=".")
    common(p_base)
    p_base.set_defaults(func=_cmd_baseline)

    p_ver = sub.add_parser("verify", help="verify a model checkpoint")
    p_ver.add_argument("--model", required=True)
    p_ver.add_argument("--truth", required=True)
    p_ver.add_argument("--domain", required=True, metavar="x=lo:hi,...")
    p_ver.add_argument("--rho", type=float, default=1e-2)
    p_ver.add_argument("--bisection-tol", type=float, default=1e-3)
    common(p_ver)
    p_ver.set_defaults(func=_cmd_verify)

    p_emit = sub.add_parser("emit-smt", help="print the SMT-LIB2 query")
    p_emit.add_argument("--model", required=True)
    p_emit.add_argument("--truth", required=True)
    p_emit.add_argument("--domain", required=True, metavar="x=lo:hi,...")
    p_emit.add_argument("--eps", type=float, required=True)
    p_emit.add_argument("--encoding", choices=("real", "float16"),
                        default="real")
    common(p_emit, backend=False)
    p_emit.set_defaults(func=_cmd_emit_smt)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UnsupportedNodeError as exc:
        return _fail(str(exc))
    except _ERRORS as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
