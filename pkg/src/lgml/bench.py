"""Experiment harness: the sine and pythagoras runs, the plain-regressor
baseline curve, and the metric plumbing (RMSE, reports, CSV exports).

Every knob lives in a flat settings dict so a report's config snapshot is
enough to reproduce the run bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from .expr import parse_expr, parse_truth
from .intervals import Box, Interval
from .loop import (ClosedForm, IterationRecord, LgmlConfig, RunResult,
                   SamplingSpec, label, run)
from .model import Dataset, Mlp, MlpConfig, TrainingError, train
from .verify import BnbBackend, BnbOptions, SmtBackend

__all__ = [
    "BenchError", "ExperimentDef", "EXPERIMENTS", "BaselineEntry",
    "ExperimentReport", "default_settings", "apply_overrides",
    "config_from_settings", "test_dataset", "rmse", "run_from_settings",
    "run_experiment", "run_sine", "run_pythagoras", "run_baseline",
    "CurveRecorder", "write_baseline_csv",
]


class BenchError(ValueError):
    """Invalid benchmark arguments or settings."""


@dataclass(frozen=True)
class ExperimentDef:
    """A named experiment: the truth to enforce, the labeling oracle, and
    the input domain, all as strings/bounds so they serialize cleanly."""

    name: str
    truth: str
    oracle: str
    domain: tuple[tuple[str, float, float], ...]


EXPERIMENTS: dict[str, ExperimentDef] = {
    "sine": ExperimentDef(
        name="sine",
        truth="f(x)^2 + df(x, x)^2 = 1",
        oracle="sin(x)",
        domain=(("x", -math.pi, math.pi),),
    ),
    "pythagoras": ExperimentDef(
        name="pythagoras",
        truth="a + b > f(a, b)",
        oracle="sqrt(a^2 + b^2)",
        domain=(("a", 0.1, 10.0), ("b", 0.1, 10.0)),
    ),
}

# Test points use their own seed so no training draw can alias them.
DEFAULT_TEST_SEED = 99991
DEFAULT_TEST_COUNT = 10_000


def default_settings(experiment: str) -> dict[str, Any]:
    """The full knob set for an experiment, pre-filled with defaults."""
    if experiment not in EXPERIMENTS:
        raise BenchError(f"unknown experiment {experiment!r}; "
                         f"choose from {sorted(EXPERIMENTS)}")
    exp = EXPERIMENTS[experiment]
    return {
        "experiment": exp.name,
        "truth": exp.truth,
        "oracle": exp.oracle,
        "domain": {name: [lo, hi] for name, lo, hi in exp.domain},
        "seed": 0,
        "rho": 1e-2,
        "bisection_tol": 1e-3,
        "max_iterations": 40,
        "initial_count": 2,
        "hidden": [3, 3],
        "activation": "tanh",
        "learning_rate": 1e-2,
        "max_epochs": 200_000,
        "fit_tol": 1e-3,
        "restarts": 5,
        "patience": 8_000,
        "plateau_rel_improve": 1e-3,
        "backend": "bnb",
        "solver": None,
        "threads": 1,
        "min_box_width": 1e-7,
        "max_boxes": 10_000_000,
        "test_seed": DEFAULT_TEST_SEED,
        "test_count": DEFAULT_TEST_COUNT,
    }


def apply_overrides(settings: dict[str, Any],
                    overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Merge overrides into a settings dict, rejecting unknown keys.

    Dotted keys reach one level into nested dicts (`domain.x`).
    """
    merged = {k: (dict(v) if isinstance(v, dict) else v)
              for k, v in settings.items()}
    for key, value in overrides.items():
        head, _, tail = key.partition(".")
        if head not in merged:
            raise BenchError(f"unknown setting {head!r}")
        if tail:
            if not isinstance(merged[head], dict):
                raise BenchError(f"setting {head!r} is not nested; "
                                 f"cannot set {key!r}")
            merged[head][tail] = value
        else:
            merged[head] = value
    return merged


def _backend_from_settings(settings: Mapping[str, Any]):
    opts = BnbOptions(min_box_width=float(settings["min_box_width"]),
                      max_boxes=int(settings["max_boxes"]),
                      threads=int(settings["threads"]))
    if settings["backend"] == "bnb":
        return BnbBackend(opts)
    if settings["backend"] == "smt":
        return SmtBackend(settings["solver"])
    raise BenchError(f"unknown backend {settings['backend']!r}")


def config_from_settings(settings: Mapping[str, Any]) -> LgmlConfig:
    """Rebuild the loop configuration a report snapshot describes."""
    domain = Box({name: Interval(float(lo), float(hi))
                  for name, (lo, hi) in settings["domain"].items()})
    model_config = MlpConfig(
        input_dim=len(settings["domain"]),
        hidden=tuple(int(h) for h in settings["hidden"]),
        activation=settings["activation"],
        seed=int(settings["seed"]),
        learning_rate=float(settings["learning_rate"]),
        max_epochs=int(settings["max_epochs"]),
        fit_tol=float(settings["fit_tol"]),
        restarts=int(settings["restarts"]),
        patience=int(settings["patience"]),
        plateau_rel_improve=float(settings["plateau_rel_improve"]),
    )
    return LgmlConfig(
        truth=parse_truth(settings["truth"]),
        domain=domain,
        oracle=ClosedForm(parse_expr(settings["oracle"])),
        model_config=model_config,
        initial_data=SamplingSpec(count=int(settings["initial_count"]),
                                  seed=int(settings["seed"])),
        rho=float(settings["rho"]),
        bisection_tol=float(settings["bisection_tol"]),
        max_iterations=int(settings["max_iterations"]),
        backend=_backend_from_settings(settings),
    )


def test_dataset(settings: Mapping[str, Any]) -> Dataset:
    """Uniform test points over the experiment domain, oracle-labeled."""
    rng = np.random.default_rng(int(settings["test_seed"]))
    names = tuple(settings["domain"])
    lo = np.array([settings["domain"][n][0] for n in names])
    hi = np.array([settings["domain"][n][1] for n in names])
    X = rng.uniform(lo, hi, (int(settings["test_count"]), len(names)))
    oracle = ClosedForm(parse_expr(settings["oracle"]))
    y = np.array([label(oracle, dict(zip(names, map(float, row))))
                  for row in X])
    return Dataset(names, X, y)


def rmse(m: Mlp, test: Dataset) -> float:
    if len(test) == 0:
        raise BenchError("test set is empty")
    pred = m.predict_batch(test.X)
    return float(np.sqrt(np.mean((pred - test.y) ** 2)))


@dataclass(frozen=True)
class BaselineEntry:
    """Mean test RMSE of plain training at one training-set size."""

    size: int
    rmse: float
    trials: int
    failures: int


@dataclass(frozen=True)
class ExperimentReport:
    experiment: str
    settings: dict[str, Any]
    trace: tuple[IterationRecord, ...]
    status: str
    final_rmse: float
    baseline_curve: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if not (math.isfinite(self.final_rmse) and self.final_rmse >= 0.0):
            raise BenchError(f"final_rmse must be finite and nonnegative, "
                             f"got {self.final_rmse}")
        for size, value in self.baseline_curve:
            if not (math.isfinite(value) and value >= 0.0):
                raise BenchError(f"baseline rmse at size {size} must be "
                                 f"finite and nonnegative, got {value}")

    def to_json(self) -> str:
        doc = {
            "experiment": self.experiment,
            "settings": self.settings,
            "status": self.status,
            "final_rmse": self.final_rmse,
            "baseline_curve": [[s, r] for s, r in self.baseline_curve],
            "trace": [{
                "index": r.index, "dataset_size": r.dataset_size,
                "train_max_residual": r.train_max_residual,
                "underfit": r.underfit, "eps_star": r.eps_star,
                "counterexample": r.counterexample,
                "test_rmse": r.test_rmse, "elapsed": r.elapsed,
            } for r in self.trace],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        doc = json.loads(text)
        trace = tuple(IterationRecord(
            index=row["index"], dataset_size=row["dataset_size"],
            train_max_residual=row["train_max_residual"],
            underfit=row["underfit"], eps_star=row["eps_star"],
            counterexample=row["counterexample"],
            test_rmse=row["test_rmse"], elapsed=row["elapsed"],
        ) for row in doc["trace"])
        return cls(experiment=doc["experiment"], settings=doc["settings"],
                   trace=trace, status=doc["status"],
                   final_rmse=doc["final_rmse"],
                   baseline_curve=tuple((int(s), float(r))
                                        for s, r in doc["baseline_curve"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())


def run_from_settings(settings: Mapping[str, Any],
                      on_iteration: Callable[[IterationRecord, Mlp], None] | None = None,
                      ) -> tuple[ExperimentReport, RunResult]:
    """Run the loop a settings dict describes and report it.

    Returns the report plus the raw run result (the report alone cannot
    carry the trained model).
    """
    config = config_from_settings(settings)
    test = test_dataset(settings)
    result = run(config, test_data=test, on_iteration=on_iteration)
    report = ExperimentReport(
        experiment=settings["experiment"], settings=dict(settings),
        trace=result.trace, status=result.status.value,
        final_rmse=rmse(result.model, test))
    return report, result


def run_experiment(experiment: str,
                   overrides: Mapping[str, Any] | None = None,
                   on_iteration: Callable[[IterationRecord, Mlp], None] | None = None,
                   ) -> tuple[ExperimentReport, RunResult]:
    settings = default_settings(experiment)
    if overrides:
        settings = apply_overrides(settings, overrides)
    return run_from_settings(settings, on_iteration)


def run_sine(overrides: Mapping[str, Any] | None = None,
             on_iteration: Callable[[IterationRecord, Mlp], None] | None = None,
             ) -> tuple[ExperimentReport, RunResult]:
    return run_experiment("sine", overrides, on_iteration)


def run_pythagoras(overrides: Mapping[str, Any] | None = None,
                   on_iteration: Callable[[IterationRecord, Mlp], None] | None = None,
                   ) -> tuple[ExperimentReport, RunResult]:
    return run_experiment("pythagoras", overrides, on_iteration)


def run_baseline(sizes: list[int], trials: int, seed: int = 0,
                 experiment: str = "sine",
                 overrides: Mapping[str, Any] | None = None,
                 ) -> list[BaselineEntry]:
    """Train the same network on plain uniform-random data of each size.

    A trial that fails to train is counted, not fatal; the mean covers the
    surviving trials.
    """
    if not sizes:
        raise BenchError("sizes must be non-empty")
    if trials < 1:
        raise BenchError("trials must be >= 1")
    settings = default_settings(experiment)
    if overrides:
        settings = apply_overrides(settings, overrides)
    names = tuple(settings["domain"])
    lo = np.array([settings["domain"][n][0] for n in names])
    hi = np.array([settings["domain"][n][1] for n in names])
    oracle = ClosedForm(parse_expr(settings["oracle"]))
    test = test_dataset(settings)

    entries: list[BaselineEntry] = []
    for size in sizes:
        if size < 1:
            raise BenchError(f"training-set size must be >= 1, got {size}")
        scores: list[float] = []
        failures = 0
        for trial in range(trials):
            train_seed = np.random.SeedSequence((seed, size, trial))
            rng = np.random.default_rng(train_seed)
            X = rng.uniform(lo, hi, (size, len(names)))
            y = np.array([label(oracle, dict(zip(names, map(float, row))))
                          for row in X])
            data = Dataset(names, X, y)
            trial_settings = dict(settings)
            trial_settings["seed"] = int(train_seed.generate_state(1)[0])
            model_config = config_from_settings(trial_settings).model_config
            try:
                fit = train(model_config, data)
            except TrainingError:
                failures += 1
                continue
            scores.append(rmse(fit.model, test))
        if not scores:
            raise BenchError(f"every trial failed at size {size}")
        entries.append(BaselineEntry(size=size,
                                     rmse=float(np.mean(scores)),
                                     trials=trials, failures=failures))
    return entries


class CurveRecorder:
    """Collects fhat over a fixed grid at selected iterations, for the
    model-evolution CSV (`iteration,x,fhat(x)`).  One-feature domains only;
    an empty iteration selection records every iteration."""

    GRID = 512

    def __init__(self, settings: Mapping[str, Any],
                 iterations: tuple[int, ...] = ()):
        if len(settings["domain"]) != 1:
            raise BenchError("curve export needs a one-feature domain")
        (self.feature, (lo, hi)), = settings["domain"].items()
        self.iterations = tuple(iterations)
        self.grid = np.linspace(float(lo), float(hi), self.GRID)
        self.rows: list[tuple[int, np.ndarray]] = []

    def __call__(self, record: IterationRecord, model: Mlp) -> None:
        if self.iterations and record.index not in self.iterations:
            return
        values = model.predict_batch(self.grid.reshape(-1, 1))
        self.rows.append((record.index, values))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", self.feature,
                             f"fhat({self.feature})"])
            for index, values in self.rows:
                for x, v in zip(self.grid, values):
                    writer.writerow([index, repr(float(x)), repr(float(v))])


def write_baseline_csv(entries: list[BaselineEntry], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["size", "rmse"])
        for entry in entries:
            writer.writerow([entry.size, repr(entry.rmse)])
