"""The corrective feedback loop: train on the current data, verify the
exported model against the auxiliary truth, and when verification finds a
violation, label its strongest point through the oracle and grow the
dataset by that one point.  Repeats until a proof at rho or the iteration
budget runs out.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Union

import numpy as np

from .expr import AuxTruth, ExprError, Expr, eval_point, is_ground
from .intervals import Box
from .model import Dataset, Mlp, MlpConfig, TrainingError, train
from .verify import (BnbBackend, EpsStarResult, Proof, SmtBackend,
                     SolverUnknownError, build_violation, find_eps_star)

__all__ = [
    "LoopError", "OracleError", "StalledLoopError", "ClosedForm", "Table",
    "Oracle", "label", "SamplingSpec", "LgmlConfig", "IterationRecord",
    "RunStatus", "RunResult", "run", "write_trace_csv", "write_trace_json",
]

_DUPLICATE_TOL = 1e-9   # counterexamples closer than this stall the loop


class LoopError(RuntimeError):
    """The feedback loop cannot continue."""


class OracleError(LoopError):
    """The oracle could not label a requested point."""


class StalledLoopError(LoopError):
    """The strongest counterexample duplicates an existing data point:
    rho is below what the model class can satisfy on this data."""


@dataclass(frozen=True)
class ClosedForm:
    """Oracle backed by a ground expression over the feature names."""

    expr: Expr

    def __post_init__(self):
        if not is_ground(self.expr):
            raise LoopError("oracle expression must be ground")


@dataclass(frozen=True)
class Table:
    """Oracle backed by a finite table of labeled points.

    Lookups match exactly or fall back to the nearest stored point within
    `tolerance` (Euclidean); anything farther is an error.
    """

    feature_names: tuple[str, ...]
    points: tuple[tuple[tuple[float, ...], float], ...]
    tolerance: float = 0.0

    def __post_init__(self):
        if not self.points:
            raise LoopError("table oracle needs at least one point")
        if self.tolerance < 0:
            raise LoopError(f"tolerance must be >= 0, got {self.tolerance}")
        for coords, value in self.points:
            if len(coords) != len(self.feature_names):
                raise LoopError(
                    f"table point {coords} does not match features "
                    f"{self.feature_names}")
            if not all(math.isfinite(c) for c in coords) or not math.isfinite(value):
                raise LoopError(f"table entries must be finite: {coords} -> {value}")


Oracle = Union[ClosedForm, Table]


def label(oracle: Oracle, x: Mapping[str, float]) -> float:
    """Ask the oracle for the true label at x."""
    if isinstance(oracle, ClosedForm):
        try:
            return eval_point(oracle.expr, x)
        except ExprError as exc:
            raise OracleError(f"oracle failed at {dict(x)}: {exc}") from exc
    try:
        q = np.array([x[n] for n in oracle.feature_names], dtype=np.float64)
    except KeyError as exc:
        raise OracleError(f"query {dict(x)} missing feature {exc}") from exc
    best_d2 = math.inf
    best_val = math.nan
    for coords, value in oracle.points:
        d2 = float(np.sum((q - np.asarray(coords)) ** 2))
        if d2 < best_d2:
            best_d2, best_val = d2, value
    if math.sqrt(best_d2) > oracle.tolerance:
        raise OracleError(
            f"table miss: nearest stored point is {math.sqrt(best_d2):g} "
            f"away from {dict(x)}, beyond tolerance {oracle.tolerance:g}")
    return best_val


@dataclass(frozen=True)
class SamplingSpec:
    """Draw the initial dataset uniformly at random over the domain."""

    count: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise LoopError(f"initial sample count must be >= 1, got {self.count}")


@dataclass(frozen=True)
class LgmlConfig:
    truth: AuxTruth
    domain: Box
    oracle: Oracle
    model_config: MlpConfig
    initial_data: Union[Dataset, SamplingSpec] = SamplingSpec()
    rho: float = 1e-2
    bisection_tol: float = 1e-3
    max_iterations: int = 40
    backend: Union[BnbBackend, SmtBackend] = field(default_factory=BnbBackend)

    def __post_init__(self):
        if not self.rho > 0:
            raise LoopError(f"rho must be > 0, got {self.rho}")
        if not self.bisection_tol > 0:
            raise LoopError(f"bisection_tol must be > 0, got {self.bisection_tol}")
        if self.max_iterations < 1:
            raise LoopError(
                f"max_iterations must be >= 1, got {self.max_iterations}")
        names = self.domain.features
        missing = self.truth.features - set(names)
        if missing:
            raise LoopError(f"domain does not cover truth features {sorted(missing)}")
        if self.model_config.input_dim != len(names):
            raise LoopError(
                f"model expects {self.model_config.input_dim} inputs, domain "
                f"has {len(names)} features")
        if isinstance(self.oracle, Table) and self.oracle.feature_names != names:
            raise LoopError(
                f"table oracle features {self.oracle.feature_names} do not "
                f"match domain features {names}")
        if isinstance(self.initial_data, Dataset):
            if self.initial_data.feature_names != names:
                raise LoopError(
                    f"initial data features {self.initial_data.feature_names} "
                    f"do not match domain features {names}")
            for i in range(len(self.initial_data)):
                point = self.initial_data.point(i)
                if not self.domain.contains_point(point):
                    raise LoopError(f"initial data point {point} lies outside "
                                    f"the domain")


@dataclass(frozen=True)
class IterationRecord:
    """One row of the run trace.

    `dataset_size` is the size the model was trained on, so it equals
    n0 + index; `eps_star` is None on the proof iteration, and
    `counterexample` is None exactly then.
    """

    index: int
    dataset_size: int
    train_max_residual: float
    underfit: bool
    eps_star: float | None
    counterexample: dict[str, float] | None
    test_rmse: float | None
    elapsed: float


class RunStatus(Enum):
    PROVED = "Proved"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    TRAINING_FAILED = "TrainingFailed"


@dataclass(frozen=True)
class RunResult:
    model: Mlp
    trace: tuple[IterationRecord, ...]
    status: RunStatus
    dataset: Dataset

    def __iter__(self):
        # Allow `model, trace, status = run(config)`.
        return iter((self.model, self.trace, self.status))


def _initial_dataset(config: LgmlConfig) -> Dataset:
    if isinstance(config.initial_data, Dataset):
        return config.initial_data
    spec = config.initial_data
    names = config.domain.features
    rng = np.random.default_rng(spec.seed)
    lo = np.array([config.domain[n].lo for n in names])
    hi = np.array([config.domain[n].hi for n in names])
    X = rng.uniform(lo, hi, size=(spec.count, len(names)))
    points = []
    for row in X:
        point = {n: float(v) for n, v in zip(names, row)}
        points.append((point, label(config.oracle, point)))
    return Dataset.from_points(names, points)


def _test_rmse(model: Mlp, test_data: Dataset | None) -> float | None:
    if test_data is None:
        return None
    pred = model.predict_batch(test_data.X)
    return float(np.sqrt(np.mean((pred - test_data.y) ** 2)))


def run(config: LgmlConfig, test_data: Dataset | None = None,
        on_iteration: Callable[[IterationRecord, Mlp], None] | None = None,
        ) -> RunResult:
    """Run the feedback loop to a proof or to the iteration budget.

    Each iteration trains on the current dataset, exports the model
    symbolically, finds eps* of the violation against the truth, and on a
    Sat outcome labels the strongest violation point via the oracle and
    appends it.  A Proof at rho stops with status Proved.  Training that
    under-fits (misses fit_tol) is recorded but does not stop the loop; a
    training failure (every restart diverged) stops it with status
    TrainingFailed and the previous iteration's model.
    """
    data = _initial_dataset(config)
    names = config.domain.features
    trace: list[IterationRecord] = []
    model: Mlp | None = None
    status = RunStatus.BUDGET_EXHAUSTED

    for index in range(config.max_iterations):
        started = time.perf_counter()
        # Retraining is from scratch, so each iteration draws its own init
        # stream.  Reusing one seed would hand near-identical models to the
        # verifier whenever one new point barely moves the fit, and on flat
        # violation plateaus that reproduces the previous counterexample
        # bitwise, tripping stall detection.
        iter_seed = np.random.SeedSequence(
            (config.model_config.seed, index)).generate_state(1)[0]
        iter_config = replace(config.model_config, seed=int(iter_seed))
        try:
            fit = train(iter_config, data)
        except TrainingError as exc:
            if model is None:
                raise LoopError(
                    f"training failed on the initial dataset: {exc}") from exc
            status = RunStatus.TRAINING_FAILED
            break
        model = fit.model
        fhat, grads = model.to_expr()
        violation = build_violation(config.truth, fhat, grads, config.domain,
                                    features=names)
        try:
            outcome = find_eps_star(violation, config.rho, config.backend,
                                    bisection_tol=config.bisection_tol)
        except SolverUnknownError:
            # An external solver giving up is not a verdict; the certified
            # interval backend always produces one.
            outcome = find_eps_star(violation, config.rho, BnbBackend(),
                                    bisection_tol=config.bisection_tol)

        if isinstance(outcome, Proof):
            record = IterationRecord(
                index=index, dataset_size=len(data),
                train_max_residual=fit.max_residual, underfit=fit.underfit,
                eps_star=None, counterexample=None,
                test_rmse=_test_rmse(model, test_data),
                elapsed=time.perf_counter() - started)
            trace.append(record)
            if on_iteration is not None:
                on_iteration(record, model)
            status = RunStatus.PROVED
            break

        point = outcome.strongest_point
        xc = np.array([point[n] for n in names], dtype=np.float64)
        if len(data) and bool(np.any(np.all(np.abs(data.X - xc) <= _DUPLICATE_TOL,
                                            axis=1))):
            raise StalledLoopError(
                f"stalled loop: counterexample {point} duplicates an existing "
                f"data point within {_DUPLICATE_TOL}; rho={config.rho} is "
                f"below what this model class can reach on the data")
        yc = label(config.oracle, point)
        record = IterationRecord(
            index=index, dataset_size=len(data),
            train_max_residual=fit.max_residual, underfit=fit.underfit,
            eps_star=outcome.eps_star, counterexample=dict(point),
            test_rmse=_test_rmse(model, test_data),
            elapsed=time.perf_counter() - started)
        trace.append(record)
        if on_iteration is not None:
            on_iteration(record, model)
        data = data.append(point, yc)

    assert model is not None
    return RunResult(model=model, trace=tuple(trace), status=status, dataset=data)


# ---------------------------------------------------------------------------
# Trace export
# ---------------------------------------------------------------------------

def write_trace_csv(trace: tuple[IterationRecord, ...],
                    features: tuple[str, ...], path: str) -> None:
    """One row per iteration; counterexample coordinates as cex_* columns."""
    header = ["index", "dataset_size", "train_max_residual", "underfit",
              "eps_star"] + [f"cex_{n}" for n in features] + ["test_rmse",
                                                              "elapsed"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in trace:
            cex = [repr(r.counterexample[n]) if r.counterexample else ""
                   for n in features]
            writer.writerow(
                [r.index, r.dataset_size, repr(r.train_max_residual),
                 int(r.underfit),
                 "" if r.eps_star is None else repr(r.eps_star)]
                + cex
                + ["" if r.test_rmse is None else repr(r.test_rmse),
                   repr(r.elapsed)])


def write_trace_json(trace: tuple[IterationRecord, ...], path: str) -> None:
    rows = [{"index": r.index, "dataset_size": r.dataset_size,
             "train_max_residual": r.train_max_residual,
             "underfit": r.underfit, "eps_star": r.eps_star,
             "counterexample": r.counterexample, "test_rmse": r.test_rmse,
             "elapsed": r.elapsed} for r in trace]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
