"""Feedback-loop tests: oracle labeling, config validation, run statuses,
trace bookkeeping, and trace export."""

import csv
import json
import math

import numpy as np
import pytest

from lgml.expr import eval_point, parse_expr, parse_truth
from lgml.intervals import Box
from lgml.loop import (ClosedForm, IterationRecord, LgmlConfig, LoopError,
                       OracleError, RunStatus, SamplingSpec, StalledLoopError,
                       Table, label, run, write_trace_csv, write_trace_json)
from lgml.model import Dataset, MlpConfig, TrainingError, train
from lgml.verify import BnbBackend, EpsStarResult, Unsat, build_violation

SINE_TRUTH = parse_truth("f(x) = sin(x)")
SINE_DOMAIN = Box.from_bounds({"x": (-math.pi, math.pi)})
SINE_ORACLE = ClosedForm(parse_expr("sin(x)"))


def capped(seed: int = 0, **kw) -> MlpConfig:
    """A training budget small enough for per-test loop runs."""
    base = dict(input_dim=1, seed=seed, max_epochs=3000, restarts=2,
                patience=1500)
    base.update(kw)
    return MlpConfig(**base)


def sine_config(**kw) -> LgmlConfig:
    base = dict(truth=SINE_TRUTH, domain=SINE_DOMAIN, oracle=SINE_ORACLE,
                model_config=capped())
    base.update(kw)
    return LgmlConfig(**base)


# -- oracles ------------------------------------------------------------------

def test_label_closed_form():
    assert label(SINE_ORACLE, {"x": 0.0}) == 0.0
    assert label(SINE_ORACLE, {"x": math.pi / 2}) == pytest.approx(1.0)


def test_label_closed_form_hypotenuse():
    oracle = ClosedForm(parse_expr("sqrt(a^2 + b^2)"))
    assert label(oracle, {"a": 3.0, "b": 4.0}) == pytest.approx(5.0)


def test_label_closed_form_domain_error():
    oracle = ClosedForm(parse_expr("sqrt(x)"))
    with pytest.raises(OracleError, match="oracle failed"):
        label(oracle, {"x": -1.0})


def test_label_closed_form_missing_feature():
    with pytest.raises(OracleError):
        label(SINE_ORACLE, {"y": 0.0})


def test_closed_form_must_be_ground():
    with pytest.raises(LoopError, match="ground"):
        ClosedForm(parse_expr("f(x)"))


def test_table_exact_and_nearest_lookup():
    oracle = Table(("x",), (((0.0,), 1.0), ((1.0,), 7.0)), tolerance=0.25)
    assert label(oracle, {"x": 1.0}) == 7.0
    assert label(oracle, {"x": 1.2}) == 7.0          # nearest within tolerance
    with pytest.raises(OracleError, match="table miss"):
        label(oracle, {"x": 0.4})                    # 0.4 away from both


def test_table_query_missing_feature():
    oracle = Table(("x",), (((0.0,), 1.0),), tolerance=1.0)
    with pytest.raises(OracleError, match="missing feature"):
        label(oracle, {"y": 0.0})


@pytest.mark.parametrize("points,tolerance", [
    ((), 0.0),                                  # empty table
    ((((0.0,), 1.0),), -1.0),                   # negative tolerance
    ((((0.0, 0.0), 1.0),), 0.0),                # coordinate arity mismatch
    ((((math.inf,), 1.0),), 0.0),               # non-finite coordinate
    ((((0.0,), math.nan),), 0.0),               # non-finite value
])
def test_table_validation(points, tolerance):
    with pytest.raises(LoopError):
        Table(("x",), points, tolerance=tolerance)


# -- config validation --------------------------------------------------------

def test_sampling_spec_needs_a_point():
    with pytest.raises(LoopError, match="count"):
        SamplingSpec(count=0)


@pytest.mark.parametrize("patch,message", [
    (dict(rho=0.0), "rho"),
    (dict(bisection_tol=0.0), "bisection_tol"),
    (dict(max_iterations=0), "max_iterations"),
    (dict(model_config=capped(input_dim=2)), "inputs"),
    (dict(truth=parse_truth("f(x, y) = x + y"),
          model_config=capped(input_dim=2)), "cover"),
    (dict(oracle=Table(("t",), (((0.0,), 0.0),), tolerance=10.0)), "table"),
])
def test_config_validation(patch, message):
    base = dict(truth=SINE_TRUTH, domain=SINE_DOMAIN, oracle=SINE_ORACLE,
                model_config=capped())
    base.update(patch)
    with pytest.raises(LoopError, match=message):
        LgmlConfig(**base)


def test_config_rejects_mismatched_initial_data():
    data = Dataset.from_points(("t",), [({"t": 0.0}, 0.0)])
    with pytest.raises(LoopError, match="initial data features"):
        sine_config(initial_data=data)


def test_config_rejects_initial_point_outside_domain():
    data = Dataset.from_points(("x",), [({"x": 9.0}, 0.4)])
    with pytest.raises(LoopError, match="outside"):
        sine_config(initial_data=data)


# -- run statuses -------------------------------------------------------------

def test_instant_proof_at_loose_rho():
    # Any trained model is within 10 of sine on this domain, so iteration 0
    # both trains and proves; no counterexample is ever drawn.
    test_data = Dataset.from_points(
        ("x",), [({"x": float(v)}, math.sin(v)) for v in
                 np.linspace(-3.0, 3.0, 10)])
    result = run(sine_config(rho=10.0, max_iterations=5), test_data=test_data)
    assert result.status is RunStatus.PROVED
    assert len(result.trace) == 1
    record = result.trace[0]
    assert record.index == 0
    assert record.eps_star is None
    assert record.counterexample is None
    assert record.test_rmse is not None and math.isfinite(record.test_rmse)
    assert len(result.dataset) == 2                   # untouched initial data


def test_budget_exhausted_grows_dataset_by_one():
    result = run(sine_config(rho=1e-6, max_iterations=1))
    assert result.status is RunStatus.BUDGET_EXHAUSTED
    assert len(result.trace) == 1
    record = result.trace[0]
    assert record.counterexample is not None
    assert record.eps_star is not None and record.eps_star > 1e-6
    assert record.test_rmse is None                   # no test set passed
    assert len(result.dataset) == 3


def test_run_result_unpacks():
    model, trace, status = run(sine_config(rho=10.0))
    assert status is RunStatus.PROVED
    assert len(trace) == 1
    assert math.isfinite(model.predict({"x": 1.0}))


def test_run_is_reproducible():
    first = run(sine_config(rho=10.0))
    second = run(sine_config(rho=10.0))
    assert np.array_equal(first.dataset.X, second.dataset.X)
    assert np.array_equal(first.model.flat(), second.model.flat())


def test_initial_samples_come_from_the_oracle():
    result = run(sine_config(rho=10.0))
    assert np.all(np.abs(result.dataset.X[:, 0]) <= math.pi)
    expected = np.sin(result.dataset.X[:, 0])
    assert np.max(np.abs(result.dataset.y - expected)) <= 1e-15


# -- trace bookkeeping --------------------------------------------------------

def trace_models(config, test_data=None):
    seen = []
    result = run(config, test_data=test_data,
                 on_iteration=lambda record, model: seen.append((record, model)))
    return result, seen


def violation_at(model, point):
    fhat, grads = model.to_expr()
    v = build_violation(SINE_TRUTH, fhat, grads, SINE_DOMAIN)
    return eval_point(v.v, point)


def test_trace_invariants():
    config = sine_config(rho=5e-2, max_iterations=4)
    result, seen = trace_models(config)
    assert [r.index for r in result.trace] == list(range(len(result.trace)))
    assert result.trace == tuple(r for r, _ in seen)
    for record, model in seen:
        assert record.dataset_size == 2 + record.index
        if record.counterexample is not None:
            # The counterexample must genuinely violate rho for the model of
            # its own iteration, and lie inside the domain.
            assert SINE_DOMAIN.contains_point(record.counterexample)
            assert violation_at(model, record.counterexample) > config.rho


def test_proved_run_reverifies_unsat():
    config = sine_config(rho=0.35, max_iterations=12,
                         model_config=capped(max_epochs=20000))
    result, seen = trace_models(config)
    assert result.status is RunStatus.PROVED
    assert len(result.trace) > 1          # at least one corrective round
    final_record, final_model = seen[-1]
    assert final_record.eps_star is None
    assert final_model is result.model
    fhat, grads = result.model.to_expr()
    v = build_violation(SINE_TRUTH, fhat, grads, SINE_DOMAIN)
    outcome = BnbBackend().check(v, config.rho)
    assert isinstance(outcome, Unsat)
    assert outcome.certified_upper_bound <= config.rho


# -- stalling and training failure ---------------------------------------------

def test_stalled_loop_raises(monkeypatch):
    import lgml.loop as loop_mod
    data = Dataset.from_points(
        ("x",), [({"x": 0.0}, 0.0), ({"x": 1.0}, math.sin(1.0))])

    def pinned(violation, rho, backend, **kw):
        return EpsStarResult(0.5, {"x": 0.0}, ())   # an existing data point

    monkeypatch.setattr(loop_mod, "find_eps_star", pinned)
    config = sine_config(initial_data=data,
                         model_config=capped(max_epochs=200, restarts=1))
    with pytest.raises(StalledLoopError, match="duplicates"):
        run(config)


def test_training_failure_mid_run(monkeypatch):
    import lgml.loop as loop_mod
    calls = {"n": 0}

    def flaky_train(config, data):
        calls["n"] += 1
        if calls["n"] > 1:
            raise TrainingError("diverged")
        return train(config, data)

    def pinned(violation, rho, backend, **kw):
        return EpsStarResult(0.5, {"x": 0.5}, ())

    monkeypatch.setattr(loop_mod, "train", flaky_train)
    monkeypatch.setattr(loop_mod, "find_eps_star", pinned)
    config = sine_config(model_config=capped(max_epochs=200, restarts=1))
    result, seen = trace_models(config)
    assert result.status is RunStatus.TRAINING_FAILED
    assert len(result.trace) == 1
    assert result.model is seen[0][1]     # the last model that trained
    assert len(result.dataset) == 3       # iteration 0's point was kept


def test_training_failure_on_initial_data_is_an_error(monkeypatch):
    import lgml.loop as loop_mod

    def broken_train(config, data):
        raise TrainingError("diverged")

    monkeypatch.setattr(loop_mod, "train", broken_train)
    with pytest.raises(LoopError, match="initial dataset"):
        run(sine_config())


# -- trace export ---------------------------------------------------------------

RECORDS = (
    IterationRecord(index=0, dataset_size=2, train_max_residual=1e-3,
                    underfit=False, eps_star=1.5, counterexample={"x": 0.25},
                    test_rmse=0.9, elapsed=0.01),
    IterationRecord(index=1, dataset_size=3, train_max_residual=5e-4,
                    underfit=True, eps_star=None, counterexample=None,
                    test_rmse=None, elapsed=0.02),
)


def test_write_trace_csv(tmp_path):
    path = tmp_path / "trace.csv"
    write_trace_csv(RECORDS, ("x",), str(path))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "dataset_size", "train_max_residual",
                       "underfit", "eps_star", "cex_x", "test_rmse", "elapsed"]
    assert rows[1] == ["0", "2", "0.001", "0", "1.5", "0.25", "0.9", "0.01"]
    assert rows[2] == ["1", "3", "0.0005", "1", "", "", "", "0.02"]


def test_write_trace_json(tmp_path):
    path = tmp_path / "trace.json"
    write_trace_json(RECORDS, str(path))
    with open(path) as fh:
        rows = json.load(fh)
    assert len(rows) == 2
    assert rows[0]["counterexample"] == {"x": 0.25}
    assert rows[0]["eps_star"] == 1.5
    assert rows[1]["eps_star"] is None
    assert rows[1]["counterexample"] is None
    assert rows[1]["underfit"] is True
