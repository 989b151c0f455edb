"""The learning phase: a small MLP trained to near-perfect fit.

Training is full-batch gradient descent with adaptive moment estimates,
deterministic given the seed.  The trained network exports to a ground
symbolic expression (and its per-feature derivatives) for the
verification phase.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .tape import adam_fit

_ACTIVATIONS = ("tanh", "relu")


class ModelError(ValueError):
    """Invalid configuration, dataset, or checkpoint."""


class TrainingError(RuntimeError):
    """Every restart diverged; no usable model."""


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden: tuple[int, ...] = (3, 3)
    activation: str = "tanh"
    seed: int = 0
    learning_rate: float = 1e-2
    max_epochs: int = 200_000
    fit_tol: float = 1e-3
    restarts: int = 5
    # Loss-plateau early stop: give up on an epoch budget that is clearly
    # not buying fit anymore.  patience=0 disables it.
    patience: int = 8_000
    plateau_rel_improve: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1:
            raise ModelError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ModelError(f"hidden layer widths must be positive, got {self.hidden}")
        if self.activation not in _ACTIVATIONS:
            raise ModelError(f"activation must be one of {_ACTIVATIONS}, "
                             f"got {self.activation!r}")
        if not self.learning_rate > 0:
            raise ModelError("learning_rate must be > 0")
        if not self.fit_tol > 0:
            raise ModelError("fit_tol must be > 0")
        if self.max_epochs < 1:
            raise ModelError("max_epochs must be >= 1")
        if self.restarts < 1:
            raise ModelError("restarts must be >= 1")
        if self.patience < 0:
            raise ModelError("patience must be >= 0")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, 1)


class Dataset:
    """Labeled points: feature matrix X (n rows) and labels y.

    Immutable by convention; `append` returns a new dataset.  Two points
    with identical coordinates must carry the same label.
    """

    def __init__(self, feature_names: Sequence[str], X: np.ndarray, y: np.ndarray):
        self.feature_names = tuple(feature_names)
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise ModelError(f"X must be (n, {len(self.feature_names)}), "
                             f"got {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ModelError(f"y must be ({self.X.shape[0]},), got {self.y.shape}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ModelError("dataset contains non-finite values")
        seen: dict[tuple[float, ...], float] = {}
        for row, label in zip(self.X, self.y):
            key = tuple(row)
            if key in seen and seen[key] != label:
                raise ModelError(f"conflicting labels {seen[key]} and {label} "
                                 f"for point {key}")
            seen[key] = label

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @classmethod
    def from_points(cls, feature_names: Sequence[str],
                    points: Sequence[tuple[Mapping[str, float], float]]) -> "Dataset":
        names = tuple(feature_names)
        X = np.array([[p[n] for n in names] for p, _ in points], dtype=np.float64)
        X = X.reshape(len(points), len(names))
        y = np.array([label for _, label in points], dtype=np.float64)
        return cls(names, X, y)

    def append(self, point: Mapping[str, float], label: float) -> "Dataset":
        row = np.array([[point[n] for n in self.feature_names]])
        return Dataset(self.feature_names,
                       np.vstack([self.X, row]),
                       np.append(self.y, label))

    def point(self, i: int) -> dict[str, float]:
        return dict(zip(self.feature_names, (float(v) for v in self.X[i])))

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([*self.feature_names, "y"])
            for row, label in zip(self.X, self.y):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(label))])

    @classmethod
    def load_csv(cls, path: str | Path) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[-1] != "y" or len(header) < 2:
                raise ModelError(f"{path}: expected header 'x1,...,xn,y'")
            names = header[:-1]
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ModelError(f"{path}:{lineno}: expected {len(header)} "
                                     f"columns, got {len(row)}")
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise ModelError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise ModelError(f"{path}: no data rows")
        data = np.asarray(rows, dtype=np.float64)
        return cls(names, data[:, :-1], data[:, -1])


class Mlp:
    """Feed-forward net: affine layers with an activation on hidden layers
    and a linear scalar output."""

    def __init__(self, feature_names: Sequence[str], activation: str,
                 layers: Sequence[tuple[np.ndarray, np.ndarray]]):
        self.feature_names = tuple(feature_names)
        self.activation = activation
        if activation not in _ACTIVATIONS:
            raise ModelError(f"unknown activation {activation!r}")
        self.layers = [(np.ascontiguousarray(W, dtype=np.float64),
                        np.ascontiguousarray(b, dtype=np.float64))
                       for W, b in layers]
        dim = len(self.feature_names)
        for i, (W, b) in enumerate(self.layers):
            if W.ndim != 2 or W.shape[0] != dim or b.shape != (W.shape[1],):
                raise ModelError(f"layer {i}: weight shape {W.shape} / bias "
                                 f"shape {b.shape} do not chain from width {dim}")
            dim = W.shape[1]
        if dim != 1:
            raise ModelError(f"output width must be 1, got {dim}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (len(self.feature_names),
                *(W.shape[1] for W, _ in self.layers))

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        a = np.asarray(X, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != len(self.feature_names):
            raise ModelError(f"X must be (n, {len(self.feature_names)}), got {a.shape}")
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            a = a @ W + b
            if i < last:
                a = np.tanh(a) if self.activation == "tanh" else np.maximum(a, 0.0)
        return a[:, 0]

    def predict(self, x: Mapping[str, float]) -> float:
        row = np.array([[x[n] for n in self.feature_names]])
        return float(self.predict_batch(row)[0])

    def to_expr(self) -> tuple[ex.Expr, dict[str, ex.Expr]]:
        """Exact symbolic forward pass and its per-feature derivatives."""
        acts: list[ex.Expr] = [ex.Var(n) for n in self.feature_names]
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            nexts = []
            for j in range(W.shape[1]):
                z: ex.Expr = ex.Const(float(b[j]))
                for k in range(W.shape[0]):
                    z = ex.Add(z, ex.Mul(ex.Const(float(W[k, j])), acts[k]))
                if i < last:
                    if self.activation == "tanh":
                        z = ex.Tanh(z)
                    else:
                        z = ex.Mul(ex.Const(0.5), ex.Add(z, ex.Abs(z)))
                nexts.append(z)
            acts = nexts
        fhat = ex.constant_fold(acts[0])
        grads = {n: ex.differentiate(fhat, n) for n in self.feature_names}
        return fhat, grads

    # -- parameter vector plumbing -------------------------------------

    def flat(self) -> np.ndarray:
        parts = []
        for W, b in self.layers:
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, feature_names: Sequence[str], hidden: Sequence[int],
                  activation: str, w: np.ndarray) -> "Mlp":
        dims = (len(feature_names), *hidden, 1)
        layers = []
        off = 0
        for d_in, d_out in zip(dims, dims[1:]):
            W = w[off:off + d_in * d_out].reshape(d_in, d_out).copy()
            off += d_in * d_out
            b = w[off:off + d_out].copy()
            off += d_out
            layers.append((W, b))
        if off != w.shape[0]:
            raise ModelError(f"parameter vector length {w.shape[0]} does not "
                             f"match dims {dims}")
        return cls(feature_names, activation, layers)

    # -- checkpoint io --------------------------------------------------

    def to_json(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "dims": list(self.dims),
            "activation": self.activation,
            "layers": [{"weights": [[float(v) for v in row] for row in W],
                        "bias": [float(v) for v in b]}
                       for W, b in self.layers],
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json(cls, doc: dict) -> "Mlp":
        try:
            names = doc["feature_names"]
            activation = doc["activation"]
            layers = [(np.array(layer["weights"], dtype=np.float64),
                       np.array(layer["bias"], dtype=np.float64))
                      for layer in doc["layers"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed model checkpoint: {exc}") from exc
        model = cls(names, activation, layers)
        if "dims" in doc and tuple(doc["dims"]) != model.dims:
            raise ModelError(f"checkpoint dims {doc['dims']} do not match "
                             f"layer shapes {model.dims}")
        return model

    @classmethod
    def load(cls, path: str | Path) -> "Mlp":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ModelError(f"{path}: {exc}") from exc
        return cls.from_json(doc)


@dataclass(frozen=True)
class TrainResult:
    model: Mlp
    max_residual: float
    mse: float
    epochs: int
    restart: int
    underfit: bool
    diverged_restarts: int = 0


def _init_params(config: MlpConfig, restart: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases, per-restart seed stream."""
    rng = np.random.default_rng([config.seed, restart])
    dims = config.dims
    parts = []
    for d_in, d_out in zip(dims, dims[1:]):
        limit = math.sqrt(6.0 / (d_in + d_out))
        parts.append(rng.uniform(-limit, limit, size=d_in * d_out))
        parts.append(np.zeros(d_out))
    return np.concatenate(parts)


def train(config: MlpConfig, data: Dataset) -> TrainResult:
    """Fit the MLP, restarting on divergence or a poor local optimum.

    The first restart reaching fit_tol wins outright; otherwise the
    lowest-max-residual restart (ties to the lowest index) is returned
    with the under-fit flag set when it misses fit_tol.
    """
    if len(data) == 0:
        raise ModelError("cannot train on an empty dataset")
    if data.n_features != config.input_dim:
        raise ModelError(f"dataset has {data.n_features} features, "
                         f"config.input_dim is {config.input_dim}")
    dims = np.asarray(config.dims, dtype=np.int32)
    act_code = 0 if config.activation == "tanh" else 1
    patience = config.patience if config.patience > 0 else config.max_epochs + 1

    best: TrainResult | None = None
    diverged = 0
    for restart in range(config.restarts):
        w = _init_params(config, restart)
        epochs, max_resid, mse, status = adam_fit(
            data.X, data.y, dims, w, act_code,
            config.learning_rate, 0.9, 0.999, 1e-8,
            config.max_epochs, config.fit_tol,
            patience, config.plateau_rel_improve)
        if status == 3:
            diverged += 1
            continue
        model = Mlp.from_flat(data.feature_names, config.hidden,
                              config.activation, w)
        result = TrainResult(model, float(max_resid), float(mse), int(epochs),
                             restart, bool(max_resid > config.fit_tol))
        if status == 0:
            best = result
            break
        if best is None or result.max_residual < best.max_residual:
            best = result
    if best is None:
        raise TrainingError(f"all {config.restarts} restarts diverged")
    if diverged:
        best = TrainResult(best.model, best.max_residual, best.mse, best.epochs,
                           best.restart, best.underfit, diverged)
    return best
