"""Sigmoid multilayer perceptron trained by per-sample SGD with momentum.

Layer ``l`` holds ``weights[l]`` of shape ``(n_in, n_out)`` and
``biases[l]`` of shape ``(n_out,)``; every unit, output included, uses the
logistic sigmoid, so inputs and targets are expected on a [0, 1] scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from pvforecast.core import DataMatrix
from pvforecast.errors import PipelineError
from pvforecast.stats import MinMaxScaler, rmse

TARGET_REACHED = "TARGET_REACHED"
MAX_CYCLES = "MAX_CYCLES"
VALIDATION_STOP = "VALIDATION_STOP"

# Any normalized value beyond this magnitude means scaling was skipped.
UNNORMALIZED_LIMIT = 10.0

FORMAT_HEADER = "pvforecast-mlp v1"


@dataclass(frozen=True)
class Topology:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise PipelineError("MALFORMED_TOPOLOGY", f"bad layer sizes {sizes}")
        if sizes[-1] != 1:
            raise PipelineError("MALFORMED_TOPOLOGY", "output layer must have one unit")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    def __str__(self):
        return ":".join(str(s) for s in self.sizes)


def parse_topology(spec: str) -> Topology:
    """Parse colon syntax such as ``"3:3:1"``."""
    parts = spec.strip().split(":") if spec else []
    if len(parts) < 2 or not all(p.isdigit() for p in parts):
        raise PipelineError("MALFORMED_TOPOLOGY", repr(spec))
    return Topology(tuple(int(p) for p in parts))


@dataclass(frozen=True)
class TrainConfig:
    """Training regime.

    ``target_error`` stops training once the per-cycle training error
    (RMSE, or the largest absolute residual with ``error_metric="max"``)
    falls to it. ``validation_patience`` enables early stopping after that
    many validation checks without improvement; ``None`` disables it.
    """

    max_cycles: int = 5000
    target_error: float = 0.1
    learning_rate: float = 0.1
    momentum: float = 0.8
    seed: int = 0
    shuffle_each_cycle: bool = True
    validation_check_every: int = 100
    validation_patience: int | None = None
    error_metric: str = "rmse"

    def __post_init__(self):
        if self.max_cycles < 1:
            raise PipelineError("INVALID_CONFIG", "max_cycles must be >= 1")
        if not self.target_error > 0:
            raise PipelineError("INVALID_CONFIG", "target_error must be > 0")
        if not self.learning_rate > 0:
            raise PipelineError("INVALID_CONFIG", "learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise PipelineError("INVALID_CONFIG", "momentum must be in [0, 1)")
        if self.validation_check_every < 1:
            raise PipelineError("INVALID_CONFIG", "validation_check_every must be >= 1")
        if self.error_metric not in ("rmse", "max"):
            raise PipelineError("INVALID_CONFIG", f"unknown error_metric {self.error_metric!r}")


@dataclass
class TrainingHistory:
    train_error: list = field(default_factory=list)
    validation: list = field(default_factory=list)  # (cycle, rmse)


@dataclass(eq=False)
class MlpModel:
    topology: Topology
    weights: list
    biases: list
    history: TrainingHistory | None = None
    stop_reason: str | None = None

    @property
    def trained(self) -> bool:
        return self.stop_reason is not None

    @property
    def cycles(self) -> int:
        return 0 if self.history is None else len(self.history.train_error)

    def copy(self) -> MlpModel:
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_weights(topology: Topology, seed: int) -> MlpModel:
    """Uniform weights in [-0.5, 0.5] from ``seed``; zero biases."""
    rng = np.random.default_rng(seed)
    sizes = topology.sizes
    weights = [rng.uniform(-0.5, 0.5, size=(a, b)) for a, b in zip(sizes, sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return MlpModel(topology, weights, biases)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _check_inputs(model: MlpModel, x: np.ndarray):
    if x.shape[-1] != model.topology.n_inputs:
        raise PipelineError(
            "SHAPE_MISMATCH", f"{x.shape[-1]} inputs for topology {model.topology}"
        )


def forward(model: MlpModel, inputs) -> np.ndarray:
    """Network output for one input vector or a batch of rows."""
    a = np.asarray(inputs, dtype=float)
    _check_inputs(model, a)
    for w, b in zip(model.weights, model.biases):
        with np.errstate(over="ignore"):
            a = _sigmoid(a @ w + b)
    return a


def backprop(model: MlpModel, x, target):
    """Gradients of ``0.5 * sum((output - target)**2)`` for one sample.

    Returns ``(weight_grads, bias_grads)`` in the model's layer order.
    """
    a = np.asarray(x, dtype=float)
    _check_inputs(model, a)
    acts = [a]
    for w, b in zip(model.weights, model.biases):
        a = _sigmoid(a @ w + b)
        acts.append(a)
    delta = (a - np.asarray(target, dtype=float)) * a * (1.0 - a)
    gw, gb = [], []
    for layer in range(len(model.weights) - 1, -1, -1):
        gw.append(np.outer(acts[layer], delta))
        gb.append(delta)
        h = acts[layer]
        delta = (model.weights[layer] @ delta) * h * (1.0 - h)
    return gw[::-1], gb[::-1]


def _loss(weights, biases, x, target, dtype=np.float64):
    a = np.asarray(x, dtype=dtype)
    for w, b in zip(weights, biases):
        a = 1 / (1 + np.exp(-(a @ w.astype(dtype) + b.astype(dtype))))
    d = a - np.asarray(target, dtype=dtype)
    return 0.5 * np.sum(d * d)


def gradient_check(model: MlpModel, x, target, epsilon: float = 1e-5) -> float:
    """Largest relative gap between backprop and central differences.

    The finite differences are evaluated in extended precision so that
    cancellation does not swamp small gradient entries. Entries where both
    gradients are exactly zero count as agreeing.
    """
    if not 0 < epsilon <= 1e-2:
        raise PipelineError("INVALID_CONFIG", "epsilon must be in (0, 1e-2]")
    gw, gb = backprop(model, x, target)
    ext = np.longdouble
    weights = [w.astype(ext) for w in model.weights]
    biases = [b.astype(ext) for b in model.biases]
    worst = 0.0
    for params, grads in ((weights, gw), (biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + ext(epsilon)
                up = _loss(weights, biases, x, target, ext)
                p[idx] = orig - ext(epsilon)
                down = _loss(weights, biases, x, target, ext)
                p[idx] = orig
                numeric = float((up - down) / (2 * ext(epsilon)))
                analytic = float(g[idx])
                scale = max(abs(numeric), abs(analytic))
                if scale > 0:
                    worst = max(worst, abs(numeric - analytic) / scale)
    return worst


def _pack(model: MlpModel) -> np.ndarray:
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def _unpack(model: MlpModel, theta: np.ndarray):
    weights, biases, pos = [], [], 0
    for a, b in zip(model.topology.sizes, model.topology.sizes[1:]):
        weights.append(theta[pos : pos + a * b].reshape(a, b).copy())
        pos += a * b
        biases.append(theta[pos : pos + b].copy())
        pos += b
    return weights, biases


@numba.njit(cache=True)
def _sgd_epoch(theta, velocity, sizes, x, y, order, lr, momentum):
    """One pass of per-sample SGD with momentum, updating in place."""
    n_layers = sizes.size - 1
    w_off = np.empty(n_layers, np.int64)
    b_off = np.empty(n_layers, np.int64)
    pos = 0
    for l in range(n_layers):
        w_off[l] = pos
        pos += sizes[l] * sizes[l + 1]
        b_off[l] = pos
        pos += sizes[l + 1]
    a_off = np.empty(n_layers + 1, np.int64)
    total = 0
    for l in range(n_layers + 1):
        a_off[l] = total
        total += sizes[l]
    act = np.empty(total)
    delta = np.empty(total)
    grad = np.empty(theta.size)

    for s in range(order.size):
        r = order[s]
        for i in range(sizes[0]):
            act[i] = x[r, i]
        for l in range(n_layers):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            for j in range(n_out):
                z = theta[b_off[l] + j]
                for i in range(n_in):
                    z += act[a_off[l] + i] * theta[w_off[l] + i * n_out + j]
                act[a_off[l + 1] + j] = 1.0 / (1.0 + math.exp(-z))
        top = a_off[n_layers]
        for j in range(sizes[n_layers]):
            o = act[top + j]
            delta[top + j] = (o - y[r, j]) * o * (1.0 - o)
        for l in range(n_layers - 1, -1, -1):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            for i in range(n_in):
                ai = act[a_off[l] + i]
                acc = 0.0
                for j in range(n_out):
                    dj = delta[a_off[l + 1] + j]
                    k = w_off[l] + i * n_out + j
                    grad[k] = ai * dj
                    acc += theta[k] * dj
                if l > 0:
                    delta[a_off[l] + i] = acc * ai * (1.0 - ai)
            for j in range(n_out):
                grad[b_off[l] + j] = delta[a_off[l + 1] + j]
        for k in range(theta.size):
            velocity[k] = momentum * velocity[k] - lr * grad[k]
            theta[k] += velocity[k]


def _error(model_like, x, y, metric):
    out = forward(model_like, x).reshape(-1)
    if metric == "max":
        return float(np.max(np.abs(out - y)))
    return rmse(out, y)


def _guard(data: DataMatrix, name: str):
    if np.any(np.abs(data.features) > UNNORMALIZED_LIMIT) or np.any(
        np.abs(data.target) > UNNORMALIZED_LIMIT
    ):
        raise PipelineError("UNNORMALIZED_INPUT", f"{name} values exceed {UNNORMALIZED_LIMIT}")


def train(
    model: MlpModel,
    train_data: DataMatrix,
    validation: DataMatrix | None,
    config: TrainConfig,
) -> MlpModel:
    """Train a copy of ``model`` on normalized data; ``model`` is untouched.

    A cycle is one pass over every training row. Training stops when the
    cycle's training error reaches ``config.target_error``, when
    ``config.max_cycles`` passes have run, or on validation early stopping
    (which restores the best validated weights).
    """
    if train_data.n_features != model.topology.n_inputs:
        raise PipelineError(
            "SHAPE_MISMATCH",
            f"{train_data.n_features} features for topology {model.topology}",
        )
    _guard(train_data, "training")
    has_val = validation is not None and len(validation) > 0
    if has_val:
        if validation.n_features != model.topology.n_inputs:
            raise PipelineError("SHAPE_MISMATCH", "validation feature count differs")
        _guard(validation, "validation")

    model = model.copy()
    theta = _pack(model)
    velocity = np.zeros_like(theta)
    sizes = np.array(model.topology.sizes, dtype=np.int64)
    x = np.ascontiguousarray(train_data.features)
    y = np.ascontiguousarray(train_data.target.reshape(-1, 1))
    n = len(train_data)
    rng = np.random.default_rng(config.seed)
    history = TrainingHistory()
    stop = MAX_CYCLES
    best_val, best_theta, stale = np.inf, None, 0

    for cycle in range(1, config.max_cycles + 1):
        order = rng.permutation(n) if config.shuffle_each_cycle else np.arange(n)
        _sgd_epoch(theta, velocity, sizes, x, y, order, config.learning_rate, config.momentum)
        model.weights, model.biases = _unpack(model, theta)
        err = _error(model, x, train_data.target, config.error_metric)
        history.train_error.append(err)
        if not np.isfinite(err):
            break
        if err <= config.target_error:
            stop = TARGET_REACHED
            break
        if has_val and cycle % config.validation_check_every == 0:
            v = rmse(forward(model, validation.features).reshape(-1), validation.target)
            history.validation.append((cycle, v))
            if config.validation_patience is not None:
                if v < best_val:
                    best_val, best_theta, stale = v, theta.copy(), 0
                else:
                    stale += 1
                    if stale >= config.validation_patience:
                        model.weights, model.biases = _unpack(model, best_theta)
                        stop = VALIDATION_STOP
                        break

    model.history = history
    model.stop_reason = stop
    return model


def predict_ann(model: MlpModel, data: DataMatrix, scaler: MinMaxScaler) -> np.ndarray:
    """Power estimates in physical units for rows of unscaled ``data``."""
    if not model.trained:
        raise PipelineError("NOT_TRAINED", "model has not been trained")
    if data.n_features != model.topology.n_inputs:
        raise PipelineError("SHAPE_MISMATCH", "feature count differs from topology")
    x = np.column_stack(
        [scaler.scale_column(c, data.features[:, k]) for k, c in enumerate(data.column_names)]
    )
    out = forward(model, x).reshape(-1)
    return scaler.unscale_column(data.target_name, out)


def _fmt(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in values)


def save_model(model: MlpModel, path, scaler: MinMaxScaler | None = None) -> None:
    """Write the plain-text model format (17 significant digits)."""
    lines = [FORMAT_HEADER, f"topology {model.topology}", f"stop_reason {model.stop_reason}"]
    lines.append(f"cycles {model.cycles}")
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"layer {k} weights {w.shape[0]} {w.shape[1]}")
        lines.extend(_fmt(row) for row in w)
        lines.append(f"layer {k} biases {b.shape[0]}")
        lines.append(_fmt(b))
    if scaler is not None:
        for c, lo, hi in zip(scaler.columns, scaler.mins, scaler.maxs):
            lines.append(f"scaler {c} {_fmt([lo, hi])}")
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path):
    """Read a model file; returns ``(model, scaler_or_None)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise PipelineError("PARSE_ERROR", f"{path}: not a {FORMAT_HEADER} file")
    topology = parse_topology(lines[1].split()[1])
    stop = lines[2].split()[1]
    stop = None if stop == "None" else stop
    pos = 4
    weights, biases = [], []
    for _ in range(len(topology.sizes) - 1):
        _, _, _, r, c = lines[pos].split()
        r, c = int(r), int(c)
        rows = [[float(v) for v in lines[pos + 1 + i].split()] for i in range(r)]
        weights.append(np.array(rows).reshape(r, c))
        pos += 1 + r
        biases.append(np.array([float(v) for v in lines[pos + 1].split()]))
        pos += 2
    cols, mins, maxs = [], [], []
    while lines[pos] != "end":
        _, name, lo, hi = lines[pos].split()
        cols.append(name)
        mins.append(float(lo))
        maxs.append(float(hi))
        pos += 1
    scaler = MinMaxScaler(tuple(cols), mins, maxs) if cols else None
    model = MlpModel(topology, weights, biases, stop_reason=stop)
    return model, scaler
