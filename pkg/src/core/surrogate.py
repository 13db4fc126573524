"""
SwiptMDP - Circuit Surrogate
Small ReLU/sigmoid networks that learn f_v(v, r_E) and P'(v, r_E) from simulated
tuples, plus an interpolation-table responder on a rectangular grid.
"""

import copy
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import RegularGridInterpolator

from debug import log_debug, log_info, log_warning
from core.circuit_sim import (
    CircuitResponder,
    ClampDiagnostics,
    Dataset,
    ResponderMixin,
)
from core.error_handler import ConfigValidationError, DomainError, TrainingError
from utils.file_utils import FileUtils
from utils.performance import performance_monitor

Array = NDArray[np.float64]

FORMAT_VERSION = 1


class SurrogateTarget(str, Enum):
    FINAL_VOLTAGE = "final_voltage"
    AVERAGE_POWER = "average_power"


@dataclass
class TrainConfig:
    """Training hyperparameters; the 7-layer network is hidden_layers=7."""
    epochs: int = 300
    batch_size: int = 64
    learning_rate: float = 2e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    hidden_layers: int = 5
    hidden_width: int = 15
    validation_fraction: float = 0.2
    mape_floor: float = 1e-9
    output_margin: float = 1.25
    output_scale: Optional[float] = None

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be positive")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise DomainError(f"{name} must lie in (0, 1)")
        if self.adam_epsilon <= 0 or self.mape_floor <= 0:
            raise DomainError("adam_epsilon and mape_floor must be positive")
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise DomainError("network needs at least one hidden layer of width >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise DomainError("validation_fraction must lie in (0, 1)")
        if self.output_margin < 1.0:
            raise DomainError("output_margin must be >= 1")
        if self.output_scale is not None and self.output_scale <= 0:
            raise DomainError("output_scale must be positive")


@dataclass
class MlpModel:
    layer_widths: List[int]
    weights: List[Array]
    biases: List[Array]
    output_scale: float
    input_mean: Array
    input_scale: Array
    target: SurrogateTarget = SurrogateTarget.FINAL_VOLTAGE

    def __post_init__(self) -> None:
        widths = self.layer_widths
        if len(widths) < 2 or widths[0] != 2 or widths[-1] != 1:
            raise DomainError(f"layer widths must run from 2 inputs to 1 output, got {widths}")
        if len(self.weights) != len(widths) - 1 or len(self.biases) != len(widths) - 1:
            raise DomainError("one weight matrix and bias vector per layer transition")
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[idx], widths[idx + 1]) or b.shape != (widths[idx + 1],):
                raise DomainError(f"layer {idx} shapes {w.shape}/{b.shape} do not match widths")
        if self.output_scale <= 0:
            raise DomainError("output_scale must be positive")

    def _normalize(self, v: Array, r_e: Array) -> Array:
        x = np.column_stack([np.ravel(v), np.ravel(r_e)]).astype(np.float64)
        return (x - self.input_mean) / self.input_scale

    def forward(self, x: Array) -> Tuple[Array, List[Array]]:
        """Network output for normalized inputs and the per-layer activations."""
        activations = [x]
        a = x
        last = len(self.weights) - 1
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            if idx < last:
                a = np.maximum(z, 0.0)
            else:
                a = 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free sigmoid
            activations.append(a)
        return self.output_scale * a[:, 0], activations

    def predict(self, v: Array, r_e: Array) -> Array:
        out, _ = self.forward(self._normalize(np.asarray(v), np.asarray(r_e)))
        return out

    def lipschitz_bound(self) -> float:
        """Upper bound on |d predict / d input| from the layer spectral norms."""
        bound = 0.25 * self.output_scale / float(np.min(self.input_scale))
        for w in self.weights:
            bound *= float(np.linalg.norm(w, 2))
        return bound

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "target": self.target.value,
            "layer_widths": list(self.layer_widths),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "output_scale": float(self.output_scale),
            "input_normalization": {
                "mean": self.input_mean.tolist(),
                "scale": self.input_scale.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MlpModel":
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise ConfigValidationError(f"unsupported surrogate format version {version!r}",
                                        "format_version")
        try:
            widths = [int(w) for w in data["layer_widths"]]
            weights = [np.asarray(w, dtype=np.float64).reshape(widths[i], widths[i + 1])
                       for i, w in enumerate(data["weights"])]
            biases = [np.asarray(b, dtype=np.float64) for b in data["biases"]]
            norm = data["input_normalization"]
            return cls(layer_widths=widths, weights=weights, biases=biases,
                       output_scale=float(data["output_scale"]),
                       input_mean=np.asarray(norm["mean"], dtype=np.float64),
                       input_scale=np.asarray(norm["scale"], dtype=np.float64),
                       target=SurrogateTarget(data.get("target", "final_voltage")))
        except (KeyError, ValueError, TypeError, IndexError) as e:
            raise ConfigValidationError(f"malformed surrogate model: {e}", "weights")

    def save(self, path: Path) -> bool:
        return FileUtils.write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: Path) -> "MlpModel":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigValidationError(f"cannot read surrogate model {path}: {e}",
                                        "surrogate")
        return cls.from_dict(data)


@dataclass
class TrainingReport:
    """Per-epoch MAPE (percent) and the sequence of accepted best models."""
    train_mape: List[float] = field(default_factory=list)
    validation_mape: List[float] = field(default_factory=list)
    best_epoch: int = -1
    best_sequence: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def best_validation_mape(self) -> float:
        return self.best_sequence[-1][1] if self.best_sequence else float("inf")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "train_mape": self.train_mape,
            "validation_mape": self.validation_mape,
            "best_epoch": self.best_epoch,
            "best_validation_mape": self.best_validation_mape,
        }


def mape(prediction: Array, target: Array, floor: float = 1e-9) -> float:
    """Mean absolute percentage error with a floor on the denominators."""
    denom = np.maximum(np.abs(target), floor)
    return float(100.0 * np.mean(np.abs(prediction - target) / denom))


def _targets(dataset: Dataset, target: SurrogateTarget) -> Array:
    if target == SurrogateTarget.FINAL_VOLTAGE:
        return dataset.final_voltage
    return dataset.power


def _init_model(widths: List[int], rng: np.random.Generator, output_scale: float,
                mean: Array, scale: Array, target: SurrogateTarget) -> MlpModel:
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(list(widths), weights, biases, output_scale, mean, scale, target)


def train(dataset: Dataset, target: SurrogateTarget, config: Optional[TrainConfig] = None,
          validation: Optional[Dataset] = None) -> Tuple[MlpModel, TrainingReport]:
    """Adam on the MAPE loss; returns the epoch with the lowest validation MAPE."""
    config = config or TrainConfig()
    if len(dataset) == 0:
        raise DomainError("training dataset is empty")
    if validation is None:
        n_val = max(1, int(round(config.validation_fraction * len(dataset))))
        if len(dataset) - n_val < 1:
            raise DomainError("dataset too small to hold out a validation split")
        dataset, validation = dataset.split([len(dataset) - n_val, n_val])
    if len(validation) == 0:
        raise DomainError("validation dataset is empty")

    x_raw = np.column_stack([dataset.v_init, dataset.r_e])
    y = _targets(dataset, target)
    mean = x_raw.mean(axis=0)
    scale = x_raw.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    output_scale = config.output_scale or config.output_margin * float(np.max(np.abs(y)))
    if output_scale <= 0:
        output_scale = 1.0

    rng = np.random.default_rng(config.seed)
    widths = [2] + [config.hidden_width] * config.hidden_layers + [1]
    model = _init_model(widths, rng, output_scale, mean, scale, target)
    params = model.weights + model.biases
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]

    x = (x_raw - mean) / scale
    x_val = model._normalize(validation.v_init, validation.r_e)
    y_val = _targets(validation, target)
    report = TrainingReport()
    best = copy.deepcopy(model)
    n = x.shape[0]
    step = 0
    b1, b2 = config.adam_beta1, config.adam_beta2
    n_layers = len(model.weights)

    with performance_monitor.time_operation("surrogate_train", {"target": target.value}):
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                out, acts = model.forward(x[idx])
                denom = np.maximum(np.abs(y[idx]), config.mape_floor)
                d_out = 100.0 * np.sign(out - y[idx]) / denom / idx.size
                s = acts[-1][:, 0]
                delta = (d_out * output_scale * s * (1.0 - s))[:, None]
                grads_w: List[Array] = [np.empty(0)] * n_layers
                grads_b: List[Array] = [np.empty(0)] * n_layers
                for layer in range(n_layers - 1, -1, -1):
                    grads_w[layer] = acts[layer].T @ delta
                    grads_b[layer] = delta.sum(axis=0)
                    if layer > 0:
                        delta = (delta @ model.weights[layer].T) * (acts[layer] > 0.0)

                step += 1
                for p, g, m_s, v_s in zip(params, grads_w + grads_b, m_state, v_state):
                    m_s *= b1
                    m_s += (1.0 - b1) * g
                    v_s *= b2
                    v_s += (1.0 - b2) * g * g
                    m_hat = m_s / (1.0 - b1 ** step)
                    v_hat = v_s / (1.0 - b2 ** step)
                    p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)

            train_loss = mape(model.forward(x)[0], y, config.mape_floor)
            val_loss = mape(model.forward(x_val)[0], y_val, config.mape_floor)
            if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
                raise TrainingError(f"loss diverged at epoch {epoch}", epoch)
            report.train_mape.append(train_loss)
            report.validation_mape.append(val_loss)
            if val_loss < report.best_validation_mape:
                best = copy.deepcopy(model)
                report.best_epoch = epoch
                report.best_sequence.append((epoch, val_loss))
            log_debug(f"epoch {epoch}: train {train_loss:.3f}% val {val_loss:.3f}%", "SURROGATE")

    log_info(f"Surrogate {target.value} trained: best validation MAPE "
             f"{report.best_validation_mape:.3f}% at epoch {report.best_epoch}", "SURROGATE")
    return best, report


def predict(model: MlpModel, v, r_e) -> Array:
    """Surrogate output, always within [0, output_scale]."""
    v_arr = np.asarray(v, dtype=np.float64)
    r_arr = np.asarray(r_e, dtype=np.float64)
    if not (np.all(np.isfinite(v_arr)) and np.all(np.isfinite(r_arr))):
        raise DomainError("surrogate inputs must be finite")
    return model.predict(v_arr, r_arr)


@dataclass
class SurrogateResponder(ResponderMixin):
    voltage_model: MlpModel
    power_model: MlpModel

    def respond(self, v: Array, r_e: Array) -> Tuple[Array, Array]:
        return predict(self.voltage_model, v, r_e), predict(self.power_model, v, r_e)


class TableResponder(ResponderMixin):
    """Bilinear interpolation over a rectangular (v, r_E) grid; queries outside are clamped."""

    def __init__(self, v_grid: Array, r_grid: Array, final_voltage: Array, power: Array):
        if v_grid.size < 2 or r_grid.size < 2:
            raise DomainError("table backend needs at least two grid points per axis")
        self.v_grid = v_grid
        self.r_grid = r_grid
        self.final_table = final_voltage
        self.power_table = power
        self.diagnostics = ClampDiagnostics()
        self._final = RegularGridInterpolator((v_grid, r_grid), final_voltage, method="linear")
        self._power = RegularGridInterpolator((v_grid, r_grid), power, method="linear")

    def _points(self, v: Array, r_e: Array) -> Array:
        v = np.ravel(np.asarray(v, dtype=np.float64))
        r_e = np.ravel(np.asarray(r_e, dtype=np.float64))
        v_c = np.clip(v, self.v_grid[0], self.v_grid[-1])
        r_c = np.clip(r_e, self.r_grid[0], self.r_grid[-1])
        clamped = int(np.sum((v_c != v) | (r_c != r_e)))
        if clamped:
            self.diagnostics.record(clamped, v.size)
            log_debug(f"{clamped} table queries clamped to the grid hull", "SURROGATE")
        else:
            self.diagnostics.record(0, v.size)
        return np.column_stack([v_c, r_c])

    def respond(self, v: Array, r_e: Array) -> Tuple[Array, Array]:
        pts = self._points(v, r_e)
        return np.asarray(self._final(pts)), np.asarray(self._power(pts))


def table_backend(dataset: Dataset) -> TableResponder:
    """Table responder from tuples that cover a full rectangular grid."""
    if len(dataset) == 0:
        raise DomainError("table backend needs a non-empty dataset")
    v_grid = np.unique(dataset.v_init)
    r_grid = np.unique(dataset.r_e)
    if v_grid.size * r_grid.size != len(dataset):
        raise DomainError(f"dataset of {len(dataset)} tuples is not a "
                          f"{v_grid.size}x{r_grid.size} rectangular grid")
    i = np.searchsorted(v_grid, dataset.v_init)
    k = np.searchsorted(r_grid, dataset.r_e)
    final = np.full((v_grid.size, r_grid.size), np.nan)
    power = np.full_like(final, np.nan)
    final[i, k] = dataset.final_voltage
    power[i, k] = dataset.power
    if np.isnan(final).any():
        raise DomainError("dataset repeats grid nodes and leaves others empty")
    return TableResponder(v_grid, r_grid, final, power)


def build_table_dataset(responder: CircuitResponder, v_max: float, r_e_max: float,
                        v_points: int = 33, r_points: int = 33) -> Dataset:
    """Responder values on a uniform (v, r_E) grid, ready for table_backend."""
    if v_points < 2 or r_points < 2:
        raise DomainError("grid needs at least two points per axis")
    vv, rr = np.meshgrid(np.linspace(0.0, v_max, v_points), np.linspace(0.0, r_e_max, r_points),
                         indexing="ij")
    final, power = responder.respond(vv.ravel(), rr.ravel())
    if np.any(np.asarray(power) < 0):
        log_warning("responder returned negative power on the table grid", "SURROGATE")
    return Dataset(np.asarray(power), np.asarray(final), vv.ravel(), rr.ravel())
