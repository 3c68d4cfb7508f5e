"""
Mini-batch SGD for artifact-reduction networks.

Loss is the per-sample sum of squared errors averaged over the batch. Updates
use momentum, weight decay on weights only, adjustable gradient clipping to
[-tau/alpha, tau/alpha] and a staged exponential learning-rate schedule.
"""

import json
import logging
import math
import tomllib
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from cnnpost.data.corpus import SamplePair
from cnnpost.errors import ConfigError, EmptyDatasetError, NumericError, ShapeMismatchError, SpecError
from cnnpost.nn.graph import ModelParams, NetworkSpec, backward_batch, forward_batch, init_params
from cnnpost.nn.layers import ConvParams
from cnnpost.tensor import Tensor

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    """Optimizer hyperparameters. Defaults follow the QP 27/32 recipe."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    base_lr: float = Field(default=0.1, gt=0)
    lr_final: float = Field(default=0.0001, gt=0)
    lr_stage_epochs: int = Field(default=40, ge=1)
    bias_lr: float = Field(default=0.01, gt=0)
    clip_tau: float = Field(default=0.01, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=0.0001, ge=0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=160, ge=1)
    seed: int = 0
    init_from: Path | None = None

    @model_validator(mode="after")
    def check_lr_range(self) -> "TrainConfig":
        if self.base_lr < self.lr_final:
            raise ValueError(f"base_lr ({self.base_lr}) must be >= lr_final ({self.lr_final})")
        return self

    @property
    def stages(self) -> int:
        return math.ceil(self.epochs / self.lr_stage_epochs)


FINE_TUNE_SOURCE = {22: 27}

PRESETS: dict[str, TrainConfig] = {
    "qp22": TrainConfig(base_lr=0.001, lr_final=0.001, bias_lr=0.0001, epochs=40, lr_stage_epochs=40),
    "qp27": TrainConfig(bias_lr=0.01),
    "qp32": TrainConfig(bias_lr=0.01),
    "qp37": TrainConfig(bias_lr=0.1),
    # Desk-scale: a few hundred tiles, the same four-stage schedule compressed into 20 epochs.
    "smoke": TrainConfig(
        base_lr=0.01, lr_final=0.00001, lr_stage_epochs=5, epochs=20,
        bias_lr=0.001, clip_tau=0.001, batch_size=16,
    ),
}


def preset_for_qp(qp: int) -> TrainConfig:
    try:
        return PRESETS[f"qp{qp}"]
    except KeyError:
        raise ConfigError(f"No training preset for QP {qp}; presets exist for QP 22, 27, 32 and 37") from None


def load_train_config(source: str | Path | None, qp: int | None = None) -> TrainConfig:
    """Resolve a preset name or an override file (.json/.toml) merged over the QP preset."""
    base = preset_for_qp(qp) if qp is not None else TrainConfig()
    if source is None:
        return base
    if str(source) in PRESETS:
        return PRESETS[str(source)]
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"'{source}' is neither a preset ({', '.join(PRESETS)}) nor an existing file")
    try:
        if path.suffix.lower() == ".toml":
            overrides = tomllib.loads(path.read_text())
        else:
            overrides = json.loads(path.read_text())
        return TrainConfig.model_validate({**base.model_dump(), **overrides})
    except (ValidationError, ValueError) as e:
        raise ConfigError(f"Invalid training configuration in {path}: {e}") from e


@dataclass
class TrainState:
    spec: NetworkSpec
    params: ModelParams
    velocity: ModelParams
    epoch: int = 0
    iteration: int = 0
    loss_history: list[tuple[int, float]] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)

    @classmethod
    def start(cls, spec: NetworkSpec, params: ModelParams) -> "TrainState":
        params.check_matches(spec)
        return cls(spec=spec, params=params, velocity=params.zeros_like())


def mse_loss_batch(outputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    if outputs.shape != targets.shape:
        raise ShapeMismatchError("mse_loss", outputs.shape, targets.shape)
    n = outputs.shape[0]
    diff = outputs - targets
    loss = float(np.sum(diff * diff)) / n
    return loss, (2.0 / n) * diff


def mse_loss(outputs: list[Tensor], targets: list[Tensor]) -> tuple[float, list[Tensor]]:
    """(1/N) sum_n ||F(Y_n) - X_n||^2 and its gradient w.r.t. every output."""
    if len(outputs) != len(targets):
        raise ShapeMismatchError("mse_loss sample count", (len(outputs),), (len(targets),))
    n = len(outputs)
    loss = 0.0
    grads = []
    for out, target in zip(outputs, targets):
        if out.shape != target.shape:
            raise ShapeMismatchError("mse_loss", out.shape, target.shape)
        diff = out.data - target.data
        loss += float(np.sum(diff * diff))
        grads.append(Tensor.from_array((2.0 / n) * diff, dtype=out.data.dtype.type))
    return loss / n, grads


def clip_update(g: float | np.ndarray, alpha: float, tau: float) -> float | np.ndarray:
    """Clamp a gradient (componentwise) to [-tau/alpha, tau/alpha]."""
    bound = tau / alpha
    if isinstance(g, np.ndarray):
        return np.clip(g, -bound, bound)
    return min(max(g, -bound), bound)


def learning_rate(epoch: int, cfg: TrainConfig) -> float:
    """base_lr * r ** (epoch // lr_stage_epochs), r chosen so the last stage runs at lr_final."""
    if not 0 <= epoch < cfg.epochs:
        raise ConfigError(f"Epoch {epoch} is outside [0, {cfg.epochs})")
    if cfg.stages == 1:
        return cfg.base_lr
    ratio = (cfg.lr_final / cfg.base_lr) ** (1.0 / (cfg.stages - 1))
    return cfg.base_lr * ratio ** (epoch // cfg.lr_stage_epochs)


def _stack(batch: Sequence[SamplePair | tuple[Tensor, Tensor]], dtype: np.dtype) -> tuple[np.ndarray, np.ndarray]:
    pairs = [(s.degraded, s.original) if isinstance(s, SamplePair) else s for s in batch]
    shapes = {p[0].shape for p in pairs} | {p[1].shape for p in pairs}
    if len(shapes) != 1:
        raise ShapeMismatchError("training batch", *sorted(shapes)[:2])
    x = np.stack([p[0].data for p in pairs]).astype(dtype, copy=False)
    y = np.stack([p[1].data for p in pairs]).astype(dtype, copy=False)
    return x, y


def _update(
    param: np.ndarray, velocity: np.ndarray, grad: np.ndarray, lr: float, cfg: TrainConfig, decay: float
) -> None:
    g = clip_update(grad + decay * param if decay else grad, lr, cfg.clip_tau)
    velocity *= cfg.momentum
    velocity -= lr * g
    param += velocity


def apply_gradients(state: TrainState, grads: ModelParams, cfg: TrainConfig, epoch: int) -> None:
    """In-place momentum update of every weight and bias from their loss gradients."""
    lr = learning_rate(epoch, cfg)
    for conv, vel, grad in zip(state.params, state.velocity, grads):
        _update(conv.weights, vel.weights, grad.weights, lr, cfg, cfg.weight_decay)
        _update(conv.biases, vel.biases, grad.biases, cfg.bias_lr, cfg, 0.0)


def sgd_step(
    state: TrainState, batch: Sequence[SamplePair | tuple[Tensor, Tensor]], cfg: TrainConfig, epoch: int
) -> TrainState:
    """One mini-batch update. Mutates and returns `state`."""
    if not batch:
        raise EmptyDatasetError("sgd_step needs a non-empty batch")
    x, y = _stack(batch, state.params.dtype)
    return _step_arrays(state, x, y, cfg, epoch)


def _step_arrays(state: TrainState, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, epoch: int) -> TrainState:
    output, activations = forward_batch(state.spec, state.params, x)
    loss, grad_output = mse_loss_batch(output, y)
    if not math.isfinite(loss):
        raise NumericError(f"Training loss became non-finite at iteration {state.iteration}")
    grads, _ = backward_batch(state.spec, state.params, activations, grad_output)
    apply_gradients(state, grads, cfg, epoch)
    state.iteration += 1
    state.loss_history.append((state.iteration, loss))
    logger.debug(f"epoch {epoch} iteration {state.iteration}: loss {loss:.6f}")
    return state


def _initial_params(spec: NetworkSpec, cfg: TrainConfig, dtype: type[np.floating]) -> ModelParams:
    if cfg.init_from is None:
        return init_params(spec, cfg.seed, dtype)
    from cnnpost.model_io import load_model

    params, loaded = load_model(cfg.init_from)
    if loaded.layers != spec.layers or loaded.residue != spec.residue:
        raise SpecError(
            f"Cannot start '{spec.name}' from {cfg.init_from}: it holds an incompatible '{loaded.name}' network"
        )
    logger.info(f"Fine-tuning from {cfg.init_from}")
    return params.astype(dtype)


EpochCallback = Callable[[int, float, float], None]


def train(
    dataset: Sequence[SamplePair | tuple[Tensor, Tensor]],
    spec: NetworkSpec,
    cfg: TrainConfig,
    dtype: type[np.floating] = np.float64,
    on_epoch: EpochCallback | None = None,
) -> tuple[ModelParams, list[tuple[int, float]]]:
    """Train for cfg.epochs epochs, reshuffling the samples every epoch.

    The final short batch of an epoch is kept. `on_epoch(epoch, lr, mean_loss)`
    is called after every epoch.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("Cannot train on an empty dataset")
    state = TrainState.start(spec, _initial_params(spec, cfg, dtype))
    x_all, y_all = _stack(dataset, state.params.dtype)
    rng = np.random.default_rng([cfg.seed, 1])
    n = len(dataset)
    logger.info(
        f"Training '{spec.name}' on {n} samples: {cfg.epochs} epochs, batch {cfg.batch_size}, "
        f"lr {cfg.base_lr} -> {cfg.lr_final}"
    )

    for epoch in range(cfg.epochs):
        state.epoch = epoch
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _step_arrays(state, x_all[idx], y_all[idx], cfg, epoch)
            total += state.loss_history[-1][1] * len(idx)
        mean_loss = total / n
        state.epoch_losses.append(mean_loss)
        lr = learning_rate(epoch, cfg)
        logger.info(f"epoch {epoch + 1}/{cfg.epochs}: lr {lr:.2e}, mean loss {mean_loss:.6f}")
        if on_epoch is not None:
            on_epoch(epoch, lr, mean_loss)

    return state.params, state.loss_history
