"""
Training engine for stacked LSTM / SR-LSTM regressors.
Analytic backpropagation through time, finite-difference gradient check,
Adam and RMSprop updates, and full-batch fitting with validation-based
early stopping and best-weight restore.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cells import ModelSpec, SrParams, StepTrace, forward_sequence, make_dropout_masks
from .numkernel import NumericError, ShapeError, activation_grad, child_rng

logger = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "rmsprop")
# denominator floor for the relative gradient error
GRAD_CHECK_FLOOR = 1e-8


class DivergenceError(NumericError):
    """Raised when training produces non-finite losses or gradients"""
    pass


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 500
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    dropout_rate: float = 0.2
    patience: int = 20
    val_fraction: float = 0.2
    seed: int = 42
    clip_norm: Optional[float] = 5.0
    optimizer: str = "adam"
    rms_rho: float = 0.9
    log_every: int = 50

    def validate(self) -> None:
        errors = []
        if self.max_epochs < 1:
            errors.append("max_epochs must be >= 1")
        if not self.learning_rate > 0:
            errors.append("learning_rate must be > 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            errors.append("dropout_rate must be in [0, 1)")
        if self.patience < 1:
            errors.append("patience must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            errors.append("val_fraction must be in (0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and 0.0 <= self.rms_rho < 1.0):
            errors.append("moment decay rates must be in [0, 1)")
        if self.optimizer not in OPTIMIZERS:
            errors.append(f"optimizer must be one of {OPTIMIZERS}")
        if errors:
            raise NumericError("Invalid training configuration: " + "; ".join(errors))


@dataclass(frozen=True)
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()}, t=0)


@dataclass(frozen=True)
class FitResult:
    best_spec: ModelSpec
    history: List[Tuple[float, float]]
    stopped_epoch: int
    best_epoch: int


# ----------------------------------------------------------------------
# loss and gradients
# ----------------------------------------------------------------------
def mse_loss(pred, target) -> float:
    pred = np.atleast_1d(np.asarray(pred, dtype=np.float64))
    target = np.atleast_1d(np.asarray(target, dtype=np.float64))
    if pred.shape != target.shape or pred.size == 0:
        raise ShapeError(f"Loss inputs must have equal non-zero length, got {pred.shape} and {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def _outer(dz: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.outer(dz, v) if dz.ndim == 1 else dz.T @ v


def _batch_sum(dz: np.ndarray) -> np.ndarray:
    return dz if dz.ndim == 1 else dz.sum(axis=0)


def _check_traces(spec: ModelSpec, traces: Sequence[Sequence[StepTrace]]) -> None:
    if len(traces) != len(spec.layers):
        raise ShapeError(f"trace/spec mismatch: {len(traces)} traced layers for {len(spec.layers)} model layers")
    steps = len(traces[0])
    for k, (layer, layer_traces) in enumerate(zip(spec.layers, traces)):
        if len(layer_traces) != steps or not layer_traces:
            raise ShapeError(f"trace/spec mismatch: layer{k} has {len(layer_traces)} steps, expected {steps}")
        if layer_traces[0].h_new.shape[-1] != layer.hidden_size:
            raise ShapeError(f"trace/spec mismatch: layer{k} hidden size {layer_traces[0].h_new.shape[-1]} "
                             f"vs {layer.hidden_size}")
        if isinstance(layer, SrParams) and layer_traces[0].r_pre is None:
            raise ShapeError(f"trace/spec mismatch: layer{k} is SR but was traced as plain LSTM")


def backward_sequence(spec: ModelSpec, target, prediction, traces: Sequence[Sequence[StepTrace]],
                      dropout_mask: Optional[Sequence[np.ndarray]] = None,
                      reduction: str = "sum") -> Dict[str, np.ndarray]:
    """Reverse-mode gradients of squared error for every named parameter.

    reduction='sum' differentiates sum((pred - y)^2) (one sample: the squared
    error); reduction='mean' differentiates the batch MSE.
    """
    _check_traces(spec, traces)
    pred = np.asarray(prediction, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if pred.shape != y.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target shape {y.shape}")

    d_pred = 2.0 * (pred - y)
    if reduction == "mean":
        d_pred = d_pred / max(pred.size, 1)
    elif reduction != "sum":
        raise NumericError(f"Unknown reduction: {reduction}")

    grads = {name: np.zeros_like(arr) for name, arr in spec.named_parameters().items()}
    steps = len(traces[0])
    h_final = traces[-1][-1].h_new
    grads["w_out"] = d_pred * h_final if d_pred.ndim == 0 else d_pred @ h_final
    grads["b_out"] = np.asarray(d_pred.sum())

    # gradient flowing into each layer's emitted hidden sequence
    dh_seq = [np.zeros_like(tr.h_new) for tr in traces[-1]]
    dh_seq[-1] = d_pred[..., None] * spec.w_out

    for k in reversed(range(len(spec.layers))):
        layer = spec.layers[k]
        base = layer.base if isinstance(layer, SrParams) else layer
        hidden = layer.hidden_size
        prefix = f"layer{k}."
        dx_seq: List[np.ndarray] = [None] * steps
        dh_next = np.zeros_like(dh_seq[0])
        dc_next = np.zeros_like(dh_seq[0])

        for t in reversed(range(steps)):
            tr = traces[k][t]
            dh = dh_seq[t] + dh_next
            do = dh * tr.tanh_c
            dc = dc_next + dh * tr.o * (1.0 - tr.tanh_c ** 2)

            df_mod = dc * tr.c_prev
            di_mod = dc * tr.c_tilde
            dc_tilde = dc * tr.i_mod
            dc_next = dc * tr.f_mod

            dz = {
                "f": df_mod * tr.r * tr.f * (1.0 - tr.f),
                "i": di_mod * tr.r * tr.i * (1.0 - tr.i),
                "c": dc_tilde * (1.0 - tr.c_tilde ** 2),
                "o": do * tr.o * (1.0 - tr.o),
            }
            dhx = 0.0
            for gate, dz_g in dz.items():
                grads[prefix + "w_" + gate] += _outer(dz_g, tr.hx)
                grads[prefix + "b_" + gate] += _batch_sum(dz_g)
                dhx = dhx + dz_g @ getattr(base, "w_" + gate)

            dh_prev = dhx[..., :hidden]
            if isinstance(layer, SrParams):
                dr = df_mod * tr.f + di_mod * tr.i
                dr_pre = dr * activation_grad(layer.rho, tr.r_pre, tr.r)
                grads[prefix + "w_r"] += _outer(dr_pre, tr.h_prev)
                grads[prefix + "b_r"] += _batch_sum(dr_pre)
                dh_prev = dh_prev + dr_pre @ layer.w_r

            dh_next = dh_prev
            dx_seq[t] = dhx[..., hidden:]

        if k > 0:
            if dropout_mask is not None:
                mask = dropout_mask[k - 1]
                dh_seq = [dx * mask[..., t, :] for t, dx in enumerate(dx_seq)]
            else:
                dh_seq = dx_seq

    return grads


def _perturbed_losses(spec: ModelSpec, window: np.ndarray, target: float, name: str,
                      step: float) -> Tuple[np.ndarray, np.ndarray]:
    """Squared error with each scalar of `name` moved by +step and -step.

    All 2 * size perturbed models run as one stacked batch: the perturbed
    array gets a leading batch axis, every other parameter is broadcast.
    """
    params = spec.named_parameters()
    base = params[name]
    size = base.size
    batch = 2 * size

    flat = np.repeat(base.reshape(1, size), batch, axis=0)
    idx = np.arange(size)
    flat[idx, idx] += step
    flat[size + idx, idx] -= step

    stacked = {n: np.broadcast_to(a, (batch,) + a.shape) for n, a in params.items()}
    stacked[name] = flat.reshape((batch,) + base.shape)
    windows = np.broadcast_to(window, (batch,) + window.shape)
    pred, _ = forward_sequence(spec.with_parameters(stacked), windows)

    losses = (np.asarray(pred) - target) ** 2
    if not np.all(np.isfinite(losses)):
        raise NumericError("non-finite loss during gradient check")
    return losses[:size], losses[size:]


def grad_check_report(spec: ModelSpec, window, target, step: float = 1e-5) -> Dict[str, float]:
    """Max relative error per named parameter, analytic vs central differences."""
    if not step > 0:
        raise NumericError(f"finite-difference step must be > 0, got {step}")
    window = np.asarray(window, dtype=np.float64)
    target = float(target)

    pred, traces = forward_sequence(spec, window)
    if not np.isfinite((pred - target) ** 2):
        raise NumericError("non-finite loss during gradient check")
    analytic = backward_sequence(spec, target, pred, traces, reduction="sum")

    report: Dict[str, float] = {}
    for name in spec.named_parameters():
        up, down = _perturbed_losses(spec, window, target, name, step)
        numeric = (up - down) / (2.0 * step)
        a = analytic[name].ravel()
        rel = np.abs(a - numeric) / np.maximum(GRAD_CHECK_FLOOR, np.abs(a) + np.abs(numeric))
        report[name] = float(rel.max())
    return report


def grad_check(spec: ModelSpec, window, target, step: float = 1e-5) -> float:
    """Max relative gradient error over every scalar parameter."""
    return max(grad_check_report(spec, window, target, step).values())


# ----------------------------------------------------------------------
# optimisers
# ----------------------------------------------------------------------
def _check_update_inputs(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
    if params.keys() != grads.keys():
        raise ShapeError(f"gradient names {sorted(grads)} do not match parameters {sorted(params)}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError("diverged")


def adam_step(state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              cfg: TrainConfig) -> Tuple[AdamState, Dict[str, np.ndarray]]:
    """Adam with bias correction. Returns new state and new parameters."""
    _check_update_inputs(params, grads)
    t = state.t + 1
    m_new, v_new, p_new = {}, {}, {}
    for name, theta in params.items():
        g = grads[name]
        m = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        m_new[name], v_new[name] = m, v
        p_new[name] = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return AdamState(m=m_new, v=v_new, t=t), p_new


def rmsprop_step(state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
                 cfg: TrainConfig) -> Tuple[AdamState, Dict[str, np.ndarray]]:
    _check_update_inputs(params, grads)
    v_new, p_new = {}, {}
    for name, theta in params.items():
        g = grads[name]
        v = cfg.rms_rho * state.v[name] + (1.0 - cfg.rms_rho) * g * g
        v_new[name] = v
        p_new[name] = theta - cfg.learning_rate * g / (np.sqrt(v) + cfg.epsilon)
    return AdamState(m=state.m, v=v_new, t=state.t + 1), p_new


def clip_gradients(grads: Dict[str, np.ndarray], max_norm: Optional[float]) -> Dict[str, np.ndarray]:
    """Rescale all gradients together when their global L2 norm exceeds max_norm."""
    if not max_norm:
        return grads
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm <= max_norm or not np.isfinite(norm):
        return grads
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}


# ----------------------------------------------------------------------
# fitting
# ----------------------------------------------------------------------
class EarlyStopping:
    """Stop when validation loss has not improved for `patience` epochs,
    remembering the spec from the best epoch."""

    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = float("inf")
        self.best_epoch = 0
        self.best_spec: Optional[ModelSpec] = None
        self.wait = 0
        self.stop = False

    def __call__(self, val_loss: float, epoch: int, spec: Optional[ModelSpec] = None) -> bool:
        if val_loss < self.best_loss - self.min_delta:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.best_spec = spec
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                self.stop = True
        return self.stop


def predict(spec: ModelSpec, windows) -> np.ndarray:
    """Inference-mode predictions, one per window, in scaled target space."""
    batch = np.asarray(windows, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[0] == 0:
        raise ShapeError(f"windows must have shape (N, L, D) with N >= 1, got {batch.shape}")
    if batch.shape[-1] != spec.feature_count:
        raise ShapeError(f"windows have {batch.shape[-1]} features, model expects {spec.feature_count}")
    pred, _ = forward_sequence(spec, batch)
    return np.asarray(pred, dtype=np.float64)


def fit(spec: ModelSpec, train, cfg: TrainConfig) -> FitResult:
    """Full-batch training on `train.windows` / `train.targets`.

    The chronological tail of the training samples is held out for
    validation. Parameters named in spec.frozen are never updated.
    """
    cfg.validate()
    windows = np.asarray(train.windows, dtype=np.float64)
    targets = np.asarray(train.targets, dtype=np.float64)
    n = len(targets)
    n_val = max(1, int(np.floor(n * cfg.val_fraction)))
    if n - n_val < 1:
        raise NumericError(f"validation split of {n} samples leaves no training samples")

    fit_x, fit_y = windows[: n - n_val], targets[: n - n_val]
    val_x, val_y = windows[n - n_val:], targets[n - n_val:]
    steps = fit_x.shape[1]

    spec = replace(spec, dropout_rate=cfg.dropout_rate)
    spec.validate()
    dropout_rng = child_rng(cfg.seed, "dropout")
    step_fn = adam_step if cfg.optimizer == "adam" else rmsprop_step

    trainable = spec.named_parameters(trainable_only=True)
    state = AdamState.zeros_like(trainable)
    stopper = EarlyStopping(cfg.patience)
    history: List[Tuple[float, float]] = []

    logger.info(f"Training {spec.variant.upper()} model: {len(fit_y)} train / {len(val_y)} validation samples, "
                f"{sum(p.size for p in trainable.values())} trainable parameters")

    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        masks = None
        if spec.dropout_rate > 0 and len(spec.layers) > 1:
            masks = make_dropout_masks(dropout_rng, spec, (len(fit_y),), steps)

        pred, traces = forward_sequence(spec, fit_x, masks)
        train_loss = mse_loss(pred, fit_y)
        if not np.isfinite(train_loss):
            raise DivergenceError(f"training loss became non-finite at epoch {epoch}")

        grads = backward_sequence(spec, fit_y, pred, traces, masks, reduction="mean")
        grads = clip_gradients({name: grads[name] for name in trainable}, cfg.clip_norm)
        try:
            state, trainable = step_fn(state, trainable, grads, cfg)
        except DivergenceError:
            raise DivergenceError(f"diverged at epoch {epoch}")
        spec = spec.with_parameters(trainable)

        val_loss = mse_loss(predict(spec, val_x), val_y)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"validation loss became non-finite at epoch {epoch}")
        history.append((train_loss, val_loss))

        stop = stopper(val_loss, epoch, spec)
        if epoch % cfg.log_every == 0:
            logger.info(f"Epoch {epoch}: train_loss={train_loss:.6f} val_loss={val_loss:.6f}")
        if stop:
            logger.info(f"Early stopping at epoch {epoch}; best epoch {stopper.best_epoch} "
                        f"(val_loss={stopper.best_loss:.6f})")
            break

    return FitResult(best_spec=stopper.best_spec, history=history,
                     stopped_epoch=epoch, best_epoch=stopper.best_epoch)
