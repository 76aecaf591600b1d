"""Loss, gradients and the mini-batch RMSProp training loop."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from .lstm import LstmNetwork, lstm_backward, lstm_forward
from .mlp import MlpNetwork, mlp_backward, mlp_forward
from .optim import RmsPropState, TrainConfig, rmsprop_step

log = logging.getLogger(__name__)

EVAL_CHUNK = 2048


def mse_loss(pred, target) -> float:
    """``sum_i 0.5 (pred_i - target_i)^2`` per sample, averaged over a batch."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    per_sample = 0.5 * np.sum((pred - target) ** 2, axis=-1)
    return float(np.mean(per_sample))


def forward(net, X, train_mode=False, rng=None, dropout=0.0, return_cache=False):
    if isinstance(net, LstmNetwork):
        return lstm_forward(net, X, train_mode, rng, dropout, return_cache)
    return mlp_forward(net, X, train_mode, rng, dropout, return_cache)


def backward(net, cache, dout):
    if isinstance(net, LstmNetwork):
        return lstm_backward(net, cache, dout)
    return mlp_backward(net, cache, dout)


def loss_and_grads(net, X, Y, train_mode=False, rng=None, dropout=0.0):
    """Batch loss (see :func:`mse_loss`) and exact gradients for every parameter."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    pred, cache = forward(net, X, train_mode, rng, dropout, return_cache=True)
    dout = (pred - Y) / Y.shape[0]
    return mse_loss(pred, Y), backward(net, cache, dout)


def set_arrays(net, arrays) -> None:
    for dst, src in zip(net.arrays(), arrays, strict=True):
        dst[...] = src


@dataclass
class Standardizer:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    @classmethod
    def fit(cls, X, Y) -> "Standardizer":
        flat = X.reshape(-1, X.shape[-1])
        x_std = flat.std(axis=0)
        y_std = Y.std(axis=0)
        return cls(flat.mean(axis=0), np.where(x_std > 1e-8, x_std, 1.0),
                   Y.mean(axis=0), np.where(y_std > 1e-8, y_std, 1.0))

    @classmethod
    def identity(cls, input_dim: int, output_dim: int) -> "Standardizer":
        return cls(np.zeros(input_dim), np.ones(input_dim), np.zeros(output_dim), np.ones(output_dim))

    def x(self, X):
        return (X - self.x_mean) / self.x_std

    def y(self, Y):
        return (Y - self.y_mean) / self.y_std

    def y_inverse(self, Yn):
        return Yn * self.y_std + self.y_mean

    def arrays(self) -> list[np.ndarray]:
        return [self.x_mean, self.x_std, self.y_mean, self.y_std]


@dataclass
class Regressor:
    """A trained network together with its input/target standardization."""

    net: LstmNetwork | MlpNetwork
    scaler: Standardizer

    @property
    def context(self) -> int:
        return self.net.context

    def predict(self, X) -> np.ndarray:
        """Log-FB predictions for raw windows (B, k+1, D)."""
        X = np.asarray(X, dtype=np.float64)
        out = [forward(self.net, self.scaler.x(X[i:i + EVAL_CHUNK]))
               for i in range(0, X.shape[0], EVAL_CHUNK)]
        return self.scaler.y_inverse(np.concatenate(out)) if out else np.zeros((0, self.net.output_dim))

    def predict_sequence(self, visual: np.ndarray) -> np.ndarray:
        """One log-FB row per visual row; the first row is repeated to fill the initial context."""
        visual = np.asarray(visual, dtype=np.float64)
        k = self.context
        padded = np.concatenate([np.repeat(visual[:1], k, axis=0), visual])
        windows = np.lib.stride_tricks.sliding_window_view(padded, k + 1, axis=0)
        return self.predict(np.swapaxes(windows, 1, 2))


@dataclass
class TrainResult:
    model: Regressor
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0


def _evaluate(net, Xn, Yn, scaler) -> tuple[float, float]:
    pred = np.concatenate([forward(net, Xn[i:i + EVAL_CHUNK])
                           for i in range(0, Xn.shape[0], EVAL_CHUNK)])
    raw_err = (pred - Yn) * scaler.y_std
    return mse_loss(pred, Yn), float(np.mean(raw_err ** 2))


def train(net, train_data, val_data, cfg: TrainConfig = TrainConfig(),
          standardize: bool = True) -> TrainResult:
    """Mini-batch RMSProp on windows ``(X, Y)``; keeps the best-validation parameters.

    History rows hold ``loss`` (the optimized per-sample half squared error, in
    standardized units) and ``mse`` (mean squared log-FB error) for both sets,
    starting with the untrained network at epoch 0.  Dropout is applied to LSTM
    layers only.
    """
    X, Y = (np.asarray(a, dtype=np.float64) for a in train_data)
    Xv, Yv = (np.asarray(a, dtype=np.float64) for a in val_data)
    if X.shape[0] == 0 or Xv.shape[0] == 0:
        raise ValueError("training and validation sets must be non-empty")
    net = copy.deepcopy(net)
    rng = np.random.default_rng(cfg.rng_seed)
    scaler = Standardizer.fit(X, Y) if standardize else Standardizer.identity(X.shape[-1], Y.shape[-1])
    Xn, Yn, Xvn, Yvn = scaler.x(X), scaler.y(Y), scaler.x(Xv), scaler.y(Yv)
    dropout = cfg.dropout_rate if isinstance(net, LstmNetwork) else 0.0
    state = RmsPropState.like(net.arrays())

    def record(epoch):
        tl, tm = _evaluate(net, Xn, Yn, scaler)
        vl, vm = _evaluate(net, Xvn, Yvn, scaler)
        row = {"epoch": epoch, "train_loss": tl, "train_mse": tm, "val_loss": vl, "val_mse": vm}
        history.append(row)
        return row

    history: list[dict] = []
    best = [a.copy() for a in net.arrays()]
    best_val = record(0)["val_mse"]
    best_epoch = 0
    n = X.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            _, grads = loss_and_grads(net, Xn[idx], Yn[idx], True, rng, dropout)
            rmsprop_step(state, net.arrays(), grads, cfg)
        row = record(epoch)
        log.debug("epoch %d train_mse %.5f val_mse %.5f", epoch, row["train_mse"], row["val_mse"])
        if not np.isfinite(row["train_loss"]):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        if row["val_mse"] < best_val:
            best_val, best_epoch = row["val_mse"], epoch
            best = [a.copy() for a in net.arrays()]
    set_arrays(net, best)
    return TrainResult(Regressor(net, scaler), history, best_epoch)
