"""Windowing, the scaled-error metric and the individual-to-fitness pipeline.

Fitness of an individual is the validation MASE of the network built from its
graph and training seed, trained on the train split. Training failures map to
a large finite sentinel so selection still totally orders the population.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateSeriesError, InsufficientDataError, NumericsError, ShapeError
from .nn.network import TrainConfig, build_network, forward, sgd_train

SENTINEL_FITNESS = 1e12


def mase(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean absolute scaled error, computed per output series then averaged.

    For an n-step series: (n-1)/n * sum|y_t - yhat_t| / sum_{t>=2}|y_t - y_{t-1}|.
    A constant series makes the denominator vanish and raises.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.ndim == 1:
        y_true = y_true[:, None]
    if y_pred.ndim == 1:
        y_pred = y_pred[:, None]
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"shape mismatch {y_true.shape} vs {y_pred.shape}")
    n = y_true.shape[0]
    if n < 2:
        raise ShapeError("scaled error needs at least two time steps")
    numerator = np.abs(y_true - y_pred).sum(axis=0)
    denominator = np.abs(np.diff(y_true, axis=0)).sum(axis=0)
    if np.any(denominator == 0):
        dead = list(np.flatnonzero(denominator == 0))
        raise DegenerateSeriesError(f"constant series in columns {dead}: scaled error undefined")
    per_series = (n - 1) / n * numerator / denominator
    return float(per_series.mean())


@dataclass(frozen=True)
class WindowSet:
    role: str  # train | valid | test
    inputs: np.ndarray   # (windows, lag, channels)
    targets: np.ndarray  # (windows, horizon, n_outputs)

    def __len__(self):
        return self.inputs.shape[0]


@dataclass(frozen=True)
class Splits:
    train: WindowSet
    valid: WindowSet
    test: WindowSet
    lag: int
    horizon: int


def _window_segment(series: np.ndarray, targets: np.ndarray, lag: int, horizon: int,
                    role: str) -> WindowSet:
    length = series.shape[0]
    count = length - lag - horizon + 1
    if count <= 0:
        return WindowSet(role, np.zeros((0, lag, series.shape[1])), np.zeros((0, horizon, targets.shape[1])))
    ins = np.stack([series[s : s + lag] for s in range(count)])
    outs = np.stack([targets[s + lag : s + lag + horizon] for s in range(count)])
    return WindowSet(role, ins, outs)


def split_and_window(dataset, lag: int, horizon: int,
                     valid_fraction: float = 0.15, test_fraction: float = 0.15,
                     allow_empty: bool = False) -> Splits:
    """Chronological split into train/valid/test, then stride-1 windows per split.

    Windows never cross a split boundary. Unless `allow_empty` is set, every
    split with a nonzero fraction must yield at least one window.
    """
    y = np.asarray(dataset.y, dtype=np.float64)
    inputs = y if dataset.x is None else np.concatenate([y, dataset.x], axis=1)
    T = y.shape[0]
    n_test = int(T * test_fraction)
    n_valid = int(T * valid_fraction)
    n_train = T - n_valid - n_test
    need = lag + horizon
    segments = {}
    for role, start, stop in (
        ("train", 0, n_train),
        ("valid", n_train, n_train + n_valid),
        ("test", n_train + n_valid, T),
    ):
        ws = _window_segment(inputs[start:stop], y[start:stop], lag, horizon, role)
        if len(ws) == 0 and (role == "train" or not allow_empty):
            raise InsufficientDataError(
                f"{role} split has {stop - start} steps, needs at least {need} for lag={lag}, horizon={horizon}"
            )
        segments[role] = ws
    return Splits(segments["train"], segments["valid"], segments["test"], lag, horizon)


@dataclass(frozen=True)
class Standardizer:
    """Per-channel train statistics; applied before the network, inverted after."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    @classmethod
    def fit(cls, train: WindowSet) -> "Standardizer":
        xs = train.inputs.reshape(-1, train.inputs.shape[-1])
        ys = train.targets.reshape(-1, train.targets.shape[-1])
        x_std = xs.std(axis=0)
        y_std = ys.std(axis=0)
        return cls(
            x_mean=xs.mean(axis=0),
            x_std=np.where(x_std == 0, 1.0, x_std),
            y_mean=ys.mean(axis=0),
            y_std=np.where(y_std == 0, 1.0, y_std),
        )

    def norm_inputs(self, inputs: np.ndarray) -> np.ndarray:
        return (inputs - self.x_mean) / self.x_std

    def norm_targets(self, targets: np.ndarray) -> np.ndarray:
        return (targets - self.y_mean) / self.y_std

    def denorm_predictions(self, preds: np.ndarray) -> np.ndarray:
        return preds * self.y_std + self.y_mean


def _predict(network, inputs: np.ndarray, batch_size: int) -> np.ndarray:
    chunks = [
        forward(network, inputs[s : s + batch_size], mode="eval")
        for s in range(0, len(inputs), batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def _train_and_score(dag, seed: int, splits: Splits, cfg: TrainConfig, target: WindowSet) -> float:
    if len(splits.train) == 0 or len(target) == 0:
        raise InsufficientDataError(f"empty {target.role} split")
    scaler = Standardizer.fit(splits.train)
    channels = splits.train.inputs.shape[-1]
    n_outputs = splits.train.targets.shape[-1]
    network = build_network(dag, (splits.lag, channels), (splits.horizon, n_outputs), seed)
    result = sgd_train(
        network,
        scaler.norm_inputs(splits.train.inputs),
        scaler.norm_targets(splits.train.targets),
        replace(cfg, seed=seed),
    )
    if result.failed:
        return SENTINEL_FITNESS
    try:
        preds = _predict(network, scaler.norm_inputs(target.inputs), cfg.batch_size)
    except NumericsError:
        return SENTINEL_FITNESS
    preds = scaler.denorm_predictions(preds)
    score = mase(
        target.targets.reshape(-1, n_outputs),
        preds.reshape(-1, n_outputs),
    )
    return score if np.isfinite(score) else SENTINEL_FITNESS


def evaluate_individual(individual, splits: Splits, cfg: TrainConfig) -> float:
    """Validation MASE of the trained network; deterministic in (individual, data, cfg)."""
    return _train_and_score(individual.dag, individual.seed, splits, cfg, splits.valid)


def final_test(individual, splits: Splits, cfg: TrainConfig) -> float:
    """Same protocol as fitness evaluation but scored on the held-out test split."""
    return _train_and_score(individual.dag, individual.seed, splits, cfg, splits.test)


def naive_mase(window_set: WindowSet) -> float:
    """Persistence baseline: repeat each window's last observed value across the horizon."""
    if len(window_set) == 0:
        raise InsufficientDataError(f"empty {window_set.role} split")
    n_outputs = window_set.targets.shape[-1]
    last = window_set.inputs[:, -1, :n_outputs]
    preds = np.repeat(last[:, None, :], window_set.targets.shape[1], axis=1)
    return mase(
        window_set.targets.reshape(-1, n_outputs),
        preds.reshape(-1, n_outputs),
    )


@dataclass(frozen=True)
class SplitEvaluator:
    """Picklable fitness function used by the search loop and worker pools."""

    splits: Splits
    train_cfg: TrainConfig

    def __call__(self, individual) -> float:
        return evaluate_individual(individual, self.splits, self.train_cfg)
