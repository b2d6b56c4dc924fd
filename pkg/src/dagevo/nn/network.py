"""Compile a DAG genome into an executable, trainable network.

Compilation runs one topological pass (matrix index order) resolving channel
counts, allocates every weight from the training seed alone, and appends the
fixed output head: flatten the last node's output and map it linearly to
horizon * n_outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dag import Dag
from ..errors import NumericsError, ShapeError
from . import autodiff as ad
from . import layers
from .autodiff import Var


@dataclass
class CompiledNode:
    spec: object
    in_channels: int   # width the layer consumes, after combiner + head padding
    out_channels: int
    params: dict = field(default_factory=dict)  # name -> Var


@dataclass
class Network:
    dag: Dag
    lag: int
    in_channels: int
    horizon: int
    n_outputs: int
    seed: int
    nodes: list
    head: dict
    param_count: int

    def parameters(self) -> dict:
        out = {}
        for i, node in enumerate(self.nodes):
            for name, var in node.params.items():
                out[(i, name)] = var
        out[("head", "w")] = self.head["w"]
        out[("head", "b")] = self.head["b"]
        return out

    def zero_grad(self):
        for var in self.parameters().values():
            var.grad = None


def _node_io_channels(dag: Dag, input_channels: int) -> list[tuple[int, int]]:
    bits = dag.adj.bits
    m = dag.adj.m
    out_ch = {0: input_channels}
    result = []
    for j in range(1, m - 1):
        spec = dag.hidden[j - 1]
        parent_chs = [out_ch[int(i)] for i in np.flatnonzero(bits[:, j])]
        width = layers.combined_channels(spec.combiner, parent_chs)
        if spec.kind == "attention":
            heads = spec.params["heads"]
            width = ((width + heads - 1) // heads) * heads  # pad so heads divide evenly
        if spec.kind in ("dense", "recurrence"):
            out = spec.params["output_units"]
        else:
            out = width
        out_ch[j] = out
        result.append((width, out))
    return result


def infer_shapes(dag: Dag, input_shape: tuple[int, int]) -> list[tuple[int, int]]:
    """Per hidden node (in_channels, out_channels) for an input of shape (time, channels)."""
    _, channels = input_shape
    if channels <= 0 or input_shape[0] <= 0:
        raise ShapeError(f"input shape {input_shape} must be positive")
    return _node_io_channels(dag, channels)


def build_network(dag: Dag, input_shape: tuple[int, int],
                  output_dims: tuple[int, int], seed: int) -> Network:
    lag, channels = input_shape
    horizon, n_outputs = output_dims
    shapes = infer_shapes(dag, input_shape)
    rng = np.random.default_rng(np.random.PCG64(np.random.SeedSequence(seed)))
    nodes = []
    for spec, (c_in, c_out) in zip(dag.hidden, shapes):
        raw = layers.init_params(spec.kind, spec.params, c_in, lag, rng)
        nodes.append(
            CompiledNode(
                spec=spec,
                in_channels=c_in,
                out_channels=c_out,
                params={name: ad.param(arr) for name, arr in raw.items()},
            )
        )
    last_channels = nodes[-1].out_channels
    flat = lag * last_channels
    bound = math.sqrt(1.0 / flat)
    head = {
        "w": ad.param(rng.uniform(-bound, bound, size=(flat, horizon * n_outputs))),
        "b": ad.param(np.zeros(horizon * n_outputs)),
    }
    count = sum(v.data.size for n in nodes for v in n.params.values())
    count += head["w"].data.size + head["b"].data.size
    return Network(
        dag=dag,
        lag=lag,
        in_channels=channels,
        horizon=horizon,
        n_outputs=n_outputs,
        seed=seed,
        nodes=nodes,
        head=head,
        param_count=int(count),
    )


def _dropout_rng(seed: int, *salt: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0xD0, *salt])


def _run_nodes(network: Network, batch: np.ndarray, mode: str,
               dropout_rng: np.random.Generator | None) -> list[Var]:
    if batch.ndim != 3 or batch.shape[1] != network.lag or batch.shape[2] != network.in_channels:
        raise ShapeError(
            f"batch shape {batch.shape} does not match (*, {network.lag}, {network.in_channels})"
        )
    rng = dropout_rng if dropout_rng is not None else _dropout_rng(network.seed)
    bits = network.dag.adj.bits
    outputs: dict[int, Var] = {0: ad.const(batch)}
    node_outputs = []
    for j in range(1, network.dag.adj.m - 1):
        node = network.nodes[j - 1]
        inputs = [outputs[int(i)] for i in np.flatnonzero(bits[:, j])]
        x = layers.combine(inputs, node.spec.combiner)
        x = layers.pad_channels(x, node.in_channels)
        y = layers.node_forward(x, node.spec.kind, node.spec.params, node.params, mode, rng)
        y = layers.apply_activation(y, node.spec.activation)
        outputs[j] = y
        node_outputs.append(y)
    return node_outputs


def _head_forward(network: Network, last: Var) -> Var:
    B = last.data.shape[0]
    flat = ad.reshape(last, (B, last.data.shape[1] * last.data.shape[2]))
    out = ad.add(ad.matmul(flat, network.head["w"]), network.head["b"])
    return ad.reshape(out, (B, network.horizon, network.n_outputs))


def forward(network: Network, batch: np.ndarray, mode: str = "eval",
            dropout_rng: np.random.Generator | None = None) -> np.ndarray:
    """Predictions (B, horizon, n_outputs); raises NumericsError on non-finite output."""
    pred = _forward_var(network, batch, mode, dropout_rng)
    ad.check_finite(pred.data, "network predictions")
    return pred.data


def _forward_var(network: Network, batch: np.ndarray, mode: str,
                 dropout_rng: np.random.Generator | None) -> Var:
    node_outputs = _run_nodes(network, np.asarray(batch, dtype=np.float64), mode, dropout_rng)
    return _head_forward(network, node_outputs[-1])


def forward_with_intermediates(network: Network, batch: np.ndarray, mode: str = "eval",
                               dropout_rng=None) -> tuple[np.ndarray, list[np.ndarray]]:
    node_outputs = _run_nodes(network, np.asarray(batch, dtype=np.float64), mode, dropout_rng)
    pred = _head_forward(network, node_outputs[-1])
    return pred.data, [v.data for v in node_outputs]


def mae_loss(pred: Var, targets: np.ndarray) -> Var:
    return ad.mean_all(ad.absolute(ad.sub(pred, ad.const(targets))))


def gradients(network: Network, batch: np.ndarray, targets: np.ndarray,
              mode: str = "train", dropout_rng=None) -> tuple[float, dict]:
    """Mean-absolute-error loss and exact gradients for every weight."""
    network.zero_grad()
    pred = _forward_var(network, batch, mode, dropout_rng)
    loss = mae_loss(pred, np.asarray(targets, dtype=np.float64))
    ad.backward(loss)
    grads = {}
    for key, var in network.parameters().items():
        g = var.grad if var.grad is not None else np.zeros_like(var.data)
        ad.check_finite(g, f"gradient of {key}")
        grads[key] = g
    return float(loss.data), grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.01
    clip_norm: float = 5.0
    seed: int = 0


@dataclass
class TrainResult:
    network: Network
    epoch_losses: list
    failed: bool = False

    @property
    def final_loss(self):
        return self.epoch_losses[-1] if self.epoch_losses else None


def sgd_train(network: Network, inputs: np.ndarray, targets: np.ndarray,
              cfg: TrainConfig) -> TrainResult:
    """Plain SGD on MAE with global gradient-norm clipping.

    Mini-batch order is shuffled per epoch from cfg.seed; the dropout stream
    is derived from (cfg.seed, epoch, step). Non-finite losses or gradients
    flag the result as failed instead of raising.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(inputs) == 0:
        raise ShapeError("sgd_train needs at least one window")
    shuffle_rng = np.random.default_rng([cfg.seed, 0x5F])
    params = network.parameters()
    epoch_losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(inputs))
        batch_losses = []
        for step, start in enumerate(range(0, len(inputs), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            try:
                loss, grads = gradients(
                    network,
                    inputs[idx],
                    targets[idx],
                    mode="train",
                    dropout_rng=_dropout_rng(cfg.seed, epoch, step),
                )
            except NumericsError:
                return TrainResult(network, epoch_losses, failed=True)
            if not math.isfinite(loss):
                return TrainResult(network, epoch_losses, failed=True)
            total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            factor = cfg.clip_norm / total if total > cfg.clip_norm else 1.0
            for key, var in params.items():
                var.data = var.data - cfg.learning_rate * factor * grads[key]
            batch_losses.append(loss)
        epoch_losses.append(float(np.mean(batch_losses)))
    return TrainResult(network, epoch_losses, failed=False)
