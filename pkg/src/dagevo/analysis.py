"""Structural indicators of evolved graphs, seed-sensitivity sweeps, run reports."""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .dag import Dag
from .errors import DomainError
from .evaluation import Splits, _train_and_score
from .nn.network import TrainConfig, infer_shapes
from .space import SearchSpace, redraw_seed

KIND_BUCKETS = {
    "dense": "mlp",
    "attention": "att",
    "conv1d": "cnn",
    "recurrence": "rnn",
    "dropout": "drop",
    "identity": "id",
    "pooling": "pool",
}

INDICATOR_COLUMNS = ("nodes", "width", "depth", "dim", "edges",
                     "MLP", "Att", "CNN", "RNN", "Drop", "Id", "Pool")


@dataclass(frozen=True)
class Indicators:
    nodes: int
    width: int
    depth: int
    dim: float
    edges: float
    mlp: int
    att: int
    cnn: int
    rnn: int
    drop: int
    id: int
    pool: int

    def row(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]


def indicators(dag: Dag, input_channels: int, output_channels: int) -> Indicators:
    """Size, shape and composition summary of one graph.

    width: largest in- or out-degree over the hidden nodes (edges to the
    virtual input/output count). depth: hidden nodes on the longest
    input-to-output path. dim: widest latent channel count relative to
    max(input, output channels). edges: edge count per hidden node.
    """
    bits = dag.adj.bits
    m = dag.adj.m
    n = len(dag.hidden)
    indegree = bits.sum(axis=0)
    outdegree = bits.sum(axis=1)
    width = int(max(max(indegree[j], outdegree[j]) for j in range(1, m - 1)))
    longest = np.zeros(m, dtype=int)
    for j in range(1, m):
        parents = np.flatnonzero(bits[:, j])
        gain = 1 if j < m - 1 else 0
        longest[j] = max(longest[i] for i in parents) + gain
    shapes = infer_shapes(dag, (1, input_channels))
    dim = max(out for _, out in shapes) / max(input_channels, output_channels)
    counts = {bucket: 0 for bucket in KIND_BUCKETS.values()}
    for node in dag.hidden:
        counts[KIND_BUCKETS[node.kind]] += 1
    return Indicators(
        nodes=n,
        width=width,
        depth=int(longest[m - 1]),
        dim=float(dim),
        edges=float(bits.sum() / n),
        **counts,
    )


@dataclass(frozen=True)
class SweepEntry:
    seed: int
    score: float


@dataclass(frozen=True)
class SweepResult:
    entries: tuple

    @property
    def scores(self) -> list[float]:
        return [e.score for e in self.entries]

    @property
    def minimum(self) -> float:
        return min(self.scores)

    @property
    def median(self) -> float:
        return float(np.median(self.scores))

    @property
    def maximum(self) -> float:
        return max(self.scores)


def seed_sweep(dag: Dag, seed: int, splits: Splits, train_cfg: TrainConfig,
               n_seeds: int, sweep_seed: int = 0,
               space: SearchSpace | None = None, map_fn=None) -> SweepResult:
    """Re-train the same graph under `n_seeds` distinct training seeds.

    The given seed goes first, so its entry reproduces the evolved fitness
    bit-exactly; the remaining seeds are drawn deterministically from
    `sweep_seed`.
    """
    if n_seeds < 1:
        raise DomainError(f"n_seeds must be >= 1, got {n_seeds}")
    space = space or SearchSpace.default()
    rng = np.random.default_rng(sweep_seed)
    seeds = [seed]
    while len(seeds) < n_seeds:
        candidate = redraw_seed(seed, space, rng)
        if candidate not in seeds:
            seeds.append(candidate)
    map_fn = map_fn or map
    runner = _SweepRunner(dag, splits, train_cfg)
    scores = list(map_fn(runner, seeds))
    return SweepResult(tuple(SweepEntry(s, sc) for s, sc in zip(seeds, scores)))


@dataclass(frozen=True)
class _SweepRunner:
    dag: Dag
    splits: Splits
    train_cfg: TrainConfig

    def __call__(self, seed: int) -> float:
        return _train_and_score(self.dag, seed, self.splits, self.train_cfg, self.splits.valid)


def write_sweep(result: SweepResult, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "mase"])
        for entry in result.entries:
            writer.writerow([entry.seed, repr(entry.score)])


def report(logs, out_dir) -> tuple[Path, Path]:
    """Write per_individual.csv (heatmap source) and summary.csv (lineplot source)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_individual = out / "per_individual.csv"
    summary = out / "summary.csv"
    with open(per_individual, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "scope", "individual_id", "fitness"])
        for entry in logs:
            for ind_id, fitness in entry.entries:
                writer.writerow([entry.generation, entry.scope, ind_id, repr(fitness)])
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "scope", "best", "mean"])
        for entry in logs:
            writer.writerow(
                [entry.generation, entry.scope, repr(entry.best_so_far), repr(entry.mean_fitness)]
            )
    return per_individual, summary
