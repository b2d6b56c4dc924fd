"""Layer catalog, hyperparameter domains and neighborhood moves.

Every hidden node is a (combiner, layer kind, kind-specific parameters,
activation) tuple. The domains below define what values each slot may take
and how a "neighboring" value is drawn during hyperparameter mutation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

KINDS = ("identity", "dense", "attention", "conv1d", "recurrence", "pooling", "dropout")
COMBINERS = ("add", "mul", "concat")
ACTIVATIONS = ("id", "sigmoid", "swish", "relu", "leaky_relu", "elu", "gelu", "softmax")

RECURRENCE_CELLS = ("lstm", "gru", "rnn")
POOL_TYPES = ("max", "average")
ATTENTION_INITS = ("convolution", "random")


@dataclass(frozen=True)
class Categorical:
    name: str
    choices: tuple

    def __post_init__(self):
        if not self.choices:
            raise DomainError(f"categorical domain {self.name!r} has no choices")

    def contains(self, value):
        return value in self.choices

    def sample(self, rng):
        return self.choices[int(rng.integers(len(self.choices)))]


@dataclass(frozen=True)
class Integer:
    name: str
    lo: int
    hi: int
    neighbor_radius: int

    def __post_init__(self):
        if self.lo > self.hi or self.neighbor_radius <= 0:
            raise DomainError(f"bad integer domain {self.name!r}: [{self.lo}, {self.hi}] r={self.neighbor_radius}")

    def contains(self, value):
        return isinstance(value, int) and not isinstance(value, bool) and self.lo <= value <= self.hi

    def sample(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))


@dataclass(frozen=True)
class Float:
    name: str
    lo: float
    hi: float
    neighbor_radius: float

    def __post_init__(self):
        if self.lo > self.hi or self.neighbor_radius <= 0:
            raise DomainError(f"bad float domain {self.name!r}: [{self.lo}, {self.hi}] r={self.neighbor_radius}")

    def contains(self, value):
        return isinstance(value, float) and self.lo <= value <= self.hi

    def sample(self, rng):
        return float(rng.uniform(self.lo, self.hi))


@dataclass(frozen=True)
class NodeSpec:
    """One hidden layer: how parents are merged, what the layer computes, and its activation."""

    combiner: str
    kind: str
    params: dict
    activation: str


def _default_domains():
    return {
        "identity": (),
        "dense": (Integer("output_units", 1, 64, 8),),
        "attention": (
            Categorical("init_type", ATTENTION_INITS),
            Integer("heads", 1, 4, 1),
        ),
        "conv1d": (Integer("kernel_size", 1, 7, 2),),
        "recurrence": (
            Integer("output_units", 1, 64, 8),
            Categorical("cell", RECURRENCE_CELLS),
        ),
        "pooling": (
            Integer("pool_size", 2, 5, 1),
            Categorical("pool_type", POOL_TYPES),
        ),
        "dropout": (Float("rate", 0.01, 0.9, 0.1),),
    }


@dataclass(frozen=True)
class SearchSpace:
    """Immutable catalog of layer kinds, their domains, combiners and activations.

    The training seed is not a node parameter but its domain lives here so
    hyperparameter mutation can redraw it uniformly (a "nearby" seed carries
    no meaning, so the seed mutates categorical-style).
    """

    domains: dict = field(default_factory=_default_domains)
    combiners: tuple = COMBINERS
    activations: tuple = ACTIVATIONS
    seed_domain: Integer = Integer("seed", 0, 2**31 - 1, 1)

    def __post_init__(self):
        missing = [k for k in KINDS if k not in self.domains]
        if missing:
            raise DomainError(f"search space is missing layer kinds: {missing}")

    @classmethod
    def default(cls):
        return cls()

    def kind_domains(self, kind):
        return self.domains[kind]

    def validate_node(self, node: NodeSpec):
        """Return a list of human-readable problems with `node` (empty if fine)."""
        problems = []
        if node.kind not in self.domains:
            return [f"unknown layer kind {node.kind!r}"]
        if node.combiner not in self.combiners:
            problems.append(f"unknown combiner {node.combiner!r}")
        if node.activation not in self.activations:
            problems.append(f"unknown activation {node.activation!r}")
        domains = {d.name: d for d in self.domains[node.kind]}
        if set(node.params) != set(domains):
            problems.append(
                f"{node.kind} expects params {sorted(domains)}, got {sorted(node.params)}"
            )
        else:
            for name, value in node.params.items():
                if not domains[name].contains(value):
                    problems.append(f"param {name}={value!r} outside its domain")
        return problems


def sample_node(space: SearchSpace, rng: np.random.Generator) -> NodeSpec:
    """Draw a node uniformly: kind over the seven kinds, each slot over its domain."""
    kind = KINDS[int(rng.integers(len(KINDS)))]
    params = {d.name: d.sample(rng) for d in space.kind_domains(kind)}
    combiner = space.combiners[int(rng.integers(len(space.combiners)))]
    activation = space.activations[int(rng.integers(len(space.activations)))]
    return NodeSpec(combiner=combiner, kind=kind, params=params, activation=activation)


def draw_seed(space: SearchSpace, rng: np.random.Generator) -> int:
    return space.seed_domain.sample(rng)


def redraw_seed(current: int, space: SearchSpace, rng: np.random.Generator) -> int:
    """Fresh uniform seed, deprived of the current value."""
    while True:
        candidate = space.seed_domain.sample(rng)
        if candidate != current:
            return candidate


def neighbor_categorical(current, choices, rng: np.random.Generator):
    """Uniform draw from the choice set deprived of the current value."""
    if len(choices) < 2:
        raise DomainError(f"cannot pick a categorical neighbor among {len(choices)} choice(s)")
    if current not in choices:
        raise DomainError(f"current value {current!r} not in choices {choices!r}")
    others = [c for c in choices if c != current]
    return others[int(rng.integers(len(others)))]


def neighbor_integer(current: int, domain: Integer, rng: np.random.Generator) -> int:
    """Uniform over the discrete interval of radius `neighbor_radius`, minus the current value."""
    lo = max(domain.lo, current - domain.neighbor_radius)
    hi = min(domain.hi, current + domain.neighbor_radius)
    candidates = [v for v in range(lo, hi + 1) if v != current]
    if not candidates:
        raise DomainError(f"empty integer neighborhood around {current} in [{domain.lo}, {domain.hi}]")
    return candidates[int(rng.integers(len(candidates)))]


def neighbor_float(current: float, domain: Float, rng: np.random.Generator) -> float:
    """Uniform over the clamped continuous interval of radius `neighbor_radius`."""
    lo = max(domain.lo, current - domain.neighbor_radius)
    hi = min(domain.hi, current + domain.neighbor_radius)
    return float(min(domain.hi, max(domain.lo, rng.uniform(lo, hi))))


def neighbor_param(node_kind: str, name: str, current, space: SearchSpace, rng):
    """Dispatch to the matching neighborhood move for one node parameter."""
    domain = {d.name: d for d in space.kind_domains(node_kind)}[name]
    if isinstance(domain, Categorical):
        return neighbor_categorical(current, domain.choices, rng)
    if isinstance(domain, Integer):
        return neighbor_integer(current, domain, rng)
    return neighbor_float(current, domain, rng)
