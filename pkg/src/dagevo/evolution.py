"""Search operators over DAG genomes and the generational evolutionary loop.

Architecture mutation applies one of five sub-operations (node insertion /
deletion, parents / children rewiring, node content redraw) to each node of a
randomly drawn subset. Hyperparameter mutation replaces parameter values by
neighborhood moves and leaves the structure untouched. Crossover swaps
contiguous hidden-node blocks between two parents, carrying each block's
internal wiring verbatim.

The loop alternates generation blocks between the two operator scopes,
injects random immigrants into the parent pool, and replaces the worst
offspring with the best individuals of the previous generation.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dag import AdjacencyMatrix, Dag, _complete_matrix, random_dag
from .errors import ConfigError, EvaluationError, StateError
from .space import (
    SearchSpace,
    draw_seed,
    neighbor_categorical,
    neighbor_param,
    redraw_seed,
    sample_node,
)

log = logging.getLogger("dagevo")

ARCH_OPS = ("insertion", "deletion", "parents", "children", "node")


@dataclass
class Individual:
    dag: Dag
    seed: int
    fitness: float | None
    id: int


@dataclass(frozen=True)
class MutationConfig:
    p_node: float = 0.3
    edge_density: float = 0.3
    seed_mutation_probability: float = 0.2
    weight_insertion: float = 1.0
    weight_deletion: float = 1.0
    weight_parents: float = 1.0
    weight_children: float = 1.0
    weight_node: float = 1.0

    def op_weights(self) -> dict[str, float]:
        return {
            "insertion": self.weight_insertion,
            "deletion": self.weight_deletion,
            "parents": self.weight_parents,
            "children": self.weight_children,
            "node": self.weight_node,
        }


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 40
    generations: int = 100
    tournament_size: int = 3
    immigrant_fraction: float = 0.1
    replacement_fraction: float = 0.2
    arch_generations: int = 5
    hp_generations: int = 5
    crossover_probability: float = 0.9
    mutation: MutationConfig = field(default_factory=MutationConfig)
    min_nodes: int = 1
    max_nodes: int = 10
    seed: int = 0

    def validate(self):
        if self.population_size < 4:
            raise ConfigError(f"key 'evolution.population_size': >= 4 required, got {self.population_size}")
        if self.tournament_size < 2:
            raise ConfigError(f"key 'evolution.tournament_size': >= 2 required, got {self.tournament_size}")
        if self.tournament_size > self.population_size:
            raise ConfigError("key 'evolution.tournament_size': cannot exceed population_size")
        if self.generations < 1:
            raise ConfigError("key 'evolution.generations': >= 1 required")
        if not 0 <= self.immigrant_fraction < 1:
            raise ConfigError("key 'evolution.immigrant_fraction': must be in [0, 1)")
        if not 0 < self.replacement_fraction < 1:
            raise ConfigError("key 'evolution.replacement_fraction': must be in (0, 1)")
        if not 0 <= self.crossover_probability <= 1:
            raise ConfigError("key 'evolution.crossover_probability': must be in [0, 1]")
        if self.min_nodes < 1 or self.max_nodes < self.min_nodes:
            raise ConfigError("keys 'evolution.min_nodes'/'max_nodes': need 1 <= min <= max")
        if self.arch_generations < 0 or self.hp_generations < 0 or (
            self.arch_generations + self.hp_generations == 0
        ):
            raise ConfigError("scope schedule needs arch_generations + hp_generations >= 1")
        if not 0 < self.mutation.p_node <= 1:
            raise ConfigError("key 'mutation.p_node': must be in (0, 1]")

    @property
    def bounds(self) -> tuple[int, int]:
        return (self.min_nodes, self.max_nodes)

    def scope_of(self, generation: int) -> str:
        """Operator scope for a generation; generation 0 takes the first block's label."""
        if self.arch_generations == 0:
            return "hyperparameters"
        if self.hp_generations == 0:
            return "architecture"
        phase = (max(generation, 1) - 1) % (self.arch_generations + self.hp_generations)
        return "architecture" if phase < self.arch_generations else "hyperparameters"


@dataclass(frozen=True)
class GenerationLog:
    generation: int
    scope: str
    entries: tuple          # ((individual id, fitness), ...) in id order
    best_so_far: float
    mean_fitness: float


# --- node subset ---------------------------------------------------------------

def _draw_subset(n: int, p: float, rng: np.random.Generator) -> list[int]:
    picked = [i for i in range(n) if rng.random() < p]
    if not picked:
        picked = [int(rng.integers(n))]
    return picked


# --- architecture mutation -------------------------------------------------------

def _splice_insert(bits: np.ndarray, at: int) -> np.ndarray:
    return np.insert(np.insert(bits, at, False, axis=0), at, False, axis=1)


def _contract_delete(bits: np.ndarray, at: int) -> np.ndarray:
    return np.delete(np.delete(bits, at, axis=0), at, axis=1)


def _op_insertion(dag: Dag, pos: int, rng, space: SearchSpace, density: float) -> Dag:
    new_index = pos + 2  # list position pos+1, shifted by the virtual input row
    bits = _splice_insert(dag.adj.bits, new_index)
    m = bits.shape[0]
    for k in range(new_index):
        bits[k, new_index] = rng.random() < density
    for k in range(new_index + 1, m):
        bits[new_index, k] = rng.random() < density
    hidden = dag.hidden[: pos + 1] + (sample_node(space, rng),) + dag.hidden[pos + 1 :]
    return Dag(hidden=hidden, adj=AdjacencyMatrix(_complete_matrix(bits, rng)))


def _op_deletion(dag: Dag, pos: int, rng) -> Dag:
    bits = _contract_delete(dag.adj.bits, pos + 1)
    hidden = dag.hidden[:pos] + dag.hidden[pos + 1 :]
    return Dag(hidden=hidden, adj=AdjacencyMatrix(_complete_matrix(bits.copy(), rng)))


def _op_parents(dag: Dag, pos: int, rng, density: float) -> Dag:
    j = pos + 1
    bits = dag.adj.bits.copy()
    bits[:j, j] = np.asarray(rng.random(j) < density)
    if not bits[:j, j].any():
        bits[int(rng.integers(j)), j] = True
    return Dag(hidden=dag.hidden, adj=AdjacencyMatrix(_complete_matrix(bits, rng)))


def _op_children(dag: Dag, pos: int, rng, density: float) -> Dag:
    i = pos + 1
    m = dag.adj.m
    bits = dag.adj.bits.copy()
    bits[i, i + 1 :] = np.asarray(rng.random(m - i - 1) < density)
    if not bits[i, i + 1 :].any():
        bits[i, i + 1 + int(rng.integers(m - i - 1))] = True
    return Dag(hidden=dag.hidden, adj=AdjacencyMatrix(_complete_matrix(bits, rng)))


def _op_node(dag: Dag, pos: int, rng, space: SearchSpace) -> Dag:
    node = dag.hidden[pos]
    redraw = [rng.random() < 0.5 for _ in range(3)]
    if not any(redraw):
        redraw[int(rng.integers(3))] = True
    fresh = sample_node(space, rng)
    combiner = fresh.combiner if redraw[0] else node.combiner
    activation = fresh.activation if redraw[2] else node.activation
    if redraw[1]:
        kind, params = fresh.kind, fresh.params
    else:
        kind, params = node.kind, dict(node.params)
    new_node = replace(node, combiner=combiner, kind=kind, params=params, activation=activation)
    hidden = dag.hidden[:pos] + (new_node,) + dag.hidden[pos + 1 :]
    return Dag(hidden=hidden, adj=dag.adj)


def mutate_architecture(dag: Dag, rng: np.random.Generator, cfg: EvolutionConfig,
                        space: SearchSpace | None = None) -> Dag:
    """Apply one weighted sub-operation to each node of a random subset.

    Insertion is withheld at the node-count ceiling and deletion at the floor;
    an inapplicable draw falls back to the remaining operations. Every
    sub-operation repairs its result, so the output always validates.
    """
    space = space or SearchSpace.default()
    weights = cfg.mutation.op_weights()
    density = cfg.mutation.edge_density
    positions = sorted(_draw_subset(len(dag.hidden), cfg.mutation.p_node, rng), reverse=True)
    for pos in positions:
        n = len(dag.hidden)
        if pos >= n:  # earlier deletion shortened the list
            pos = n - 1
        allowed = dict(weights)
        if n >= cfg.max_nodes:
            allowed.pop("insertion")
        if n <= max(cfg.min_nodes, 1):
            allowed.pop("deletion")
        names = list(allowed)
        probs = np.array([allowed[k] for k in names], dtype=np.float64)
        op = names[int(rng.choice(len(names), p=probs / probs.sum()))]
        if op == "insertion":
            dag = _op_insertion(dag, pos, rng, space, density)
        elif op == "deletion":
            dag = _op_deletion(dag, pos, rng)
        elif op == "parents":
            dag = _op_parents(dag, pos, rng, density)
        elif op == "children":
            dag = _op_children(dag, pos, rng, density)
        else:
            dag = _op_node(dag, pos, rng, space)
    return dag


def mutate_hyperparameters(dag: Dag, seed: int, rng: np.random.Generator,
                           cfg: EvolutionConfig, space: SearchSpace | None = None
                           ) -> tuple[Dag, int]:
    """Neighborhood moves on node parameters; adjacency and node count frozen.

    For each node of the drawn subset, 1..k of its mutable slots (declared
    parameters plus combiner and activation) move to a neighboring value. The
    training seed is redrawn uniformly with its configured probability.
    """
    space = space or SearchSpace.default()
    hidden = list(dag.hidden)
    for pos in _draw_subset(len(hidden), cfg.mutation.p_node, rng):
        node = hidden[pos]
        slots = [d.name for d in space.kind_domains(node.kind)] + ["combiner", "activation"]
        count = int(rng.integers(1, len(slots) + 1))
        chosen = rng.choice(len(slots), size=count, replace=False)
        params = dict(node.params)
        combiner, activation = node.combiner, node.activation
        for s in chosen:
            slot = slots[int(s)]
            if slot == "combiner":
                combiner = neighbor_categorical(combiner, space.combiners, rng)
            elif slot == "activation":
                activation = neighbor_categorical(activation, space.activations, rng)
            else:
                params[slot] = neighbor_param(node.kind, slot, params[slot], space, rng)
        hidden[pos] = replace(node, combiner=combiner, activation=activation, params=params)
    if rng.random() < cfg.mutation.seed_mutation_probability:
        seed = redraw_seed(seed, space, rng)
    return Dag(hidden=tuple(hidden), adj=dag.adj), seed


# --- crossover -------------------------------------------------------------------

def _draw_blocks(n1: int, n2: int, bounds: tuple[int, int], rng) -> tuple[int, int, int, int]:
    lo, hi = bounds
    for _ in range(100):
        len1 = int(rng.integers(1, n1 + 1))
        start1 = int(rng.integers(0, n1 - len1 + 1))
        len2 = int(rng.integers(1, n2 + 1))
        start2 = int(rng.integers(0, n2 - len2 + 1))
        if lo <= n1 - len1 + len2 <= hi and lo <= n2 - len2 + len1 <= hi:
            return start1, len1, start2, len2
    # equal-length fallback keeps both children at their parents' sizes
    start1 = int(rng.integers(0, n1))
    start2 = int(rng.integers(0, n2))
    return start1, 1, start2, 1


def _transplant(host: Dag, host_start: int, host_len: int,
                block_nodes: tuple, block_bits: np.ndarray,
                rng: np.random.Generator) -> Dag:
    """Replace `host`'s block by a foreign one at the same anchor.

    Edges among host survivors are kept, the foreign block's internal edges
    are copied verbatim, and edges across the block boundary are redrawn
    Bernoulli(1/2) before a completion pass that never touches the block
    interior.
    """
    old = host.adj.bits
    m_old = old.shape[0]
    host_rows = np.array(
        [0]
        + [i for i in range(1, m_old - 1) if not host_start + 1 <= i <= host_start + host_len]
        + [m_old - 1]
    )
    blen = len(block_nodes)
    m_new = len(host_rows) + blen
    anchor = host_start + 1
    # new index layout: host prefix, block rows at anchor..anchor+blen-1, host suffix
    ranks = np.arange(len(host_rows))
    new_host_idx = np.where(ranks < anchor, ranks, ranks + blen)
    bits = np.zeros((m_new, m_new), dtype=bool)
    bits[np.ix_(new_host_idx, new_host_idx)] = old[np.ix_(host_rows, host_rows)]
    bits[anchor : anchor + blen, anchor : anchor + blen] = block_bits
    in_block = np.zeros(m_new, dtype=bool)
    in_block[anchor : anchor + blen] = True
    boundary = (in_block[:, None] != in_block[None, :]) & np.triu(
        np.ones((m_new, m_new), dtype=bool), k=1
    )
    bits[boundary] = rng.random(int(boundary.sum())) < 0.5
    forbidden = np.logical_and.outer(in_block, in_block)
    bits = _complete_matrix(bits, rng, forbidden=forbidden)
    hidden = (
        host.hidden[:host_start] + tuple(block_nodes) + host.hidden[host_start + host_len :]
    )
    return Dag(hidden=hidden, adj=AdjacencyMatrix(bits))


def crossover(p1: Dag, p2: Dag, rng: np.random.Generator,
              cfg: EvolutionConfig) -> tuple[Dag, Dag]:
    """Swap one contiguous hidden-node block between the parents.

    Block lengths may differ but are drawn so both children respect the
    node-count bounds. Returns (child carrying p2's block, child carrying
    p1's block).
    """
    n1, n2 = len(p1.hidden), len(p2.hidden)
    s1, l1, s2, l2 = _draw_blocks(n1, n2, cfg.bounds, rng)
    block1_nodes = p1.hidden[s1 : s1 + l1]
    block2_nodes = p2.hidden[s2 : s2 + l2]
    sub1 = p1.adj.bits[s1 + 1 : s1 + 1 + l1, s1 + 1 : s1 + 1 + l1].copy()
    sub2 = p2.adj.bits[s2 + 1 : s2 + 1 + l2, s2 + 1 : s2 + 1 + l2].copy()
    child1 = _transplant(p1, s1, l1, block2_nodes, sub2, rng)
    child2 = _transplant(p2, s2, l2, block1_nodes, sub1, rng)
    return child1, child2


# --- selection and the loop ---------------------------------------------------

def tournament_select(population: list[Individual], k: int,
                      rng: np.random.Generator) -> Individual:
    """Best (lowest fitness, ties to the lower id) of k distinct random picks."""
    if k > len(population):
        raise StateError(f"tournament size {k} exceeds population {len(population)}")
    for ind in population:
        if ind.fitness is None:
            raise StateError(f"individual {ind.id} has no fitness")
    picks = rng.choice(len(population), size=k, replace=False)
    return min((population[int(i)] for i in picks), key=lambda ind: (ind.fitness, ind.id))


class _TrackedEvaluator:
    """Wraps the user evaluator so worker errors carry the individual's id."""

    def __init__(self, evaluator):
        self.evaluator = evaluator

    def __call__(self, individual: Individual) -> float:
        try:
            return float(self.evaluator(individual))
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise EvaluationError(individual.id, exc) from exc


def evolve(cfg: EvolutionConfig, evaluator, space: SearchSpace | None = None,
           map_fn=None) -> tuple[Individual, list[GenerationLog]]:
    """Run the full loop and return the best-ever individual plus per-generation logs.

    `map_fn` may be a pool map; evaluations are independent and merged back in
    submission order, so parallel and serial runs log identical results.
    """
    cfg.validate()
    space = space or SearchSpace.default()
    map_fn = map_fn or map
    tracked = _TrackedEvaluator(evaluator)
    rng = np.random.default_rng(cfg.seed)
    counter = itertools.count()

    def fresh() -> Individual:
        dag = random_dag(rng, cfg.bounds, space, edge_density=cfg.mutation.edge_density)
        return Individual(dag=dag, seed=draw_seed(space, rng), fitness=None, id=next(counter))

    def evaluate_all(group: list[Individual]):
        pending = [ind for ind in group if ind.fitness is None]
        for ind, fitness in zip(pending, map_fn(tracked, pending)):
            ind.fitness = fitness

    population = [fresh() for _ in range(cfg.population_size)]
    evaluate_all(population)
    best = min(population, key=lambda i: (i.fitness, i.id))
    logs = [_make_log(0, cfg.scope_of(0), population, best.fitness)]
    log.info("generation 0 (%s): best=%.6g mean=%.6g", logs[0].scope, best.fitness, logs[0].mean_fitness)

    n_immigrants = round(cfg.immigrant_fraction * cfg.population_size)
    n_elites = math.ceil(cfg.replacement_fraction * cfg.population_size)
    for generation in range(1, cfg.generations):
        scope = cfg.scope_of(generation)
        parents = [
            tournament_select(population, cfg.tournament_size, rng)
            for _ in range(cfg.population_size - n_immigrants)
        ]
        parents.extend(fresh() for _ in range(n_immigrants))
        order = rng.permutation(len(parents))
        offspring: list[Individual] = []
        for a in range(0, len(order) - 1, 2):
            pa, pb = parents[int(order[a])], parents[int(order[a + 1])]
            if rng.random() < cfg.crossover_probability:
                d1, d2 = crossover(pa.dag, pb.dag, rng, cfg)
            else:
                d1, d2 = pa.dag, pb.dag
            for dag, seed in ((d1, pa.seed), (d2, pb.seed)):
                offspring.append(_make_child(dag, seed, scope, rng, cfg, space, counter))
        if len(order) % 2:
            leftover = parents[int(order[-1])]
            offspring.append(
                _make_child(leftover.dag, leftover.seed, scope, rng, cfg, space, counter)
            )
        evaluate_all(offspring)
        elites = sorted(population, key=lambda i: (i.fitness, i.id))[:n_elites]
        offspring.sort(key=lambda i: (-i.fitness, -i.id))
        population = offspring[n_elites:] + elites
        gen_best = min(population, key=lambda i: (i.fitness, i.id))
        if (gen_best.fitness, gen_best.id) < (best.fitness, best.id):
            best = gen_best
        logs.append(_make_log(generation, scope, population, best.fitness))
        log.info(
            "generation %d (%s): best=%.6g mean=%.6g",
            generation, scope, best.fitness, logs[-1].mean_fitness,
        )
    return best, logs


def _make_child(dag: Dag, seed: int, scope: str, rng, cfg: EvolutionConfig,
                space: SearchSpace, counter) -> Individual:
    if scope == "architecture":
        dag = mutate_architecture(dag, rng, cfg, space)
    else:
        dag, seed = mutate_hyperparameters(dag, seed, rng, cfg, space)
    return Individual(dag=dag, seed=seed, fitness=None, id=next(counter))


def _make_log(generation: int, scope: str, population: list[Individual],
              best_so_far: float) -> GenerationLog:
    entries = tuple(sorted((ind.id, ind.fitness) for ind in population))
    mean = float(np.mean([f for _, f in entries]))
    return GenerationLog(
        generation=generation,
        scope=scope,
        entries=entries,
        best_so_far=best_so_far,
        mean_fitness=mean,
    )
