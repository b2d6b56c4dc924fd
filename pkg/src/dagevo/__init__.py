"""Evolutionary joint optimization of DAG-encoded networks and hyperparameters."""

from .dag import AdjacencyMatrix, Dag, deserialize, paths_exist, random_dag, repair, serialize, validate
from .evaluation import (
    SENTINEL_FITNESS,
    SplitEvaluator,
    Splits,
    WindowSet,
    evaluate_individual,
    final_test,
    mase,
    naive_mase,
    split_and_window,
)
from .evolution import (
    EvolutionConfig,
    GenerationLog,
    Individual,
    MutationConfig,
    crossover,
    evolve,
    mutate_architecture,
    mutate_hyperparameters,
    tournament_select,
)
from .nn.network import TrainConfig, build_network, forward, gradients, infer_shapes, sgd_train
from .space import (
    ACTIVATIONS,
    COMBINERS,
    KINDS,
    NodeSpec,
    SearchSpace,
    neighbor_categorical,
    neighbor_float,
    neighbor_integer,
    sample_node,
)

__version__ = "0.1.0"
