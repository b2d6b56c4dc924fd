"""DAG genome: ordered hidden-node list plus an upper-triangular adjacency matrix.

The matrix covers m = len(hidden) + 2 rows: a virtual Input at index 0 and a
virtual Output at index m-1. Structural rules:

  * strictly upper triangular (acyclicity by construction),
  * Input is wired to the first hidden node and the last hidden node to Output,
  * Input has no parents, Output has no children,
  * every other row and column carries at least one edge (no isolated nodes).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ShapeError
from .space import NodeSpec, SearchSpace, sample_node


def _frozen_bits(bits) -> np.ndarray:
    arr = np.array(bits, dtype=bool)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ShapeError(f"adjacency matrix must be square, got shape {arr.shape}")
        object.__setattr__(self, "bits", _frozen_bits(arr))

    @property
    def m(self) -> int:
        return self.bits.shape[0]

    def __eq__(self, other):
        return isinstance(other, AdjacencyMatrix) and np.array_equal(self.bits, other.bits)

    def parents(self, j: int) -> list[int]:
        return list(np.flatnonzero(self.bits[:, j]))

    def children(self, i: int) -> list[int]:
        return list(np.flatnonzero(self.bits[i, :]))


@dataclass(frozen=True, eq=False)
class Dag:
    """Genome: hidden nodes in list order, matrix of size len(hidden) + 2."""

    hidden: tuple
    adj: AdjacencyMatrix

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def m(self) -> int:
        return self.adj.m

    def __eq__(self, other):
        return (
            isinstance(other, Dag)
            and self.hidden == other.hidden
            and self.adj == other.adj
        )


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    where: tuple


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(dag: Dag, bounds: tuple[int, int] | None = None) -> ValidationReport:
    """Check every structural rule; reports violations instead of raising.

    `bounds`, when given, additionally checks the hidden-node count against
    the configured (min_nodes, max_nodes) window.
    """
    v: list[Violation] = []
    bits = dag.adj.bits
    m = dag.adj.m

    if m != len(dag.hidden) + 2:
        v.append(
            Violation(
                "shape",
                f"matrix size {m} does not match {len(dag.hidden)} hidden nodes + 2",
                (m,),
            )
        )
        return ValidationReport(tuple(v))
    if len(dag.hidden) < 1:
        v.append(Violation("min_nodes", "graph needs at least one hidden node", ()))
        return ValidationReport(tuple(v))

    lower = np.argwhere(np.tril(bits))
    for i, j in lower:
        v.append(
            Violation("not_upper_triangular", f"edge v{i}->v{j} is not upper triangular", (int(i), int(j)))
        )
    if not bits[0, 1]:
        v.append(Violation("input_edge", "input is not connected to the first node", (0, 1)))
    if not bits[m - 2, m - 1]:
        v.append(Violation("output_edge", "last node is not connected to the output", (m - 2, m - 1)))
    if bits[:, 0].any():
        v.append(Violation("input_parents", "input node has incoming edges", (0,)))
    if bits[m - 1, :].any():
        v.append(Violation("output_children", "output node has outgoing edges", (m - 1,)))
    for i in range(m - 1):
        if not bits[i, :].any():
            v.append(Violation("empty_row", f"isolated node v{i} (no children)", (int(i),)))
    for j in range(1, m):
        if not bits[:, j].any():
            v.append(Violation("empty_col", f"isolated node v{j} (no parents)", (int(j),)))
    if bounds is not None:
        lo, hi = bounds
        if not lo <= len(dag.hidden) <= hi:
            v.append(
                Violation(
                    "node_bounds",
                    f"hidden node count {len(dag.hidden)} outside [{lo}, {hi}]",
                    (len(dag.hidden),),
                )
            )
    return ValidationReport(tuple(v))


def _complete_matrix(bits: np.ndarray, rng: np.random.Generator, forbidden=None) -> np.ndarray:
    """Force the two mandatory edges, then give every empty row/column one random edge.

    `forbidden` is an optional boolean mask of cells that must not be touched
    (used by crossover to keep transplanted-block interiors intact). Cells
    involving Input or Output are never forbidden, so completion always
    succeeds.
    """
    m = bits.shape[0]
    out = bits.copy()
    out[0, 1] = True
    out[m - 2, m - 1] = True
    for i in range(1, m - 1):
        if not out[i, :].any():
            options = [j for j in range(i + 1, m) if forbidden is None or not forbidden[i, j]]
            out[i, options[int(rng.integers(len(options)))]] = True
    for j in range(1, m):
        if not out[:, j].any():
            options = [i for i in range(0, j) if forbidden is None or not forbidden[i, j]]
            out[options[int(rng.integers(len(options)))], j] = True
    return out


def repair(dag: Dag, rng: np.random.Generator) -> Dag:
    """Add the minimum random legal edges so that `validate` passes.

    Already-valid graphs come back unchanged; repair never removes edges, so
    it is idempotent for a fixed node list.
    """
    bits = dag.adj.bits
    if bits.ndim != 2 or bits.shape[0] != bits.shape[1]:
        raise ShapeError(f"adjacency matrix must be square, got {bits.shape}")
    if np.tril(bits).any():
        raise ShapeError("adjacency matrix must be strictly upper triangular")
    if bits.shape[0] != len(dag.hidden) + 2:
        raise ShapeError(
            f"matrix size {bits.shape[0]} does not match {len(dag.hidden)} hidden nodes + 2"
        )
    fixed = _complete_matrix(bits, rng)
    if np.array_equal(fixed, bits):
        return dag
    return Dag(hidden=dag.hidden, adj=AdjacencyMatrix(fixed))


def random_dag(
    rng: np.random.Generator,
    bounds: tuple[int, int],
    space: SearchSpace,
    edge_density: float = 0.3,
) -> Dag:
    """Uniform node count in `bounds`, Bernoulli(edge_density) upper cells, then repair.

    The direct Input->Output cell is excluded from the random draw: it never
    carries information and keeping it out makes the smallest graphs unique.
    """
    lo, hi = bounds
    if lo < 1 or hi < lo:
        raise ShapeError(f"bad node-count bounds [{lo}, {hi}]")
    n = int(rng.integers(lo, hi + 1))
    m = n + 2
    bits = np.triu(rng.random((m, m)) < edge_density, k=1)
    bits[0, m - 1] = False
    bits[:, 0] = False
    bits[m - 1, :] = False
    bits = _complete_matrix(bits, rng)
    hidden = tuple(sample_node(space, rng) for _ in range(n))
    return Dag(hidden=hidden, adj=AdjacencyMatrix(bits))


def paths_exist(dag: Dag) -> list[tuple[int, bool, bool]]:
    """Reachability of each hidden node: (full index, reached from Input, reaches Output).

    Forward sweep marks descendants of Input, backward sweep marks ancestors
    of Output; index order doubles as topological order.
    """
    bits = dag.adj.bits
    m = dag.adj.m
    from_input = np.zeros(m, dtype=bool)
    from_input[0] = True
    for j in range(1, m):
        from_input[j] = bool((bits[:, j] & from_input).any())
    to_output = np.zeros(m, dtype=bool)
    to_output[m - 1] = True
    for i in range(m - 2, -1, -1):
        to_output[i] = bool((bits[i, :] & to_output).any())
    return [(i, bool(from_input[i]), bool(to_output[i])) for i in range(1, m - 1)]


# --- text form -------------------------------------------------------------
#
# {"format_version": 1,
#  "nodes":  [{"combiner": ..., "kind": ..., "params": {...}, "activation": ...}, ...],
#  "matrix": ["0110", "0011", ...]}   # m row strings of '0'/'1'

FORMAT_VERSION = 1


def node_to_obj(node: NodeSpec) -> dict:
    return {
        "combiner": node.combiner,
        "kind": node.kind,
        "params": dict(node.params),
        "activation": node.activation,
    }


def node_from_obj(obj, index: int, space: SearchSpace) -> NodeSpec:
    if not isinstance(obj, dict):
        raise ParseError(f"node {index} is not an object", field=f"nodes[{index}]")
    for key in ("combiner", "kind", "params", "activation"):
        if key not in obj:
            raise ParseError(f"node {index} is missing {key!r}", field=f"nodes[{index}].{key}")
    params = obj["params"]
    if not isinstance(params, dict):
        raise ParseError(f"node {index} params must be an object", field=f"nodes[{index}].params")
    clean = {}
    for name, value in params.items():
        if isinstance(value, bool):
            raise ParseError(f"node {index} param {name!r} has a boolean value", field=f"nodes[{index}].params")
        clean[name] = value
    node = NodeSpec(
        combiner=obj["combiner"],
        kind=obj["kind"],
        params=clean,
        activation=obj["activation"],
    )
    problems = space.validate_node(node)
    if problems:
        raise ParseError(f"node {index}: " + "; ".join(problems), field=f"nodes[{index}]")
    return node


def serialize(dag: Dag) -> str:
    obj = {
        "format_version": FORMAT_VERSION,
        "nodes": [node_to_obj(n) for n in dag.hidden],
        "matrix": ["".join("1" if b else "0" for b in row) for row in dag.adj.bits],
    }
    return json.dumps(obj, indent=2)


def dag_from_obj(obj, space: SearchSpace) -> Dag:
    if not isinstance(obj, dict):
        raise ParseError("top-level value must be an object")
    if obj.get("format_version") != FORMAT_VERSION:
        raise ParseError(
            f"unsupported format_version {obj.get('format_version')!r}", field="format_version"
        )
    nodes_obj = obj.get("nodes")
    matrix_obj = obj.get("matrix")
    if not isinstance(nodes_obj, list):
        raise ParseError("'nodes' must be an array", field="nodes")
    if not isinstance(matrix_obj, list):
        raise ParseError("'matrix' must be an array of row strings", field="matrix")
    m = len(matrix_obj)
    if m != len(nodes_obj) + 2:
        raise ParseError(
            f"matrix has {m} rows but {len(nodes_obj)} nodes need {len(nodes_obj) + 2}",
            field="matrix",
        )
    bits = np.zeros((m, m), dtype=bool)
    for i, row in enumerate(matrix_obj):
        if not isinstance(row, str) or len(row) != m or set(row) - {"0", "1"}:
            raise ParseError(f"matrix row {i} must be {m} characters of 0/1", field=f"matrix[{i}]")
        bits[i] = [c == "1" for c in row]
    hidden = tuple(node_from_obj(o, i, space) for i, o in enumerate(nodes_obj))
    dag = Dag(hidden=hidden, adj=AdjacencyMatrix(bits))
    report = validate(dag)
    if not report.ok:
        summary = "; ".join(x.message for x in report.violations)
        if any(x.rule == "not_upper_triangular" for x in report.violations):
            summary = "not upper triangular; " + summary
        raise ParseError(f"invalid graph: {summary}", field="matrix")
    return dag


def deserialize(text: str, space: SearchSpace | None = None) -> Dag:
    """Parse the JSON text form back into a validated Dag."""
    space = space or SearchSpace.default()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    return dag_from_obj(obj, space)
