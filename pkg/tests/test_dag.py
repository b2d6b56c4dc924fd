import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dagevo.dag import (
    AdjacencyMatrix,
    Dag,
    deserialize,
    paths_exist,
    random_dag,
    repair,
    serialize,
    validate,
)
from dagevo.errors import ParseError, ShapeError
from dagevo.space import NodeSpec, SearchSpace, sample_node

SPACE = SearchSpace.default()


def identity_node():
    return NodeSpec(combiner="add", kind="identity", params={}, activation="id")


def chain_dag(n):
    m = n + 2
    bits = np.zeros((m, m), dtype=bool)
    for i in range(m - 1):
        bits[i, i + 1] = True
    return Dag(hidden=tuple(identity_node() for _ in range(n)), adj=AdjacencyMatrix(bits))


def dag_with_bits(rows):
    bits = np.array(rows, dtype=bool)
    n = bits.shape[0] - 2
    return Dag(hidden=tuple(identity_node() for _ in range(n)), adj=AdjacencyMatrix(bits))


class TestValidate:
    def test_minimal_chain_is_valid(self):
        assert validate(chain_dag(1)).ok

    def test_lower_triangular_edge_reported(self):
        d = dag_with_bits([[0, 1, 0], [1, 0, 1], [0, 0, 0]])
        report = validate(d)
        assert not report.ok
        assert any(v.rule == "not_upper_triangular" for v in report.violations)

    def test_isolated_node_no_parents(self):
        # 5 rows: input, v1..v3, output; column 2 left empty
        bits = np.zeros((5, 5), dtype=bool)
        bits[0, 1] = bits[1, 3] = bits[3, 4] = bits[2, 3] = False
        bits[0, 1] = True
        bits[1, 3] = True
        bits[2, 4] = True
        bits[3, 4] = True
        d = dag_with_bits(bits)
        report = validate(d)
        assert not report.ok
        messages = [v.message for v in report.violations]
        assert "isolated node v2 (no parents)" in messages
        # oracle: exhaustive path search finds no input->v2 path
        reach = {i: r for i, r, _ in ((i, a, b) for i, a, b in paths_exist(d))}
        assert reach[2] is False

    def test_missing_mandatory_edges(self):
        bits = np.zeros((4, 4), dtype=bool)
        bits[0, 2] = bits[1, 3] = bits[1, 2] = True
        report = validate(dag_with_bits(bits))
        rules = {v.rule for v in report.violations}
        assert "input_edge" in rules
        assert "output_edge" in rules

    def test_bounds_check(self):
        assert validate(chain_dag(4), bounds=(1, 3)).violations[0].rule == "node_bounds"
        assert validate(chain_dag(3), bounds=(1, 3)).ok


class TestRandomDag:
    def test_forced_minimal_shape(self):
        # one hidden node leaves no room: the two mandatory edges and nothing else
        for seed in range(50):
            d = random_dag(np.random.default_rng(seed), (1, 1), SPACE)
            expected = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=bool)
            assert np.array_equal(d.adj.bits, expected)

    def test_two_nodes_zero_density_is_chain_after_repair(self):
        legal = set()
        for seed in range(200):
            d = random_dag(np.random.default_rng(seed), (2, 2), SPACE, edge_density=0.0)
            assert validate(d).ok
            assert d.adj.bits[0, 1] and d.adj.bits[2, 3]
            legal.add(d.adj.bits.tobytes())
        # all observed matrices are legal 4x4 graphs containing the chain edges
        assert legal

    def test_same_seed_same_dag(self):
        a = random_dag(np.random.default_rng(9), (1, 10), SPACE)
        b = random_dag(np.random.default_rng(9), (1, 10), SPACE)
        assert a == b

    def test_uniform_node_count(self):
        from scipy import stats

        rng = np.random.default_rng(123)
        counts = np.zeros(10, dtype=int)
        for _ in range(10_000):
            counts[len(random_dag(rng, (1, 10), SPACE).hidden) - 1] += 1
        assert stats.chisquare(counts).pvalue > 0.001

    def test_validity_fuzz(self):
        rng = np.random.default_rng(7)
        for _ in range(500):
            lo = int(rng.integers(1, 8))
            hi = int(rng.integers(lo, 12))
            d = random_dag(rng, (lo, hi), SPACE, edge_density=float(rng.random()))
            assert validate(d, (lo, hi)).ok


class TestRepair:
    def test_valid_graph_unchanged(self):
        d = chain_dag(3)
        assert repair(d, np.random.default_rng(0)) is d

    def test_keeps_existing_edges(self):
        bits = np.zeros((4, 4), dtype=bool)
        bits[0, 1] = bits[2, 3] = True
        d = dag_with_bits(bits)
        fixed = repair(d, np.random.default_rng(1))
        assert validate(fixed).ok
        assert fixed.adj.bits[0, 1] and fixed.adj.bits[2, 3]

    def test_restores_mandatory_output_edge(self):
        bits = np.zeros((4, 4), dtype=bool)
        bits[0, 1] = bits[1, 3] = bits[1, 2] = True
        fixed = repair(dag_with_bits(bits), np.random.default_rng(2))
        assert fixed.adj.bits[2, 3]

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        for seed in range(100):
            bits = np.triu(np.random.default_rng(seed).random((6, 6)) < 0.2, k=1)
            d = dag_with_bits(bits)
            once = repair(d, np.random.default_rng(seed))
            twice = repair(once, np.random.default_rng(seed + 1))
            assert once == twice

    def test_rejects_non_upper_triangular(self):
        bits = np.zeros((4, 4), dtype=bool)
        bits[2, 1] = True
        with pytest.raises(ShapeError):
            repair(dag_with_bits(bits), np.random.default_rng(0))


class TestPathsExist:
    def test_chain_all_reachable(self):
        assert paths_exist(chain_dag(3)) == [(1, True, True), (2, True, True), (3, True, True)]

    def test_dead_end_node(self):
        # v2 has a parent but no route onward to the output
        bits = np.zeros((5, 5), dtype=bool)
        bits[0, 1] = bits[1, 2] = bits[1, 3] = bits[3, 4] = True
        flags = {i: (a, b) for i, a, b in paths_exist(dag_with_bits(bits))}
        assert flags[2] == (True, False)

    def test_matches_dfs_oracle(self):
        def dfs(bits, start, forward):
            seen = {start}
            stack = [start]
            while stack:
                node = stack.pop()
                nxt = np.flatnonzero(bits[node, :] if forward else bits[:, node])
                for j in nxt:
                    if int(j) not in seen:
                        seen.add(int(j))
                        stack.append(int(j))
            return seen

        rng = np.random.default_rng(21)
        for _ in range(50):
            bits = np.triu(rng.random((10, 10)) < 0.25, k=1)
            d = dag_with_bits(bits)
            from_input = dfs(bits, 0, True)
            for i, reaches_in, reaches_out in paths_exist(d):
                assert reaches_in == (i in from_input)
                assert reaches_out == (9 in dfs(bits, i, True))


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(5)
        d = random_dag(rng, (3, 6), SPACE)
        assert deserialize(serialize(d)) == d

    def test_round_trip_fuzz(self):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            d = random_dag(rng, (1, 10), SPACE)
            assert deserialize(serialize(d)) == d

    def test_rejects_lower_triangular_bit(self):
        d = chain_dag(1)
        obj = json.loads(serialize(d))
        obj["matrix"][1] = "100"
        with pytest.raises(ParseError, match="not upper triangular"):
            deserialize(json.dumps(obj))

    def test_rejects_bad_json(self):
        with pytest.raises(ParseError, match="line"):
            deserialize("{not json")

    def test_rejects_unknown_kind(self):
        obj = json.loads(serialize(chain_dag(1)))
        obj["nodes"][0]["kind"] = "quantum"
        with pytest.raises(ParseError, match="nodes"):
            deserialize(json.dumps(obj))

    def test_rejects_out_of_domain_param(self):
        obj = json.loads(serialize(chain_dag(1)))
        obj["nodes"][0] = {
            "combiner": "add",
            "kind": "dropout",
            "params": {"rate": 1.5},
            "activation": "id",
        }
        with pytest.raises(ParseError, match="domain"):
            deserialize(json.dumps(obj))

    def test_rejects_wrong_format_version(self):
        obj = json.loads(serialize(chain_dag(1)))
        obj["format_version"] = 99
        with pytest.raises(ParseError, match="format_version"):
            deserialize(json.dumps(obj))


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_random_dag_always_validates(seed):
    d = random_dag(np.random.default_rng(seed), (1, 10), SPACE)
    assert validate(d, (1, 10)).ok


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_serialize_round_trip_property(seed):
    d = random_dag(np.random.default_rng(seed), (1, 8), SPACE)
    assert deserialize(serialize(d)) == d
