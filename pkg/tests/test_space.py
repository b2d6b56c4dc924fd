import numpy as np
import pytest

from dagevo.errors import DomainError
from dagevo.space import (
    ACTIVATIONS,
    COMBINERS,
    KINDS,
    Float,
    Integer,
    SearchSpace,
    neighbor_categorical,
    neighbor_float,
    neighbor_integer,
    redraw_seed,
    sample_node,
)

SPACE = SearchSpace.default()


class TestSampleNode:
    def test_deterministic_under_seed(self):
        a = sample_node(SPACE, np.random.default_rng(4))
        b = sample_node(SPACE, np.random.default_rng(4))
        assert a == b

    def test_kind_frequencies_uniform(self):
        rng = np.random.default_rng(0)
        counts = {k: 0 for k in KINDS}
        n = 10_000
        for _ in range(n):
            counts[sample_node(SPACE, rng).kind] += 1
        p = 1 / len(KINDS)
        sigma = (n * p * (1 - p)) ** 0.5
        for kind, c in counts.items():
            assert abs(c - n * p) < 3 * sigma, (kind, c)

    def test_samples_respect_invariants(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            node = sample_node(SPACE, rng)
            assert SPACE.validate_node(node) == []
            if node.kind == "dropout":
                assert 0 < node.params["rate"] < 1


class TestCategoricalNeighborhood:
    def test_never_returns_current(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            assert neighbor_categorical("lstm", ("lstm", "gru", "rnn"), rng) in ("gru", "rnn")

    def test_two_choices_forced(self):
        rng = np.random.default_rng(3)
        assert neighbor_categorical("max", ("max", "average"), rng) == "average"

    def test_alternatives_near_uniform(self):
        rng = np.random.default_rng(5)
        counts = {"gru": 0, "rnn": 0}
        n = 10_000
        for _ in range(n):
            counts[neighbor_categorical("lstm", ("lstm", "gru", "rnn"), rng)] += 1
        for c in counts.values():
            assert abs(c - n / 2) < 3 * (n * 0.25) ** 0.5

    def test_single_choice_rejected(self):
        with pytest.raises(DomainError):
            neighbor_categorical("x", ("x",), np.random.default_rng(0))


class TestIntegerNeighborhood:
    DOMAIN = Integer("units", 1, 100, 3)

    def test_interval_minus_current(self):
        rng = np.random.default_rng(6)
        seen = set()
        for _ in range(500):
            v = neighbor_integer(5, self.DOMAIN, rng)
            assert v in {2, 3, 4, 6, 7, 8}
            seen.add(v)
        assert seen == {2, 3, 4, 6, 7, 8}

    def test_clamped_at_lower_bound(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            assert neighbor_integer(1, self.DOMAIN, rng) in {2, 3, 4}

    def test_distribution_uniform(self):
        rng = np.random.default_rng(8)
        counts = {v: 0 for v in (2, 3, 4, 6, 7, 8)}
        n = 12_000
        for _ in range(n):
            counts[neighbor_integer(5, self.DOMAIN, rng)] += 1
        expected = n / 6
        for c in counts.values():
            assert abs(c - expected) < 4 * (n * (1 / 6) * (5 / 6)) ** 0.5

    def test_degenerate_domain_rejected(self):
        with pytest.raises(DomainError):
            neighbor_integer(4, Integer("k", 4, 4, 2), np.random.default_rng(0))


class TestFloatNeighborhood:
    DOMAIN = Float("rate", 0.01, 0.99, 0.1)

    def test_stays_in_radius(self):
        rng = np.random.default_rng(9)
        for _ in range(500):
            assert 0.4 <= neighbor_float(0.5, self.DOMAIN, rng) <= 0.6

    def test_clamps_at_upper_bound(self):
        rng = np.random.default_rng(10)
        for _ in range(500):
            assert 0.89 <= neighbor_float(0.99, self.DOMAIN, rng) <= 0.99

    def test_mean_near_midpoint(self):
        rng = np.random.default_rng(11)
        draws = [neighbor_float(0.5, self.DOMAIN, rng) for _ in range(10_000)]
        assert abs(np.mean(draws) - 0.5) < 0.01 * 0.5


class TestNeighborClosure:
    def test_every_neighbor_revalidates(self):
        from dagevo.space import neighbor_param

        rng = np.random.default_rng(12)
        for _ in range(2000):
            node = sample_node(SPACE, rng)
            for domain in SPACE.kind_domains(node.kind):
                moved = neighbor_param(node.kind, domain.name, node.params[domain.name], SPACE, rng)
                assert domain.contains(moved), (node.kind, domain.name, moved)
            assert neighbor_categorical(node.combiner, COMBINERS, rng) in COMBINERS
            assert neighbor_categorical(node.activation, ACTIVATIONS, rng) in ACTIVATIONS


def test_seed_redraw_avoids_current():
    rng = np.random.default_rng(13)
    for _ in range(50):
        assert redraw_seed(42, SPACE, rng) != 42
