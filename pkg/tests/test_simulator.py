from __future__ import annotations

import math

import numpy as np
import pytest

from kidneyprefs.clearing import brute_force_clear, WeightedCycleSet
from kidneyprefs.errors import ConfigError
from kidneyprefs.graph import PROFILES, BloodType, PatientDonorPair, enumerate_cycles, generate_pair
from kidneyprefs.preferences import DEFAULT_BLP_PARAMS, REFERENCE_BT_SCORES, MvnParams, normalized_profile_weights
from kidneyprefs.simulator import (
    Condition,
    RunMetrics,
    SimConfig,
    Simulation,
    Vertex,
    average_rank,
    clear_pool,
    edge_weight,
    proportion_matched,
    run_simulation,
)

ALL = (1.0, 1.0, 1.0)


def vertex(pid: int, profile: int, beta=ALL) -> Vertex:
    pair = PatientDonorPair(pid, BloodType.O, BloodType.O, 0.0, PROFILES[profile])
    return Vertex.create(pair, np.array(beta, dtype=float))


def quiet_config(condition=Condition.EQUAL, **kw) -> SimConfig:
    """No arrivals and no departures unless overridden."""
    base = dict(condition=condition, blp_params=DEFAULT_BLP_PARAMS, bt_scores=REFERENCE_BT_SCORES,
                arrival_rate=0.0, departure_rate=0.0, seed=3)
    base.update(kw)
    return SimConfig(**base)


def three_pair_sim(condition, profiles=(1, 3, 8), beta=ALL, **kw) -> Simulation:
    sim = Simulation(quiet_config(condition, **kw))
    bloods = [(BloodType.A, BloodType.B), (BloodType.B, BloodType.A), (BloodType.A, BloodType.B)]
    for pid, ((d, p), prof) in enumerate(zip(bloods, profiles), start=1):
        sim.add_pair(PatientDonorPair(pid, d, p, 0.0, PROFILES[prof]), np.array(beta, dtype=float))
    return sim


def random_pool(seed: int, n: int, beta_params=DEFAULT_BLP_PARAMS, **kw) -> Simulation:
    sim = Simulation(quiet_config(blp_params=beta_params, seed=seed, **kw))
    rng = np.random.default_rng(seed)
    for pid in range(1, n + 1):
        sim.add_pair(generate_pair(rng, pair_id=pid))
    return sim


class TestEdgeWeight:
    def test_equal(self):
        assert edge_weight(Condition.EQUAL, vertex(1, 2), vertex(2, 7)) == 1.0

    def test_homogeneous_uses_recipient_score(self):
        w = edge_weight(Condition.HOMOGENEOUS, vertex(1, 1), vertex(2, 4), REFERENCE_BT_SCORES)
        assert w == 0.036

    def test_heterogeneous_uses_donor_beta(self):
        donor = vertex(1, 8, beta=ALL)
        assert edge_weight(Condition.HETEROGENEOUS, donor, vertex(2, 3)) == pytest.approx(2 / 3)
        assert edge_weight(Condition.HETEROGENEOUS, donor, vertex(2, 1)) == 1.0
        assert edge_weight(Condition.HETEROGENEOUS, donor, vertex(2, 8)) == 0.0
        # The recipient's own beta plays no part.
        assert edge_weight(Condition.HETEROGENEOUS, donor, vertex(2, 3, beta=(-5, 0, 0))) == pytest.approx(2 / 3)

    def test_homogeneous_without_scores(self):
        with pytest.raises(ConfigError):
            edge_weight(Condition.HOMOGENEOUS, vertex(1, 1), vertex(2, 2), None)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"horizon_days": -1}, {"arrival_rate": -0.1}, {"arrival_rate": math.inf},
        {"departure_rate": 1.5}, {"max_cycle_length": 1}, {"blp_params": None},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            quiet_config(**kw)

    def test_homogeneous_needs_scores(self):
        with pytest.raises(ConfigError):
            quiet_config(Condition.HOMOGENEOUS, bt_scores=None)


class TestBetas:
    def test_degenerate_distribution_gives_mean(self):
        mu = np.array([0.7, -0.2, 1.3])
        sim = random_pool(1, 10, MvnParams(mu, np.zeros((3, 3))))
        assert all(np.array_equal(v.beta, mu) for v in sim.vertices.values())

    def test_betas_depend_only_on_seed(self):
        a = random_pool(2, 12)
        b = random_pool(2, 12)
        assert all(np.array_equal(a.vertices[k].beta, b.vertices[k].beta) for k in a.vertices)
        c = random_pool(5, 12)
        assert not all(np.array_equal(a.vertices[k].beta, c.vertices[k].beta) for k in a.vertices)

    def test_betas_frozen_across_days(self):
        sim = random_pool(4, 15, departure_rate=0.0)
        before = {k: v.beta.copy() for k, v in sim.vertices.items()}
        sim.step_day()
        sim.step_day()
        for k, v in sim.vertices.items():
            assert np.array_equal(v.beta, before[k])


class TestDay:
    def test_empty_pool_no_op(self):
        sim = Simulation(quiet_config())
        summary = sim.step_day()
        assert summary.matching.cardinality == 0 and summary.q == 0
        assert sim.metrics.matching_ranks == [] and sim.metrics.daily_matched == [0]

    def test_three_pair_equal_matches_one_cycle(self):
        sim = three_pair_sim(Condition.EQUAL)
        summary = sim.step_day()
        assert summary.q == 2 and summary.matching.cardinality == 2
        assert len(summary.matching.cycles) == 1
        assert len(sim.vertices) == 1 and 2 not in sim.vertices

    def test_three_pair_weights_choose_cycle(self):
        # With beta (1,1,1): cycle (1,2) is worth 5/3 and (2,3) is worth 2/3.
        for cond in (Condition.HETEROGENEOUS, Condition.HOMOGENEOUS):
            sim = three_pair_sim(cond)
            sim.step_day()
            assert set(sim.vertices) == {3}
            sim = three_pair_sim(cond, profiles=(8, 3, 1))
            sim.step_day()
            assert set(sim.vertices) == {1}

    def test_three_pair_ranks(self):
        sim = three_pair_sim(Condition.HETEROGENEOUS)
        summary = sim.step_day()
        # Donor 1 gives to profile 3 (rank 2 under (1,1,1)); donor 2 gives to profile 1 (rank 1).
        assert sorted(summary.ranks) == [1, 2]
        assert sim.metrics.matching_ranks == [1.5]

    def test_full_departure_empties_pool(self):
        sim = three_pair_sim(Condition.EQUAL, departure_rate=1.0)
        summary = sim.step_day()
        assert summary.departures == [1, 2, 3] and not sim.vertices
        assert summary.matching.cardinality == 0
        assert sum(sim.metrics.departed.values()) == 3

    def test_pool_left_without_cycles(self):
        sim = random_pool(6, 40)
        sim.step_day()
        assert enumerate_cycles(sim.graph, 3) == []


class TestRun:
    def test_conservation_and_ranks(self):
        cfg = SimConfig(Condition.HETEROGENEOUS, DEFAULT_BLP_PARAMS, horizon_days=60, arrival_rate=2.0,
                        departure_rate=0.02, seed=9)
        sim = Simulation(cfg)
        for _ in range(cfg.horizon_days):
            summary = sim.step_day()
            assert all(1 <= r <= 8 for r in summary.ranks)
            assert len(summary.ranks) == summary.matching.cardinality
            assert summary.matching.cardinality == summary.q
        m = sim.metrics
        waiting = {k: 0 for k in m.entered}
        for v in sim.vertices.values():
            waiting[v.profile_id] += 1
        assert m.waiting == waiting
        assert m.total_entered == m.total_matched + sum(m.departed.values()) + len(sim.vertices)
        assert sum(m.daily_matched) == m.total_matched

    def test_deterministic(self):
        cfg = SimConfig(Condition.HOMOGENEOUS, DEFAULT_BLP_PARAMS, REFERENCE_BT_SCORES, horizon_days=40, seed=12)
        a, b = run_simulation(cfg), run_simulation(cfg)
        assert a == b

    def test_zero_horizon(self):
        m = run_simulation(SimConfig(Condition.EQUAL, DEFAULT_BLP_PARAMS, horizon_days=0))
        assert m.total_entered == 0 and average_rank(m) is None and proportion_matched(m) == {}

    def test_conditions_share_arrivals(self):
        entered = [
            run_simulation(SimConfig(c, DEFAULT_BLP_PARAMS, REFERENCE_BT_SCORES, horizon_days=30, seed=8)).entered
            for c in Condition
        ]
        assert entered[0] == entered[1] == entered[2]

    def test_gumbel_noise_runs_deterministically(self):
        cfg = SimConfig(Condition.HETEROGENEOUS, DEFAULT_BLP_PARAMS, horizon_days=30, seed=1,
                        gumbel_edge_noise=True)
        assert run_simulation(cfg) == run_simulation(cfg)


class TestMetrics:
    def test_average_rank(self):
        m = RunMetrics(Condition.EQUAL, 0, matching_ranks=[2.0, 4.0, 1.5])
        assert average_rank(m) == pytest.approx(2.5)

    def test_proportion_matched(self):
        m = RunMetrics(Condition.EQUAL, 0)
        m.entered.update({1: 4, 2: 3})
        m.matched.update({1: 2, 2: 3})
        assert proportion_matched(m) == {1: 0.5, 2: 1.0}


class TestClearPool:
    def test_cardinality_identical_across_conditions(self):
        weights = dict(REFERENCE_BT_SCORES)
        for seed in range(8):
            sim = random_pool(100 + seed, 30)
            sizes = {
                clear_pool(sim.graph, sim.vertices, c, weights, 3, seed)[0].cardinality for c in Condition
            }
            _, q = clear_pool(sim.graph, sim.vertices, Condition.EQUAL, weights, 3, seed)
            assert sizes == {q}

    def test_matches_brute_force(self):
        checked = 0
        for seed in range(40):
            sim = random_pool(200 + seed, 12)
            cycles = enumerate_cycles(sim.graph, 3)
            if not cycles or len(cycles) > 20:
                continue
            m, q = clear_pool(sim.graph, sim.vertices, Condition.HETEROGENEOUS, None, 3, seed)
            cs = WeightedCycleSet.from_edge_weights(
                cycles, lambda u, v: edge_weight(Condition.HETEROGENEOUS, sim.vertices[u], sim.vertices[v])
            )
            ref = brute_force_clear(cs, q)
            assert m.total_weight == pytest.approx(ref.total_weight, abs=1e-9)
            checked += 1
        assert checked >= 10

    def test_degenerate_heterogeneity_equals_homogeneous(self):
        mu = np.array([2.0, 1.0, 0.5])
        weights = normalized_profile_weights(mu)
        for seed in range(10):
            sim = random_pool(300 + seed, 30, MvnParams(mu, np.zeros((3, 3))))
            het, _ = clear_pool(sim.graph, sim.vertices, Condition.HETEROGENEOUS, None, 3, seed)
            hom, _ = clear_pool(sim.graph, sim.vertices, Condition.HOMOGENEOUS, weights, 3, seed)
            assert het.cycles == hom.cycles
            assert abs(het.total_weight - hom.total_weight) <= 1e-9
