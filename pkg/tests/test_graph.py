from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kidneyprefs.errors import ConfigError, ParseError
from kidneyprefs.graph import (
    FEATURES,
    PROFILES,
    BloodType,
    CompatibilityGraph,
    Cycle,
    GeneratorConfig,
    Incompatibility,
    PatientDonorPair,
    blood_compatible,
    dump_pool,
    enumerate_cycles,
    generate_pair,
    parse_pool,
    sample_blood_type,
)
from kidneyprefs.rng import KeyedStream

from conftest import brute_force_cycles, make_graph


class TestBloodTypes:
    def test_four_values_round_trip(self):
        assert len(BloodType) == 4
        for b in BloodType:
            assert BloodType(b.value) is b

    @pytest.mark.parametrize(
        "donor, patient, expected",
        [("O", "AB", True), ("A", "B", False), ("B", "B", True), ("AB", "O", False), ("O", "O", True)],
    )
    def test_examples(self, donor, patient, expected):
        assert blood_compatible(BloodType(donor), BloodType(patient)) is expected

    def test_full_table(self):
        # Recipients able to receive from each donor type, by ABO rules.
        receives = {"O": "O A B AB", "A": "A AB", "B": "B AB", "AB": "AB"}
        for d in BloodType:
            for p in BloodType:
                assert blood_compatible(d, p) == (p.value in receives[d.value].split())


class TestProfiles:
    def test_profile_bijection(self):
        table = {
            1: ("30", "rare", "healthy"),
            2: ("30", "frequently", "healthy"),
            3: ("30", "rare", "cancer"),
            4: ("30", "frequently", "cancer"),
            5: ("70", "rare", "healthy"),
            6: ("70", "frequently", "healthy"),
            7: ("70", "rare", "cancer"),
            8: ("70", "frequently", "cancer"),
        }
        for pid, (age, drink, cancer) in table.items():
            p = PROFILES[pid]
            assert (p.age.value, p.drinking.value, p.cancer.value) == (age, drink, cancer)

    def test_features(self):
        assert PROFILES[1].features == (1, 1, 1)
        assert PROFILES[8].features == (0, 0, 0)
        assert len({p.features for p in PROFILES.values()}) == 8
        assert FEATURES.shape == (8, 3)
        for pid, p in PROFILES.items():
            expected = (int(p.age.value == "30"), int(p.drinking.value == "rare"), int(p.cancer.value == "healthy"))
            assert p.features == expected == tuple(FEATURES[pid - 1])


def _exact_emitted_shares(cfg: GeneratorConfig) -> tuple[dict, dict]:
    """Blood-type marginals of emitted pairs, by enumerating the generator's
    acceptance rule: keep blood-incompatible pairs, and compatible pairs
    whose crossmatch fails on either of two draws."""
    donor = {b: 0.0 for b in BloodType}
    patient = {b: 0.0 for b in BloodType}
    for d, fd in cfg.blood_freqs.items():
        for p, fp in cfg.blood_freqs.items():
            if blood_compatible(d, p):
                accept = sum(pp * (1 - (1 - v) ** 2) for v, pp in cfg.pra_levels)
            else:
                accept = 1.0
            donor[d] += fd * fp * accept
            patient[p] += fd * fp * accept
    z = sum(donor.values())
    return {b: x / z for b, x in donor.items()}, {b: x / z for b, x in patient.items()}


class TestGenerator:
    def test_invalid_distribution_rejected(self):
        with pytest.raises(ConfigError):
            GeneratorConfig(profile_weights=(0.2,) * 8)
        with pytest.raises(ConfigError):
            GeneratorConfig(pra_levels=((0.1, 0.5), (0.2, 0.4)))
        with pytest.raises(ConfigError):
            GeneratorConfig(blood_freqs={BloodType.O: 0.5, BloodType.A: 0.5})

    def test_degenerate_config_falls_back_to_fiat(self):
        cfg = GeneratorConfig(
            blood_freqs={BloodType.O: 1.0, BloodType.A: 0.0, BloodType.B: 0.0, BloodType.AB: 0.0},
            pra_levels=((0.0, 1.0),),
        )
        pair = generate_pair(np.random.default_rng(0), cfg)
        assert pair.donor_blood is BloodType.O and pair.patient_blood is BloodType.O
        assert pair.incompatibility is Incompatibility.FIAT

    def test_deterministic_under_seed(self):
        a = generate_pair(np.random.default_rng(42), pair_id=3)
        b = generate_pair(np.random.default_rng(42), pair_id=3)
        assert a == b

    def test_pairs_are_internally_incompatible(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            pair = generate_pair(rng)
            if pair.incompatibility is Incompatibility.BLOOD:
                assert not blood_compatible(pair.donor_blood, pair.patient_blood)
            else:
                assert pair.incompatibility is Incompatibility.CROSSMATCH
                assert blood_compatible(pair.donor_blood, pair.patient_blood)

    def test_raw_blood_sampler_matches_configured_shares(self):
        cfg = GeneratorConfig()
        rng = np.random.default_rng(7)
        draws = [sample_blood_type(rng, cfg.blood_freqs) for _ in range(10_000)]
        for b, f in cfg.blood_freqs.items():
            assert abs(draws.count(b) / len(draws) - f) < 0.02

    def test_emitted_blood_shares_match_acceptance_oracle(self):
        cfg = GeneratorConfig()
        donor_exp, patient_exp = _exact_emitted_shares(cfg)
        rng = np.random.default_rng(8)
        pairs = [generate_pair(rng, cfg) for _ in range(10_000)]
        for b in BloodType:
            assert abs(sum(p.donor_blood is b for p in pairs) / len(pairs) - donor_exp[b]) < 0.02
            assert abs(sum(p.patient_blood is b for p in pairs) / len(pairs) - patient_exp[b]) < 0.02

    def test_profiles_uniform_by_default(self):
        rng = np.random.default_rng(9)
        ids = [generate_pair(rng).profile.id for _ in range(8000)]
        for k in range(1, 9):
            # Binomial(8000, 1/8): SE ~= 0.0037.
            assert abs(ids.count(k) / len(ids) - 0.125) < 0.015


class TestAddPair:
    def test_three_pair_edges(self, three_pair):
        assert three_pair.edges == {(1, 2), (2, 1), (2, 3), (3, 2)}

    def test_empty_graph_gets_no_edges(self):
        g = CompatibilityGraph()
        pair = PatientDonorPair(1, BloodType.O, BloodType.AB, 0.0, PROFILES[1])
        assert g.add_pair(pair, np.random.default_rng(0)) == []

    def test_full_pra_blocks_everything(self):
        g = CompatibilityGraph()
        rng = np.random.default_rng(0)
        for i in range(1, 30):
            pair = generate_pair(rng, pair_id=i)
            pair = PatientDonorPair(i, pair.donor_blood, pair.patient_blood, 1.0, pair.profile)
            assert g.add_pair(pair, rng) == []
        assert not g.edges

    def test_pra_switch_gives_pure_abo_graph(self):
        g = CompatibilityGraph(pra_enabled=False)
        rng = np.random.default_rng(3)
        pairs = [generate_pair(rng, pair_id=i) for i in range(1, 25)]
        for p in pairs:
            g.add_pair(p, rng)
        expected = {
            (a.pair_id, b.pair_id)
            for a in pairs for b in pairs
            if a is not b and blood_compatible(a.donor_blood, b.patient_blood)
        }
        assert g.edges == expected

    def test_duplicate_rejected(self, three_pair):
        with pytest.raises(ValueError):
            three_pair.add_pair(three_pair.pairs[1], np.random.default_rng(0))

    def test_edges_reproducible_and_valid(self):
        def build(seed):
            g = CompatibilityGraph()
            rng = np.random.default_rng(seed)
            for i in range(1, 40):
                g.add_pair(generate_pair(rng, pair_id=i), rng)
            return g

        g1, g2 = build(5), build(5)
        assert g1.edges == g2.edges
        for u, v in g1.edges:
            assert u != v
            assert blood_compatible(g1.pairs[u].donor_blood, g1.pairs[v].patient_blood)

    def test_keyed_crossmatch_independent_of_insertion_order(self):
        rng = np.random.default_rng(11)
        pairs = [generate_pair(rng, pair_id=i) for i in range(1, 30)]
        a, b = CompatibilityGraph(), CompatibilityGraph()
        for p in pairs:
            a.add_pair(p, KeyedStream(1))
        for p in reversed(pairs):
            b.add_pair(p, KeyedStream(1))
        assert a.edges == b.edges

    def test_remove_pair_drops_incident_edges(self, three_pair):
        three_pair.remove_pair(2)
        assert three_pair.edges == set()
        assert 2 not in three_pair


class TestEnumerateCycles:
    def test_three_pair(self, three_pair):
        assert enumerate_cycles(three_pair, 3) == [Cycle((1, 2)), Cycle((2, 3))]

    def test_complete_three_vertex_two_cycles(self):
        g = make_graph(3, [(u, v) for u in (1, 2, 3) for v in (1, 2, 3) if u != v])
        assert enumerate_cycles(g, 2) == [Cycle((1, 2)), Cycle((1, 3)), Cycle((2, 3))]
        assert len(enumerate_cycles(g, 3)) == 5

    def test_empty_graph(self):
        assert enumerate_cycles(CompatibilityGraph(), 3) == []

    def test_rejects_short_cap(self, three_pair):
        with pytest.raises(ValueError):
            enumerate_cycles(three_pair, 1)

    @given(
        n=st.integers(0, 8),
        edges=st.sets(st.tuples(st.integers(1, 8), st.integers(1, 8)), max_size=40),
        cap=st.integers(2, 4),
    )
    def test_matches_exhaustive_oracle(self, n, edges, cap):
        g = make_graph(n, [(u, v) for u, v in edges if u != v and u <= n and v <= n])
        cycles = enumerate_cycles(g, cap)
        assert len(cycles) == len(set(cycles))
        assert set(cycles) == brute_force_cycles(g, cap)
        for c in cycles:
            assert c.vertices[0] == min(c.vertices) and 2 <= len(c) <= cap
            assert all(g.has_edge(u, v) for u, v in c.edges())

    @given(
        edges=st.sets(st.tuples(st.integers(1, 8), st.integers(1, 8)), max_size=40),
        through=st.sets(st.integers(1, 8), max_size=3),
    )
    def test_through_filter(self, edges, through):
        g = make_graph(8, [(u, v) for u, v in edges if u != v])
        expected = {c for c in brute_force_cycles(g, 3) if through.intersection(c.vertices)}
        assert set(enumerate_cycles(g, 3, through)) == expected


class TestCycle:
    def test_canonical_rotation(self):
        assert Cycle.of((3, 1, 2)) == Cycle((1, 2, 3))
        assert Cycle.of((2, 3, 1)) == Cycle.of((1, 2, 3))
        with pytest.raises(ValueError):
            Cycle((2, 1))
        with pytest.raises(ValueError):
            Cycle((1, 1))


class TestPoolSnapshot:
    def test_round_trip(self):
        rng = np.random.default_rng(2)
        pairs = [generate_pair(rng, pair_id=i, arrival_day=i // 3) for i in range(1, 12)]
        text = dump_pool(pairs)
        assert text.splitlines()[0] == "pair_id,donor_blood,patient_blood,pra,profile_id,arrival_day"
        back = parse_pool(text)
        for a, b in zip(pairs, back):
            assert (a.pair_id, a.donor_blood, a.patient_blood, a.patient_pra, a.profile, a.arrival_day) == (
                b.pair_id, b.donor_blood, b.patient_blood, b.patient_pra, b.profile, b.arrival_day)

    def test_bad_row_reports_line(self):
        text = "pair_id,donor_blood,patient_blood,pra,profile_id,arrival_day\n1,O,A,0.1,1,0\n2,Q,A,0.1,1,0\n"
        with pytest.raises(ParseError, match=":3"):
            parse_pool(text, "pool.csv")
