from __future__ import annotations

import itertools

import pytest
from hypothesis import settings

from kidneyprefs.graph import PROFILES, BloodType, CompatibilityGraph, Cycle, PatientDonorPair

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_graph(n: int, edges) -> CompatibilityGraph:
    """Graph on vertices 1..n with hand-wired edges (no blood/PRA logic)."""
    g = CompatibilityGraph()
    for i in range(1, n + 1):
        g.pairs[i] = PatientDonorPair(i, BloodType.O, BloodType.O, 0.0, PROFILES[1])
        g.out_edges[i] = set()
        g.in_edges[i] = set()
    for u, v in edges:
        g.add_edge(u, v)
    return g


def brute_force_cycles(graph: CompatibilityGraph, max_length: int) -> set[Cycle]:
    """Every vertex sequence of length 2..max_length closing into a cycle."""
    found = set()
    verts = sorted(graph.pairs)
    for k in range(2, max_length + 1):
        for seq in itertools.permutations(verts, k):
            if all(graph.has_edge(seq[i], seq[(i + 1) % k]) for i in range(k)):
                found.add(Cycle.of(seq))
    return found


def three_pair_graph(profiles=(1, 3, 8)) -> CompatibilityGraph:
    """Three pairs whose only cycles are (v1, v2) and (v2, v3)."""
    import numpy as np

    g = CompatibilityGraph()
    bloods = [(BloodType.A, BloodType.B), (BloodType.B, BloodType.A), (BloodType.A, BloodType.B)]
    for pid, ((donor, patient), prof) in enumerate(zip(bloods, profiles), start=1):
        g.add_pair(PatientDonorPair(pid, donor, patient, 0.0, PROFILES[prof]), np.random.default_rng(0))
    return g


@pytest.fixture
def three_pair() -> CompatibilityGraph:
    return three_pair_graph()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
