"""Daily-matching simulation of a kidney exchange pool.

Each day: Poisson arrivals join the pool (each drawing a frozen ``beta``),
waiting pairs depart independently, then the pool is cleared with the
condition's weights under a maximum-cardinality floor.

Random streams, all derived from ``SimConfig.seed``:

==============  =========================================================
``pairs``       sequential; pair attributes
``arrivals``    sequential; daily Poisson counts
``betas``       sequential; one beta seed per arriving pair
``crossmatch``  keyed by (donor pair id, patient pair id)
``departures``  keyed by (pair id, day)
``ties``        keyed by (condition, day); solver tie-breaking seed
==============  =========================================================

The first four do not depend on pool state, so every condition sees the
same arrivals, the same edges between any two pairs, and the same betas.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .clearing import Matching, WeightedCycleSet, solve_max_cardinality, solve_weighted_with_floor
from .errors import ConfigError
from .graph import (
    DEFAULT_MAX_CYCLE,
    PROFILE_IDS,
    CompatibilityGraph,
    GeneratorConfig,
    PatientDonorPair,
    enumerate_cycles,
    generate_pair,
)
from .preferences import BtScores, MvnParams, normalized_profile_weights, profile_ranks, sample_beta
from .rng import KeyedStream, hash64, stream


class Condition(str, enum.Enum):
    EQUAL = "EQUAL"
    HOMOGENEOUS = "HOMOGENEOUS"
    HETEROGENEOUS = "HETEROGENEOUS"


@dataclass
class SimConfig:
    condition: Condition
    blp_params: MvnParams
    bt_scores: BtScores | Mapping[int, float] | None = None
    horizon_days: int = 365
    arrival_rate: float = 1.0
    departure_rate: float = 0.005
    max_cycle_length: int = DEFAULT_MAX_CYCLE
    seed: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    pra_enabled: bool = True
    gumbel_edge_noise: bool = False

    def __post_init__(self) -> None:
        self.condition = Condition(self.condition)
        if self.horizon_days < 0:
            raise ConfigError("horizon_days must be >= 0")
        if not (self.arrival_rate >= 0 and math.isfinite(self.arrival_rate)):
            raise ConfigError("arrival_rate must be a finite value >= 0")
        if not 0.0 <= self.departure_rate <= 1.0:
            raise ConfigError("departure_rate must lie in [0, 1]")
        if self.max_cycle_length < 2:
            raise ConfigError("max_cycle_length must be >= 2")
        if self.blp_params is None:
            raise ConfigError("blp_params is required in every condition (ranks use it)")
        if self.condition is Condition.HOMOGENEOUS and self.bt_scores is None:
            raise ConfigError("HOMOGENEOUS needs bt_scores")

    @property
    def profile_weights(self) -> dict[int, float] | None:
        if self.bt_scores is None:
            return None
        scores = self.bt_scores.scores if isinstance(self.bt_scores, BtScores) else self.bt_scores
        return {k: float(scores[k]) for k in PROFILE_IDS}


@dataclass(frozen=True)
class Vertex:
    """A waiting pair with its frozen beta and derived per-profile tables."""

    pair: PatientDonorPair
    beta: np.ndarray
    beta_seed: int
    weights: tuple[float, ...]
    ranks: tuple[int, ...]

    @classmethod
    def create(cls, pair: PatientDonorPair, beta: np.ndarray, beta_seed: int = 0) -> Vertex:
        w = normalized_profile_weights(beta)
        return cls(pair, np.asarray(beta, dtype=float), beta_seed, tuple(w[k] for k in PROFILE_IDS),
                   tuple(int(r) for r in profile_ranks(beta)))

    @property
    def profile_id(self) -> int:
        return self.pair.profile.id


def edge_weight(
    condition: Condition,
    donor: Vertex,
    recipient: Vertex,
    profile_weights: Mapping[int, float] | None = None,
) -> float:
    """Weight of the donation ``donor -> recipient`` under ``condition``."""
    if condition is Condition.EQUAL:
        return 1.0
    if condition is Condition.HOMOGENEOUS:
        if profile_weights is None:
            raise ConfigError("HOMOGENEOUS weights need BT scores")
        return float(profile_weights[recipient.profile_id])
    if condition is Condition.HETEROGENEOUS:
        return donor.weights[recipient.profile_id - 1]
    raise ConfigError(f"unknown condition {condition!r}")


def clear_pool(
    graph: CompatibilityGraph,
    vertices: Mapping[int, Vertex],
    condition: Condition,
    profile_weights: Mapping[int, float] | None = None,
    max_cycle_length: int = DEFAULT_MAX_CYCLE,
    seed: int | None = None,
    through=None,
    noise: KeyedStream | None = None,
) -> tuple[Matching, int]:
    """Clear one pool: find ``Q`` then the best matching covering ``Q``.

    ``through`` restricts cycle enumeration to cycles touching those
    vertices; callers pass it only when the rest of the pool is known to be
    cycle-free. ``noise`` adds Gumbel noise to every edge weight.
    """
    cycles = enumerate_cycles(graph, max_cycle_length, through)

    def weight(u: int, v: int) -> float:
        w = edge_weight(condition, vertices[u], vertices[v], profile_weights)
        if noise is not None:
            w -= math.log(-math.log(max(noise.uniform(u, v), 1e-300)))
        return w

    cs = WeightedCycleSet.from_edge_weights(cycles, weight)
    _, q = solve_max_cardinality(cs, seed)
    return solve_weighted_with_floor(cs, q, seed), q


@dataclass
class DaySummary:
    day: int
    arrivals: list[int]
    departures: list[int]
    q: int
    matching: Matching
    ranks: list[int]


@dataclass
class RunMetrics:
    condition: Condition
    seed: int
    matching_ranks: list[float] = field(default_factory=list)
    entered: dict[int, int] = field(default_factory=lambda: {k: 0 for k in PROFILE_IDS})
    matched: dict[int, int] = field(default_factory=lambda: {k: 0 for k in PROFILE_IDS})
    departed: dict[int, int] = field(default_factory=lambda: {k: 0 for k in PROFILE_IDS})
    daily_matched: list[int] = field(default_factory=list)

    @property
    def total_entered(self) -> int:
        return sum(self.entered.values())

    @property
    def total_matched(self) -> int:
        return sum(self.matched.values())

    @property
    def waiting(self) -> dict[int, int]:
        return {k: self.entered[k] - self.matched[k] - self.departed[k] for k in PROFILE_IDS}


def average_rank(metrics: RunMetrics) -> float | None:
    """Mean over matchings of each matching's mean donation rank."""
    if not metrics.matching_ranks:
        return None
    return math.fsum(metrics.matching_ranks) / len(metrics.matching_ranks)


def proportion_matched(metrics: RunMetrics) -> dict[int, float]:
    return {k: metrics.matched[k] / metrics.entered[k] for k in PROFILE_IDS if metrics.entered[k] > 0}


class Simulation:
    """Mutable state of one run; advance with ``step_day``."""

    def __init__(self, config: SimConfig) -> None:
        self.config = config
        seed = config.seed
        self.graph = CompatibilityGraph(pra_enabled=config.pra_enabled)
        self.vertices: dict[int, Vertex] = {}
        self.metrics = RunMetrics(config.condition, seed)
        self.day = 0
        self.next_pair_id = 1
        self._pairs_rng = stream(seed, "pairs")
        self._arrivals_rng = stream(seed, "arrivals")
        self._betas_rng = stream(seed, "betas")
        self._crossmatch = KeyedStream(seed, "crossmatch")
        self._departures = KeyedStream(seed, "departures")
        self._noise = KeyedStream(seed, "gumbel") if config.gumbel_edge_noise else None
        self._tie_seed = hash64(seed, "ties", config.condition.value)
        self._profile_weights = config.profile_weights
        # Vertices that may lie on cycles not yet offered to the solver.
        self._unsettled: set[int] = set()

    def add_pair(self, pair: PatientDonorPair, beta: np.ndarray | None = None) -> Vertex:
        """Insert an arriving pair, drawing its beta unless one is given."""
        if beta is None:
            sample = sample_beta(self.config.blp_params, self._betas_rng)
            beta, beta_seed = sample.beta, sample.source_seed
        else:
            beta_seed = -1
        self.graph.add_pair(pair, self._crossmatch)
        vertex = Vertex.create(pair, beta, beta_seed)
        self.vertices[pair.pair_id] = vertex
        self.metrics.entered[pair.profile.id] += 1
        self._unsettled.add(pair.pair_id)
        self.next_pair_id = max(self.next_pair_id, pair.pair_id + 1)
        return vertex

    def _remove(self, pair_id: int) -> Vertex:
        self.graph.remove_pair(pair_id)
        self._unsettled.discard(pair_id)
        return self.vertices.pop(pair_id)

    def arrive_and_depart(self) -> tuple[list[int], list[int]]:
        """First half of a day: arrivals join, then departures leave."""
        cfg = self.config
        day = self.day
        arrivals = []
        for _ in range(int(self._arrivals_rng.poisson(cfg.arrival_rate))):
            pair = generate_pair(self._pairs_rng, cfg.generator, self.next_pair_id, day)
            self.add_pair(pair)
            arrivals.append(pair.pair_id)

        departures = []
        if cfg.departure_rate > 0:
            for pid in sorted(self.vertices):
                if self._departures.uniform(pid, day) < cfg.departure_rate:
                    vertex = self._remove(pid)
                    self.metrics.departed[vertex.profile_id] += 1
                    departures.append(pid)
        return arrivals, departures

    @property
    def day_seed(self) -> int:
        """Solver tie seed for the current day."""
        return hash64(self._tie_seed, self.day)

    def clear(self, arrivals: list[int] | None = None, departures: list[int] | None = None) -> DaySummary:
        """Second half of a day: clear the pool and record the matching."""
        cfg = self.config
        # After a maximum-cardinality clearing the remaining pool has no
        # cycles, so only cycles through unsettled vertices can exist.
        matching, q = clear_pool(
            self.graph,
            self.vertices,
            cfg.condition,
            self._profile_weights,
            cfg.max_cycle_length,
            seed=self.day_seed,
            through=self._unsettled,
            noise=self._noise,
        )
        self._unsettled.clear()

        ranks = []
        for u, v in matching.donations():
            ranks.append(self.vertices[u].ranks[self.vertices[v].profile_id - 1])
        for pid in sorted(matching.vertices):
            vertex = self._remove(pid)
            self.metrics.matched[vertex.profile_id] += 1
        if ranks:
            self.metrics.matching_ranks.append(math.fsum(ranks) / len(ranks))
        self.metrics.daily_matched.append(matching.cardinality)
        summary = DaySummary(self.day, arrivals or [], departures or [], q, matching, ranks)
        self.day += 1
        return summary

    def step_day(self) -> DaySummary:
        return self.clear(*self.arrive_and_depart())


def step_day(sim: Simulation) -> DaySummary:
    return sim.step_day()


def run_simulation(config: SimConfig) -> RunMetrics:
    sim = Simulation(config)
    for _ in range(config.horizon_days):
        sim.step_day()
    return sim.metrics
