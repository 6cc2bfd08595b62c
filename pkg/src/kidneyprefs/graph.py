"""Patient-donor pairs, compatibility graphs and cycle enumeration."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from .errors import ConfigError, ParseError
from .rng import KeyedStream

DEFAULT_MAX_CYCLE = 3
MAX_GENERATION_ATTEMPTS = 1000


class BloodType(str, enum.Enum):
    O = "O"
    A = "A"
    B = "B"
    AB = "AB"

    @property
    def antigens(self) -> frozenset[str]:
        return frozenset() if self is BloodType.O else frozenset(self.value)


def blood_compatible(donor: BloodType, patient: BloodType) -> bool:
    """ABO rule: the donor's antigens must all be present in the patient."""
    return donor.antigens <= patient.antigens


class Age(str, enum.Enum):
    Y30 = "30"
    O70 = "70"


class Drinking(str, enum.Enum):
    RARE = "rare"
    FREQUENT = "frequently"


class Cancer(str, enum.Enum):
    HEALTHY = "healthy"
    CANCER = "cancer"


@dataclass(frozen=True)
class PatientProfile:
    id: int
    age: Age
    drinking: Drinking
    cancer: Cancer

    @property
    def features(self) -> tuple[int, int, int]:
        return (
            int(self.age is Age.Y30),
            int(self.drinking is Drinking.RARE),
            int(self.cancer is Cancer.HEALTHY),
        )


def _build_profiles() -> dict[int, PatientProfile]:
    # Ids follow the published numbering: age is the slowest-varying
    # attribute, then cancer, then drinking.
    out = {}
    pid = 1
    for age in (Age.Y30, Age.O70):
        for cancer in (Cancer.HEALTHY, Cancer.CANCER):
            for drinking in (Drinking.RARE, Drinking.FREQUENT):
                out[pid] = PatientProfile(pid, age, drinking, cancer)
                pid += 1
    return out


PROFILES: dict[int, PatientProfile] = _build_profiles()
PROFILE_IDS: tuple[int, ...] = tuple(PROFILES)
# 8x3 matrix of binary features, row k is profile k + 1.
FEATURES: np.ndarray = np.array([PROFILES[k].features for k in PROFILE_IDS], dtype=float)


class Incompatibility(str, enum.Enum):
    BLOOD = "blood"
    CROSSMATCH = "crossmatch"
    FIAT = "fiat"


@dataclass(frozen=True)
class PatientDonorPair:
    pair_id: int
    donor_blood: BloodType
    patient_blood: BloodType
    patient_pra: float
    profile: PatientProfile
    arrival_day: int = 0
    # None when the pair was loaded rather than generated.
    incompatibility: Incompatibility | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.patient_pra <= 1.0:
            raise ValueError(f"patient_pra must lie in [0, 1], got {self.patient_pra}")
        if self.arrival_day < 0:
            raise ValueError("arrival_day must be >= 0")


def _check_distribution(name: str, weights: Iterable[float]) -> None:
    weights = list(weights)
    if any(w < 0 or not math.isfinite(w) for w in weights):
        raise ConfigError(f"{name}: weights must be finite and non-negative")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ConfigError(f"{name}: weights sum to {sum(weights)!r}, expected 1")


@dataclass(frozen=True)
class GeneratorConfig:
    """Saidman-style pair generator settings.

    Blood types of donor and patient are drawn independently from
    ``blood_freqs``; the patient PRA from the discrete ``pra_levels``
    distribution; the profile independently from ``profile_weights``.
    """

    blood_freqs: dict[BloodType, float] = field(
        default_factory=lambda: {
            BloodType.O: 0.4814,
            BloodType.A: 0.3373,
            BloodType.B: 0.1428,
            BloodType.AB: 0.0385,
        }
    )
    pra_levels: tuple[tuple[float, float], ...] = ((0.05, 0.7019), (0.45, 0.20), (0.90, 0.0981))
    profile_weights: tuple[float, ...] = (0.125,) * 8

    def __post_init__(self) -> None:
        if set(self.blood_freqs) != set(BloodType):
            raise ConfigError("blood_freqs must cover O, A, B and AB")
        _check_distribution("blood_freqs", self.blood_freqs.values())
        if not self.pra_levels:
            raise ConfigError("pra_levels is empty")
        if any(not 0.0 <= v <= 1.0 for v, _ in self.pra_levels):
            raise ConfigError("pra_levels values must lie in [0, 1]")
        _check_distribution("pra_levels", (p for _, p in self.pra_levels))
        if len(self.profile_weights) != len(PROFILES):
            raise ConfigError("profile_weights needs one weight per profile")
        _check_distribution("profile_weights", self.profile_weights)

    def to_dict(self) -> dict:
        return {
            "blood_freqs": {b.value: p for b, p in self.blood_freqs.items()},
            "pra_levels": [list(level) for level in self.pra_levels],
            "profile_weights": list(self.profile_weights),
        }

    @classmethod
    def from_dict(cls, data: dict) -> GeneratorConfig:
        unknown = set(data) - {"blood_freqs", "pra_levels", "profile_weights"}
        if unknown:
            raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
        kwargs: dict = {}
        if "blood_freqs" in data:
            try:
                kwargs["blood_freqs"] = {BloodType(k): float(v) for k, v in data["blood_freqs"].items()}
            except ValueError as exc:
                raise ConfigError(f"blood_freqs: {exc}") from None
        if "pra_levels" in data:
            kwargs["pra_levels"] = tuple((float(v), float(p)) for v, p in data["pra_levels"])
        if "profile_weights" in data:
            kwargs["profile_weights"] = tuple(float(w) for w in data["profile_weights"])
        return cls(**kwargs)


def sample_blood_type(rng: np.random.Generator, freqs: dict[BloodType, float]) -> BloodType:
    types = list(BloodType)
    return types[rng.choice(len(types), p=[freqs[b] for b in types])]


def generate_pair(
    rng: np.random.Generator,
    config: GeneratorConfig | None = None,
    pair_id: int = 0,
    arrival_day: int = 0,
) -> PatientDonorPair:
    """Draw one internally incompatible patient-donor pair.

    A blood-compatible pair is kept only if its internal crossmatch fails; a
    passing crossmatch is redrawn once, and a pair passing both is discarded
    and regenerated. After ``MAX_GENERATION_ATTEMPTS`` the last draw is
    emitted and marked incompatible by fiat.
    """
    config = config or GeneratorConfig()
    pra_values = [v for v, _ in config.pra_levels]
    pra_probs = [p for _, p in config.pra_levels]
    for _ in range(MAX_GENERATION_ATTEMPTS):
        donor = sample_blood_type(rng, config.blood_freqs)
        patient = sample_blood_type(rng, config.blood_freqs)
        pra = float(pra_values[rng.choice(len(pra_values), p=pra_probs)])
        profile = PROFILES[int(rng.choice(len(PROFILES), p=config.profile_weights)) + 1]
        if not blood_compatible(donor, patient):
            reason = Incompatibility.BLOOD
            break
        if rng.random() < pra or rng.random() < pra:
            reason = Incompatibility.CROSSMATCH
            break
    else:
        reason = Incompatibility.FIAT
    return PatientDonorPair(pair_id, donor, patient, pra, profile, arrival_day, reason)


@dataclass(frozen=True, order=True)
class Cycle:
    """Donation cycle v1 -> v2 -> ... -> vk -> v1 over pair ids."""

    vertices: tuple[int, ...]

    def __post_init__(self) -> None:
        vs = self.vertices
        if len(vs) < 2 or len(set(vs)) != len(vs):
            raise ValueError(f"cycle needs >= 2 distinct vertices, got {vs}")
        if vs[0] != min(vs):
            raise ValueError("cycle is not in canonical rotation; use Cycle.of()")

    @classmethod
    def of(cls, vertices: Iterable[int]) -> Cycle:
        vs = tuple(vertices)
        i = vs.index(min(vs))
        return cls(vs[i:] + vs[:i])

    def __len__(self) -> int:
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def edges(self) -> list[tuple[int, int]]:
        vs = self.vertices
        return [(vs[i], vs[(i + 1) % len(vs)]) for i in range(len(vs))]


class _Uniforms(Protocol):
    def random(self) -> float: ...


class CompatibilityGraph:
    """Directed compatibility graph over patient-donor pairs.

    Edge ``(u, v)`` means the donor of ``u`` can give to the patient of
    ``v``. Crossmatch outcomes are drawn once, when the later of the two
    pairs is inserted, and never redrawn.
    """

    def __init__(self, pra_enabled: bool = True) -> None:
        self.pra_enabled = pra_enabled
        self.pairs: dict[int, PatientDonorPair] = {}
        self.out_edges: dict[int, set[int]] = {}
        self.in_edges: dict[int, set[int]] = {}

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair_id: int) -> bool:
        return pair_id in self.pairs

    @property
    def edges(self) -> set[tuple[int, int]]:
        return {(u, v) for u, vs in self.out_edges.items() for v in vs}

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.out_edges.get(u, ())

    def _crossmatch_ok(self, rng: KeyedStream | _Uniforms, donor_id: int, patient: PatientDonorPair) -> bool:
        if not self.pra_enabled:
            return True
        if isinstance(rng, KeyedStream):
            draw = rng.uniform(donor_id, patient.pair_id)
        else:
            draw = rng.random()
        return draw >= patient.patient_pra

    def add_pair(self, pair: PatientDonorPair, rng: KeyedStream | _Uniforms) -> list[tuple[int, int]]:
        """Insert ``pair`` and return the edges created, in insertion order.

        ``rng`` is either a numpy ``Generator`` (draws consumed in order of
        existing pair id, outgoing before incoming) or a ``KeyedStream``
        (draw keyed by donor and patient pair ids).
        """
        new = pair.pair_id
        if new in self.pairs:
            raise ValueError(f"pair_id {new} already in graph")
        added = []
        outs: set[int] = set()
        ins: set[int] = set()
        for other_id in sorted(self.pairs):
            other = self.pairs[other_id]
            if blood_compatible(pair.donor_blood, other.patient_blood) and self._crossmatch_ok(rng, new, other):
                outs.add(other_id)
                self.in_edges[other_id].add(new)
                added.append((new, other_id))
            if blood_compatible(other.donor_blood, pair.patient_blood) and self._crossmatch_ok(rng, other_id, pair):
                ins.add(other_id)
                self.out_edges[other_id].add(new)
                added.append((other_id, new))
        self.pairs[new] = pair
        self.out_edges[new] = outs
        self.in_edges[new] = ins
        return added

    def add_edge(self, u: int, v: int) -> None:
        """Wire an edge by hand (fixtures, snapshot replays)."""
        if u == v:
            raise ValueError("self-loops are not allowed")
        if u not in self.pairs or v not in self.pairs:
            raise KeyError(f"unknown vertex in edge ({u}, {v})")
        self.out_edges[u].add(v)
        self.in_edges[v].add(u)

    def remove_pair(self, pair_id: int) -> PatientDonorPair:
        pair = self.pairs.pop(pair_id)
        for v in self.out_edges.pop(pair_id):
            self.in_edges[v].discard(pair_id)
        for u in self.in_edges.pop(pair_id):
            self.out_edges[u].discard(pair_id)
        return pair

    def copy(self) -> CompatibilityGraph:
        g = CompatibilityGraph(self.pra_enabled)
        g.pairs = dict(self.pairs)
        g.out_edges = {k: set(v) for k, v in self.out_edges.items()}
        g.in_edges = {k: set(v) for k, v in self.in_edges.items()}
        return g


def enumerate_cycles(
    graph: CompatibilityGraph,
    max_length: int = DEFAULT_MAX_CYCLE,
    through: Iterable[int] | None = None,
) -> list[Cycle]:
    """All simple directed cycles of length 2..max_length, sorted.

    With ``through``, only cycles that visit at least one of the given
    vertices are returned.
    """
    if max_length < 2:
        raise ValueError("max_length must be >= 2")
    out = graph.out_edges
    found: set[Cycle] = set()

    if through is None:
        # Canonical start is the cycle's minimum vertex, so only climb upward.
        for start in sorted(out):
            stack = [(start, (start,))]
            while stack:
                cur, path = stack.pop()
                for nxt in out[cur]:
                    if nxt == start and len(path) >= 2:
                        found.add(Cycle(path))
                    elif nxt > start and nxt not in path and len(path) < max_length:
                        stack.append((nxt, path + (nxt,)))
    else:
        for start in set(through):
            if start not in out:
                continue
            stack = [(start, (start,))]
            while stack:
                cur, path = stack.pop()
                for nxt in out[cur]:
                    if nxt == start and len(path) >= 2:
                        found.add(Cycle.of(path))
                    elif nxt not in path and len(path) < max_length:
                        stack.append((nxt, path + (nxt,)))
    return sorted(found, key=lambda c: (len(c), c.vertices))


POOL_COLUMNS = ("pair_id", "donor_blood", "patient_blood", "pra", "profile_id", "arrival_day")


def dump_pool(pairs: Iterable[PatientDonorPair]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(POOL_COLUMNS)
    for p in sorted(pairs, key=lambda p: p.pair_id):
        writer.writerow(
            [p.pair_id, p.donor_blood.value, p.patient_blood.value, repr(p.patient_pra), p.profile.id, p.arrival_day]
        )
    return buf.getvalue()


def write_pool(path: str | Path, pairs: Iterable[PatientDonorPair]) -> None:
    Path(path).write_text(dump_pool(pairs), encoding="utf-8", newline="")


def parse_pool(text: str, path: str | None = None) -> list[PatientDonorPair]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != POOL_COLUMNS:
        raise ParseError(f"expected header {','.join(POOL_COLUMNS)}", path, 1)
    pairs = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            pid, donor, patient, pra, profile_id, day = row
            pair = PatientDonorPair(
                pair_id=int(pid),
                donor_blood=BloodType(donor),
                patient_blood=BloodType(patient),
                patient_pra=float(pra),
                profile=PROFILES[int(profile_id)],
                arrival_day=int(day),
            )
        except (ValueError, KeyError) as exc:
            raise ParseError(f"bad pool row {row!r}: {exc}", path, lineno) from None
        if pair.pair_id in seen:
            raise ParseError(f"duplicate pair_id {pair.pair_id}", path, lineno)
        seen.add(pair.pair_id)
        pairs.append(pair)
    return pairs


def read_pool(path: str | Path) -> list[PatientDonorPair]:
    return parse_pool(Path(path).read_text(encoding="utf-8"), str(path))
