"""Exact clearing of cycle-based kidney exchanges.

Both programs solved here choose vertex-disjoint cycles with binary
activations:

* maximum cardinality: maximise the number of covered vertices;
* weighted with floor: maximise total cycle weight subject to covering at
  least ``Q`` vertices, where ``Q`` comes from the first program.

The search is a depth-first branch and bound that branches on the most
constrained uncovered vertex (cover it with one of its cycles, or leave it
uncovered). Each free vertex contributes ``max(0, w_c / |c|)`` over its
still-available cycles to the weight bound and one unit to the cardinality
bound; both are admissible for any disjoint cycle set.

Instances with at least ``LP_BOUND_MIN_CYCLES`` cycles use the same
branching scheme on cycle variables but bound each node with the linear
relaxation (each vertex covered at most once, plus the floor row), solved
by HiGHS through ``scipy.optimize.linprog``. That bound is far tighter on
dense pools, where many vertices can each be covered but not jointly.
Integral LP optima are re-scored in exact arithmetic before acceptance.

Co-optimal solutions are split by a seeded secondary objective: each cycle
gets a uniform tie value ``u_c`` in ``[0, 1)``. Among solutions whose true
objective is optimal up to float tolerance, the one maximising the sum of
``u_c`` wins (lexicographic comparison). The LP path searches
``w + eps * u`` with ``eps = 1e-7 * (1 + max|w_c|)`` and then certifies the
answer against the true weights. Tie values never enter reported weights.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import InfeasibleError, ParseError
from .graph import Cycle

BRUTE_FORCE_MAX_CYCLES = 20
LP_BOUND_MIN_CYCLES = 48
_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass(frozen=True)
class WeightedCycleSet:
    cycles: tuple[Cycle, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.cycles) != len(self.weights):
            raise ValueError("cycles and weights differ in length")

    @classmethod
    def from_edge_weights(cls, cycles: Iterable[Cycle], edge_weight: Callable[[int, int], float]) -> WeightedCycleSet:
        cycles = tuple(cycles)
        weights = tuple(math.fsum(edge_weight(u, v) for u, v in c.edges()) for c in cycles)
        return cls(cycles, weights)

    @classmethod
    def unit(cls, cycles: Iterable[Cycle]) -> WeightedCycleSet:
        return cls.from_edge_weights(cycles, lambda u, v: 1.0)

    def __len__(self) -> int:
        return len(self.cycles)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.cycles)

    @property
    def cycle_weight(self) -> dict[Cycle, float]:
        return dict(zip(self.cycles, self.weights))

    def scaled(self, factor: float) -> WeightedCycleSet:
        return WeightedCycleSet(self.cycles, tuple(w * factor for w in self.weights))


@dataclass(frozen=True)
class Matching:
    cycles: tuple[Cycle, ...]
    cardinality: int
    total_weight: float

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for c in self.cycles:
            if seen.intersection(c.vertices):
                raise ValueError(f"cycle {c.vertices} overlaps another selected cycle")
            seen.update(c.vertices)
        if self.cardinality != len(seen):
            raise ValueError("cardinality does not match the selected cycles")

    @classmethod
    def from_indices(cls, cs: WeightedCycleSet, indices: Iterable[int]) -> Matching:
        idx = sorted(indices)
        cycles = tuple(cs.cycles[i] for i in idx)
        return cls(cycles, sum(len(c) for c in cycles), math.fsum(cs.weights[i] for i in idx))

    @property
    def vertices(self) -> set[int]:
        return {v for c in self.cycles for v in c.vertices}

    def donations(self) -> list[tuple[int, int]]:
        return [e for c in self.cycles for e in c.edges()]


def _tie_values(n: int, seed: int | None) -> np.ndarray:
    return np.random.default_rng(seed).random(n)


def _branch_and_bound(
    vertex_sets: Sequence[tuple[int, ...]],
    weights: Sequence[float],
    perturb: Sequence[float],
    floor: int,
) -> list[int] | None:
    """Indices of the lexicographically best (weight, perturbation) disjoint
    cycle set covering at least ``floor`` vertices, or None if infeasible."""
    n = len(vertex_sets)
    sizes = [len(vs) for vs in vertex_sets]
    # Branch on heavy cycles first so good incumbents appear early.
    by_vertex: dict[int, list[int]] = {}
    for i in sorted(range(n), key=lambda i: (-weights[i] / sizes[i], -perturb[i], i)):
        for v in vertex_sets[i]:
            by_vertex.setdefault(v, []).append(i)
    ratio_w = [max(0.0, weights[i] / sizes[i]) for i in range(n)]
    ratio_p = [perturb[i] / sizes[i] for i in range(n)]
    n_vertices = len(by_vertex)
    tol = _exact_tol(weights, n_vertices)

    best: list = [None, -math.inf, -math.inf]

    def search(blocked: frozenset[int], chosen: list[int], cur_w: float, cur_p: float, cur_card: int) -> None:
        ub_w, ub_p, ub_card = cur_w, cur_p, cur_card
        branch_v, branch_opts = None, None
        for v, cands in by_vertex.items():
            if v in blocked:
                continue
            opts = [i for i in cands if blocked.isdisjoint(vertex_sets[i])]
            if not opts:
                continue
            ub_w += max(ratio_w[i] for i in opts)
            ub_p += max(ratio_p[i] for i in opts)
            ub_card += 1
            if branch_opts is None or len(opts) < len(branch_opts):
                branch_v, branch_opts = v, opts
        if ub_card < floor:
            return
        if best[0] is not None:
            if ub_w < best[1] - tol or (ub_w <= best[1] + tol and ub_p <= best[2]):
                return
        if branch_v is None:
            if cur_card >= floor and (
                best[0] is None
                or cur_w > best[1] + tol
                or (cur_w >= best[1] - tol and cur_p > best[2])
            ):
                best[0], best[1], best[2] = list(chosen), cur_w, cur_p
            return
        for i in branch_opts:
            chosen.append(i)
            search(blocked.union(vertex_sets[i]), chosen, cur_w + weights[i], cur_p + perturb[i], cur_card + sizes[i])
            chosen.pop()
        search(blocked | {branch_v}, chosen, cur_w, cur_p, cur_card)

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * n_vertices + 100))
    try:
        search(frozenset(), [], 0.0, 0.0, 0)
    finally:
        sys.setrecursionlimit(limit)
    return best[0]


def _exact_tol(weights: Sequence[float], n_vertices: int) -> float:
    """Float slack below which two matching weights count as equal."""
    return 8 * sys.float_info.epsilon * (1.0 + max((abs(w) for w in weights), default=0.0)) * max(1, n_vertices)


def _relaxation(c: np.ndarray, a_ub: sparse.csr_matrix, b_ub: np.ndarray, bounds: np.ndarray):
    """Solve one LP relaxation, retrying with HiGHS defaults if the tight
    tolerances leave the status undetermined."""
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs-ds", options=_LP_OPTIONS)
    if res.status not in (0, 2):
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    return res


def _lp_search(
    incidence: sparse.csr_matrix,
    objective: np.ndarray,
    rows: list[tuple[np.ndarray, float]],
    accept: Callable[[list[int]], bool],
    score: Callable[[list[int]], float],
    tol: float,
    incumbent: list[int] | None = None,
) -> list[int] | None:
    """Maximise ``objective @ x`` over binary ``x`` with ``incidence @ x <= 1``
    and ``a @ x >= b`` for each ``(a, b)`` in ``rows``.

    A node is pruned when its bound does not beat the incumbent by more
    than ``tol``. Nodes are bounded by the LP relaxation. Integral LP optima are re-checked
    with ``accept`` and scored with ``score`` in exact arithmetic; a rejected
    point is cut off with a no-good row and its node is solved again.
    """
    n = incidence.shape[1]
    base_a = sparse.vstack([incidence] + [sparse.csr_matrix(-a) for a, _ in rows], format="csr")
    base_b = np.concatenate([np.ones(incidence.shape[0]), [-b for _, b in rows]])
    best, best_val = incumbent, (score(incumbent) if incumbent is not None else -math.inf)
    stack: list[tuple[np.ndarray, np.ndarray, list[np.ndarray]]] = [(np.zeros(n), np.ones(n), [])]
    while stack:
        lo, hi, cuts = stack.pop()
        a_ub, b_ub = base_a, base_b
        if cuts:
            a_ub = sparse.vstack([base_a, sparse.csr_matrix(np.array(cuts))], format="csr")
            b_ub = np.concatenate([base_b, [np.sum(c > 0) - 1.0 for c in cuts]])
        res = _relaxation(-objective, a_ub, b_ub, np.column_stack([lo, hi]))
        if res.status == 2:
            continue
        if res.status != 0:
            raise FloatingPointError(f"LP relaxation failed: {res.message}")
        if best is not None and -res.fun <= best_val + tol:
            continue
        x = res.x
        frac = np.abs(x - np.round(x))
        if frac.max() <= 1e-6:
            chosen = np.flatnonzero(x > 0.5).tolist()
            if accept(chosen):
                val = score(chosen)
                if best is None or val > best_val:
                    best, best_val = chosen, val
            else:
                cut = np.where(x > 0.5, 1.0, -1.0)
                stack.append((lo, hi, cuts + [cut]))
            continue
        i = int(np.argmax(frac))
        lo1, hi0 = lo.copy(), hi.copy()
        lo1[i], hi0[i] = 1.0, 0.0
        stack.append((lo, hi0, cuts))
        stack.append((lo1, hi, cuts))
    return best


def _lp_branch_and_bound(
    vertex_sets: Sequence[tuple[int, ...]],
    weights: Sequence[float],
    ties: np.ndarray,
    floor: int,
) -> list[int] | None:
    """Same contract as ``_branch_and_bound`` with ``perturb = eps * ties``.

    The perturbed objective is searched first; a second search on the true
    weights, seeded with that answer, certifies it. Only if the certificate
    fails (a near-tie below the perturbation scale) are ties resolved by an
    explicit search over the weight-optimal face.
    """
    verts = sorted({v for vs in vertex_sets for v in vs})
    row = {v: k for k, v in enumerate(verts)}
    cols = [i for i, vs in enumerate(vertex_sets) for _ in vs]
    rws = [row[v] for vs in vertex_sets for v in vs]
    incidence = sparse.csr_matrix((np.ones(len(cols)), (rws, cols)), shape=(len(verts), len(vertex_sets)))
    sizes = np.array([len(vs) for vs in vertex_sets], dtype=float)
    w = np.asarray(weights, dtype=float)
    eps = 1e-7 * (1.0 + float(np.max(np.abs(w), initial=0.0)))
    card_row = [(sizes, float(floor))] if floor > 0 else []

    def covers(chosen: list[int]) -> bool:
        return int(sum(sizes[i] for i in chosen)) >= floor

    def weight(chosen: list[int]) -> float:
        return math.fsum(w[i] for i in chosen)

    def tie_score(chosen: list[int]) -> float:
        return math.fsum(ties[i] for i in chosen)

    scale = 1.0 + float(np.max(np.abs(w), initial=0.0))
    candidate = _lp_search(incidence, w + eps * ties, card_row, covers,
                           lambda c: weight(c) + eps * tie_score(c), 1e-6 * eps)
    if candidate is None:
        return None
    best = _lp_search(incidence, w, card_row, covers, weight, 1e-10 * scale, candidate)
    tol = _exact_tol(weights, len(verts))
    target = weight(best)
    if target <= weight(candidate) + tol:
        return candidate

    def near_optimal(chosen: list[int]) -> bool:
        return covers(chosen) and weight(chosen) >= target - tol

    slack = 1e-7 * (1.0 + float(np.sum(np.abs(w))))
    rows = card_row + [(w, target - slack)]
    return _lp_search(incidence, ties, rows, near_optimal, tie_score, 1e-9, best)


def _solve(cs: WeightedCycleSet, weights: Sequence[float], floor: int, seed: int | None,
           lp_bound: bool | None) -> list[int] | None:
    vertex_sets = [c.vertices for c in cs.cycles]
    ties = _tie_values(len(cs), seed)
    if lp_bound is None:
        lp_bound = len(cs) >= LP_BOUND_MIN_CYCLES
    if lp_bound:
        return _lp_branch_and_bound(vertex_sets, weights, ties, floor)
    eps = 1e-7 * (1.0 + max((abs(x) for x in weights), default=0.0))
    return _branch_and_bound(vertex_sets, weights, list(ties * eps), floor)


def solve_max_cardinality(
    cs: WeightedCycleSet, seed: int | None = None, lp_bound: bool | None = None
) -> tuple[Matching, int]:
    """Maximum-cardinality matching and its cardinality ``Q``.

    Ties among maximum-cardinality matchings are broken at random under
    ``seed``. The returned matching reports the weights carried by ``cs``.
    ``lp_bound`` forces (True) or disables (False) the LP-bounded search;
    by default it is used from ``LP_BOUND_MIN_CYCLES`` cycles up.
    """
    if not len(cs):
        return Matching((), 0, 0.0), 0
    chosen = _solve(cs, [float(s) for s in cs.sizes], 0, seed, lp_bound)
    matching = Matching.from_indices(cs, chosen or [])
    return matching, matching.cardinality


def solve_weighted_with_floor(
    cs: WeightedCycleSet, q: int, seed: int | None = None, lp_bound: bool | None = None
) -> Matching:
    """Maximum-weight matching among those covering at least ``q`` vertices."""
    if not len(cs):
        if q <= 0:
            return Matching((), 0, 0.0)
        raise InfeasibleError(f"no disjoint cycle set covers {q} vertices")
    chosen = _solve(cs, list(cs.weights), q, seed, lp_bound)
    if chosen is None:
        raise InfeasibleError(f"no disjoint cycle set covers {q} vertices")
    return Matching.from_indices(cs, chosen)


def brute_force_clear(cs: WeightedCycleSet, q: int) -> Matching:
    """Exhaustive reference solver over all disjoint cycle subsets.

    Ties in total weight go to the lexicographically smallest tuple of cycle
    indices. Refuses instances with more than ``BRUTE_FORCE_MAX_CYCLES``.
    """
    n = len(cs)
    if n > BRUTE_FORCE_MAX_CYCLES:
        raise ValueError(f"brute force is capped at {BRUTE_FORCE_MAX_CYCLES} cycles, got {n}")
    vsets = [frozenset(c.vertices) for c in cs.cycles]
    best: tuple[float, tuple[int, ...]] | None = None

    def visit(start: int, used: frozenset[int], chosen: tuple[int, ...], card: int) -> None:
        nonlocal best
        if card >= q:
            w = math.fsum(cs.weights[i] for i in chosen)
            if best is None or w > best[0] or (w == best[0] and chosen < best[1]):
                best = (w, chosen)
        for i in range(start, n):
            if used.isdisjoint(vsets[i]):
                visit(i + 1, used | vsets[i], chosen + (i,), card + len(vsets[i]))

    visit(0, frozenset(), (), 0)
    if best is None:
        raise InfeasibleError(f"no disjoint cycle set covers {q} vertices")
    return Matching.from_indices(cs, best[1])


def dump_instance(cs: WeightedCycleSet, q: int) -> str:
    lines = [f"Q={q}", "cycle_id,vertices,weight"]
    for i, (c, w) in enumerate(zip(cs.cycles, cs.weights)):
        lines.append(f"{i},{' '.join(map(str, c.vertices))},{w!r}")
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> tuple[WeightedCycleSet, int]:
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith("Q=") or lines[1] != "cycle_id,vertices,weight":
        raise ParseError("missing instance header", line=1)
    try:
        q = int(lines[0][2:])
    except ValueError:
        raise ParseError(f"bad Q header {lines[0]!r}", line=1) from None
    cycles, weights = [], []
    for lineno, line in enumerate(lines[2:], start=3):
        try:
            cid, verts, w = line.split(",")
            if int(cid) != len(cycles):
                raise ValueError("cycle ids must be consecutive from 0")
            cycles.append(Cycle.of(int(v) for v in verts.split()))
            weights.append(float(w))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return WeightedCycleSet(tuple(cycles), tuple(weights)), q
