"""Aggregation of simulation runs into summary tables.

Quartiles are Tukey hinges: the medians of the lower and upper halves of
the sorted sample, both halves including the overall median when the
sample size is odd. Numbers are written with 9 significant digits.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ParseError
from .graph import PROFILE_IDS
from .simulator import Condition, RunMetrics, average_rank

CONDITION_ORDER = (Condition.EQUAL, Condition.HOMOGENEOUS, Condition.HETEROGENEOUS)

RUN_COLUMNS = (
    ("run_id", "condition", "seed", "average_rank", "total_entered", "total_matched")
    + tuple(f"entered_{k}" for k in PROFILE_IDS)
    + tuple(f"matched_{k}" for k in PROFILE_IDS)
)
RANK_COLUMNS = ("condition", "run_id", "average_rank")
PROPORTION_COLUMNS = ("condition", "profile_id", "n_runs", "min", "q1", "median", "q3", "max", "pooled")
CONDITION_COLUMNS = (
    "condition", "n_runs", "rank_min", "rank_q1", "rank_median", "rank_q3", "rank_max",
    "total_entered", "total_matched", "proportion_matched",
)

RANKS_FILE = "ranks.csv"
PROPORTIONS_FILE = "proportions.csv"
CONDITIONS_FILE = "conditions.csv"


def fmt(x: float | int | None) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return format(x, ".9g")


def round9(x: float | None) -> float | None:
    return None if x is None else float(fmt(x))


def median(xs: Sequence[float]) -> float:
    s = sorted(xs)
    n = len(s)
    if not n:
        raise ValueError("median of an empty sample")
    mid = n // 2
    return s[mid] if n % 2 else (s[mid - 1] + s[mid]) / 2


@dataclass(frozen=True)
class Quartiles:
    min: float
    q1: float
    median: float
    q3: float
    max: float

    @classmethod
    def of(cls, xs: Sequence[float]) -> Quartiles | None:
        if not xs:
            return None
        s = sorted(xs)
        n = len(s)
        half = (n + 1) // 2
        return cls(s[0], median(s[:half]), median(s), median(s[n - half:]), s[-1])


@dataclass(frozen=True)
class RunRecord:
    """Run-level numbers needed for reporting."""

    run_id: int
    condition: Condition
    seed: int
    average_rank: float | None
    entered: dict[int, int]
    matched: dict[int, int]

    @classmethod
    def from_metrics(cls, run_id: int, metrics: RunMetrics) -> RunRecord:
        # Carried at written precision so tables rebuilt from runs.csv match.
        return cls(run_id, metrics.condition, metrics.seed, round9(average_rank(metrics)),
                   dict(metrics.entered), dict(metrics.matched))

    @property
    def total_entered(self) -> int:
        return sum(self.entered.values())

    @property
    def total_matched(self) -> int:
        return sum(self.matched.values())


@dataclass
class ConditionSummary:
    condition: Condition
    run_ids: list[int] = field(default_factory=list)
    ranks: list[float | None] = field(default_factory=list)
    proportions: dict[int, list[float]] = field(default_factory=lambda: {k: [] for k in PROFILE_IDS})
    entered: dict[int, int] = field(default_factory=lambda: {k: 0 for k in PROFILE_IDS})
    matched: dict[int, int] = field(default_factory=lambda: {k: 0 for k in PROFILE_IDS})

    @property
    def rank_stats(self) -> Quartiles | None:
        return Quartiles.of([r for r in self.ranks if r is not None])

    def proportion_stats(self, profile_id: int) -> Quartiles | None:
        return Quartiles.of(self.proportions[profile_id])

    def pooled_proportion(self, profile_id: int) -> float | None:
        e = self.entered[profile_id]
        return self.matched[profile_id] / e if e else None

    @property
    def total_entered(self) -> int:
        return sum(self.entered.values())

    @property
    def total_matched(self) -> int:
        return sum(self.matched.values())

    @property
    def proportion_matched(self) -> float | None:
        return self.total_matched / self.total_entered if self.total_entered else None


@dataclass
class ExperimentSummary:
    conditions: dict[Condition, ConditionSummary]

    def __getitem__(self, condition: Condition | str) -> ConditionSummary:
        return self.conditions[Condition(condition)]

    def median_rank(self, condition: Condition | str) -> float | None:
        c = Condition(condition)
        if c not in self.conditions:
            return None
        stats = self.conditions[c].rank_stats
        return None if stats is None else stats.median


def summarize(
    runs: Iterable[RunRecord | RunMetrics],
    conditions: Iterable[Condition | str] | None = None,
) -> ExperimentSummary:
    """Group runs by condition; runs given as metrics are numbered in order."""
    records = [r if isinstance(r, RunRecord) else RunRecord.from_metrics(i, r) for i, r in enumerate(runs)]
    wanted = [Condition(c) for c in conditions] if conditions is not None else [
        c for c in CONDITION_ORDER if any(r.condition is c for r in records)
    ]
    out = {c: ConditionSummary(c) for c in wanted}
    for r in records:
        if r.condition not in out:
            continue
        cs = out[r.condition]
        cs.run_ids.append(r.run_id)
        cs.ranks.append(r.average_rank)
        for k in PROFILE_IDS:
            cs.entered[k] += r.entered[k]
            cs.matched[k] += r.matched[k]
            if r.entered[k]:
                cs.proportions[k].append(r.matched[k] / r.entered[k])
    return ExperimentSummary(out)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(x) if isinstance(x, float) or x is None else x for x in row])
    try:
        path.write_text(buf.getvalue(), encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _q(stats: Quartiles | None) -> list[float | None]:
    if stats is None:
        return [None] * 5
    return [stats.min, stats.q1, stats.median, stats.q3, stats.max]


def emit_tables(summary: ExperimentSummary, out_dir: str | Path) -> list[Path]:
    """Write ranks, proportions and per-condition tables into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    ordered = [summary.conditions[c] for c in CONDITION_ORDER if c in summary.conditions]

    rank_rows = [
        (cs.condition.value, run_id, r) for cs in ordered for run_id, r in zip(cs.run_ids, cs.ranks)
    ]
    prop_rows = [
        (cs.condition.value, k, len(cs.proportions[k]), *_q(cs.proportion_stats(k)), cs.pooled_proportion(k))
        for cs in ordered
        for k in PROFILE_IDS
    ]
    cond_rows = [
        (cs.condition.value, len(cs.run_ids), *_q(cs.rank_stats), cs.total_entered, cs.total_matched,
         cs.proportion_matched)
        for cs in ordered
    ]
    paths = [out / RANKS_FILE, out / PROPORTIONS_FILE, out / CONDITIONS_FILE]
    _write_csv(paths[0], RANK_COLUMNS, rank_rows)
    _write_csv(paths[1], PROPORTION_COLUMNS, prop_rows)
    _write_csv(paths[2], CONDITION_COLUMNS, cond_rows)
    return paths


def _read_csv(path: Path, header: Sequence[str]) -> list[dict[str, str]]:
    text = path.read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != tuple(header):
        raise ParseError(f"expected header {','.join(header)}", str(path), 1)
    return list(reader)


def _num(s: str) -> float | None:
    return None if s == "" else float(s)


def read_tables(out_dir: str | Path) -> dict[str, list[dict[str, object]]]:
    """Parse the emitted tables back into typed rows."""
    out = Path(out_dir)
    ranks = [
        {"condition": r["condition"], "run_id": int(r["run_id"]), "average_rank": _num(r["average_rank"])}
        for r in _read_csv(out / RANKS_FILE, RANK_COLUMNS)
    ]
    props = []
    for r in _read_csv(out / PROPORTIONS_FILE, PROPORTION_COLUMNS):
        row: dict[str, object] = {"condition": r["condition"], "profile_id": int(r["profile_id"]),
                                  "n_runs": int(r["n_runs"])}
        row.update({k: _num(r[k]) for k in PROPORTION_COLUMNS[3:]})
        props.append(row)
    conds = []
    for r in _read_csv(out / CONDITIONS_FILE, CONDITION_COLUMNS):
        row = {"condition": r["condition"], "n_runs": int(r["n_runs"]),
               "total_entered": int(r["total_entered"]), "total_matched": int(r["total_matched"])}
        row.update({k: _num(r[k]) for k in ("rank_min", "rank_q1", "rank_median", "rank_q3", "rank_max",
                                            "proportion_matched")})
        conds.append(row)
    return {"ranks": ranks, "proportions": props, "conditions": conds}


def write_runs(path: str | Path, records: Iterable[RunRecord]) -> None:
    rows = [
        (r.run_id, r.condition.value, r.seed, r.average_rank, r.total_entered, r.total_matched,
         *(r.entered[k] for k in PROFILE_IDS), *(r.matched[k] for k in PROFILE_IDS))
        for r in records
    ]
    _write_csv(Path(path), RUN_COLUMNS, rows)


def read_runs(path: str | Path) -> list[RunRecord]:
    path = Path(path)
    records = []
    for lineno, r in enumerate(_read_csv(path, RUN_COLUMNS), start=2):
        try:
            rec = RunRecord(
                run_id=int(r["run_id"]),
                condition=Condition(r["condition"]),
                seed=int(r["seed"]),
                average_rank=_num(r["average_rank"]),
                entered={k: int(r[f"entered_{k}"]) for k in PROFILE_IDS},
                matched={k: int(r[f"matched_{k}"]) for k in PROFILE_IDS},
            )
        except (ValueError, TypeError) as exc:
            raise ParseError(f"bad run row: {exc}", str(path), lineno) from None
        if rec.total_entered != int(r["total_entered"]) or rec.total_matched != int(r["total_matched"]):
            raise ParseError("totals disagree with per-profile counts", str(path), lineno)
        records.append(rec)
    return records

