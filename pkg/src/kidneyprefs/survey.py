"""Pairwise-comparison survey data over the eight patient profiles."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import ParseError
from .graph import PROFILE_IDS

PAIRS: tuple[tuple[int, int], ...] = tuple(combinations(PROFILE_IDS, 2))
SURVEY_COLUMNS = ("respondent_id", "profile_i", "profile_j", "chosen_id")


@dataclass(frozen=True)
class Respondent:
    respondent_id: int
    choices: dict[tuple[int, int], int]

    def __post_init__(self) -> None:
        for (i, j), c in self.choices.items():
            if not i < j:
                raise ValueError(f"pair keys must be ordered (i < j), got {(i, j)}")
            if c not in (i, j):
                raise ValueError(f"respondent {self.respondent_id}: choice {c} not in pair {(i, j)}")

    @property
    def complete(self) -> bool:
        return len(self.choices) == len(PAIRS) and set(self.choices) == set(PAIRS)

    def outcome_matrix(self) -> np.ndarray:
        """8x8 0/1 matrix, entry [i-1, j-1] set when i was chosen over j."""
        m = np.zeros((len(PROFILE_IDS), len(PROFILE_IDS)))
        for (i, j), c in self.choices.items():
            loser = j if c == i else i
            m[c - 1, loser - 1] += 1
        return m


@dataclass
class SurveyDataset:
    respondents: list[Respondent]

    def __len__(self) -> int:
        return len(self.respondents)

    def incomplete(self) -> list[int]:
        return [r.respondent_id for r in self.respondents if not r.complete]

    def validate(self) -> None:
        ids = [r.respondent_id for r in self.respondents]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate respondent ids")
        bad = self.incomplete()
        if bad:
            raise ValueError(f"respondents missing pairs: {bad}")

    def outcome_tensor(self) -> np.ndarray:
        """(N, 8, 8) stack of per-respondent outcome matrices."""
        if not self.respondents:
            return np.zeros((0, len(PROFILE_IDS), len(PROFILE_IDS)))
        return np.stack([r.outcome_matrix() for r in self.respondents])

    def win_matrix(self) -> np.ndarray:
        """Pooled counts: entry [i-1, j-1] is how often i beat j."""
        return self.outcome_tensor().sum(axis=0)


def dump_survey(survey: SurveyDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SURVEY_COLUMNS)
    for r in survey.respondents:
        for (i, j) in sorted(r.choices):
            writer.writerow([r.respondent_id, i, j, r.choices[(i, j)]])
    return buf.getvalue()


def write_survey(path: str | Path, survey: SurveyDataset) -> None:
    Path(path).write_text(dump_survey(survey), encoding="utf-8", newline="")


def parse_survey(text: str, path: str | None = None, require_complete: bool = True) -> SurveyDataset:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or tuple(h.strip() for h in header) != SURVEY_COLUMNS:
        raise ParseError(f"expected header {','.join(SURVEY_COLUMNS)}", path, 1)
    choices: dict[int, dict[tuple[int, int], int]] = {}
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        try:
            rid, i, j, c = (int(x) for x in row)
        except ValueError:
            raise ParseError(f"expected 4 integers, got {row!r}", path, lineno) from None
        if i > j:
            i, j = j, i
        if (i, j) not in PAIRS:
            raise ParseError(f"invalid profile pair ({i}, {j})", path, lineno)
        if c not in (i, j):
            raise ParseError(f"chosen profile {c} not in pair ({i}, {j})", path, lineno)
        answers = choices.setdefault(rid, {})
        if (i, j) in answers:
            raise ParseError(f"respondent {rid} answers pair ({i}, {j}) twice", path, lineno)
        answers[(i, j)] = c
    survey = SurveyDataset([Respondent(rid, ans) for rid, ans in choices.items()])
    if require_complete:
        bad = survey.incomplete()
        if bad:
            raise ParseError(f"respondents missing some of the {len(PAIRS)} pairs: {bad}", path)
    return survey


def read_survey(path: str | Path, require_complete: bool = True) -> SurveyDataset:
    return parse_survey(Path(path).read_text(encoding="utf-8"), str(path), require_complete)
