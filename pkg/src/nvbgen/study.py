"""Perceptual-study backend: randomized rating sessions, append-only record
persistence, descriptive statistics, and a repeated-measures comparison of
the rated conditions.

Participants rate two criteria in fixed block order: believability first
(videos muted), then speech/behavior coordination (with audio). Within each
block the sequence pages are shuffled per participant, and the four
condition videos on a page are shuffled per page. Navigation is forward
only: a submitted page can never be revisited or resubmitted.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as scipy_stats

SCALE = (0, 100)

DEFAULT_QUESTIONS = {
    "believability": "How human-like do the behaviors of the virtual agent appear?",
    "coordination": "How well does the agent's behavior match the speech, in rhythm and intonation?",
}


@dataclass(frozen=True)
class Criterion:
    name: str
    muted: bool
    question: str


DEFAULT_CRITERIA = (
    Criterion("believability", muted=True, question=DEFAULT_QUESTIONS["believability"]),
    Criterion("coordination", muted=False, question=DEFAULT_QUESTIONS["coordination"]),
)


@dataclass(frozen=True)
class StudyConfig:
    sequences: tuple[str, ...]
    conditions: tuple[str, ...]
    video_uris: dict            # (criterion, sequence, condition) -> uri
    criteria: tuple[Criterion, ...] = DEFAULT_CRITERIA
    scale: tuple[int, int] = SCALE

    def __post_init__(self):
        if self.scale != SCALE:
            raise ValueError("the rating scale is fixed at 0..100")
        if len(set(self.conditions)) != len(self.conditions):
            raise ValueError("conditions must be unique")
        for criterion in self.criteria:
            for sequence in self.sequences:
                for condition in self.conditions:
                    if (criterion.name, sequence, condition) not in self.video_uris:
                        raise ValueError(
                            f"missing video for ({criterion.name}, {sequence}, {condition})"
                        )

    @property
    def total_pages(self) -> int:
        return len(self.criteria) * len(self.sequences)


@dataclass(frozen=True)
class PageSpec:
    page_index: int
    criterion: str
    question: str
    muted: bool
    sequence_id: str
    condition_order: tuple[str, ...]   # on-screen order, randomized per page


@dataclass(frozen=True)
class SessionState:
    participant_id: str
    pages: tuple[PageSpec, ...]
    current_index: int = 0
    completed: bool = False

    def current_page(self) -> PageSpec | None:
        if self.completed:
            return None
        return self.pages[self.current_index]


@dataclass(frozen=True)
class RatingRecord:
    participant_id: str
    criterion: str
    sequence_id: str
    condition: str
    score: int
    page_index: int
    shown_index: int
    timestamp: float

    def __post_init__(self):
        if not isinstance(self.score, int) or not SCALE[0] <= self.score <= SCALE[1]:
            raise ValueError(f"score must be an integer in [{SCALE[0]}, {SCALE[1]}]")

    def to_json(self) -> str:
        return json.dumps({
            "participant_id": self.participant_id,
            "criterion": self.criterion,
            "sequence_id": self.sequence_id,
            "condition": self.condition,
            "score": self.score,
            "page_index": self.page_index,
            "shown_index": self.shown_index,
            "timestamp": self.timestamp,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RatingRecord":
        raw = json.loads(line)
        return cls(**raw)


def create_session(config: StudyConfig, rng, participant_id: str | None = None) -> SessionState:
    """Randomized page plan: block order fixed, pages and slots shuffled."""
    participant_id = participant_id or uuid.uuid4().hex[:12]
    pages = []
    index = 0
    for criterion in config.criteria:   # believability block always first
        sequence_order = [config.sequences[i] for i in rng.permutation(len(config.sequences))]
        for sequence in sequence_order:
            condition_order = tuple(
                config.conditions[i] for i in rng.permutation(len(config.conditions))
            )
            pages.append(PageSpec(
                page_index=index,
                criterion=criterion.name,
                question=criterion.question,
                muted=criterion.muted,
                sequence_id=sequence,
                condition_order=condition_order,
            ))
            index += 1
    return SessionState(participant_id=participant_id, pages=tuple(pages))


class PageRejected(ValueError):
    pass


def submit_page(session: SessionState, page_index: int, ratings: dict,
                now: float | None = None) -> tuple[SessionState, list[RatingRecord]]:
    """Validate one page of ratings and advance the session.

    `ratings` maps condition -> integer score. Exactly the page's four
    conditions must be present; past pages are locked forever.
    """
    if session.completed:
        raise PageRejected("navigation locked: session already completed")
    if page_index < session.current_index:
        raise PageRejected("navigation locked: page already submitted")
    if page_index > session.current_index:
        raise PageRejected(f"page {page_index} is not open yet")
    page = session.pages[session.current_index]
    expected = set(page.condition_order)
    got = set(ratings)
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise PageRejected(
            f"ratings must cover each condition exactly once "
            f"(missing {missing}, unexpected {extra})"
        )
    now = time.time() if now is None else now
    records = []
    for condition, score in ratings.items():
        if not isinstance(score, int) or isinstance(score, bool):
            raise PageRejected(f"score for {condition} must be an integer")
        if not SCALE[0] <= score <= SCALE[1]:
            raise PageRejected(f"score {score} outside [{SCALE[0]}, {SCALE[1]}]")
        records.append(RatingRecord(
            participant_id=session.participant_id,
            criterion=page.criterion,
            sequence_id=page.sequence_id,
            condition=condition,
            score=score,
            page_index=page.page_index,
            shown_index=page.condition_order.index(condition),
            timestamp=now,
        ))
    next_index = session.current_index + 1
    advanced = replace(
        session,
        current_index=min(next_index, len(session.pages) - 1),
        completed=next_index >= len(session.pages),
    )
    return advanced, records


class RecordStore:
    """Append-only newline-delimited record file; appends are serialized."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()

    def append_all(self, records) -> None:
        payload = "".join(r.to_json() + "\n" for r in records)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(payload)

    def read_all(self) -> list[RatingRecord]:
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                return [RatingRecord.from_json(line) for line in fh if line.strip()]
        except FileNotFoundError:
            return []


def _participant_cell_means(records, criterion):
    """participant -> condition -> mean score over sequences."""
    cells: dict[str, dict[str, list[int]]] = {}
    for r in records:
        if r.criterion != criterion:
            continue
        cells.setdefault(r.participant_id, {}).setdefault(r.condition, []).append(r.score)
    return {
        pid: {cond: float(np.mean(scores)) for cond, scores in conditions.items()}
        for pid, conditions in cells.items()
    }


def descriptive_stats(records) -> dict:
    """Per-(criterion, condition) sample mean/std of participant-level scores.

    Participant scores are first averaged over sequences; cells with no
    records are flagged rather than silently dropped.
    """
    criteria = sorted({r.criterion for r in records})
    conditions = sorted({r.condition for r in records})
    out = {"cells": {}, "empty_cells": []}
    for criterion in criteria:
        per_participant = _participant_cell_means(records, criterion)
        for condition in conditions:
            values = [
                cells[condition] for cells in per_participant.values()
                if condition in cells
            ]
            key = (criterion, condition)
            if not values:
                out["empty_cells"].append(key)
                continue
            arr = np.asarray(values)
            out["cells"][key] = {
                "mean": float(arr.mean()),
                "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
                "n": int(arr.size),
            }
    return out


@dataclass(frozen=True)
class PairwiseComparison:
    condition_a: str
    condition_b: str
    mean_difference: float     # b - a
    p_value: float
    significance: str          # "p<.01", "p<.05", or "n.s."


@dataclass(frozen=True)
class AnovaResult:
    criterion: str
    f_statistic: float
    p_value: float
    df_conditions: int
    df_error: int
    pairwise: tuple[PairwiseComparison, ...]
    note: str = "repeated-measures ANOVA without sphericity correction"


def _significance(p: float) -> str:
    if p < 0.01:
        return "p<.01"
    if p < 0.05:
        return "p<.05"
    return "n.s."


def _paired_p_value(differences: np.ndarray) -> float:
    """Paired comparison p; constant differences resolve exactly."""
    n = differences.size
    sd = differences.std(ddof=1) if n > 1 else 0.0
    if sd == 0.0:
        return 1.0 if np.all(differences == 0.0) else 0.0
    t = differences.mean() / (sd / np.sqrt(n))
    return float(2.0 * scipy_stats.t.sf(abs(t), n - 1))


def rm_anova(records, criterion: str) -> AnovaResult:
    """One-way repeated-measures ANOVA over conditions, participants repeated."""
    per_participant = _participant_cell_means(records, criterion)
    if not per_participant:
        raise ValueError(f"no records for criterion {criterion!r}")
    conditions = sorted({r.condition for r in records if r.criterion == criterion})
    missing = [
        (pid, cond)
        for pid, cells in sorted(per_participant.items())
        for cond in conditions
        if cond not in cells
    ]
    if missing:
        raise ValueError(f"incomplete design, missing cells: {missing}")

    participants = sorted(per_participant)
    matrix = np.array([
        [per_participant[pid][cond] for cond in conditions] for pid in participants
    ])
    n, k = matrix.shape
    grand = matrix.mean()
    ss_conditions = n * float(((matrix.mean(axis=0) - grand) ** 2).sum())
    ss_subjects = k * float(((matrix.mean(axis=1) - grand) ** 2).sum())
    ss_total = float(((matrix - grand) ** 2).sum())
    ss_error = ss_total - ss_conditions - ss_subjects
    df_conditions = k - 1
    df_error = (k - 1) * (n - 1)
    if ss_conditions <= 1e-12:
        f_stat, p = 0.0, 1.0
    elif ss_error <= 1e-12 or df_error == 0:
        f_stat, p = float("inf"), 0.0
    else:
        f_stat = (ss_conditions / df_conditions) / (ss_error / df_error)
        p = float(scipy_stats.f.sf(f_stat, df_conditions, df_error))

    pairwise = []
    for i in range(k):
        for j in range(i + 1, k):
            differences = matrix[:, j] - matrix[:, i]
            p_pair = _paired_p_value(differences)
            pairwise.append(PairwiseComparison(
                condition_a=conditions[i],
                condition_b=conditions[j],
                mean_difference=float(differences.mean()),
                p_value=p_pair,
                significance=_significance(p_pair),
            ))
    return AnovaResult(
        criterion=criterion,
        f_statistic=f_stat,
        p_value=p,
        df_conditions=df_conditions,
        df_error=df_error,
        pairwise=tuple(pairwise),
    )


def complete_participants(records, total_records: int) -> set[str]:
    counts: dict[str, int] = {}
    for r in records:
        counts[r.participant_id] = counts.get(r.participant_id, 0) + 1
    return {pid for pid, count in counts.items() if count >= total_records}


def analyze_records(records, total_records_per_session: int | None = None) -> dict:
    """Full analysis: descriptive stats plus RM-ANOVA per criterion.

    Incomplete sessions are excluded by default when the expected per-session
    record count is known.
    """
    records = list(records)
    excluded = []
    if total_records_per_session:
        keep = complete_participants(records, total_records_per_session)
        excluded = sorted({r.participant_id for r in records} - keep)
        records = [r for r in records if r.participant_id in keep]
    result = {
        "descriptive": descriptive_stats(records),
        "anova": {},
        "excluded_participants": excluded,
        "n_records": len(records),
    }
    for criterion in sorted({r.criterion for r in records}):
        try:
            result["anova"][criterion] = rm_anova(records, criterion)
        except ValueError as exc:
            result["anova"][criterion] = str(exc)
    return result


def format_analysis(analysis: dict) -> str:
    lines = ["perceptual study analysis", "=" * 40]
    cells = analysis["descriptive"]["cells"]
    for (criterion, condition), cell in sorted(cells.items()):
        lines.append(
            f"{criterion:15s} {condition:12s} mean {cell['mean']:6.2f}  "
            f"std {cell['std']:6.2f}  n {cell['n']}"
        )
    for criterion, anova in sorted(analysis["anova"].items()):
        if isinstance(anova, str):
            lines.append(f"{criterion}: ANOVA unavailable ({anova})")
            continue
        lines.append(
            f"{criterion}: F({anova.df_conditions}, {anova.df_error}) = "
            f"{anova.f_statistic:.3f}, p = {anova.p_value:.4f}  [{anova.note}]"
        )
        for cmp in anova.pairwise:
            lines.append(
                f"  {cmp.condition_b} vs {cmp.condition_a}: "
                f"diff {cmp.mean_difference:+.2f} ({cmp.significance})"
            )
    if analysis["excluded_participants"]:
        lines.append(f"excluded incomplete sessions: {analysis['excluded_participants']}")
    return "\n".join(lines) + "\n"
