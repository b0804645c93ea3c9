"""Behavioral and accuracy analysis: exploration profiles, Jensen-Shannon
distances, confusion matrices, per-round summaries, human-log ingestion.

Exploration profiles normalize attention over the five objects of a trial:
touch counts for robot trials, dwell-time fractions for human logs. The
Jensen-Shannon distance here is the square root of the base-2 divergence,
which is symmetric and bounded in [0, 1].
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .engine import TrialResult
from .errors import (
    AlignmentError,
    DistributionError,
    EmptyProfile,
    LogParseError,
    UnknownFabric,
)

PROFILE_ROBOT = "robot_touch_counts"
PROFILE_HUMAN = "human_time_fractions"


@dataclass
class ExplorationProfile:
    """Normalized attention over the five objects (reference + platforms 1..4)."""

    weights: np.ndarray
    source: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (5,):
            raise DistributionError(f"profile needs 5 weights, got shape {w.shape}")
        if (w < 0).any():
            raise DistributionError("profile has negative weights")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise DistributionError(f"profile sums to {float(w.sum())}, not 1")
        self.weights = w


@dataclass
class HumanLog:
    """One participant's visit sequence and answer for one trial."""

    participant_id: str
    trial_id: str
    events: tuple  # ordered (object_index 0..4, duration_s) pairs
    final_answer: int  # platform 1..4
    correct: Optional[bool] = None

    def __post_init__(self):
        events = tuple((int(o), float(d)) for o, d in self.events)
        for obj, dur in events:
            if not 0 <= obj <= 4:
                raise DistributionError(f"object index {obj} outside 0..4")
            if dur <= 0:
                raise DistributionError(f"duration must be > 0, got {dur}")
        if not 1 <= int(self.final_answer) <= 4:
            raise DistributionError(f"final answer {self.final_answer} outside 1..4")
        self.events = events
        self.final_answer = int(self.final_answer)


@dataclass
class ConfusionMatrix:
    fabrics: tuple
    counts: np.ndarray  # (F, F) ints, rows = true fabric, cols = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def js_distance(p, q) -> float:
    """Jensen-Shannon distance: sqrt of the base-2 JS divergence.

    0 for identical distributions, exactly 1 for disjoint supports.
    Inputs must be same-length probability vectors (sum within 1e-6 of 1).
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise DistributionError(f"incompatible shapes {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if (v < 0).any():
            raise DistributionError(f"{name} has negative entries")
        if abs(float(v.sum()) - 1.0) > 1e-6:
            raise DistributionError(f"{name} sums to {float(v.sum())}, not 1")
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_p = float(np.where(p > 0.0, p * np.log2(np.where(p > 0.0, p / m, 1.0)), 0.0).sum())
        kl_q = float(np.where(q > 0.0, q * np.log2(np.where(q > 0.0, q / m, 1.0)), 0.0).sum())
    jsd = 0.5 * kl_p + 0.5 * kl_q
    jsd = min(max(jsd, 0.0), 1.0)
    return math.sqrt(jsd)


def exploration_profile(source) -> ExplorationProfile:
    """Profile from a TrialResult (touch counts) or HumanLog (time fractions)."""
    if isinstance(source, TrialResult):
        counts = np.asarray(source.touch_counts, dtype=np.float64)
        total = counts.sum()
        if total <= 0:
            raise EmptyProfile("trial has no touches")
        return ExplorationProfile(weights=counts / total, source=PROFILE_ROBOT)
    if isinstance(source, HumanLog):
        durations = np.zeros(5)
        for obj, dur in source.events:
            durations[obj] += dur
        total = durations.sum()
        if total <= 0:
            raise EmptyProfile("human log has no visits")
        return ExplorationProfile(weights=durations / total, source=PROFILE_HUMAN)
    raise EmptyProfile(f"cannot build a profile from {type(source).__name__}")


def profile_from_counts(counts, source=PROFILE_ROBOT) -> ExplorationProfile:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if counts.shape != (5,) or total <= 0:
        raise EmptyProfile(f"invalid touch counts {counts!r}")
    return ExplorationProfile(weights=counts / total, source=source)


def compare_strategies(profiles_a: Sequence, profiles_b: Sequence) -> float:
    """Mean per-trial JS distance between two trial-aligned profile lists."""
    if len(profiles_a) != len(profiles_b):
        raise AlignmentError(
            f"profile lists differ in length: {len(profiles_a)} vs {len(profiles_b)}"
        )
    if not profiles_a:
        raise AlignmentError("profile lists are empty")
    return float(
        np.mean([js_distance(a.weights, b.weights) for a, b in zip(profiles_a, profiles_b)])
    )


def confusion_matrix(results: Sequence, fabrics=None) -> ConfusionMatrix:
    """Count (reference fabric, predicted fabric) pairs over trials."""
    universe = set()
    for r in results:
        universe.add(r.spec.reference_fabric)
        universe.update(r.spec.comparison_fabrics)
    if fabrics is None:
        fabrics = tuple(sorted(universe))
    else:
        fabrics = tuple(fabrics)
        missing = universe - set(fabrics)
        if missing:
            raise UnknownFabric(f"trial fabrics {sorted(missing)} not in the given universe")
    index = {f: i for i, f in enumerate(fabrics)}
    counts = np.zeros((len(fabrics), len(fabrics)), dtype=np.int64)
    for r in results:
        true = index[r.spec.reference_fabric]
        predicted = index[r.spec.comparison_fabrics[r.final_platform - 1]]
        counts[true, predicted] += 1
    return ConfusionMatrix(fabrics=fabrics, counts=counts)


SUMMARY_METRICS = ("accuracy", "train_accuracy", "mean_variance", "mean_entropy")


def _metric_value(metrics, name):
    if name == "accuracy":
        return 1.0 if metrics.correct else 0.0
    return float(getattr(metrics, name))


def summarize(results: Sequence, metrics=SUMMARY_METRICS) -> dict:
    """Per-round mean and sample standard deviation of each metric.

    Returns {metric: [(round, mean, std), ...]} ordered by round. The std is
    the n-1 sample deviation, 0 when only one value contributes.
    """
    if not results:
        raise AlignmentError("no results to summarize")
    by_round = {}
    for r in results:
        for rm in r.rounds:
            by_round.setdefault(rm.round_index, []).append(rm)
    out = {}
    for metric in metrics:
        rows = []
        for rnd in sorted(by_round):
            vals = np.array([_metric_value(rm, metric) for rm in by_round[rnd]])
            std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
            rows.append((rnd, float(vals.mean()), std))
        out[metric] = rows
    return out


def _matches_most_touched(weights_1to4: np.ndarray, answer: int) -> bool:
    best = weights_1to4.max()
    tied = np.nonzero(weights_1to4 >= best - 1e-12)[0] + 1
    return answer in tied


def most_touched_equals_prediction(items: Sequence) -> float:
    """Fraction of trials whose most-touched comparison platform is the answer.

    Accepts TrialResults or HumanLogs. Ties count as a match only when the
    answer is among the tied maxima (a uniform profile therefore matches).
    """
    if not items:
        raise AlignmentError("no trials supplied")
    hits = 0
    for item in items:
        profile = exploration_profile(item)
        answer = item.final_answer if isinstance(item, HumanLog) else item.final_platform
        if _matches_most_touched(profile.weights[1:5], answer):
            hits += 1
    return hits / len(items)


HUMAN_LOG_HEADER = [
    "participant_id",
    "trial_id",
    "event_index",
    "object_index",
    "duration_s",
    "final_answer",
]


def load_human_logs(path) -> list:
    """Parse a human-study CSV into HumanLogs, one per (participant, trial).

    Expected header: participant_id,trial_id,event_index,object_index,
    duration_s,final_answer. object_index 0 is the reference, 1..4 the
    comparison platforms. Raises LogParseError with the offending line.
    """
    path = Path(path)
    if not path.is_file():
        raise LogParseError(0, f"human log {path} does not exist")
    groups = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LogParseError(1, "empty file") from None
        if [h.strip() for h in header] != HUMAN_LOG_HEADER:
            raise LogParseError(1, f"unexpected header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(HUMAN_LOG_HEADER):
                raise LogParseError(line_no, f"expected {len(HUMAN_LOG_HEADER)} fields, got {len(row)}")
            pid, tid = row[0].strip(), row[1].strip()
            try:
                event_index = int(row[2])
                obj = int(row[3])
                duration = float(row[4])
                answer = int(row[5])
            except ValueError as exc:
                raise LogParseError(line_no, str(exc)) from None
            if not 0 <= obj <= 4:
                raise LogParseError(line_no, f"object_index {obj} outside 0..4")
            if duration <= 0:
                raise LogParseError(line_no, f"duration_s must be > 0, got {duration}")
            if not 1 <= answer <= 4:
                raise LogParseError(line_no, f"final_answer {answer} outside 1..4")
            key = (pid, tid)
            group = groups.setdefault(key, {"events": [], "answer": answer, "line": line_no})
            if group["answer"] != answer:
                raise LogParseError(line_no, f"conflicting final_answer for {key}")
            group["events"].append((event_index, obj, duration))
    logs = []
    for (pid, tid), group in sorted(groups.items()):
        events = [(obj, dur) for _, obj, dur in sorted(group["events"])]
        logs.append(
            HumanLog(participant_id=pid, trial_id=tid, events=tuple(events), final_answer=group["answer"])
        )
    return logs
