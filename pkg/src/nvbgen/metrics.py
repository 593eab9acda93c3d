"""Objective motion metrics: per-feature DTW against ground truth, plus
average acceleration and jerk of the eye/head channels.

DTW is computed feature-wise with absolute-difference step costs and the
symmetric {match, insert, delete} pattern; track-level distance is the mean
over the 28 behavior features. Acceleration and jerk are finite differences
of the two gaze direction vectors and the head rotation (9 channels),
reported as mean absolute values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import MOTION_CHANNELS, Track


def dtw_distance(a, b) -> float:
    """Minimal cumulative |a_i - b_j| alignment cost between two sequences."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("cannot align an empty sequence")
    n, m = a.size, b.size
    cost = np.abs(a[:, None] - b[None, :])
    acc = np.full((n, m), np.inf)
    acc[0, 0] = cost[0, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
        row_prev = acc[i - 1]
        row = acc[i]
        for j in range(1, m):
            row[j] = cost[i, j] + min(row_prev[j], row[j - 1], row_prev[j - 1])
    return float(acc[-1, -1])


def dtw_track(a: Track, b: Track) -> float:
    """Feature-wise DTW averaged over all behavior channels."""
    if a.data.shape[1] != b.data.shape[1]:
        raise ValueError(
            f"feature dimensionality mismatch: {a.data.shape[1]} vs {b.data.shape[1]}"
        )
    per_feature = [dtw_distance(a.data[:, j], b.data[:, j]) for j in range(a.data.shape[1])]
    return float(np.mean(per_feature))


def motion_stats(track: Track) -> tuple[float, float]:
    """(acceleration, jerk): mean |second/third difference| of the motion channels.

    Differences are scaled by fps^2 and fps^3 so the values are in physical
    units of the sampled quantity per second^2 / second^3.
    """
    if track.n_frames < 4:
        raise ValueError("track too short for motion statistics (need >= 4 frames)")
    fps = track.frame_rate
    q = track.data[:, MOTION_CHANNELS]
    acc = np.abs(np.diff(q, n=2, axis=0)) * fps**2
    jerk = np.abs(np.diff(q, n=3, axis=0)) * fps**3
    return float(acc.mean()), float(jerk.mean())


@dataclass(frozen=True)
class ConditionStats:
    dtw_mean: float | None
    dtw_std: float | None
    acc_mean: float
    acc_std: float
    jerk_mean: float
    jerk_std: float


@dataclass(frozen=True)
class MetricReport:
    """Per-condition metric summary over a shared clip set, ground truth first."""

    conditions: tuple[str, ...]          # ordered, ground truth first
    stats: dict = field(default_factory=dict)  # name -> ConditionStats
    n_clips: int = 0

    def to_tsv(self) -> str:
        lines = ["condition\tdtw_mean\tdtw_std\tacc_mean\tacc_std\tjerk_mean\tjerk_std"]
        for name in self.conditions:
            s = self.stats[name]
            dtw_mean = "-" if s.dtw_mean is None else f"{s.dtw_mean:.6g}"
            dtw_std = "-" if s.dtw_std is None else f"{s.dtw_std:.6g}"
            lines.append(
                f"{name}\t{dtw_mean}\t{dtw_std}\t{s.acc_mean:.6g}\t{s.acc_std:.6g}"
                f"\t{s.jerk_mean:.6g}\t{s.jerk_std:.6g}"
            )
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        """Formatted table: metric rows, one mean/std column pair per condition."""
        header = ["metric"] + [f"{n} mean\t{n} std" for n in self.conditions]
        rows = []
        for metric, attr_mean, attr_std in (
            ("DTW", "dtw_mean", "dtw_std"),
            ("Acc.", "acc_mean", "acc_std"),
            ("Jerk", "jerk_mean", "jerk_std"),
        ):
            cells = [metric]
            for name in self.conditions:
                s = self.stats[name]
                mean = getattr(s, attr_mean)
                std = getattr(s, attr_std)
                if mean is None:
                    cells.append("-\t-")
                else:
                    cells.append(f"{mean:.2f}\t{std:.2f}")
            rows.append("\t".join(cells))
        return "\t".join(header) + "\n" + "\n".join(rows) + "\n"


def _sample_stats(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return mean, std


def build_report(conditions: dict[str, dict[str, Track]],
                 ground_truth: dict[str, Track],
                 ground_truth_name: str = "ground_truth") -> MetricReport:
    """Compare each condition against ground truth over the same clip set."""
    gt_ids = sorted(ground_truth)
    for name, tracks in conditions.items():
        missing = sorted(set(gt_ids) - set(tracks))
        extra = sorted(set(tracks) - set(gt_ids))
        if missing or extra:
            raise ValueError(
                f"condition {name!r} clip mismatch: missing {missing}, unexpected {extra}"
            )

    stats: dict[str, ConditionStats] = {}
    gt_motion = [motion_stats(ground_truth[cid]) for cid in gt_ids]
    acc_mean, acc_std = _sample_stats([m[0] for m in gt_motion])
    jerk_mean, jerk_std = _sample_stats([m[1] for m in gt_motion])
    stats[ground_truth_name] = ConditionStats(
        dtw_mean=None, dtw_std=None,
        acc_mean=acc_mean, acc_std=acc_std,
        jerk_mean=jerk_mean, jerk_std=jerk_std,
    )
    for name, tracks in conditions.items():
        dtw_values = [dtw_track(tracks[cid], ground_truth[cid]) for cid in gt_ids]
        motion = [motion_stats(tracks[cid]) for cid in gt_ids]
        dtw_mean, dtw_std = _sample_stats(dtw_values)
        acc_mean, acc_std = _sample_stats([m[0] for m in motion])
        jerk_mean, jerk_std = _sample_stats([m[1] for m in motion])
        stats[name] = ConditionStats(
            dtw_mean=dtw_mean, dtw_std=dtw_std,
            acc_mean=acc_mean, acc_std=acc_std,
            jerk_mean=jerk_mean, jerk_std=jerk_std,
        )
    ordered = (ground_truth_name,) + tuple(conditions.keys())
    return MetricReport(conditions=ordered, stats=stats, n_clips=len(gt_ids))
