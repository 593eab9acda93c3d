"""Cleaning pipeline for behavior tracks and segmentation into training clips.

Stage order: outlier detection -> transition bridging -> median smoothing ->
pose centering -> listening clamp -> 4-second segmentation. Every stage is
length-preserving except segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import (
    AUS,
    BEHAVIOR_DIM,
    CENTERED,
    HEAD_ROTATION,
    SPEAKING_FLAG,
    SPEECH_DIM,
    Track,
)

SEGMENT_FRAMES = 100  # 4 s at 25 fps


@dataclass(frozen=True)
class OutlierPolicy:
    """Thresholds deciding which extracted frames are untrustworthy."""

    min_confidence: float = 0.8
    max_rotation_jump: float = 0.3   # radians per frame, any head axis
    require_success: bool = True

    def __post_init__(self):
        if self.min_confidence <= 0 or self.max_rotation_jump <= 0:
            raise ValueError("outlier thresholds must be positive")


@dataclass(frozen=True)
class ClipPair:
    """One aligned 100-frame speech/behavior training window."""

    speech: np.ndarray      # (length, 22)
    behavior: np.ndarray    # (length, 28)
    source_id: str = ""
    start_frame: int = 0

    def __post_init__(self):
        speech = np.asarray(self.speech, dtype=float)
        behavior = np.asarray(self.behavior, dtype=float)
        if speech.shape[0] != behavior.shape[0]:
            raise ValueError("speech and behavior clips must have the same length")
        if speech.shape[1] != SPEECH_DIM or behavior.shape[1] != BEHAVIOR_DIM:
            raise ValueError("clip matrices have wrong feature dimensionality")
        speech.flags.writeable = False
        behavior.flags.writeable = False
        object.__setattr__(self, "speech", speech)
        object.__setattr__(self, "behavior", behavior)

    @property
    def n_frames(self) -> int:
        return self.speech.shape[0]

    @property
    def speaking_share(self) -> float:
        return float(self.speech[:, SPEAKING_FLAG].mean())


def detect_outliers(track: Track, policy: OutlierPolicy = OutlierPolicy()) -> set[int]:
    """Frames failing the success/confidence rules or jumping in head rotation.

    The rotation rule compares each frame against the previous *kept* frame,
    so a single spike does not condemn its clean successors.
    """
    if track.n_frames == 0:
        raise ValueError("empty track")
    confidence = track.confidence
    success = track.success
    rotation = track.data[:, HEAD_ROTATION]
    outliers: set[int] = set()
    last_kept = None
    for i in range(track.n_frames):
        bad = False
        if policy.require_success and success is not None and success[i] == 0:
            bad = True
        if confidence is not None and confidence[i] < policy.min_confidence:
            bad = True
        if not bad and last_kept is not None:
            jump = np.abs(rotation[i] - rotation[last_kept])
            if np.any(jump > policy.max_rotation_jump):
                bad = True
        if bad:
            outliers.add(i)
        else:
            last_kept = i
    return outliers


def bridge_transitions(track: Track, removed: set[int]) -> Track:
    """Replace removed frames by per-feature linear interpolation.

    Gaps at either boundary are filled by extending the nearest kept frame.
    """
    n = track.n_frames
    removed = {i for i in removed if 0 <= i < n}
    kept = np.array(sorted(set(range(n)) - removed))
    if kept.size == 0:
        raise ValueError("track unusable: all frames removed")
    if not removed:
        return track
    data = track.data.copy()
    xs = np.arange(n)
    for j in range(data.shape[1]):
        data[:, j] = np.interp(xs, kept, data[kept, j])
    return track.with_data(data)


def median_smooth(track: Track, window: int = 7) -> Track:
    """Per-feature sliding median; windows are truncated at the edges."""
    if window % 2 == 0:
        raise ValueError("median window must be odd")
    if window < 3:
        raise ValueError("median window must be >= 3")
    n = track.n_frames
    if n < window:
        raise ValueError(f"track length {n} shorter than window {window}")
    half = window // 2
    data = track.data
    out = np.empty_like(data)
    for t in range(n):
        lo = max(0, t - half)
        hi = min(n, t + half + 1)
        out[t] = np.median(data[lo:hi], axis=0)
    return track.with_data(out)


def center_track(track: Track) -> Track:
    """Shift head/gaze channels so the per-track median pose faces front.

    AU channels are untouched.
    """
    if track.kind != "behavior":
        raise ValueError("centering applies to behavior tracks")
    if track.n_frames == 0:
        raise ValueError("empty track")
    data = track.data.copy()
    median = np.median(data[:, CENTERED], axis=0)
    data[:, CENTERED] -= median
    return track.with_data(data)


def clamp_listening(behavior: Track, speech: Track) -> Track:
    """Zero all behavior features on frames where the speaking flag is 0."""
    if behavior.n_frames != speech.n_frames:
        raise ValueError(
            f"length mismatch: behavior {behavior.n_frames} vs speech {speech.n_frames}"
        )
    flags = speech.data[:, SPEAKING_FLAG]
    data = behavior.data.copy()
    data[flags == 0] = 0.0
    return behavior.with_data(data)


def segment(speech: Track, behavior: Track, length: int = SEGMENT_FRAMES,
            stride: int | None = None) -> list[ClipPair]:
    """Cut aligned tracks into consecutive fixed-length clip pairs.

    The default stride equals the length (non-overlapping windows); a smaller
    stride can be configured for augmentation. A trailing remainder shorter
    than one segment is dropped; tracks shorter than one segment yield no clips.
    """
    if length <= 0:
        raise ValueError("segment length must be positive")
    if speech.n_frames != behavior.n_frames:
        raise ValueError("tracks must be aligned before segmentation")
    if stride is None:
        stride = length
    if stride <= 0:
        raise ValueError("stride must be positive")
    clips = []
    start = 0
    while start + length <= speech.n_frames:
        clips.append(ClipPair(
            speech=speech.data[start:start + length],
            behavior=behavior.data[start:start + length],
            source_id=speech.source_id,
            start_frame=start,
        ))
        start += stride
    return clips


def preprocess_pair(speech: Track, behavior: Track,
                    policy: OutlierPolicy = OutlierPolicy(),
                    median_window: int = 7,
                    remove_outliers: bool = True,
                    smooth: bool = True,
                    center: bool = True,
                    clamp: bool = True) -> tuple[Track, Track]:
    """Run the cleaning stages on one aligned speech/behavior pair."""
    if remove_outliers:
        removed = detect_outliers(behavior, policy)
        behavior = bridge_transitions(behavior, removed)
    if smooth:
        behavior = median_smooth(behavior, median_window)
    if center:
        behavior = center_track(behavior)
    if clamp:
        behavior = clamp_listening(behavior, speech)
    return speech, behavior


def save_clips(clips_dir, clips, splits: dict[str, str], stats) -> None:
    """Persist clips as per-clip .npz matrices plus a manifest and norm stats.

    The manifest lists clip id, source, split, and start frame; matrices are
    stored unnormalized (post-clamp) and normalized on load by consumers.
    """
    import csv
    import os

    os.makedirs(os.path.join(clips_dir, "clips"), exist_ok=True)
    rows = []
    for clip in clips:
        clip_id = f"{clip.source_id}_f{clip.start_frame:06d}"
        np.savez(
            os.path.join(clips_dir, "clips", f"{clip_id}.npz"),
            speech=clip.speech, behavior=clip.behavior,
        )
        rows.append({
            "clip_id": clip_id,
            "source_id": clip.source_id,
            "split": splits[clip.source_id],
            "start_frame": clip.start_frame,
        })
    with open(os.path.join(clips_dir, "manifest.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["clip_id", "source_id", "split", "start_frame"])
        writer.writeheader()
        writer.writerows(rows)
    stats.save(os.path.join(clips_dir, "norm_stats.txt"))


def load_clips(clips_dir, split: str | None = None):
    """Load persisted clips (optionally one split) and the stored norm stats."""
    import csv
    import os

    from .features import NormStats

    clips, clip_ids = [], []
    with open(os.path.join(clips_dir, "manifest.csv"), "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if split is not None and row["split"] != split:
                continue
            bundle = np.load(os.path.join(clips_dir, "clips", f"{row['clip_id']}.npz"))
            clips.append(ClipPair(
                speech=bundle["speech"], behavior=bundle["behavior"],
                source_id=row["source_id"], start_frame=int(row["start_frame"]),
            ))
            clip_ids.append(row["clip_id"])
    stats = NormStats.load(os.path.join(clips_dir, "norm_stats.txt"))
    return clips, clip_ids, stats


def interaction_id(source_id: str) -> str:
    """Both halves of one interaction share the id before the `_p<n>` suffix."""
    if "_p" in source_id:
        stem, _, tail = source_id.rpartition("_p")
        if tail.isdigit():
            return stem
    return source_id


def assign_splits(source_ids, test_fraction: float = 0.25, rng=None) -> dict[str, str]:
    """Map each source to "train"/"test"; both halves of an interaction agree."""
    if rng is None:
        rng = np.random.default_rng(0)
    interactions = sorted({interaction_id(s) for s in source_ids})
    n_test = max(1, round(len(interactions) * test_fraction)) if len(interactions) > 1 else 0
    order = rng.permutation(len(interactions))
    test = {interactions[i] for i in order[:n_test]}
    return {
        s: ("test" if interaction_id(s) in test else "train")
        for s in source_ids
    }
