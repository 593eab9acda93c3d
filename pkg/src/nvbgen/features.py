"""Feature vocabulary, track containers, and min-max normalization.

Behavior vectors have 28 features: two per-eye gaze direction vectors in
world coordinates (3 + 3), two gaze angles (2), head rotation (3), and 17
action-unit intensities. Speech vectors have 22 features: 7 acoustic
parameters, their first and second derivatives, and a binary speaking flag.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

AU_CODES = (
    "01", "02", "04", "05", "06", "07", "09", "10", "12",
    "14", "15", "17", "20", "23", "25", "26", "45",
)

BEHAVIOR_FEATURES = (
    "gaze_0_x", "gaze_0_y", "gaze_0_z",
    "gaze_1_x", "gaze_1_y", "gaze_1_z",
    "gaze_angle_x", "gaze_angle_y",
    "pose_Rx", "pose_Ry", "pose_Rz",
) + tuple(f"AU{code}_r" for code in AU_CODES)

SPEECH_BASE_FEATURES = (
    "alphaRatio",
    "hammarbergIndex",
    "mfcc1",
    "mfcc2",
    "mfcc3",
    "F0semitoneFrom27.5Hz",
    "logRelF0-H1-H2",
)

SPEECH_FEATURES = (
    SPEECH_BASE_FEATURES
    + tuple(f"{name}_delta" for name in SPEECH_BASE_FEATURES)
    + tuple(f"{name}_delta2" for name in SPEECH_BASE_FEATURES)
    + ("speaking",)
)

BEHAVIOR_DIM = len(BEHAVIOR_FEATURES)   # 28
SPEECH_DIM = len(SPEECH_FEATURES)       # 22

# Channel groups inside a behavior vector.
GAZE_LEFT = slice(0, 3)
GAZE_RIGHT = slice(3, 6)
GAZE_ANGLE = slice(6, 8)
HEAD_ROTATION = slice(8, 11)
AUS = slice(11, 28)
GAZE_HEAD = slice(0, 8)     # both gaze vectors + gaze angles (generator gaze head)
CENTERED = slice(0, 11)     # everything centered on the neutral pose; AUs excluded

# Channels entering the acceleration/jerk metrics: first eye, second eye, head.
MOTION_CHANNELS = tuple(range(0, 6)) + tuple(range(8, 11))

SPEAKING_FLAG = SPEECH_DIM - 1

FRAME_RATE = 25.0


@dataclass(frozen=True)
class BehaviorFrame:
    """One 28-dimensional behavior vector, validated at construction."""

    gaze_dir_left: tuple[float, float, float]
    gaze_dir_right: tuple[float, float, float]
    gaze_angle: tuple[float, float]
    head_rotation: tuple[float, float, float]
    aus: tuple[float, ...]

    def __post_init__(self):
        if len(self.gaze_dir_left) != 3 or len(self.gaze_dir_right) != 3:
            raise ValueError("gaze direction vectors must have 3 components")
        if len(self.gaze_angle) != 2:
            raise ValueError("gaze angle must have 2 components")
        if len(self.head_rotation) != 3:
            raise ValueError("head rotation must have 3 components")
        if len(self.aus) != len(AU_CODES):
            raise ValueError(f"expected {len(AU_CODES)} action units, got {len(self.aus)}")
        values = self.to_vector()
        if not np.all(np.isfinite(values)):
            raise ValueError("behavior frame contains non-finite values")
        aus = np.asarray(self.aus)
        if np.any(aus < 0.0) or np.any(aus > 5.0):
            raise ValueError("AU intensities must lie in [0, 5]")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.gaze_dir_left, self.gaze_dir_right,
            self.gaze_angle, self.head_rotation, self.aus,
        ]).astype(float)

    @classmethod
    def from_vector(cls, values) -> "BehaviorFrame":
        values = np.asarray(values, dtype=float)
        if values.shape != (BEHAVIOR_DIM,):
            raise ValueError(f"behavior frame needs exactly {BEHAVIOR_DIM} values, got {values.shape}")
        return cls(
            gaze_dir_left=tuple(values[GAZE_LEFT]),
            gaze_dir_right=tuple(values[GAZE_RIGHT]),
            gaze_angle=tuple(values[GAZE_ANGLE]),
            head_rotation=tuple(values[HEAD_ROTATION]),
            aus=tuple(values[AUS]),
        )


@dataclass(frozen=True)
class SpeechFrame:
    """One 22-dimensional acoustic vector, validated at construction."""

    base: tuple[float, ...]
    delta: tuple[float, ...]
    delta2: tuple[float, ...]
    speaking: int

    def __post_init__(self):
        for name, part in (("base", self.base), ("delta", self.delta), ("delta2", self.delta2)):
            if len(part) != len(SPEECH_BASE_FEATURES):
                raise ValueError(f"{name} must have {len(SPEECH_BASE_FEATURES)} values")
        if self.speaking not in (0, 1):
            raise ValueError("speaking flag must be 0 or 1")
        if not np.all(np.isfinite(self.to_vector())):
            raise ValueError("speech frame contains non-finite values")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.base, self.delta, self.delta2, [self.speaking]]).astype(float)

    @classmethod
    def from_vector(cls, values) -> "SpeechFrame":
        values = np.asarray(values, dtype=float)
        if values.shape != (SPEECH_DIM,):
            raise ValueError(f"speech frame needs exactly {SPEECH_DIM} values, got {values.shape}")
        flag = values[SPEAKING_FLAG]
        if flag not in (0.0, 1.0):
            raise ValueError("speaking flag must be 0 or 1")
        return cls(
            base=tuple(values[0:7]),
            delta=tuple(values[7:14]),
            delta2=tuple(values[14:21]),
            speaking=int(flag),
        )


@dataclass(frozen=True)
class Track:
    """An aligned sequence of behavior or speech frames at a fixed frame rate.

    `data` is a (n_frames, dim) float array, read-only after construction.
    Behavior tracks may carry per-frame extractor confidence/success arrays
    used only for outlier detection.
    """

    data: np.ndarray
    kind: str                       # "behavior" | "speech"
    frame_rate: float = FRAME_RATE
    source_id: str = ""
    speaker_role: str = "first_person"
    confidence: np.ndarray | None = None
    success: np.ndarray | None = None

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=float))
        if data.ndim != 2:
            raise ValueError("track data must be a (n_frames, dim) matrix")
        expected = {"behavior": BEHAVIOR_DIM, "speech": SPEECH_DIM}.get(self.kind)
        if expected is None:
            raise ValueError(f"unknown track kind {self.kind!r}")
        if data.shape[1] != expected:
            raise ValueError(
                f"{self.kind} track needs exactly {expected} features, got {data.shape[1]}"
            )
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        for attr in ("confidence", "success"):
            extra = getattr(self, attr)
            if extra is not None:
                extra = np.asarray(extra, dtype=float)
                if extra.shape != (data.shape[0],):
                    raise ValueError(f"{attr} must have one value per frame")
                extra.flags.writeable = False
                object.__setattr__(self, attr, extra)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def feature_names(self) -> tuple[str, ...]:
        return BEHAVIOR_FEATURES if self.kind == "behavior" else SPEECH_FEATURES

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.frame_rate

    def frame(self, index: int):
        vec = self.data[index]
        if self.kind == "behavior":
            return BehaviorFrame.from_vector(vec)
        return SpeechFrame.from_vector(vec)

    def with_data(self, data: np.ndarray, **overrides) -> "Track":
        """New track with replaced frame matrix, other fields preserved."""
        fields = dict(
            kind=self.kind,
            frame_rate=self.frame_rate,
            source_id=self.source_id,
            speaker_role=self.speaker_role,
            confidence=self.confidence,
            success=self.success,
        )
        fields.update(overrides)
        return Track(data=data, **fields)


def behavior_track(data, frame_rate=FRAME_RATE, source_id="", speaker_role="first_person",
                   confidence=None, success=None) -> Track:
    return Track(data=data, kind="behavior", frame_rate=frame_rate, source_id=source_id,
                 speaker_role=speaker_role, confidence=confidence, success=success)


def speech_track(data, frame_rate=FRAME_RATE, source_id="", speaker_role="first_person") -> Track:
    return Track(data=data, kind="speech", frame_rate=frame_rate, source_id=source_id,
                 speaker_role=speaker_role)


@dataclass(frozen=True)
class NormStats:
    """Per-feature minima/maxima over the training split, keyed by feature name."""

    names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray
    _index: dict = field(repr=False, default=None)

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=float)
        maxs = np.asarray(self.maxs, dtype=float)
        if mins.shape != (len(self.names),) or maxs.shape != (len(self.names),):
            raise ValueError("stats arrays must have one entry per feature name")
        if np.any(maxs < mins):
            raise ValueError("per-feature max must be >= min")
        mins.flags.writeable = False
        maxs.flags.writeable = False
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    def covers(self, names) -> bool:
        return all(n in self._index for n in names)

    def bounds_for(self, names) -> tuple[np.ndarray, np.ndarray]:
        """(mins, maxs) aligned to the requested feature names."""
        missing = [n for n in names if n not in self._index]
        if missing:
            raise ValueError(f"stats missing features: {', '.join(missing)}")
        idx = [self._index[n] for n in names]
        return self.mins[idx], self.maxs[idx]

    def save(self, path) -> None:
        """Flat text table: one `name<TAB>min<TAB>max` line per feature."""
        lines = [f"{n}\t{self.mins[i]:.17g}\t{self.maxs[i]:.17g}" for i, n in enumerate(self.names)]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "NormStats":
        names, mins, maxs = [], [], []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                name, lo, hi = line.split("\t")
                names.append(name)
                mins.append(float(lo))
                maxs.append(float(hi))
        return cls(names=tuple(names), mins=np.asarray(mins), maxs=np.asarray(maxs))


def compute_norm_stats(tracks) -> NormStats:
    """Exact per-feature extrema over all frames of the given tracks.

    Tracks of both kinds may be mixed; the result covers every feature name
    seen, in canonical vocabulary order (behavior first, then speech).
    """
    tracks = list(tracks)
    if not tracks:
        raise ValueError("no training data")
    per_feature: dict[str, tuple[float, float]] = {}
    for track in tracks:
        bad = np.argwhere(~np.isfinite(track.data))
        if bad.size:
            frame_idx = int(bad[0][0])
            raise ValueError(
                f"non-finite value in track {track.source_id!r} at frame {frame_idx}"
            )
        lo = track.data.min(axis=0)
        hi = track.data.max(axis=0)
        for j, name in enumerate(track.feature_names):
            if name in per_feature:
                old_lo, old_hi = per_feature[name]
                per_feature[name] = (min(old_lo, lo[j]), max(old_hi, hi[j]))
            else:
                per_feature[name] = (lo[j], hi[j])
    ordered = [n for n in BEHAVIOR_FEATURES + SPEECH_FEATURES if n in per_feature]
    mins = np.array([per_feature[n][0] for n in ordered])
    maxs = np.array([per_feature[n][1] for n in ordered])
    return NormStats(names=tuple(ordered), mins=mins, maxs=maxs)


def normalize_matrix(data: np.ndarray, names, stats: NormStats) -> np.ndarray:
    """Map each feature affinely onto [0, 1]; degenerate features map to 0."""
    mins, maxs = stats.bounds_for(names)
    span = maxs - mins
    out = np.zeros_like(data, dtype=float)
    live = span > 0
    out[:, live] = (data[:, live] - mins[live]) / span[live]
    return out


def denormalize_matrix(data: np.ndarray, names, stats: NormStats) -> np.ndarray:
    """Inverse of normalize_matrix; values are clamped into [0, 1] first."""
    mins, maxs = stats.bounds_for(names)
    if np.any(data < -1e-6) or np.any(data > 1.0 + 1e-6):
        warnings.warn("values outside [0, 1] clamped before denormalization")
    clamped = np.clip(data, 0.0, 1.0)
    return mins + clamped * (maxs - mins)


def normalize(track: Track, stats: NormStats) -> Track:
    return track.with_data(normalize_matrix(track.data, track.feature_names, stats))


def denormalize(track: Track, stats: NormStats) -> Track:
    return track.with_data(denormalize_matrix(track.data, track.feature_names, stats))
