"""Parsers for behavior/speech CSV exports and stream alignment at 25 fps.

Behavior files follow the OpenFace naming convention (gaze_0_x ... AU45_r,
plus timestamp/confidence/success); speech files carry eGeMAPS low-level
descriptors at 50 fps, of which seven spectral and frequency parameters are
kept. Columns are mapped by header name, never by position.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .features import (
    BEHAVIOR_FEATURES,
    SPEECH_BASE_FEATURES,
    Track,
    behavior_track,
    speech_track,
)

BEHAVIOR_META_COLUMNS = ("timestamp", "confidence", "success")


@dataclass(frozen=True)
class RawBehaviorRow:
    timestamp: float
    confidence: float
    success: int
    values: np.ndarray  # the 28 behavior features, canonical order


@dataclass(frozen=True)
class RawSpeechRow:
    timestamp: float
    values: np.ndarray  # the 7 selected eGeMAPS features, canonical order


def _read_rows(path, required):
    """DictReader over a one-line-header CSV; verifies required columns."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file")
        header = {name.strip(): name for name in reader.fieldnames}
        for column in required:
            if column not in header:
                raise ValueError(f"missing column {column}")
        rows = []
        for i, row in enumerate(reader):
            record = {}
            for column in required:
                cell = row[header[column]]
                try:
                    record[column] = float(cell)
                except (TypeError, ValueError):
                    raise ValueError(
                        f"unparseable value {cell!r} for column {column} at row {i}"
                    ) from None
            rows.append(record)
    return rows


def _check_monotonic(timestamps, path):
    ts = np.asarray(timestamps)
    if np.any(np.diff(ts) < 0):
        raise ValueError(f"{path}: timestamps must be non-decreasing")


def parse_openface_csv(path) -> list[RawBehaviorRow]:
    """Parse a behavior CSV into per-frame rows; confidence/success preserved."""
    required = BEHAVIOR_META_COLUMNS + BEHAVIOR_FEATURES
    records = _read_rows(path, required)
    _check_monotonic([r["timestamp"] for r in records], path)
    rows = []
    for r in records:
        values = np.array([r[name] for name in BEHAVIOR_FEATURES])
        rows.append(RawBehaviorRow(
            timestamp=r["timestamp"],
            confidence=r["confidence"],
            success=int(r["success"]),
            values=values,
        ))
    return rows


def parse_opensmile_csv(path) -> list[RawSpeechRow]:
    """Parse a 50 fps speech CSV, keeping the seven selected parameters."""
    required = ("timestamp",) + SPEECH_BASE_FEATURES
    records = _read_rows(path, required)
    _check_monotonic([r["timestamp"] for r in records], path)
    return [
        RawSpeechRow(
            timestamp=r["timestamp"],
            values=np.array([r[name] for name in SPEECH_BASE_FEATURES]),
        )
        for r in records
    ]


def add_derivatives(rows) -> np.ndarray:
    """Append first and second derivatives to the 7 base features.

    Central differences on the interior, one-sided at the boundaries; the
    second derivative applies the same scheme to the first. Output is a
    (n, 21) matrix, same length as the input.
    """
    if isinstance(rows, np.ndarray):
        base = np.asarray(rows, dtype=float)
    else:
        base = np.stack([r.values for r in rows]).astype(float)
    if base.shape[0] < 3:
        raise ValueError("sequence too short for derivatives")

    def diff(x):
        d = np.empty_like(x)
        d[1:-1] = (x[2:] - x[:-2]) / 2.0
        d[0] = x[1] - x[0]
        d[-1] = x[-1] - x[-2]
        return d

    delta = diff(base)
    delta2 = diff(delta)
    return np.concatenate([base, delta, delta2], axis=1)


def downsample_speech(values: np.ndarray, timestamps: np.ndarray):
    """50 -> 25 fps by pairwise averaging; a trailing unpaired row is dropped."""
    values = np.asarray(values, dtype=float)
    timestamps = np.asarray(timestamps, dtype=float)
    n = values.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rows to downsample")
    m = n // 2
    paired = values[: 2 * m].reshape(m, 2, -1)
    ts = timestamps[: 2 * m].reshape(m, 2)
    return paired.mean(axis=1), ts.mean(axis=1)


def attach_speaking_flag(values: np.ndarray, timestamps: np.ndarray, turns) -> np.ndarray:
    """Append the binary speaking flag: 1 inside a [start, end) turn interval."""
    values = np.asarray(values, dtype=float)
    timestamps = np.asarray(timestamps, dtype=float)
    turns = sorted((float(a), float(b)) for a, b in turns)
    for (a0, b0), (a1, b1) in zip(turns, turns[1:]):
        if a1 < b0:
            raise ValueError(
                f"overlapping speaking intervals [{a0}, {b0}) and [{a1}, {b1})"
            )
    flags = np.zeros(len(timestamps), dtype=bool)
    for start, end in turns:
        flags |= (timestamps >= start) & (timestamps < end)
    return np.concatenate([values, flags.astype(float)[:, None]], axis=1)


def behavior_rows_to_track(rows, frame_rate=25.0, source_id="", speaker_role="first_person") -> Track:
    data = np.stack([r.values for r in rows])
    return behavior_track(
        data,
        frame_rate=frame_rate,
        source_id=source_id,
        speaker_role=speaker_role,
        confidence=np.array([r.confidence for r in rows]),
        success=np.array([r.success for r in rows], dtype=float),
    )


def align_tracks(speech: Track, behavior: Track) -> tuple[Track, Track]:
    """Truncate the longer track so both cover the same frame count."""
    n = min(speech.n_frames, behavior.n_frames)
    if abs(speech.n_frames - behavior.n_frames) > 1:
        warnings.warn(
            f"speech/behavior length mismatch of "
            f"{abs(speech.n_frames - behavior.n_frames)} frames for "
            f"{speech.source_id!r}; truncating to {n}"
        )
    speech_out = speech if speech.n_frames == n else speech.with_data(speech.data[:n])
    if behavior.n_frames == n:
        behavior_out = behavior
    else:
        behavior_out = behavior.with_data(
            behavior.data[:n],
            confidence=None if behavior.confidence is None else behavior.confidence[:n],
            success=None if behavior.success is None else behavior.success[:n],
        )
    return speech_out, behavior_out


def read_turns_csv(path) -> list[tuple[float, float]]:
    """Speaking-turn annotations: CSV with `start,end` columns in seconds."""
    records = _read_rows(path, ("start", "end"))
    return [(r["start"], r["end"]) for r in records]


def ingest_session(speech_csv, behavior_csv, turns, source_id="",
                   speaker_role="first_person") -> tuple[Track, Track]:
    """Full ingestion path for one recording: parse, derive, align, flag."""
    speech_rows = parse_opensmile_csv(speech_csv)
    with_deltas = add_derivatives(speech_rows)
    ts50 = np.array([r.timestamp for r in speech_rows])
    values25, ts25 = downsample_speech(with_deltas, ts50)
    if not isinstance(turns, (list, tuple)):
        turns = read_turns_csv(turns)
    speech_data = attach_speaking_flag(values25, ts25, turns)
    speech = speech_track(speech_data, source_id=source_id, speaker_role=speaker_role)

    behavior_rows = parse_openface_csv(behavior_csv)
    behavior = behavior_rows_to_track(
        behavior_rows, source_id=source_id, speaker_role=speaker_role
    )
    return align_tracks(speech, behavior)


def load_corpus(corpus_dir) -> list[tuple[Track, Track]]:
    """Ingest every recording listed in a corpus directory manifest."""
    import os

    manifest = os.path.join(corpus_dir, "manifest.csv")
    pairs = []
    with open(manifest, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            pairs.append(ingest_session(
                speech_csv=os.path.join(corpus_dir, row["speech_csv"]),
                behavior_csv=os.path.join(corpus_dir, row["behavior_csv"]),
                turns=os.path.join(corpus_dir, row["turns_csv"]),
                source_id=row["track_id"],
                speaker_role=row["speaker_role"],
            ))
    return pairs


def export_track_csv(track: Track, path, precision=10) -> None:
    """Re-export a track as a canonical 28/22-column CSV with a header."""
    names = track.feature_names
    fmt = f"%.{precision}g"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in track.data:
            fh.write(",".join(fmt % v for v in row) + "\n")
