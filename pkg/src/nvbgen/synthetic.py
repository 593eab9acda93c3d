"""Seeded synthetic corpus of paired speech/behavior tracks.

Stands in for real dyadic recordings at desk scale. Each interaction has two
complementary participants taking alternating speaking turns. While a person
speaks, a pseudo-pitch latent oscillates and drives the head pitch axis with
a fixed 2-frame lag, and a pseudo-energy latent drives the smile intensity
(AU12); while listening, all behavior is exactly zero. The same seed always
reproduces the corpus bit for bit.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .features import BEHAVIOR_DIM, BEHAVIOR_FEATURES, SPEECH_BASE_FEATURES, Track, behavior_track
from .ingest import (
    BEHAVIOR_META_COLUMNS,
    add_derivatives,
    attach_speaking_flag,
    downsample_speech,
)
from .features import speech_track

HEAD_PITCH = 8          # pose_Rx column
AU12 = BEHAVIOR_FEATURES.index("AU12_r")
PITCH_LAG_FRAMES = 2    # audio-to-motion lag at 25 fps
NOISE_SIGMA = 0.01


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_tracks: int = 4
    duration_s: float = 60.0
    turn_length_s: float = 8.0
    coupling_gain: float = 1.0
    expressiveness: float = 0.8

    def __post_init__(self):
        if self.n_tracks <= 0 or self.duration_s <= 0 or self.turn_length_s <= 0:
            raise ValueError("counts and durations must be positive")
        if self.coupling_gain < 0:
            raise ValueError("coupling_gain must be non-negative")
        if not 0.0 <= self.expressiveness <= 1.0:
            raise ValueError("expressiveness must lie in [0, 1]")


def _turn_schedule(config: SynthConfig, interaction: int) -> list[tuple[float, float, int]]:
    """(start, end, speaker) turns covering the track; speaker alternates 0/1."""
    rng = np.random.default_rng([config.seed, interaction, 0])
    turns = []
    t = 0.0
    speaker = 0
    while t < config.duration_s:
        length = config.turn_length_s * rng.uniform(0.6, 1.4)
        end = min(t + length, config.duration_s)
        turns.append((t, end, speaker))
        t = end
        speaker = 1 - speaker
    return turns


def _latents(rng):
    """Random phases/frequencies for one person's prosody and motion."""
    return {
        "pitch_phase": rng.uniform(0, 2 * np.pi, size=2),
        "energy_phase": rng.uniform(0, 2 * np.pi),
        "aux_phase": rng.uniform(0, 2 * np.pi, size=16),
        "au_amp": rng.uniform(0.2, 1.2, size=BEHAVIOR_DIM - 11),
    }


def _pitch(t, lat):
    return 0.6 * np.sin(2 * np.pi * 1.17 * t + lat["pitch_phase"][0]) \
        + 0.4 * np.sin(2 * np.pi * 0.31 * t + lat["pitch_phase"][1])


def _energy(t, lat):
    return 0.5 + 0.5 * np.sin(2 * np.pi * 0.53 * t + lat["energy_phase"])


def _speaking_mask(times, intervals):
    mask = np.zeros(len(times), dtype=bool)
    for start, end in intervals:
        mask |= (times >= start) & (times < end)
    return mask


@dataclass(frozen=True)
class SynthTrack:
    """One generated participant: in-memory tracks plus raw export material."""

    track_id: str
    interaction: int
    speaker_role: str
    speech: Track
    behavior: Track
    raw_speech: np.ndarray        # (n50, 7) base features at 50 fps
    raw_timestamps: np.ndarray    # (n50,)
    turns: list[tuple[float, float]]


def _synth_track(config: SynthConfig, interaction: int, person: int) -> SynthTrack:
    rng = np.random.default_rng([config.seed, interaction, person + 1])
    lat = _latents(rng)
    schedule = _turn_schedule(config, interaction)
    my_turns = [(a, b) for a, b, who in schedule if who == person]

    n50 = int(round(config.duration_s * 50))
    t50 = np.arange(n50) / 50.0
    speaking50 = _speaking_mask(t50, my_turns)

    pitch50 = _pitch(t50, lat)
    energy50 = _energy(t50, lat)
    raw = np.empty((n50, len(SPEECH_BASE_FEATURES)))
    raw[:, 0] = np.where(speaking50, -20.0 + 8.0 * energy50, -28.0)       # alphaRatio
    raw[:, 1] = np.where(speaking50,
                         18.0 + 4.0 * np.sin(2 * np.pi * 0.23 * t50 + lat["aux_phase"][0]),
                         24.0)                                            # hammarbergIndex
    raw[:, 2] = speaking50 * 9.0 * np.sin(2 * np.pi * 0.71 * t50 + lat["aux_phase"][1])
    raw[:, 3] = speaking50 * 6.0 * np.sin(2 * np.pi * 0.47 * t50 + lat["aux_phase"][2])
    raw[:, 4] = speaking50 * 4.0 * np.sin(2 * np.pi * 0.89 * t50 + lat["aux_phase"][3])
    raw[:, 5] = np.where(speaking50, 32.0 + 5.0 * pitch50, 0.0)           # F0 semitones
    raw[:, 6] = np.where(speaking50,
                         5.0 + 2.0 * np.sin(2 * np.pi * 0.13 * t50 + lat["aux_phase"][4]),
                         0.0)
    raw += rng.normal(0.0, NOISE_SIGMA, size=raw.shape)

    # 25 fps timeline; frame k sits at the midpoint of the averaged 50 fps pair.
    n25 = n50 // 2
    t25 = (4 * np.arange(n25) + 1) / 100.0
    speaking25 = _speaking_mask(t25, my_turns)
    lagged = t25 - PITCH_LAG_FRAMES / 25.0

    e = config.expressiveness
    g = config.coupling_gain
    behavior = np.zeros((n25, BEHAVIOR_DIM))
    behavior[:, 0] = 0.15 * np.sin(2 * np.pi * 0.11 * t25 + lat["aux_phase"][5])
    behavior[:, 1] = 0.12 * np.sin(2 * np.pi * 0.17 * t25 + lat["aux_phase"][6])
    behavior[:, 2] = 0.10 * np.sin(2 * np.pi * 0.07 * t25 + lat["aux_phase"][7])
    behavior[:, 3] = 0.15 * np.sin(2 * np.pi * 0.10 * t25 + lat["aux_phase"][8])
    behavior[:, 4] = 0.12 * np.sin(2 * np.pi * 0.19 * t25 + lat["aux_phase"][9])
    behavior[:, 5] = 0.10 * np.sin(2 * np.pi * 0.08 * t25 + lat["aux_phase"][10])
    behavior[:, 6] = 0.20 * np.sin(2 * np.pi * 0.13 * t25 + lat["aux_phase"][11])
    behavior[:, 7] = 0.18 * np.sin(2 * np.pi * 0.09 * t25 + lat["aux_phase"][12])
    behavior[:, HEAD_PITCH] = g * 0.3 * _pitch(lagged, lat)
    behavior[:, 9] = 0.15 * np.sin(2 * np.pi * 0.12 * t25 + lat["aux_phase"][13])
    behavior[:, 10] = 0.10 * np.sin(2 * np.pi * 0.06 * t25 + lat["aux_phase"][14])
    behavior[:, AU12] = 2.2 * _energy(t25, lat)
    for j in range(11, BEHAVIOR_DIM):
        if j == AU12:
            continue
        freq = 0.05 + 0.015 * (j - 11)
        amp = lat["au_amp"][j - 11]
        behavior[:, j] = amp * (0.5 + 0.5 * np.sin(2 * np.pi * freq * t25 + lat["aux_phase"][15] + j))
    behavior += rng.normal(0.0, NOISE_SIGMA, size=behavior.shape)
    behavior[:, 11:] = np.clip(behavior[:, 11:], 0.0, 5.0)
    behavior *= e * speaking25[:, None]

    confidence = np.clip(1.0 - np.abs(rng.normal(0.0, 0.005, size=n25)), 0.9, 1.0)
    success = np.ones(n25)

    track_id = f"synth{interaction:03d}_p{person + 1}"
    role = "first_person" if person == 0 else "second_person"

    with_deltas = add_derivatives(raw)
    values25, ts25 = downsample_speech(with_deltas, t50)
    speech_data = attach_speaking_flag(values25, ts25, my_turns)
    speech = speech_track(speech_data, source_id=track_id, speaker_role=role)
    behavior_tr = behavior_track(
        behavior, source_id=track_id, speaker_role=role,
        confidence=confidence, success=success,
    )
    return SynthTrack(
        track_id=track_id,
        interaction=interaction,
        speaker_role=role,
        speech=speech,
        behavior=behavior_tr,
        raw_speech=raw,
        raw_timestamps=t50,
        turns=my_turns,
    )


def synth_tracks(config: SynthConfig) -> list[SynthTrack]:
    """All generated participants, two per interaction."""
    out = []
    for i in range(config.n_tracks):
        out.append(_synth_track(config, interaction=i // 2, person=i % 2))
    return out


def generate_corpus(config: SynthConfig) -> list[tuple[Track, Track]]:
    """Paired (speech, behavior) tracks, aligned at 25 fps."""
    return [(t.speech, t.behavior) for t in synth_tracks(config)]


def _write_csv(path, header, rows, fmt="%.10g"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt % v for v in row) + "\n")


def export_corpus(config: SynthConfig, out_dir) -> list[str]:
    """Write the corpus as CSV files in the formats the ingestion path reads.

    Per track: `<id>_speech.csv` (50 fps, timestamp + 7 features),
    `<id>_behavior.csv` (25 fps, OpenFace-style columns), `<id>_turns.csv`,
    plus one `manifest.csv` tying them together.
    """
    os.makedirs(out_dir, exist_ok=True)
    tracks = synth_tracks(config)
    manifest_rows = []
    for t in tracks:
        speech_name = f"{t.track_id}_speech.csv"
        behavior_name = f"{t.track_id}_behavior.csv"
        turns_name = f"{t.track_id}_turns.csv"
        _write_csv(
            os.path.join(out_dir, speech_name),
            ("timestamp",) + SPEECH_BASE_FEATURES,
            np.concatenate([t.raw_timestamps[:, None], t.raw_speech], axis=1),
        )
        n25 = t.behavior.n_frames
        ts25 = np.arange(n25) / 25.0
        _write_csv(
            os.path.join(out_dir, behavior_name),
            BEHAVIOR_META_COLUMNS + BEHAVIOR_FEATURES,
            np.concatenate(
                [ts25[:, None], t.behavior.confidence[:, None],
                 t.behavior.success[:, None], t.behavior.data], axis=1,
            ),
        )
        _write_csv(os.path.join(out_dir, turns_name), ("start", "end"), t.turns)
        manifest_rows.append({
            "track_id": t.track_id,
            "interaction_id": f"synth{t.interaction:03d}",
            "speaker_role": t.speaker_role,
            "speech_csv": speech_name,
            "behavior_csv": behavior_name,
            "turns_csv": turns_name,
        })
    with open(os.path.join(out_dir, "manifest.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(manifest_rows[0].keys()))
        writer.writeheader()
        writer.writerows(manifest_rows)
    return [t.track_id for t in tracks]
