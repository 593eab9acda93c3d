"""
Generating behavior and scoring it objectively
==============================================

Loads the checkpoint written by demo 03, generates behavior for held-out
speech, and compares conditions with per-feature DTW plus acceleration and
jerk of the eye/head channels.
"""

import os

import numpy as np
import torch

from nvbgen.features import (
    BEHAVIOR_FEATURES,
    SPEECH_FEATURES,
    behavior_track,
    denormalize_matrix,
    normalize_matrix,
)
from nvbgen.metrics import build_report, motion_stats
from nvbgen.models import load_checkpoint, make_noise
from nvbgen.preprocess import preprocess_pair, segment
from nvbgen.synthetic import SynthConfig, generate_corpus

checkpoint_path = "runs/demo_checkpoints/ckpt_final.pt"
if not os.path.exists(checkpoint_path):
    raise SystemExit("run demos/03_adversarial_training.py first")
checkpoint = load_checkpoint(checkpoint_path)

# held-out clips from a different seed
clips = []
for speech, behavior in generate_corpus(SynthConfig(seed=99, n_tracks=2, duration_s=24.0)):
    s, b = preprocess_pair(speech, behavior)
    clips.extend(segment(s, b))
print(f"{len(clips)} held-out clips")

rng = np.random.default_rng(0)
ground_truth, generated = {}, {}
for i, clip in enumerate(clips):
    clip_id = f"clip{i:02d}"
    ground_truth[clip_id] = behavior_track(clip.behavior, source_id=clip_id)
    normalized = normalize_matrix(clip.speech, SPEECH_FEATURES, checkpoint.stats)
    with torch.no_grad():
        out = checkpoint.generator(
            torch.from_numpy(normalized).float(), make_noise(rng).as_channels()
        ).numpy()
    generated[clip_id] = behavior_track(
        denormalize_matrix(out, BEHAVIOR_FEATURES, checkpoint.stats), source_id=clip_id
    )

acc, jerk = motion_stats(ground_truth["clip00"])
print(f"ground-truth clip00: acceleration {acc:.2f}, jerk {jerk:.2f}")

report = build_report({"generated": generated}, ground_truth)
print(report.to_table())
