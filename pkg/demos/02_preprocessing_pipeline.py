"""
From raw CSV exports to 4-second training clips
===============================================

Runs the full cleaning pipeline on one ingested track pair: outlier removal,
transition bridging, median smoothing, centering, listening clamp, and
segmentation into aligned 100-frame clips.
"""

import numpy as np

from nvbgen.ingest import load_corpus
from nvbgen.preprocess import (
    OutlierPolicy,
    bridge_transitions,
    center_track,
    clamp_listening,
    detect_outliers,
    median_smooth,
    segment,
)
from nvbgen.synthetic import SynthConfig, export_corpus

corpus_dir = "runs/demo_corpus"
export_corpus(SynthConfig(seed=7, n_tracks=2, duration_s=40.0), corpus_dir)
pairs = load_corpus(corpus_dir)
speech, behavior = pairs[0]
print(f"ingested {len(pairs)} aligned pairs; first track {behavior.n_frames} frames")

policy = OutlierPolicy(min_confidence=0.8, max_rotation_jump=0.3)
removed = detect_outliers(behavior, policy)
print(f"outlier frames: {len(removed)}")
behavior = bridge_transitions(behavior, removed)

behavior = median_smooth(behavior, window=7)
behavior = center_track(behavior)
print(f"median head rotation after centering: "
      f"{np.round(np.median(behavior.data[:, 8:11], axis=0), 6)}")

behavior = clamp_listening(behavior, speech)
flags = speech.data[:, -1]
print(f"flag-0 frames all zero after clamp: {np.all(behavior.data[flags == 0] == 0)}")

clips = segment(speech, behavior, length=100)
print(f"{behavior.n_frames} frames -> {len(clips)} non-overlapping 100-frame clips "
      f"({behavior.n_frames - 100 * len(clips)} trailing frames dropped)")
