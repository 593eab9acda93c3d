"""
Adversarial training on a handful of clips
==========================================

A compact run of the gradient-penalty Wasserstein loop: critic updates on
real, generated, and fabricated mismatch pairs, then a generator update on
reconstruction plus the weighted adversarial term. Uses a small network so
it finishes in about a minute on a laptop CPU.
"""

import numpy as np

from nvbgen.features import behavior_track, compute_norm_stats, speech_track
from nvbgen.models import ArchConfig
from nvbgen.preprocess import preprocess_pair, segment
from nvbgen.synthetic import SynthConfig, generate_corpus
from nvbgen.training import TrainConfig, classify_clips, train

clips = []
for speech, behavior in generate_corpus(SynthConfig(seed=11, n_tracks=2, duration_s=40.0)):
    s, b = preprocess_pair(speech, behavior)
    clips.extend(segment(s, b))
clips = clips[:8]
speaking, listening = classify_clips(clips)
print(f"{len(clips)} clips ({len(speaking)} speaking, {len(listening)} listening)")

stats = compute_norm_stats([
    speech_track(np.concatenate([c.speech for c in clips])),
    behavior_track(np.concatenate([c.behavior for c in clips])),
])

arch = ArchConfig(encoder_channels=(16, 32, 64, 64, 64), dropout_rate=0.0)
config = TrainConfig(epochs=300, batch_size=8, n_critic=1, lr_generator=1e-3,
                     seed=0, checkpoint_interval=10**6)
result = train(clips, stats, arch, config, checkpoint_dir="runs/demo_checkpoints")

generator_losses = [float(row[4]) for row in result.log_rows if row[1] == "generator"]
print("reconstruction loss every 50 generator steps:")
for k in range(0, len(generator_losses), 50):
    print(f"  step {k:4d}: {np.mean(generator_losses[k:k + 50]):.3f}")
print(f"mismatch pairs shown to the critic: {result.mismatch_pairs_used}")
print(f"final checkpoint: {result.final_checkpoint}")
