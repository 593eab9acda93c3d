"""Adversarial training: gradient-penalty Wasserstein objective with a
reconstruction term, plus fabricated speech/behavior mismatch examples.

The discriminator takes three kinds of input per step: real pairs, pairs
with generated behavior, and mismatch pairs combining speaking-person audio
with listening-person behavior (or vice versa). The generator minimizes the
sum of per-group reconstruction RMSEs plus a weighted adversarial term.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .features import AUS, GAZE_HEAD, HEAD_ROTATION, SPEAKING_FLAG, NormStats
from .models import (
    ArchConfig,
    BehaviorGenerator,
    SyncDiscriminator,
    make_noise,
    save_checkpoint,
)

SPEAKING_CLIP_THRESHOLD = 0.8   # share of flagged frames to call a clip speaking


@dataclass(frozen=True)
class TrainConfig:
    lr_generator: float = 1e-4
    lr_discriminator: float = 1e-5
    batch_size: int = 32
    lambda_gp: float = 10.0
    adv_weight: float = 0.1
    n_critic: int = 5
    epochs: int = 10
    checkpoint_interval: int = 50    # generator steps between checkpoints
    seed: int = 0
    mismatch_fraction: float = 1.0 / 3.0
    adam_betas: tuple[float, float] = (0.5, 0.9)
    gp_include_mismatch: bool = False  # also interpolate toward mismatch behavior

    def __post_init__(self):
        if min(self.lr_generator, self.lr_discriminator, self.lambda_gp) < 0:
            raise ValueError("rates and penalty weight must be non-negative")
        if self.batch_size <= 0 or self.n_critic <= 0 or self.epochs <= 0:
            raise ValueError("batch size, critic steps, and epochs must be positive")
        if not 0.0 <= self.mismatch_fraction <= 1.0:
            raise ValueError("mismatch_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class MismatchPair:
    """Fabricated fake: audio and behavior from opposed speaking profiles."""

    speech: np.ndarray
    behavior: np.ndarray
    speech_source: str
    behavior_source: str


def classify_clips(clips) -> tuple[list, list]:
    """Split clips into predominantly speaking / predominantly listening."""
    speaking = [c for c in clips if c.speaking_share > SPEAKING_CLIP_THRESHOLD]
    listening = [c for c in clips if c.speaking_share < 1.0 - SPEAKING_CLIP_THRESHOLD]
    return speaking, listening


def fabricate_mismatch(speaking_clips, listening_clips, rng, n_pairs=1) -> list[MismatchPair]:
    """Pairs combining speech of one turn kind with behavior of the other."""
    if not speaking_clips or not listening_clips:
        raise ValueError("insufficient turn diversity: need speaking and listening clips")
    pairs = []
    for _ in range(n_pairs):
        speak = speaking_clips[int(rng.integers(len(speaking_clips)))]
        listen = listening_clips[int(rng.integers(len(listening_clips)))]
        if rng.uniform() < 0.5:
            speech_clip, behavior_clip = speak, listen
        else:
            speech_clip, behavior_clip = listen, speak
        pairs.append(MismatchPair(
            speech=speech_clip.speech,
            behavior=behavior_clip.behavior,
            speech_source=f"{speech_clip.source_id}@{speech_clip.start_frame}",
            behavior_source=f"{behavior_clip.source_id}@{behavior_clip.start_frame}",
        ))
    return pairs


def reconstruction_loss(generated: torch.Tensor, real: torch.Tensor):
    """(L_gaze, L_head, L_AU, total): per-group RMSEs and their sum."""
    if generated.shape != real.shape:
        raise ValueError(f"shape mismatch: {tuple(generated.shape)} vs {tuple(real.shape)}")
    diff = generated - real
    l_gaze = torch.sqrt((diff[..., GAZE_HEAD] ** 2).mean())
    l_head = torch.sqrt((diff[..., HEAD_ROTATION] ** 2).mean())
    l_au = torch.sqrt((diff[..., AUS] ** 2).mean())
    return l_gaze, l_head, l_au, l_gaze + l_head + l_au


def gradient_penalty(critic, speech: torch.Tensor, real_behavior: torch.Tensor,
                     fake_behavior: torch.Tensor, lam: float, rng) -> torch.Tensor:
    """Unit-gradient-norm penalty on random real/fake interpolants.

    `critic` is any callable mapping (speech, behavior) to per-sample scores;
    per sample, a point is drawn uniformly on the segment between the real
    and fake behavior and the critic's input gradient norm is pulled to 1.
    """
    if real_behavior.shape != fake_behavior.shape:
        raise ValueError("real and fake behavior batches must have equal shapes")
    batch = real_behavior.shape[0]
    t = torch.from_numpy(rng.uniform(0.0, 1.0, size=(batch, 1, 1))).to(real_behavior.dtype)
    mixed = (t * real_behavior + (1.0 - t) * fake_behavior).detach().requires_grad_(True)
    scores = critic(speech, mixed)
    grads, = torch.autograd.grad(
        outputs=scores,
        inputs=mixed,
        grad_outputs=torch.ones_like(scores),
        create_graph=True,
    )
    norms = grads.flatten(1).norm(2, dim=1)
    penalty = lam * ((norms - 1.0) ** 2).mean()
    if not torch.isfinite(penalty):
        raise RuntimeError("penalty diverged: non-finite gradient norm")
    return penalty


def adversarial_losses(d_outputs_real: torch.Tensor, d_outputs_fake: torch.Tensor,
                       penalty) -> tuple[torch.Tensor, torch.Tensor]:
    """(critic loss, generator adversarial term).

    The critic minimizes mean(fake) - mean(real) + penalty; the generator's
    adversarial term is -mean(fake), to be weighted and added to the
    reconstruction loss.
    """
    loss_d = d_outputs_fake.mean() - d_outputs_real.mean() + penalty
    loss_adv_g = -d_outputs_fake.mean()
    return loss_d, loss_adv_g


class TrainingDiverged(RuntimeError):
    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


LOG_COLUMNS = ("step", "kind", "loss_d", "penalty", "loss_g", "loss_gaze",
               "loss_head", "loss_au", "loss_adv")


@dataclass
class TrainResult:
    checkpoints: list = field(default_factory=list)
    final_checkpoint: str | None = None
    steps: int = 0
    initial_loss_g: float = float("nan")
    final_loss_g: float = float("nan")
    mismatch_pairs_used: int = 0
    log_rows: list = field(default_factory=list)


def _normalize_clip(clip, stats: NormStats):
    from .features import BEHAVIOR_FEATURES, SPEECH_FEATURES, normalize_matrix

    speech = normalize_matrix(clip.speech, SPEECH_FEATURES, stats)
    behavior = normalize_matrix(clip.behavior, BEHAVIOR_FEATURES, stats)
    return speech, behavior


def _noise_batch(rng, batch, seq_len):
    return torch.stack([
        torch.from_numpy(make_noise(rng).values.reshape(2, seq_len).copy()).float()
        for _ in range(batch)
    ])


def train(clips, stats: NormStats, arch: ArchConfig = ArchConfig(),
          config: TrainConfig = TrainConfig(), checkpoint_dir=None,
          log_path=None) -> TrainResult:
    """Run the adversarial loop over normalized clips.

    Per batch: `n_critic` critic updates on real, generated, and mismatch
    inputs with the gradient penalty, then one generator update on the
    combined reconstruction + weighted adversarial loss. Fixed seeds make
    the loss trajectory reproducible.
    """
    clips = list(clips)
    if not clips:
        raise ValueError("no training clips")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    generator = BehaviorGenerator(arch)
    discriminator = SyncDiscriminator(arch)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr_generator,
                             betas=config.adam_betas)
    opt_d = torch.optim.Adam(discriminator.parameters(), lr=config.lr_discriminator,
                             betas=config.adam_betas)

    normalized = [_normalize_clip(c, stats) for c in clips]
    speech_all = torch.from_numpy(np.stack([s for s, _ in normalized])).float()
    behavior_all = torch.from_numpy(np.stack([b for _, b in normalized])).float()
    speaking_pool, listening_pool = classify_clips(clips)

    def mismatch_batch(n):
        pairs = fabricate_mismatch(speaking_pool, listening_pool, rng, n_pairs=n)
        # mismatch tensors are normalized with the same training stats
        from .features import BEHAVIOR_FEATURES, SPEECH_FEATURES, normalize_matrix

        speech = torch.from_numpy(np.stack([
            normalize_matrix(p.speech, SPEECH_FEATURES, stats) for p in pairs
        ])).float()
        behavior = torch.from_numpy(np.stack([
            normalize_matrix(p.behavior, BEHAVIOR_FEATURES, stats) for p in pairs
        ])).float()
        return speech, behavior

    result = TrainResult()
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    if log_fh and log_fh.tell() == 0:
        log_fh.write("\t".join(LOG_COLUMNS) + "\n")

    def log_row(step, kind, loss_d=math.nan, penalty=math.nan, loss_g=math.nan,
                loss_gaze=math.nan, loss_head=math.nan, loss_au=math.nan,
                loss_adv=math.nan):
        row = (step, kind, f"{loss_d:.6f}", f"{penalty:.6f}", f"{loss_g:.6f}",
               f"{loss_gaze:.6f}", f"{loss_head:.6f}", f"{loss_au:.6f}",
               f"{loss_adv:.6f}")
        result.log_rows.append(row)
        if log_fh:
            log_fh.write("\t".join(str(v) for v in row) + "\n")
            log_fh.flush()

    def emit_checkpoint(name, step):
        if checkpoint_dir is None:
            return None
        os.makedirs(checkpoint_dir, exist_ok=True)
        path = os.path.join(checkpoint_dir, name)
        save_checkpoint(path, generator, discriminator, stats, step)
        result.checkpoints.append(path)
        return path

    n = len(clips)
    batch_size = min(config.batch_size, n)
    step = 0
    g_steps = 0
    last_good = None
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n - batch_size + 1, batch_size):
                idx = torch.from_numpy(order[start:start + batch_size].copy())
                real_speech = speech_all[idx]
                real_behavior = behavior_all[idx]

                n_mismatch = round(batch_size * config.mismatch_fraction)
                n_generated = batch_size - n_mismatch

                for _ in range(config.n_critic):
                    opt_d.zero_grad()
                    noise = _noise_batch(rng, batch_size, arch.seq_len)
                    with torch.no_grad():
                        generated = generator(real_speech, noise)
                    fake_speech = real_speech.clone()
                    fake_behavior = generated.clone()
                    if n_mismatch > 0:
                        mm_speech, mm_behavior = mismatch_batch(n_mismatch)
                        fake_speech[n_generated:] = mm_speech
                        fake_behavior[n_generated:] = mm_behavior
                        result.mismatch_pairs_used += n_mismatch
                    if config.gp_include_mismatch or n_mismatch == 0 or n_generated == 0:
                        gp_speech, gp_fake = fake_speech, fake_behavior
                        gp_real = real_behavior
                    else:
                        gp_speech = fake_speech[:n_generated]
                        gp_fake = fake_behavior[:n_generated]
                        gp_real = real_behavior[:n_generated]
                    penalty = gradient_penalty(
                        discriminator, gp_speech, gp_real, gp_fake,
                        config.lambda_gp, rng,
                    )
                    d_real = discriminator(real_speech, real_behavior)
                    d_fake = discriminator(fake_speech, fake_behavior)
                    loss_d, _ = adversarial_losses(d_real, d_fake, penalty)
                    if not torch.isfinite(loss_d):
                        raise TrainingDiverged(
                            f"non-finite critic loss at step {step}", last_good
                        )
                    loss_d.backward()
                    opt_d.step()
                    step += 1
                    log_row(step, "critic", loss_d=loss_d.item(), penalty=penalty.item())

                opt_g.zero_grad()
                noise = _noise_batch(rng, batch_size, arch.seq_len)
                generated = generator(real_speech, noise)
                l_gaze, l_head, l_au, l_g = reconstruction_loss(generated, real_behavior)
                d_fake_for_g = discriminator(real_speech, generated)
                l_adv = -d_fake_for_g.mean()   # Wasserstein generator objective
                loss = l_g + config.adv_weight * l_adv
                if not torch.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite generator loss at step {step}", last_good
                    )
                loss.backward()
                opt_g.step()
                step += 1
                g_steps += 1
                if math.isnan(result.initial_loss_g):
                    result.initial_loss_g = l_g.item()
                result.final_loss_g = l_g.item()
                log_row(step, "generator", loss_g=l_g.item(), loss_gaze=l_gaze.item(),
                        loss_head=l_head.item(), loss_au=l_au.item(),
                        loss_adv=l_adv.item())
                if g_steps % config.checkpoint_interval == 0:
                    last_good = emit_checkpoint(f"ckpt_{g_steps:06d}.pt", step)
        result.final_checkpoint = emit_checkpoint("ckpt_final.pt", step)
    finally:
        if log_fh:
            log_fh.close()
    result.steps = step
    return result
