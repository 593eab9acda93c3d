import math

import numpy as np
import pytest
import torch

from nvbgen.features import (
    BEHAVIOR_DIM,
    SPEECH_DIM,
    behavior_track,
    compute_norm_stats,
    speech_track,
)
from nvbgen.models import ArchConfig
from nvbgen.preprocess import ClipPair
from nvbgen.training import (
    TrainConfig,
    adversarial_losses,
    classify_clips,
    fabricate_mismatch,
    gradient_penalty,
    reconstruction_loss,
    train,
)

SMALL = ArchConfig(encoder_channels=(8, 16, 32, 32, 32))


def make_clip(rng, speaking, source="clip", start=0):
    speech = rng.uniform(0.1, 0.9, size=(100, SPEECH_DIM))
    speech[:, -1] = 1.0 if speaking else 0.0
    if speaking:
        behavior = rng.uniform(0.1, 0.9, size=(100, BEHAVIOR_DIM))
    else:
        behavior = np.zeros((100, BEHAVIOR_DIM))  # listening clamp
    return ClipPair(speech=speech, behavior=behavior, source_id=source, start_frame=start)


def make_clips(rng, n_speaking=4, n_listening=4):
    clips = [make_clip(rng, True, f"s{i}", i * 100) for i in range(n_speaking)]
    clips += [make_clip(rng, False, f"l{i}", i * 100) for i in range(n_listening)]
    return clips


def clip_stats(clips):
    speech = np.concatenate([c.speech for c in clips])
    behavior = np.concatenate([c.behavior for c in clips])
    return compute_norm_stats([speech_track(speech), behavior_track(behavior)])


def test_classify_clips_by_flag_share():
    rng = np.random.default_rng(0)
    clips = make_clips(rng, 3, 2)
    speaking, listening = classify_clips(clips)
    assert len(speaking) == 3 and len(listening) == 2
    mixed = make_clip(rng, True)
    mixed_speech = mixed.speech.copy()
    mixed_speech[:50, -1] = 0.0  # 50/50 clip is neither
    mixed = ClipPair(speech=mixed_speech, behavior=mixed.behavior)
    speaking, listening = classify_clips(clips + [mixed])
    assert len(speaking) == 3 and len(listening) == 2


def test_mismatch_combines_opposed_profiles():
    rng = np.random.default_rng(1)
    clips = make_clips(rng)
    speaking, listening = classify_clips(clips)
    pairs = fabricate_mismatch(speaking, listening, np.random.default_rng(2), n_pairs=20)
    saw_both_directions = set()
    for pair in pairs:
        flags = pair.speech[:, -1]
        if flags.mean() > 0.8:
            # speaking audio with listening behavior: the zero clamp vector
            assert np.all(pair.behavior == 0.0)
            saw_both_directions.add("speaking_speech")
        else:
            assert flags.mean() < 0.2
            assert np.ptp(pair.behavior) > 0.0  # non-constant speaking behavior
            saw_both_directions.add("listening_speech")
        assert pair.speech_source != pair.behavior_source
    assert saw_both_directions == {"speaking_speech", "listening_speech"}


def test_mismatch_empty_pool_error():
    rng = np.random.default_rng(3)
    clips = make_clips(rng, n_speaking=2, n_listening=0)
    speaking, listening = classify_clips(clips)
    with pytest.raises(ValueError, match="insufficient turn diversity"):
        fabricate_mismatch(speaking, listening, rng)


def test_reconstruction_identity_is_zero():
    x = torch.rand(4, 100, BEHAVIOR_DIM)
    l_gaze, l_head, l_au, total = reconstruction_loss(x, x)
    assert l_gaze.item() == 0.0 and l_head.item() == 0.0
    assert l_au.item() == 0.0 and total.item() == 0.0


def test_reconstruction_constant_offset():
    real = torch.rand(2, 100, BEHAVIOR_DIM)
    generated = real + 0.1
    l_gaze, l_head, l_au, total = reconstruction_loss(generated, real)
    assert l_gaze.item() == pytest.approx(0.1, abs=1e-6)
    assert l_head.item() == pytest.approx(0.1, abs=1e-6)
    assert l_au.item() == pytest.approx(0.1, abs=1e-6)
    assert total.item() == pytest.approx(0.3, abs=1e-6)


def test_reconstruction_matches_elementwise_oracle():
    rng = np.random.default_rng(4)
    real = rng.uniform(size=(3, 100, BEHAVIOR_DIM))
    generated = rng.uniform(size=(3, 100, BEHAVIOR_DIM))
    l_gaze, l_head, l_au, total = reconstruction_loss(
        torch.from_numpy(generated), torch.from_numpy(real)
    )

    def oracle(lo, hi):
        total_sq, count = 0.0, 0
        for b in range(3):
            for t in range(100):
                for j in range(lo, hi):
                    total_sq += (generated[b, t, j] - real[b, t, j]) ** 2
                    count += 1
        return math.sqrt(total_sq / count)

    assert l_gaze.item() == pytest.approx(oracle(0, 8), abs=1e-9)
    assert l_head.item() == pytest.approx(oracle(8, 11), abs=1e-9)
    assert l_au.item() == pytest.approx(oracle(11, 28), abs=1e-9)
    assert total.item() == pytest.approx(oracle(0, 8) + oracle(8, 11) + oracle(11, 28), abs=1e-9)


def test_reconstruction_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        reconstruction_loss(torch.zeros(2, 100, 28), torch.zeros(2, 99, 28))


DIM = 100 * BEHAVIOR_DIM


def unit_norm_critic(speech, behavior):
    return behavior.flatten(1).sum(dim=1) / math.sqrt(DIM)


def doubled_critic(speech, behavior):
    return 2.0 * behavior.flatten(1).sum(dim=1) / math.sqrt(DIM)


def constant_critic(speech, behavior):
    return torch.zeros(behavior.shape[0], dtype=behavior.dtype) + behavior.sum() * 0.0


def _gp(critic, seed=0):
    rng = np.random.default_rng(seed)
    speech = torch.rand(8, 100, SPEECH_DIM, dtype=torch.float64)
    real = torch.rand(8, 100, BEHAVIOR_DIM, dtype=torch.float64)
    fake = torch.rand(8, 100, BEHAVIOR_DIM, dtype=torch.float64)
    return gradient_penalty(critic, speech, real, fake, lam=10.0, rng=rng).item()


def test_gradient_penalty_unit_norm_critic():
    assert _gp(unit_norm_critic) == pytest.approx(0.0, abs=1e-4)


def test_gradient_penalty_doubled_critic():
    assert _gp(doubled_critic) == pytest.approx(10.0, abs=1e-4)


def test_gradient_penalty_constant_critic():
    assert _gp(constant_critic) == pytest.approx(10.0, abs=1e-4)


def test_gradient_penalty_nonnegative_for_real_critic():
    from nvbgen.models import SyncDiscriminator

    torch.manual_seed(5)
    disc = SyncDiscriminator(SMALL)
    disc.eval()
    rng = np.random.default_rng(6)
    speech = torch.rand(4, 100, SPEECH_DIM)
    real = torch.rand(4, 100, BEHAVIOR_DIM)
    fake = torch.rand(4, 100, BEHAVIOR_DIM)
    assert gradient_penalty(disc, speech, real, fake, 10.0, rng).item() >= 0.0


def test_adversarial_losses_arithmetic():
    d_real = torch.full((4,), 0.4)
    d_fake = torch.full((4,), 0.7)
    loss_d, loss_adv = adversarial_losses(d_real, d_fake, torch.tensor(10.0))
    assert loss_d.item() == pytest.approx(10.3, abs=1e-6)
    assert loss_adv.item() == pytest.approx(-0.7, abs=1e-6)


def test_adversarial_losses_symmetric_critic():
    d = torch.full((4,), 0.5)
    loss_d, _ = adversarial_losses(d, d, torch.tensor(0.0))
    assert loss_d.item() == 0.0


def test_combined_generator_loss_weighting():
    # L = L_G + w * L_adv with w = 0.1
    l_g = torch.tensor(1.0, dtype=torch.float64)
    l_adv = torch.tensor(-0.5, dtype=torch.float64)
    config = TrainConfig()
    assert (l_g + config.adv_weight * l_adv).item() == pytest.approx(0.95, abs=1e-9)


def quick_config(**overrides):
    base = dict(epochs=1, batch_size=4, n_critic=2, seed=0, checkpoint_interval=1000)
    base.update(overrides)
    return TrainConfig(**base)


def test_train_logs_n_critic_plus_one_steps_per_batch(tmp_path):
    rng = np.random.default_rng(7)
    clips = make_clips(rng, 2, 2)
    stats = clip_stats(clips)
    result = train(clips, stats, SMALL, quick_config(), checkpoint_dir=tmp_path)
    assert result.steps == 3  # n_critic + 1
    assert len(result.log_rows) == 3
    kinds = [row[1] for row in result.log_rows]
    assert kinds == ["critic", "critic", "generator"]
    assert result.final_checkpoint is not None


def test_train_seed_reproduces_losses(tmp_path):
    rng = np.random.default_rng(8)
    clips = make_clips(rng, 2, 2)
    stats = clip_stats(clips)
    config = quick_config(epochs=4)
    r1 = train(clips, stats, SMALL, config)
    r2 = train(clips, stats, SMALL, config)
    assert len(r1.log_rows) >= 10
    assert r1.log_rows[:10] == r2.log_rows[:10]
    assert r1.log_rows == r2.log_rows


def test_train_mismatch_fraction_zero_uses_no_pairs():
    rng = np.random.default_rng(9)
    clips = make_clips(rng, 2, 2)
    stats = clip_stats(clips)
    result = train(clips, stats, SMALL, quick_config(mismatch_fraction=0.0))
    assert result.mismatch_pairs_used == 0


def test_train_mismatch_on_by_default():
    rng = np.random.default_rng(10)
    clips = make_clips(rng, 2, 2)
    stats = clip_stats(clips)
    result = train(clips, stats, SMALL, quick_config())
    assert result.mismatch_pairs_used > 0


def test_train_log_file_schema(tmp_path):
    rng = np.random.default_rng(11)
    clips = make_clips(rng, 2, 2)
    stats = clip_stats(clips)
    log_path = tmp_path / "losses.tsv"
    train(clips, stats, SMALL, quick_config(), log_path=log_path)
    lines = log_path.read_text().splitlines()
    assert lines[0].split("\t") == [
        "step", "kind", "loss_d", "penalty", "loss_g", "loss_gaze",
        "loss_head", "loss_au", "loss_adv",
    ]
    assert len(lines) == 4  # header + 3 steps
