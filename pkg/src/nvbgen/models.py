"""Generator and discriminator architectures plus the ramp-noise sampler.

The generator is a 1D U-Net over the 100-frame window: a five-block
convolutional encoder over the speech features concatenated with a
2-channel noise stream, and three symmetric decoders (gaze, head, action
units) with skip connections, each ending in a sigmoid so outputs stay in
(0, 1). The discriminator encodes speech and behavior separately, merges
them, and scores the pair through a stack of pooled convolution blocks.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from .features import AUS, BEHAVIOR_DIM, GAZE_HEAD, HEAD_ROTATION, SPEECH_DIM, NormStats

NOISE_SIZE = 200
NOISE_CHANNELS = 2
WINDOW_FRAMES = NOISE_SIZE // NOISE_CHANNELS  # 100
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NoiseVector:
    """A length-200 latent forming a linear ramp between two endpoints."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (NOISE_SIZE,):
            raise ValueError(f"noise must have exactly {NOISE_SIZE} values")
        steps = np.diff(values)
        if not np.allclose(steps, steps[0], atol=1e-9):
            raise ValueError("noise values must form a linear ramp")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def as_channels(self) -> torch.Tensor:
        """(2, 100) view injected alongside the speech channels."""
        return torch.from_numpy(
            self.values.reshape(NOISE_CHANNELS, WINDOW_FRAMES).copy()
        ).float()


def noise_from_endpoints(a: float, b: float) -> NoiseVector:
    return NoiseVector(values=a + (b - a) * np.arange(NOISE_SIZE) / (NOISE_SIZE - 1))


def make_noise(rng) -> NoiseVector:
    """Ramp noise between two endpoints drawn uniformly from [0, 1]."""
    a, b = rng.uniform(0.0, 1.0, size=2)
    return noise_from_endpoints(float(a), float(b))


@dataclass(frozen=True)
class ArchConfig:
    """Widths and structural constants shared by generator and discriminator."""

    encoder_channels: tuple[int, ...] = (64, 128, 256, 512, 512)
    kernel_size: int = 3
    dropout_rate: float = 0.2
    gaze_channels: int = 8
    head_channels: int = 3
    au_channels: int = 17
    seq_len: int = WINDOW_FRAMES
    critic_sigmoid: bool = True   # drop for an unbounded-critic ablation

    def validate(self) -> None:
        if len(self.encoder_channels) != 5:
            raise ValueError(
                f"expected 5 encoder widths, got {len(self.encoder_channels)}"
            )
        if any(w <= 0 for w in self.encoder_channels):
            raise ValueError("encoder widths must be positive")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError("kernel size must be odd and positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        head_sum = self.gaze_channels + self.head_channels + self.au_channels
        if head_sum != BEHAVIOR_DIM:
            raise ValueError(
                f"decoder head channels must sum to {BEHAVIOR_DIM}, got {head_sum}"
            )
        if (self.gaze_channels, self.head_channels, self.au_channels) != (
            GAZE_HEAD.stop - GAZE_HEAD.start,
            HEAD_ROTATION.stop - HEAD_ROTATION.start,
            AUS.stop - AUS.start,
        ):
            raise ValueError("decoder head channels must match the feature groups")
        # skip connections pair encoder and decoder stages of equal temporal
        # resolution; pooling must never collapse the window to nothing
        for stage, length in enumerate(self.skip_lengths() + [self.bottom_length()]):
            if length < 1:
                raise ValueError(
                    f"sequence length {self.seq_len} collapses to zero at pooling stage {stage}"
                )

    def skip_lengths(self) -> list[int]:
        """Temporal length of each skip tensor, shallow to deep."""
        lengths = [self.seq_len]
        for _ in range(3):
            lengths.append(lengths[-1] // 2)
        return lengths

    def bottom_length(self) -> int:
        return self.skip_lengths()[-1] // 2


class DoubleConv(nn.Module):
    """Two (conv -> batch norm -> ReLU -> dropout) stages with odd kernels."""

    def __init__(self, in_channels, out_channels, kernel_size=3, dropout=0.2):
        super().__init__()
        pad = kernel_size // 2
        self.block = nn.Sequential(
            nn.Conv1d(in_channels, out_channels, kernel_size, padding=pad),
            nn.BatchNorm1d(out_channels),
            nn.ReLU(inplace=True),
            nn.Dropout(dropout),
            nn.Conv1d(out_channels, out_channels, kernel_size, padding=pad),
            nn.BatchNorm1d(out_channels),
            nn.ReLU(inplace=True),
            nn.Dropout(dropout),
        )

    def forward(self, x):
        return self.block(x)


class DecoderBranch(nn.Module):
    """Four up-sample/skip/DoubleConv stages ending in a sigmoid head."""

    def __init__(self, config: ArchConfig, out_channels: int):
        super().__init__()
        w = config.encoder_channels
        self.blocks = nn.ModuleList([
            DoubleConv(2 * w[4], w[3], config.kernel_size, config.dropout_rate),
            DoubleConv(2 * w[3], w[2], config.kernel_size, config.dropout_rate),
            DoubleConv(2 * w[2], w[1], config.kernel_size, config.dropout_rate),
            DoubleConv(2 * w[1], w[0], config.kernel_size, config.dropout_rate),
        ])
        self.head = nn.Conv1d(w[0], out_channels, kernel_size=1)

    def forward(self, bottom, skips):
        x = bottom
        for block, skip in zip(self.blocks, reversed(skips)):
            x = nn.functional.interpolate(x, size=skip.shape[-1], mode="nearest")
            if x.shape[-1] != skip.shape[-1]:
                raise RuntimeError(
                    f"skip resolution mismatch: {x.shape[-1]} vs {skip.shape[-1]}"
                )
            x = block(torch.cat([x, skip], dim=1))
        return torch.sigmoid(self.head(x))


class BehaviorGenerator(nn.Module):
    """Speech + ramp noise -> 28-channel behavior window in (0, 1)."""

    def __init__(self, config: ArchConfig = ArchConfig()):
        super().__init__()
        config.validate()
        self.config = config
        w = config.encoder_channels
        k, d = config.kernel_size, config.dropout_rate
        self.enc = nn.ModuleList([
            DoubleConv(SPEECH_DIM + NOISE_CHANNELS, w[0], k, d),
            DoubleConv(w[0], w[1], k, d),
            DoubleConv(w[1], w[2], k, d),
            DoubleConv(w[2], w[3], k, d),
            DoubleConv(w[3], w[4], k, d),
        ])
        self.pool = nn.MaxPool1d(2)
        self.gaze_decoder = DecoderBranch(config, config.gaze_channels)
        self.head_decoder = DecoderBranch(config, config.head_channels)
        self.au_decoder = DecoderBranch(config, config.au_channels)

    def forward(self, speech: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
        """speech (B, T, 22) or (T, 22); noise (B, 2, T) or (2, T)."""
        squeeze = speech.dim() == 2
        if squeeze:
            speech = speech.unsqueeze(0)
        if noise.dim() == 2:
            noise = noise.unsqueeze(0).expand(speech.shape[0], -1, -1)
        if speech.shape[1] != self.config.seq_len:
            raise ValueError(
                f"generator expects {self.config.seq_len}-frame windows, "
                f"got {speech.shape[1]}"
            )
        x = torch.cat([speech.transpose(1, 2), noise], dim=1)

        skips = []
        x = self.enc[0](x)
        for block in self.enc[1:]:
            x = block(x)
            skips.append(x)          # pre-pool output feeds the skip connection
            x = self.pool(x)

        gaze = self.gaze_decoder(x, skips)
        head = self.head_decoder(x, skips)
        aus = self.au_decoder(x, skips)
        out = torch.cat([gaze, head, aus], dim=1).transpose(1, 2)
        return out.squeeze(0) if squeeze else out


class SyncDiscriminator(nn.Module):
    """Scores a (speech, behavior) pair; sigmoid-bounded by default."""

    def __init__(self, config: ArchConfig = ArchConfig()):
        super().__init__()
        config.validate()
        self.config = config
        w = config.encoder_channels
        k, d = config.kernel_size, config.dropout_rate
        self.speech_enc = DoubleConv(SPEECH_DIM, w[0], k, d)
        self.behavior_enc = DoubleConv(BEHAVIOR_DIM, w[0], k, d)
        self.trunk = nn.ModuleList([
            DoubleConv(2 * w[0], w[1], k, d),
            DoubleConv(w[1], w[2], k, d),
            DoubleConv(w[2], w[3], k, d),
            DoubleConv(w[3], w[4], k, d),
        ])
        self.pool = nn.MaxPool1d(2)
        final_len = config.seq_len
        for _ in range(4):
            final_len //= 2
        self.final = nn.Linear(w[4] * final_len, 1)

    def forward(self, speech: torch.Tensor, behavior: torch.Tensor) -> torch.Tensor:
        """speech (B, T, 22), behavior (B, T, 28); returns (B,) scores."""
        squeeze = speech.dim() == 2
        if squeeze:
            speech = speech.unsqueeze(0)
            behavior = behavior.unsqueeze(0)
        if speech.shape[0] != behavior.shape[0] or speech.shape[1] != behavior.shape[1]:
            raise ValueError("speech and behavior batches must align")
        s = self.speech_enc(speech.transpose(1, 2))
        b = self.behavior_enc(behavior.transpose(1, 2))
        x = torch.cat([s, b], dim=1)
        for block in self.trunk:
            x = self.pool(block(x))
        score = self.final(x.flatten(1)).squeeze(-1)
        if self.config.critic_sigmoid:
            score = torch.sigmoid(score)
        return score.squeeze(0) if squeeze else score


def save_checkpoint(path, generator: BehaviorGenerator, discriminator: SyncDiscriminator,
                    stats: NormStats, step: int) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "arch": asdict(generator.config),
        "generator": generator.state_dict(),
        "discriminator": discriminator.state_dict(),
        "norm_stats": {
            "names": list(stats.names),
            "mins": stats.mins.tolist(),
            "maxs": stats.maxs.tolist(),
        },
        "step": int(step),
    }
    torch.save(payload, path)


@dataclass
class Checkpoint:
    arch: ArchConfig
    generator: BehaviorGenerator
    discriminator: SyncDiscriminator
    stats: NormStats
    step: int


def load_checkpoint(path) -> Checkpoint:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    arch_fields = dict(payload["arch"])
    arch_fields["encoder_channels"] = tuple(arch_fields["encoder_channels"])
    arch = ArchConfig(**arch_fields)
    arch.validate()
    generator = BehaviorGenerator(arch)
    generator.load_state_dict(payload["generator"])
    generator.eval()
    discriminator = SyncDiscriminator(arch)
    discriminator.load_state_dict(payload["discriminator"])
    discriminator.eval()
    stats = NormStats(
        names=tuple(payload["norm_stats"]["names"]),
        mins=np.asarray(payload["norm_stats"]["mins"]),
        maxs=np.asarray(payload["norm_stats"]["maxs"]),
    )
    return Checkpoint(arch=arch, generator=generator, discriminator=discriminator,
                      stats=stats, step=payload["step"])
