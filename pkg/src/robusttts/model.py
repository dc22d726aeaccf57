"""Non-autoregressive acoustic model with two environment-conditioning paths.

Backbone: phoneme encoder -> length regulator -> pitch/energy adaptor ->
decoder -> mel projection. On top of it:

* a frame-level noise encoder whose output is added to the regulated frames,
* an utterance-level environment encoder (reference encoder + style-token
  attention) whose vector is added to the phoneme-encoder output next to the
  speaker embedding.

Tensors are batch-first and padded; boolean masks mark valid positions.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import checkpoint
from .errors import EmptyExpansion, FrameMismatch, InvalidInput

PAD = "<pad>"
SILENCE_LOG_MEL = math.log(1e-5)


@dataclass
class ModelConfig:
    n_vocab: int = 64
    n_speakers: int = 109
    hidden: int = 256
    enc_blocks: int = 4
    dec_blocks: int = 6
    heads: int = 2
    ffn_hidden: int = 1024
    ffn_kernel: int = 9
    phoneme_emb: int = 256
    speaker_emb: int = 256
    noise_blocks: int = 4
    noise_kernel: int = 3
    style_tokens: int = 10
    style_heads: int = 8
    style_dim: int = 256
    ref_channels: tuple[int, ...] = (32, 32, 64, 64)
    predictor_hidden: int = 256
    predictor_kernel: int = 3
    n_bins: int = 256
    n_mels: int = 80
    dropout: float = 0.1

    def __post_init__(self):
        self.ref_channels = tuple(int(c) for c in self.ref_channels)
        if self.hidden % self.heads:
            raise InvalidInput(f"hidden {self.hidden} is not divisible by {self.heads} attention heads")
        if self.style_dim != self.hidden:
            raise InvalidInput("style token dimension must equal the hidden size")
        if self.style_dim % self.style_heads:
            raise InvalidInput("style token dimension must be divisible by the style heads")
        if self.phoneme_emb != self.hidden or self.speaker_emb != self.hidden:
            raise InvalidInput("phoneme and speaker embeddings must match the hidden size")
        if len(self.ref_channels) != 4:
            raise InvalidInput("the reference encoder has exactly four conv layers")

    @classmethod
    def micro(cls, **overrides) -> "ModelConfig":
        """Tiny configuration for tests and quick experiments."""
        base = dict(hidden=16, enc_blocks=1, dec_blocks=1, heads=2, ffn_hidden=16, ffn_kernel=3,
                    phoneme_emb=16, speaker_emb=16, noise_blocks=4, style_tokens=10, style_heads=8,
                    style_dim=16, ref_channels=(4, 4, 4, 4), predictor_hidden=8, n_bins=256,
                    dropout=0.0)
        base.update(overrides)
        return cls(**base)


@dataclass
class VarianceStats:
    """Normalisation and quantisation ranges for pitch (log-F0) and energy."""
    pitch_mean: float = 0.0
    pitch_std: float = 1.0
    energy_mean: float = 0.0
    energy_std: float = 1.0
    pitch_min: float = -3.0
    pitch_max: float = 3.0
    energy_min: float = -3.0
    energy_max: float = 3.0


def sinusoid_table(length: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    i = torch.arange(dim, dtype=torch.float64).unsqueeze(0)
    angle = pos / torch.pow(10000.0, 2 * torch.div(i, 2, rounding_mode="floor") / dim)
    table = torch.where(i.long() % 2 == 0, torch.sin(angle), torch.cos(angle))
    return table.to(dtype)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask):
        b, n, d = x.shape
        h = self.heads
        q, k, v = self.qkv(x).view(b, n, 3, h, d // h).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // h)
        scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        attn = self.dropout(torch.softmax(scores, dim=-1))
        y = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.out(y)


class FFTBlock(nn.Module):
    """Self-attention + convolutional feed-forward, post-norm residuals."""

    def __init__(self, dim: int, heads: int, ffn_hidden: int, kernel: int, dropout: float):
        super().__init__()
        self.attn = SelfAttention(dim, heads, dropout)
        self.norm1 = nn.LayerNorm(dim)
        self.conv1 = nn.Conv1d(dim, ffn_hidden, kernel, padding=kernel // 2)
        self.conv2 = nn.Conv1d(ffn_hidden, dim, 1)
        self.norm2 = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask):
        m = mask.unsqueeze(-1).to(x.dtype)
        x = self.norm1(x + self.dropout(self.attn(x, mask))) * m
        y = self.conv2(F.relu(self.conv1(x.transpose(1, 2)))).transpose(1, 2)
        return self.norm2(x + self.dropout(y)) * m


class VariancePredictor(nn.Module):
    def __init__(self, dim: int, hidden: int, kernel: int, dropout: float):
        super().__init__()
        self.conv1 = nn.Conv1d(dim, hidden, kernel, padding=kernel // 2)
        self.norm1 = nn.LayerNorm(hidden)
        self.conv2 = nn.Conv1d(hidden, hidden, kernel, padding=kernel // 2)
        self.norm2 = nn.LayerNorm(hidden)
        self.proj = nn.Linear(hidden, 1)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask):
        m = mask.unsqueeze(-1).to(x.dtype)
        y = self.dropout(self.norm1(F.relu(self.conv1((x * m).transpose(1, 2)).transpose(1, 2))))
        y = self.dropout(self.norm2(F.relu(self.conv2((y * m).transpose(1, 2)).transpose(1, 2))))
        return self.proj(y).squeeze(-1) * mask.to(x.dtype)


class MaskedBatchNorm1d(nn.Module):
    """Batch norm over (batch, time) that ignores padded frames.

    Input is (B, C, T). In evaluation mode the running statistics are used,
    which makes the output independent of batch composition. ``stat_rows``
    (B,) bool selects the rows that contribute batch statistics in training;
    the other rows are normalised with the running statistics in both modes.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.register_buffer("running_mean", torch.zeros(channels))
        self.register_buffer("running_var", torch.ones(channels))
        self.register_buffer("num_batches_tracked", torch.tensor(0, dtype=torch.long))
        self.momentum = momentum
        self.eps = eps

    def _normalise(self, x, mean, var):
        y = (x - mean[None, :, None]) / torch.sqrt(var[None, :, None] + self.eps)
        return y * self.weight[None, :, None] + self.bias[None, :, None]

    def forward(self, x, mask, stat_rows=None):
        m = mask.unsqueeze(1).to(x.dtype)
        frozen = self._normalise(x, self.running_mean.to(x.dtype), self.running_var.to(x.dtype))
        if stat_rows is None:
            stat_rows = torch.ones(x.shape[0], dtype=torch.bool, device=x.device)
        if not self.training or not bool(stat_rows.any()):
            return frozen * m
        sm = m * stat_rows[:, None, None].to(x.dtype)
        count = sm.sum()
        mean = (x * sm).sum(dim=(0, 2)) / count
        var = (((x - mean[None, :, None]) ** 2) * sm).sum(dim=(0, 2)) / count
        with torch.no_grad():
            unbiased = var * count / torch.clamp(count - 1, min=1)
            self.running_mean.mul_(1 - self.momentum).add_(self.momentum * mean.to(self.running_mean.dtype))
            self.running_var.mul_(1 - self.momentum).add_(self.momentum * unbiased.to(self.running_var.dtype))
            self.num_batches_tracked += 1
        y = torch.where(stat_rows[:, None, None], self._normalise(x, mean, var), frozen)
        return y * m


class NoiseResBlock(nn.Module):
    def __init__(self, dim: int, kernel: int):
        super().__init__()
        self.conv1 = nn.Conv1d(dim, dim, kernel, padding=kernel // 2)
        self.bn1 = MaskedBatchNorm1d(dim)
        self.conv2 = nn.Conv1d(dim, dim, kernel, padding=kernel // 2)
        self.bn2 = MaskedBatchNorm1d(dim)

    def forward(self, x, mask, stat_rows=None):
        y = F.relu(self.bn1(self.conv1(x), mask, stat_rows))
        y = self.bn2(self.conv2(y), mask, stat_rows)
        return x + y


class NoiseEncoder(nn.Module):
    def __init__(self, n_mels: int, dim: int, blocks: int, kernel: int):
        super().__init__()
        self.proj = nn.Conv1d(n_mels, dim, 1)
        self.blocks = nn.ModuleList(NoiseResBlock(dim, kernel) for _ in range(blocks))

    def forward(self, mel, mask):
        """Silence rows never enter the batch statistics, so their embedding
        is the same in training and at inference."""
        m = mask.unsqueeze(1).to(mel.dtype)
        silent = ((mel == SILENCE_LOG_MEL) | ~mask[..., None]).all(dim=2).all(dim=1)
        x = self.proj(mel.transpose(1, 2)) * m
        for block in self.blocks:
            x = block(x, mask, ~silent) * m
        return x.transpose(1, 2)


class StyleTokenLayer(nn.Module):
    """Multi-head attention of one query over a bank of tanh-squashed tokens.

    Heads split the token dimension; the concatenated per-head convex
    combinations form the output (no output projection).
    """

    def __init__(self, n_tokens: int, dim: int, heads: int):
        super().__init__()
        self.tokens = nn.Parameter(torch.randn(n_tokens, dim) * 0.5)
        self.heads = heads
        self.w_query = nn.Linear(dim, dim, bias=False)
        self.w_key = nn.Linear(dim, dim, bias=False)
        self.w_value = nn.Linear(dim, dim, bias=False)

    def head_values(self) -> torch.Tensor:
        """(heads, n_tokens, dim // heads) projected tanh-token values."""
        n, d = self.tokens.shape
        return self.w_value(torch.tanh(self.tokens)).view(n, self.heads, d // self.heads).transpose(0, 1)

    def attention(self, query: torch.Tensor) -> torch.Tensor:
        """(B, dim) -> (B, heads, n_tokens) attention weights."""
        n, d = self.tokens.shape
        h = self.heads
        q = self.w_query(query).view(-1, h, d // h)
        k = self.w_key(torch.tanh(self.tokens)).view(n, h, d // h)
        scores = torch.einsum("bhd,nhd->bhn", q, k) / math.sqrt(d // h)
        return torch.softmax(scores, dim=-1)

    def forward(self, query):
        weights = self.attention(query)
        out = torch.einsum("bhn,hnd->bhd", weights, self.head_values())
        return out.reshape(query.shape[0], -1)


class ReferenceEncoder(nn.Module):
    def __init__(self, n_mels: int, channels: Sequence[int], dim: int):
        super().__init__()
        convs, c_in, freq = [], 1, n_mels
        for c in channels:
            convs.append(nn.Conv2d(c_in, c, 3, stride=2, padding=1))
            c_in = c
            freq = (freq + 1) // 2
        self.convs = nn.ModuleList(convs)
        self.proj = nn.Linear(c_in * freq, dim)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        """(T, n_mels) -> (dim,) query vector."""
        x = mel[None, None]
        for conv in self.convs:
            x = F.relu(conv(x))
        x = x[0].permute(1, 0, 2).reshape(x.shape[2], -1)
        return torch.tanh(self.proj(x.mean(dim=0)))


class EnvironmentEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.reference = ReferenceEncoder(config.n_mels, config.ref_channels, config.style_dim)
        self.stl = StyleTokenLayer(config.style_tokens, config.style_dim, config.style_heads)

    def forward(self, mels: Sequence[torch.Tensor]) -> torch.Tensor:
        """List of (T_i, n_mels) -> (B, dim). Utterances are encoded one by one
        so padding never reaches the convolutions."""
        queries = torch.stack([self.reference(m) for m in mels])
        return self.stl(queries)


@dataclass
class Predictions:
    mel: torch.Tensor
    log_duration: torch.Tensor
    pitch: torch.Tensor
    energy: torch.Tensor
    mel_mask: torch.Tensor
    src_mask: torch.Tensor
    durations: torch.Tensor
    env: torch.Tensor


def length_regulate(hidden: torch.Tensor, durations: torch.Tensor) -> torch.Tensor:
    """Repeat row i of ``hidden`` (L, D) durations[i] times."""
    durations = torch.as_tensor(durations, dtype=torch.long)
    if hidden.shape[0] != durations.shape[0]:
        raise InvalidInput("one duration per row is required")
    if torch.any(durations < 0):
        raise InvalidInput("durations must be non-negative")
    if int(durations.sum()) == 0:
        raise EmptyExpansion("all durations are zero")
    return torch.repeat_interleave(hidden, durations, dim=0)


def length_regulate_batch(hidden, durations, src_mask):
    """(B, L, D), (B, L) -> (B, T, D), (B, T) mask."""
    durations = durations * src_mask.long()
    seqs = [length_regulate(h, d) for h, d in zip(hidden, durations)]
    lengths = torch.tensor([s.shape[0] for s in seqs])
    out = nn.utils.rnn.pad_sequence(seqs, batch_first=True)
    mask = torch.arange(out.shape[1])[None, :] < lengths[:, None]
    return out, mask


def round_durations(log_duration: torch.Tensor, src_mask: torch.Tensor) -> torch.Tensor:
    """Inverse of the log(d + 1) target: round half up, at least one frame."""
    d = torch.floor(torch.exp(log_duration) - 1.0 + 0.5).long()
    return torch.clamp(d, min=1) * src_mask.long()


class AcousticModel(nn.Module):
    def __init__(self, config: ModelConfig, stats: VarianceStats | None = None):
        super().__init__()
        self.config = config
        c = config
        self.phoneme_embedding = nn.Embedding(c.n_vocab, c.hidden, padding_idx=0)
        self.encoder = nn.ModuleList(FFTBlock(c.hidden, c.heads, c.ffn_hidden, c.ffn_kernel, c.dropout)
                                     for _ in range(c.enc_blocks))
        self.speaker_embedding = nn.Embedding(c.n_speakers, c.hidden)
        self.duration_predictor = VariancePredictor(c.hidden, c.predictor_hidden, c.predictor_kernel, c.dropout)
        self.pitch_predictor = VariancePredictor(c.hidden, c.predictor_hidden, c.predictor_kernel, c.dropout)
        self.energy_predictor = VariancePredictor(c.hidden, c.predictor_hidden, c.predictor_kernel, c.dropout)
        self.pitch_embedding = nn.Embedding(c.n_bins, c.hidden)
        self.energy_embedding = nn.Embedding(c.n_bins, c.hidden)
        self.noise_encoder = NoiseEncoder(c.n_mels, c.hidden, c.noise_blocks, c.noise_kernel)
        self.env_encoder = EnvironmentEncoder(c)
        self.decoder = nn.ModuleList(FFTBlock(c.hidden, c.heads, c.ffn_hidden, c.ffn_kernel, c.dropout)
                                     for _ in range(c.dec_blocks))
        self.mel_proj = nn.Linear(c.hidden, c.n_mels)
        self.register_buffer("pitch_bins", torch.zeros(c.n_bins - 1))
        self.register_buffer("energy_bins", torch.zeros(c.n_bins - 1))
        self.stats = VarianceStats()
        self.set_variance_stats(stats or VarianceStats())

    # parameter groups, used for freezing and for gradient checks
    def phoneme_encoder_parameters(self):
        yield from self.phoneme_embedding.parameters()
        yield from self.encoder.parameters()

    def set_variance_stats(self, stats: VarianceStats) -> None:
        """Fix the 256-bin quantisation grid (uniform over the normalised range)."""
        self.stats = stats
        n = self.config.n_bins
        self.pitch_bins.copy_(torch.linspace(stats.pitch_min, stats.pitch_max, n + 1)[1:-1])
        self.energy_bins.copy_(torch.linspace(stats.energy_min, stats.energy_max, n + 1)[1:-1])

    @staticmethod
    def quantize(values: torch.Tensor, boundaries: torch.Tensor) -> torch.Tensor:
        """Bin index; a value exactly on a boundary goes to the lower bin."""
        return torch.bucketize(values, boundaries.to(values.dtype), right=False)

    @property
    def dtype(self):
        return self.mel_proj.weight.dtype

    def positions(self, length: int) -> torch.Tensor:
        return sinusoid_table(length, self.config.hidden, self.dtype)

    # -- individual operations ------------------------------------------------

    def encode_phonemes(self, tokens, src_mask, speakers, env):
        if torch.any(tokens < 0) or torch.any(tokens >= self.config.n_vocab):
            raise InvalidInput("phoneme token outside the vocabulary")
        if torch.any(speakers < 0) or torch.any(speakers >= self.config.n_speakers):
            raise InvalidInput("speaker id outside the speaker table")
        x = self.phoneme_embedding(tokens) + self.positions(tokens.shape[1])[None]
        x = x * src_mask.unsqueeze(-1).to(x.dtype)
        for block in self.encoder:
            x = block(x, src_mask)
        cond = self.speaker_embedding(speakers) + env
        return (x + cond[:, None, :]) * src_mask.unsqueeze(-1).to(x.dtype)

    def predict_variances(self, enc_out, frames, src_mask, mel_mask, pitch_target=None, energy_target=None):
        log_duration = self.duration_predictor(enc_out, src_mask)
        pitch = self.pitch_predictor(frames, mel_mask)
        energy = self.energy_predictor(frames, mel_mask)
        p = pitch_target if pitch_target is not None else pitch.detach()
        e = energy_target if energy_target is not None else energy.detach()
        m = mel_mask.unsqueeze(-1).to(frames.dtype)
        enriched = frames + (self.pitch_embedding(self.quantize(p, self.pitch_bins))
                             + self.energy_embedding(self.quantize(e, self.energy_bins))) * m
        return log_duration, pitch, energy, enriched

    def noise_encode(self, noise_mel, mel_mask, n_target_frames: int | None = None):
        if n_target_frames is not None and noise_mel.shape[1] != n_target_frames:
            raise FrameMismatch(f"noise mel has {noise_mel.shape[1]} frames, target has {n_target_frames}")
        return self.noise_encoder(noise_mel, mel_mask)

    def env_encode(self, mels: Sequence[torch.Tensor]) -> torch.Tensor:
        if any(m.shape[0] == 0 for m in mels):
            raise InvalidInput("environment encoder needs at least one frame")
        return self.env_encoder([m.to(self.dtype) for m in mels])

    def decode(self, frames, h_noise, mel_mask):
        if h_noise.shape[:2] != frames.shape[:2]:
            raise FrameMismatch(f"noise embedding {tuple(h_noise.shape[:2])} vs frames {tuple(frames.shape[:2])}")
        x = frames + h_noise + self.positions(frames.shape[1])[None]
        x = x * mel_mask.unsqueeze(-1).to(x.dtype)
        for block in self.decoder:
            x = block(x, mel_mask)
        return self.mel_proj(x) * mel_mask.unsqueeze(-1).to(x.dtype)

    # -- composition -----------------------------------------------------------

    def forward(self, batch: "Batch", teacher_forced: bool = True, env: torch.Tensor | None = None,
                durations: torch.Tensor | None = None, pitch: torch.Tensor | None = None) -> Predictions:
        """Teacher-forced (ground-truth durations/pitch/energy) or free-running pass.

        ``env`` replaces the per-utterance environment embedding (B, dim) or (dim,).
        A ``None`` noise mel means silence (the inference-time input). In
        free-running mode ``durations`` and normalised ``pitch`` override the
        predictions.
        """
        if env is None:
            env = self.env_encode(batch.env_mels)
        elif env.dim() == 1:
            env = env.expand(batch.tokens.shape[0], -1)
        enc = self.encode_phonemes(batch.tokens, batch.src_mask, batch.speakers, env)
        log_duration = self.duration_predictor(enc, batch.src_mask)
        if teacher_forced:
            used = batch.durations
        elif durations is not None:
            used = durations
        else:
            used = round_durations(log_duration, batch.src_mask)
        frames, mel_mask = length_regulate_batch(enc, used, batch.src_mask)
        if teacher_forced:
            if frames.shape[1] != batch.mel_mask.shape[1]:
                raise FrameMismatch("sum of durations does not match the target frame count")
            _, pitch, energy, frames = self.predict_variances(enc, frames, batch.src_mask, mel_mask,
                                                              batch.pitch, batch.energy)
        else:
            if pitch is not None and pitch.shape != mel_mask.shape:
                raise FrameMismatch(f"pitch override {tuple(pitch.shape)} vs frames {tuple(mel_mask.shape)}")
            _, pitch, energy, frames = self.predict_variances(enc, frames, batch.src_mask, mel_mask, pitch)
        noise_mel = batch.noise_mel
        if noise_mel is None:
            noise_mel = torch.full((frames.shape[0], frames.shape[1], self.config.n_mels),
                                   SILENCE_LOG_MEL, dtype=frames.dtype)
        if noise_mel.shape[1] != frames.shape[1]:
            raise FrameMismatch(f"noise mel has {noise_mel.shape[1]} frames, expansion has {frames.shape[1]}")
        h_noise = self.noise_encode(noise_mel, mel_mask)
        mel = self.decode(frames, h_noise, mel_mask)
        return Predictions(mel, log_duration, pitch, energy, mel_mask, batch.src_mask, used, env)


@dataclass
class Batch:
    """Padded training/inference batch."""
    tokens: torch.Tensor            # (B, L) long
    src_mask: torch.Tensor          # (B, L) bool
    speakers: torch.Tensor          # (B,) long
    durations: torch.Tensor         # (B, L) long
    mel: torch.Tensor | None        # (B, T, n_mels) target
    mel_mask: torch.Tensor | None   # (B, T) bool
    noise_mel: torch.Tensor | None  # (B, T, n_mels); None = silence
    env_mels: list                  # B tensors (T_i, n_mels)
    pitch: torch.Tensor             # (B, T) normalised log-F0
    voiced: torch.Tensor            # (B, T) bool
    energy: torch.Tensor            # (B, T) normalised
    conditions: list = field(default_factory=list)
    ids: list = field(default_factory=list)

    def __len__(self):
        return self.tokens.shape[0]

    def select(self, idx: Sequence[int]) -> "Batch":
        idx = list(idx)
        t = torch.tensor(idx, dtype=torch.long)
        max_l = int(self.src_mask[t].sum(1).max())
        max_t = int(self.mel_mask[t].sum(1).max())
        return Batch(self.tokens[t, :max_l], self.src_mask[t, :max_l], self.speakers[t],
                     self.durations[t, :max_l], self.mel[t, :max_t], self.mel_mask[t, :max_t],
                     None if self.noise_mel is None else self.noise_mel[t, :max_t],
                     [self.env_mels[i] for i in idx],
                     self.pitch[t, :max_t], self.voiced[t, :max_t], self.energy[t, :max_t],
                     [self.conditions[i] for i in idx] if self.conditions else [],
                     [self.ids[i] for i in idx] if self.ids else [])


# -- persistence ------------------------------------------------------------------

def save_model(path, model: AcousticModel, vocab: Sequence[str], speakers: Sequence[str],
               extra: dict | None = None) -> None:
    meta = {
        "config": asdict(model.config),
        "stats": asdict(model.stats),
        "vocab": list(vocab),
        "speakers": list(speakers),
        "dtype": str(model.dtype).replace("torch.", ""),
    }
    meta.update(extra or {})
    checkpoint.save_artifact(path, "model", meta, checkpoint.state_to_arrays(model, "param/"))


def load_model(path) -> tuple[AcousticModel, dict]:
    meta, arrays = checkpoint.load_artifact(path, "model")
    model = AcousticModel(ModelConfig(**meta["config"]), VarianceStats(**meta["stats"]))
    model = model.to(getattr(torch, meta.get("dtype", "float32")))
    model.load_state_dict(checkpoint.arrays_to_state(arrays, "param/"))
    model.eval()
    return model, meta


def to_tensor(x, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x), dtype=dtype)
