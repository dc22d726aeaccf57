"""Feature preparation, the main and averaged-embedding objectives, and the
optimisation loop."""
from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
from torch import nn

from . import dsp
from .degrade import DegradationCondition, UtteranceRecord, parse_conditions
from .errors import InvalidInput, TrainingDiverged
from .model import PAD, AcousticModel, Batch, ModelConfig, Predictions, VarianceStats, save_model
from .separation import separator_forward

log = logging.getLogger(__name__)

MIN_AVERAGE_SUBSET = 2
CLEAN_SHARE = 0.25


@dataclass
class TrainConfig:
    alpha: float = 1.0
    batch_size: int = 16
    lr: float = 1e-3
    max_steps: int = 2000
    checkpoint_every: int = 500
    seed: int = 0
    clean_env_conditions: tuple[str, ...] = ("clean", "noise")
    silence_conditions: tuple[str, ...] = ("clean", "reverb")
    freeze_phoneme_encoder: bool = False
    grad_clip: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidInput("alpha must be non-negative")
        self.clean_env_conditions = tuple(c.value for c in parse_conditions(self.clean_env_conditions))
        self.silence_conditions = tuple(c.value for c in parse_conditions(self.silence_conditions))
        if not self.clean_env_conditions:
            raise InvalidInput("clean_env_conditions must not be empty")


@dataclass
class LossBreakdown:
    mel_l1: float
    duration_mse: float
    pitch_mse: float
    energy_mse: float
    l_main: float
    l_average: float
    total: float


# -- features -----------------------------------------------------------------------

@dataclass
class UtteranceFeatures:
    id: str
    speaker_id: str
    phonemes: list[str]
    durations: np.ndarray
    condition: str
    target_mel: np.ndarray
    noise_mel: np.ndarray
    denoised_mel: np.ndarray
    f0: np.ndarray
    voiced: np.ndarray
    energy: np.ndarray
    clean_mel: np.ndarray | None = None
    clean_f0: np.ndarray | None = None

    @property
    def n_frames(self) -> int:
        return int(self.durations.sum())


def fit_frames(mel: np.ndarray, n: int) -> np.ndarray:
    """Crop or edge-pad along time so the mel has exactly ``n`` frames."""
    if mel.shape[0] >= n:
        return mel[:n]
    return np.concatenate([mel, np.repeat(mel[-1:], n - mel.shape[0], axis=0)])


def _fit_1d(x: np.ndarray, n: int) -> np.ndarray:
    if len(x) >= n:
        return x[:n]
    return np.concatenate([x, np.zeros(n - len(x), dtype=x.dtype)])


def features_from_audio(record: UtteranceRecord, degraded: dsp.Waveform, extractor, denoiser,
                        silence_conditions: Iterable[str] = ("clean", "reverb"),
                        clean: dsp.Waveform | None = None) -> UtteranceFeatures:
    """Target, noise and denoised mels plus pitch/energy for one utterance.

    The noise path sees the extractor output, never the true noise; for
    conditions in ``silence_conditions`` it sees the mel of silence.
    Pitch comes from the denoised waveform, energy from the target mel.
    """
    durations = np.asarray(record.durations, dtype=np.int64)
    n = int(durations.sum())
    if n == 0:
        raise InvalidInput(f"{record.id}: durations sum to zero")
    target = fit_frames(dsp.mel_spectrogram(degraded).values, n)
    if record.condition in set(silence_conditions):
        noise = dsp.silence_mel(n).values
    else:
        noise = fit_frames(dsp.mel_spectrogram(separator_forward(degraded, extractor)).values, n)
    denoised_wave = separator_forward(degraded, denoiser)
    denoised = fit_frames(dsp.mel_spectrogram(denoised_wave).values, n)
    track = dsp.estimate_f0(denoised_wave)
    f0 = _fit_1d(track.f0, n)
    energy = np.linalg.norm(target, axis=1)
    clean_mel = clean_f0 = None
    if clean is not None:
        clean_mel = fit_frames(dsp.mel_spectrogram(clean).values, n)
        clean_f0 = _fit_1d(dsp.estimate_f0(clean).f0, n)
    return UtteranceFeatures(record.id, record.speaker_id, list(record.phonemes), durations,
                             record.condition or "clean", target, noise, denoised, f0, f0 > 0, energy,
                             clean_mel, clean_f0)


def prepare_batch_features(records: Sequence[UtteranceRecord], extractor, denoiser,
                           silence_conditions: Iterable[str] = ("clean", "reverb"),
                           audio: dict | None = None, clean_audio: dict | None = None,
                           load: Callable[[str], dsp.Waveform] = dsp.load_wav,
                           ) -> tuple[list[UtteranceFeatures], list[tuple[str, str]]]:
    """Features for every record; unreadable rows are reported, not raised."""
    feats, errors = [], []
    for rec in records:
        try:
            degraded = audio[rec.id] if audio is not None else load(rec.degraded_path)
            clean = None
            if clean_audio is not None:
                clean = clean_audio.get(rec.id)
            elif rec.clean_path:
                clean = load(rec.clean_path)
            feats.append(features_from_audio(rec, degraded, extractor, denoiser, silence_conditions, clean))
        except (OSError, FileNotFoundError, InvalidInput, ValueError) as exc:
            errors.append((rec.id, f"{type(exc).__name__}: {exc}"))
    return feats, errors


def continuous_log_f0(f0: np.ndarray, voiced: np.ndarray, fill: float = 0.0) -> np.ndarray:
    out = np.full(len(f0), fill, dtype=np.float64)
    if voiced.any():
        idx = np.arange(len(f0))
        out = np.interp(idx, idx[voiced], np.log(f0[voiced]))
    return out


def compute_variance_stats(features: Sequence[UtteranceFeatures]) -> VarianceStats:
    voiced_logf0 = np.concatenate([np.log(f.f0[f.voiced]) for f in features] + [np.zeros(0)])
    energies = np.concatenate([f.energy for f in features])
    p_mean = float(voiced_logf0.mean()) if len(voiced_logf0) else 0.0
    p_std = float(voiced_logf0.std()) if len(voiced_logf0) > 1 else 1.0
    e_mean, e_std = float(energies.mean()), float(energies.std())
    p_std = p_std if p_std > 1e-6 else 1.0
    e_std = e_std if e_std > 1e-6 else 1.0
    pitch = np.concatenate([(continuous_log_f0(f.f0, f.voiced, p_mean) - p_mean) / p_std for f in features])
    energy = (energies - e_mean) / e_std
    return VarianceStats(p_mean, p_std, e_mean, e_std, float(pitch.min()), float(pitch.max()),
                         float(energy.min()), float(energy.max()))


def build_vocab(features_or_records: Iterable) -> list[str]:
    tokens = sorted({p for f in features_or_records for p in f.phonemes})
    return [PAD] + [t for t in tokens if t != PAD]


def build_speakers(features_or_records: Iterable) -> list[str]:
    return sorted({f.speaker_id for f in features_or_records})


def collate(features: Sequence[UtteranceFeatures], vocab: Sequence[str], speakers: Sequence[str],
            stats: VarianceStats, dtype=torch.float32) -> Batch:
    vocab_index = {t: i for i, t in enumerate(vocab)}
    speaker_index = {s: i for i, s in enumerate(speakers)}
    b = len(features)
    max_l = max(len(f.phonemes) for f in features)
    max_t = max(f.n_frames for f in features)
    n_mels = features[0].target_mel.shape[1]
    tokens = torch.zeros(b, max_l, dtype=torch.long)
    durations = torch.zeros(b, max_l, dtype=torch.long)
    src_mask = torch.zeros(b, max_l, dtype=torch.bool)
    mel = torch.zeros(b, max_t, n_mels, dtype=dtype)
    noise = torch.zeros(b, max_t, n_mels, dtype=dtype)
    mel_mask = torch.zeros(b, max_t, dtype=torch.bool)
    pitch = torch.zeros(b, max_t, dtype=dtype)
    voiced = torch.zeros(b, max_t, dtype=torch.bool)
    energy = torch.zeros(b, max_t, dtype=dtype)
    for i, f in enumerate(features):
        try:
            tokens[i, :len(f.phonemes)] = torch.tensor([vocab_index[p] for p in f.phonemes])
        except KeyError as exc:
            raise InvalidInput(f"{f.id}: phoneme {exc.args[0]!r} not in the vocabulary") from None
        if f.speaker_id not in speaker_index:
            raise InvalidInput(f"{f.id}: unknown speaker {f.speaker_id!r}")
        n = f.n_frames
        durations[i, :len(f.phonemes)] = torch.from_numpy(f.durations)
        src_mask[i, :len(f.phonemes)] = True
        mel[i, :n] = torch.from_numpy(f.target_mel)
        noise[i, :n] = torch.from_numpy(f.noise_mel)
        mel_mask[i, :n] = True
        p = (continuous_log_f0(f.f0, f.voiced, stats.pitch_mean) - stats.pitch_mean) / stats.pitch_std
        pitch[i, :n] = torch.from_numpy(p)
        voiced[i, :n] = torch.from_numpy(f.voiced)
        energy[i, :n] = torch.from_numpy((f.energy - stats.energy_mean) / stats.energy_std)
    speakers_t = torch.tensor([speaker_index[f.speaker_id] for f in features], dtype=torch.long)
    env_mels = [torch.as_tensor(f.denoised_mel, dtype=dtype) for f in features]
    return Batch(tokens, src_mask, speakers_t, durations, mel, mel_mask, noise, env_mels,
                 pitch, voiced, energy, [f.condition for f in features], [f.id for f in features])


# -- objectives -----------------------------------------------------------------------

def _masked_mean(x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    m = mask.to(x.dtype)
    count = m.sum()
    if count == 0:
        return (x * 0).sum()
    return (x * m).sum() / count


def loss_main(pred: Predictions, batch: Batch) -> dict[str, torch.Tensor]:
    """L1 on mel, MSE on log(d + 1), voiced-frame pitch and energy; unit weights."""
    if pred.mel.shape != batch.mel.shape:
        raise InvalidInput(f"prediction {tuple(pred.mel.shape)} vs target {tuple(batch.mel.shape)}")
    mel_mask = batch.mel_mask
    n_mels = batch.mel.shape[-1]
    mel_l1 = _masked_mean((pred.mel - batch.mel).abs().sum(-1), mel_mask) / n_mels
    log_d = torch.log(batch.durations.to(pred.log_duration.dtype) + 1.0)
    duration_mse = _masked_mean((pred.log_duration - log_d) ** 2, batch.src_mask)
    pitch_mse = _masked_mean((pred.pitch - batch.pitch) ** 2, mel_mask & batch.voiced)
    energy_mse = _masked_mean((pred.energy - batch.energy) ** 2, mel_mask)
    l_main = mel_l1 + duration_mse + pitch_mse + energy_mse
    return {"mel_l1": mel_l1, "duration_mse": duration_mse, "pitch_mse": pitch_mse,
            "energy_mse": energy_mse, "l_main": l_main}


def clean_env_indices(batch: Batch, conditions: Iterable[str]) -> list[int]:
    conditions = set(conditions)
    return [i for i, c in enumerate(batch.conditions) if c in conditions]


def loss_average(batch: Batch, model: AcousticModel, config: TrainConfig,
                 env: torch.Tensor | None = None, min_subset: int = MIN_AVERAGE_SUBSET) -> torch.Tensor:
    """Main-task loss on the clean-environment records, each conditioned on the
    batch average of their environment embeddings.

    ``env`` may carry the per-record embeddings already computed for the whole
    batch. Returns a constant zero when fewer than ``min_subset`` records qualify.
    """
    idx = clean_env_indices(batch, config.clean_env_conditions)
    if len(idx) < min_subset:
        return torch.zeros((), dtype=model.dtype)
    sub = batch.select(idx)
    if env is None:
        sub_env = model.env_encode(sub.env_mels)
    else:
        sub_env = env[torch.tensor(idx)]
    averaged = sub_env.mean(dim=0)
    pred = model(sub, teacher_forced=True, env=averaged)
    return loss_main(pred, sub)["l_main"]


def total_loss(l_main, l_average, alpha: float):
    return l_main + alpha * l_average


def compute_losses(model: AcousticModel, batch: Batch, config: TrainConfig):
    """(total tensor, LossBreakdown) for one teacher-forced step."""
    pred = model(batch, teacher_forced=True)
    parts = loss_main(pred, batch)
    l_avg = loss_average(batch, model, config, env=pred.env)
    total = total_loss(parts["l_main"], l_avg, config.alpha)
    breakdown = LossBreakdown(
        mel_l1=parts["mel_l1"].item(), duration_mse=parts["duration_mse"].item(),
        pitch_mse=parts["pitch_mse"].item(), energy_mse=parts["energy_mse"].item(),
        l_main=parts["l_main"].item(), l_average=float(l_avg.item()), total=total.item())
    return total, breakdown


# -- loop -------------------------------------------------------------------------------

class StratifiedSampler:
    """Batches holding at least a quarter of clean-environment records when available."""

    def __init__(self, features: Sequence[UtteranceFeatures], batch_size: int,
                 clean_conditions: Iterable[str], seed: int, clean_share: float = CLEAN_SHARE):
        self.n = len(features)
        self.batch_size = min(batch_size, self.n)
        conds = set(clean_conditions)
        self.clean = np.array([i for i, f in enumerate(features) if f.condition in conds], dtype=int)
        self.n_clean = min(len(self.clean), int(math.ceil(clean_share * self.batch_size)))
        self.rng = np.random.default_rng(seed)

    def __next__(self) -> list[int]:
        if self.batch_size == self.n:
            return [int(i) for i in self.rng.permutation(self.n)]
        chosen = list(self.rng.choice(self.clean, size=self.n_clean, replace=False)) if self.n_clean else []
        rest = np.setdiff1d(np.arange(self.n), chosen)
        chosen += list(self.rng.choice(rest, size=self.batch_size - len(chosen), replace=False))
        return [int(i) for i in chosen]

    def __iter__(self):
        return self


@dataclass
class Checkpoint:
    step: int
    state: dict
    path: Path | None = None


@dataclass
class TrainResult:
    model: AcousticModel
    history: list[dict]
    checkpoints: list[Checkpoint]
    vocab: list[str]
    speakers: list[str]
    stats: VarianceStats


def _parameter_groups(model: AcousticModel, freeze_encoder: bool):
    frozen = set()
    if freeze_encoder:
        for p in model.phoneme_encoder_parameters():
            p.requires_grad_(False)
            frozen.add(id(p))
    return [p for p in model.parameters() if id(p) not in frozen]


def train_loop(features: Sequence[UtteranceFeatures], model_config: ModelConfig, config: TrainConfig,
               out_dir: str | Path | None = None, model: AcousticModel | None = None,
               vocab: Sequence[str] | None = None, speakers: Sequence[str] | None = None,
               stats: VarianceStats | None = None, dtype=torch.float32,
               provenance: dict | None = None,
               on_log: Callable[[dict], None] | None = None) -> TrainResult:
    """Adam on the acoustic model only; separators never enter this loop
    (their outputs are already baked into ``features``)."""
    if not features:
        raise InvalidInput("no training features")
    present = {f.condition for f in features}
    if config.alpha > 0 and len(present) < 2:
        raise InvalidInput(f"training with alpha > 0 needs at least two conditions, got {sorted(present)}")
    vocab = list(vocab or build_vocab(features))
    speakers = list(speakers or build_speakers(features))
    stats = stats or compute_variance_stats(features)
    torch.manual_seed(config.seed)
    if model is None:
        cfg = copy.deepcopy(model_config)
        cfg.n_vocab, cfg.n_speakers = len(vocab), len(speakers)
        model = AcousticModel(cfg, stats)
    model = model.to(dtype)
    model.set_variance_stats(stats)
    params = _parameter_groups(model, config.freeze_phoneme_encoder)
    opt = torch.optim.Adam(params, lr=config.lr)
    sampler = StratifiedSampler(features, config.batch_size, config.clean_env_conditions, config.seed)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / "metrics.jsonl", "w", encoding="utf-8")
    history: list[dict] = []
    checkpoints: list[Checkpoint] = []
    start = time.time()

    def save(step):
        state = copy.deepcopy(model.state_dict())
        path = None
        if out_dir is not None:
            path = out_dir / f"step_{step}"
            path.mkdir(parents=True, exist_ok=True)
            save_model(path / "model.npz", model, vocab, speakers, dict(provenance or {}, step=step))
            (path / "train_config.json").write_text(json.dumps(asdict(config), indent=2))
        checkpoints.append(Checkpoint(step, state, path))

    try:
        save(0)
        for step in range(1, config.max_steps + 1):
            model.train()
            batch = collate([features[i] for i in next(sampler)], vocab, speakers, stats, dtype)
            total, parts = compute_losses(model, batch, config)
            if not math.isfinite(parts.total):
                raise TrainingDiverged(step)
            opt.zero_grad()
            total.backward()
            if config.grad_clip:
                nn.utils.clip_grad_norm_(params, config.grad_clip)
            opt.step()
            entry = {"step": step, **asdict(parts), "wall_time": time.time() - start}
            history.append(entry)
            if log_file:
                log_file.write(json.dumps(entry) + "\n")
                log_file.flush()
            if on_log:
                on_log(entry)
            if step % config.checkpoint_every == 0 or step == config.max_steps:
                save(step)
    finally:
        if log_file:
            log_file.close()
    model.eval()
    return TrainResult(model, history, checkpoints, vocab, speakers, stats)


def validation_mel_l1(model: AcousticModel, features: Sequence[UtteranceFeatures], vocab, speakers,
                      stats: VarianceStats, batch_size: int = 16) -> float:
    """Teacher-forced mel L1 averaged over all valid frames of ``features``."""
    if not features:
        raise InvalidInput("empty validation set")
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(features), batch_size):
            chunk = features[start:start + batch_size]
            batch = collate(chunk, vocab, speakers, stats, model.dtype)
            pred = model(batch, teacher_forced=True)
            err = (pred.mel - batch.mel).abs().sum(-1) * batch.mel_mask.to(pred.mel.dtype)
            total += float(err.sum()) / batch.mel.shape[-1]
            count += int(batch.mel_mask.sum())
    return total / count


def select_best(checkpoints: Sequence, evaluate: Callable[[object], float]) -> tuple[int, list[float]]:
    """Index of the checkpoint with the lowest validation loss (earliest on ties)."""
    if not checkpoints:
        raise InvalidInput("no checkpoints to choose from")
    losses = [float(evaluate(c)) for c in checkpoints]
    best = min(range(len(losses)), key=lambda i: (losses[i], i))
    return best, losses


def select_best_checkpoint(result: TrainResult, val_features: Sequence[UtteranceFeatures]) -> tuple[Checkpoint, list[float]]:
    """Load each checkpoint into the trained model and keep the best one loaded."""
    if not val_features:
        raise InvalidInput("empty validation set")
    model = result.model

    def evaluate(ck: Checkpoint) -> float:
        model.load_state_dict(ck.state)
        return validation_mel_l1(model, val_features, result.vocab, result.speakers, result.stats)

    idx, losses = select_best(result.checkpoints, evaluate)
    model.load_state_dict(result.checkpoints[idx].state)
    model.eval()
    return result.checkpoints[idx], losses
