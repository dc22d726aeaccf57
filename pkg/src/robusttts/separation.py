"""Time-domain masking separator (learned-basis encoder, dilated temporal
convolution mask network, learned-basis decoder) used as noise extractor and
as denoiser, with its SI-SNR training objective."""
from __future__ import annotations

import copy
import enum
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from . import checkpoint
from .dsp import Waveform
from .errors import InvalidInput, InvalidTarget, NumericalError, TrainingDiverged

log = logging.getLogger(__name__)

SI_SNR_CAP = 60.0


class SeparationMode(str, enum.Enum):
    EXTRACT_NOISE = "extract-noise"
    DENOISE = "denoise"


@dataclass
class SeparatorConfig:
    n_filters: int = 128
    filter_len: int = 32
    bottleneck: int = 64
    hidden: int = 128
    kernel: int = 3
    blocks: int = 4
    repeats: int = 2
    mode: str = SeparationMode.EXTRACT_NOISE.value

    def __post_init__(self):
        for name in ("n_filters", "filter_len", "bottleneck", "hidden", "kernel", "blocks", "repeats"):
            if getattr(self, name) <= 0:
                raise InvalidInput(f"separator {name} must be positive")
        if self.filter_len % 2:
            raise InvalidInput("filter_len must be even (stride is half of it)")
        self.mode = SeparationMode(self.mode).value


@dataclass
class PretrainConfig:
    steps: int = 300_000
    batch_size: int = 8
    lr: float = 1e-3
    segment: int = 11025
    eval_every: int = 100
    seed: int = 0
    grad_clip: float = 5.0


class GlobalLayerNorm(nn.Module):
    """Normalises over channels and time jointly, per example."""

    def __init__(self, channels: int, eps: float = 1e-8):
        super().__init__()
        self.gamma = nn.Parameter(torch.ones(1, channels, 1))
        self.beta = nn.Parameter(torch.zeros(1, channels, 1))
        self.eps = eps

    def forward(self, x):
        mean = x.mean(dim=(1, 2), keepdim=True)
        var = ((x - mean) ** 2).mean(dim=(1, 2), keepdim=True)
        return self.gamma * (x - mean) / torch.sqrt(var + self.eps) + self.beta


class TemporalBlock(nn.Module):
    def __init__(self, bottleneck: int, hidden: int, kernel: int, dilation: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv1d(bottleneck, hidden, 1),
            nn.PReLU(),
            GlobalLayerNorm(hidden),
            nn.Conv1d(hidden, hidden, kernel, dilation=dilation,
                      padding=dilation * (kernel - 1) // 2, groups=hidden),
            nn.PReLU(),
            GlobalLayerNorm(hidden),
            nn.Conv1d(hidden, bottleneck, 1),
        )

    def forward(self, x):
        return x + self.net(x)


class Separator(nn.Module):
    def __init__(self, config: SeparatorConfig):
        super().__init__()
        self.config = config
        n, stride = config.n_filters, config.filter_len // 2
        self.stride = stride
        self.encoder = nn.Conv1d(1, n, config.filter_len, stride=stride, bias=False)
        blocks = [TemporalBlock(config.bottleneck, config.hidden, config.kernel, 2 ** b)
                  for _ in range(config.repeats) for b in range(config.blocks)]
        self.mask_net = nn.Sequential(
            GlobalLayerNorm(n),
            nn.Conv1d(n, config.bottleneck, 1),
            *blocks,
            nn.PReLU(),
            nn.Conv1d(config.bottleneck, n, 1),
        )
        self.decoder = nn.ConvTranspose1d(n, 1, config.filter_len, stride=stride, bias=False)

    def padded_length(self, n: int) -> int:
        L, S = self.config.filter_len, self.stride
        return L + max(0, math.ceil((n - L) / S)) * S

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(batch, samples) -> (batch, samples)."""
        n = x.shape[-1]
        x = nn.functional.pad(x, (0, self.padded_length(n) - n)).unsqueeze(1)
        basis = torch.relu(self.encoder(x))
        mask = torch.sigmoid(self.mask_net(basis))
        return self.decoder(basis * mask).squeeze(1)[..., :n]


def check_finite(module: nn.Module) -> None:
    for name, p in module.named_parameters():
        if not torch.isfinite(p).all():
            raise NumericalError(f"parameter {name} has non-finite values")


def separator_forward(w: Waveform, model: Separator) -> Waveform:
    """Evaluation-mode separation of one waveform; output has the input's length."""
    check_finite(model)
    was_training = model.training
    model.eval()
    dtype = next(model.parameters(), torch.empty(0, dtype=torch.float64)).dtype
    with torch.no_grad():
        y = model(torch.as_tensor(w.samples, dtype=dtype).unsqueeze(0))[0]
    model.train(was_training)
    return Waveform(y.double().numpy(), w.sample_rate)


class IdentitySeparator(nn.Module):
    """Pass-through stand-in (returns the input unchanged)."""

    config = None

    def forward(self, x):
        return x


def si_snr(est, target) -> float:
    est = np.asarray(est.samples if isinstance(est, Waveform) else est, dtype=np.float64)
    target = np.asarray(target.samples if isinstance(target, Waveform) else target, dtype=np.float64)
    if est.shape != target.shape:
        raise InvalidInput(f"length mismatch {est.shape} vs {target.shape}")
    est = est - est.mean()
    target = target - target.mean()
    energy = float(target @ target)
    if energy == 0.0:
        raise InvalidTarget("SI-SNR target is all zero")
    s = (est @ target) / energy * target
    e = est - s
    num, den = float(s @ s), float(e @ e)
    if den == 0.0:
        return SI_SNR_CAP
    if num == 0.0:
        return -SI_SNR_CAP
    return float(min(10.0 * math.log10(num / den), SI_SNR_CAP))


def si_snr_torch(est: torch.Tensor, target: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Batched SI-SNR in dB along the last axis, capped like :func:`si_snr`."""
    est = est - est.mean(dim=-1, keepdim=True)
    target = target - target.mean(dim=-1, keepdim=True)
    scale = (est * target).sum(-1, keepdim=True) / ((target * target).sum(-1, keepdim=True) + eps)
    s = scale * target
    e = est - s
    ratio = (s * s).sum(-1) / ((e * e).sum(-1) + eps)
    return torch.clamp(10.0 * torch.log10(ratio + eps), max=SI_SNR_CAP)


def separation_target(triple, mode: SeparationMode):
    return triple.noise if SeparationMode(mode) is SeparationMode.EXTRACT_NOISE else triple.clean


def evaluate_separator(model: Separator, triples: Sequence, mode) -> float:
    scores = []
    for tr in triples:
        est = separator_forward(tr.mixture, model)
        scores.append(si_snr(est, separation_target(tr, mode)))
    return float(np.mean(scores))


@dataclass
class PretrainResult:
    model: Separator
    best_val_si_snr: float
    best_step: int
    history: list[dict]
    optimizer: torch.optim.Optimizer
    last_step: int


def _crop_batch(triples, idx, segment, mode, rng):
    xs, ys = [], []
    for i in idx:
        tr = triples[i]
        mix = tr.mixture.samples
        tgt = separation_target(tr, mode).samples
        if len(mix) > segment:
            start = int(rng.integers(len(mix) - segment + 1))
            mix, tgt = mix[start:start + segment], tgt[start:start + segment]
        else:
            mix = np.pad(mix, (0, segment - len(mix)))
            tgt = np.pad(tgt, (0, segment - len(tgt)))
        xs.append(mix)
        ys.append(tgt)
    return np.stack(xs), np.stack(ys)


def pretrain_separator(triples: Sequence, config: SeparatorConfig, hyper: PretrainConfig,
                       val_triples: Sequence | None = None, model: Separator | None = None,
                       optimizer_state: dict | None = None, start_step: int = 0,
                       on_log: Callable[[dict], None] | None = None,
                       dtype=torch.float32) -> PretrainResult:
    """Minimise negative SI-SNR against the noise (extract mode) or the clean
    speech (denoise mode) with Adam; returns the best-validation weights."""
    if not triples:
        raise InvalidInput("no training triples")
    mode = SeparationMode(config.mode)
    torch.manual_seed(hyper.seed)
    if model is None:
        model = Separator(config)
    model = model.to(dtype)
    opt = torch.optim.Adam(model.parameters(), lr=hyper.lr)
    if optimizer_state is not None:
        checkpoint.arrays_to_optimizer(opt, optimizer_state)
    rng = np.random.default_rng([hyper.seed, start_step])
    val_triples = list(val_triples) if val_triples else list(triples[:1])
    best = evaluate_separator(model, val_triples, mode)
    best_state, best_step = copy.deepcopy(model.state_dict()), start_step
    history = [{"step": start_step, "val_si_snr": best}]
    if on_log:
        on_log(history[-1])
    step = start_step
    for step in range(start_step + 1, start_step + hyper.steps + 1):
        model.train()
        idx = rng.integers(len(triples), size=hyper.batch_size)
        x, y = _crop_batch(triples, idx, hyper.segment, mode, rng)
        est = model(torch.as_tensor(x, dtype=dtype))
        loss = -si_snr_torch(est, torch.as_tensor(y, dtype=dtype)).mean()
        if not torch.isfinite(loss):
            model.load_state_dict(best_state)
            raise TrainingDiverged(step)
        opt.zero_grad()
        loss.backward()
        if hyper.grad_clip:
            nn.utils.clip_grad_norm_(model.parameters(), hyper.grad_clip)
        opt.step()
        entry = {"step": step, "loss": loss.item()}
        if step % hyper.eval_every == 0 or step == start_step + hyper.steps:
            entry["val_si_snr"] = evaluate_separator(model, val_triples, mode)
            if entry["val_si_snr"] > best:
                best, best_step = entry["val_si_snr"], step
                best_state = copy.deepcopy(model.state_dict())
        history.append(entry)
        if on_log:
            on_log(entry)
    model.load_state_dict(best_state)
    model.eval()
    return PretrainResult(model, best, best_step, history, opt, step)


def save_separator(path, model: Separator, extra: dict | None = None,
                   optimizer: torch.optim.Optimizer | None = None) -> None:
    meta = {"config": asdict(model.config)}
    meta.update(extra or {})
    arrays = checkpoint.state_to_arrays(model, "param/")
    if optimizer is not None:
        arrays.update(checkpoint.optimizer_to_arrays(optimizer))
    checkpoint.save_artifact(path, "separator", meta, arrays)


def load_separator(path) -> tuple[Separator, dict, dict]:
    """Returns (model in eval mode, header, optimizer-state arrays)."""
    meta, arrays = checkpoint.load_artifact(path, "separator")
    model = Separator(SeparatorConfig(**meta["config"]))
    state = checkpoint.arrays_to_state(arrays, "param/")
    dtype = next(iter(state.values())).dtype
    model = model.to(dtype)
    model.load_state_dict(state)
    model.eval()
    optim = {k: v for k, v in arrays.items() if k.startswith("optim/")}
    return model, meta, optim
