"""Clean-condition synthesis: silence on the noise path and the averaged
clean environment embedding on the utterance-level path."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from . import checkpoint, dsp
from .errors import ArtifactError, EmptySet, InvalidInput
from .model import AcousticModel, Batch, SILENCE_LOG_MEL
from .separation import separator_forward


@dataclass
class CleanEmbeddingArtifact:
    embedding: np.ndarray
    n_utterances: int
    conditions: tuple[str, ...]
    corpus_hash: str | None = None
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float64)
        if self.n_utterances < 1:
            raise InvalidInput("an average needs at least one utterance")
        if not np.all(np.isfinite(self.embedding)):
            raise InvalidInput("embedding is not finite")
        self.conditions = tuple(self.conditions)

    def save(self, path) -> None:
        meta = {"n_utterances": self.n_utterances, "conditions": list(self.conditions),
                "corpus_hash": self.corpus_hash, "ids": list(self.ids)}
        checkpoint.save_artifact(path, "clean_embedding", meta, {"embedding": self.embedding})

    @classmethod
    def load(cls, path) -> "CleanEmbeddingArtifact":
        meta, arrays = checkpoint.load_artifact(path, "clean_embedding")
        return cls(arrays["embedding"], meta["n_utterances"], tuple(meta["conditions"]),
                   meta.get("corpus_hash"), meta.get("ids", []))


def env_embeddings(model: AcousticModel, mels: Sequence[np.ndarray]) -> np.ndarray:
    """Per-utterance environment embeddings (N, dim), evaluation mode."""
    model.eval()
    with torch.no_grad():
        out = model.env_encode([torch.as_tensor(np.asarray(m), dtype=model.dtype) for m in mels])
    return out.double().numpy()


def compute_average_clean_embedding(model: AcousticModel, items: Iterable[tuple[str, str, np.ndarray]],
                                    conditions: Iterable[str], corpus_hash: str | None = None
                                    ) -> CleanEmbeddingArtifact:
    """Mean environment embedding over ``items`` = (id, condition, denoised mel)
    whose condition is in ``conditions``."""
    conditions = tuple(conditions)
    chosen = [(uid, mel) for uid, cond, mel in items if cond in set(conditions)]
    if not chosen:
        raise EmptySet(f"no utterances in conditions {list(conditions)}")
    emb = env_embeddings(model, [m for _, m in chosen])
    return CleanEmbeddingArtifact(emb.mean(axis=0), len(chosen), conditions, corpus_hash,
                                  [uid for uid, _ in chosen])


def embed_reference(model: AcousticModel, waveform: dsp.Waveform, denoiser) -> np.ndarray:
    """Denoise, take the mel, and encode one utterance's environment."""
    denoised = separator_forward(waveform, denoiser)
    return env_embeddings(model, [dsp.mel_spectrogram(denoised).values])[0]


@dataclass
class SynthesisRequest:
    phonemes: list[str]
    speaker_id: str
    durations: list[int] | None = None
    pitch_hz: list[float] | None = None
    render_waveform: bool = False
    griffin_lim_iterations: int = 32


@dataclass
class SynthesisResult:
    mel: dsp.MelSpectrogram
    durations: np.ndarray
    waveform: dsp.Waveform | None = None


def _request_batch(req: SynthesisRequest, model: AcousticModel, vocab: Sequence[str],
                   speakers: Sequence[str]) -> Batch:
    index = {t: i for i, t in enumerate(vocab)}
    missing = [p for p in req.phonemes if p not in index]
    if missing:
        raise InvalidInput(f"phonemes not in the model vocabulary: {sorted(set(missing))}")
    if req.speaker_id not in speakers:
        raise InvalidInput(f"unknown speaker {req.speaker_id!r}")
    if not req.phonemes:
        raise InvalidInput("empty phoneme sequence")
    tokens = torch.tensor([[index[p] for p in req.phonemes]], dtype=torch.long)
    src_mask = torch.ones_like(tokens, dtype=torch.bool)
    spk = torch.tensor([list(speakers).index(req.speaker_id)], dtype=torch.long)
    return Batch(tokens, src_mask, spk, torch.zeros_like(tokens), None, None, None, [], None, None, None)


def synthesize(req: SynthesisRequest, model: AcousticModel, vocab: Sequence[str], speakers: Sequence[str],
               clean_embedding: CleanEmbeddingArtifact | np.ndarray,
               model_corpus_hash: str | None = None) -> SynthesisResult:
    """Free-running synthesis with silence as the noise-encoder input.

    Accepts a bare embedding vector for diagnostics (e.g. a single
    utterance's embedding). A corpus-hash mismatch between model and
    embedding artifact raises a warning.
    """
    if isinstance(clean_embedding, CleanEmbeddingArtifact):
        if (model_corpus_hash and clean_embedding.corpus_hash
                and model_corpus_hash != clean_embedding.corpus_hash):
            warnings.warn(f"clean embedding was computed on corpus {clean_embedding.corpus_hash[:12]}, "
                          f"model was trained on {model_corpus_hash[:12]}", stacklevel=2)
        vector = clean_embedding.embedding
    else:
        vector = np.asarray(clean_embedding)
    if vector.shape != (model.config.style_dim,):
        raise InvalidInput(f"embedding has shape {vector.shape}, model expects ({model.config.style_dim},)")
    batch = _request_batch(req, model, vocab, speakers)
    durations = None
    if req.durations is not None:
        if len(req.durations) != len(req.phonemes) or min(req.durations) < 0 or sum(req.durations) == 0:
            raise InvalidInput("duration override must give one non-negative count per phoneme")
        durations = torch.tensor([req.durations], dtype=torch.long)
    pitch = None
    if req.pitch_hz is not None:
        if durations is None:
            raise InvalidInput("a pitch override needs a duration override to fix the frame grid")
        f0 = np.asarray(req.pitch_hz, dtype=np.float64)
        if len(f0) != int(durations.sum()) or np.any(f0 <= 0):
            raise InvalidInput("pitch override must give one positive F0 per frame")
        s = model.stats
        pitch = torch.as_tensor((np.log(f0) - s.pitch_mean) / s.pitch_std, dtype=model.dtype)[None]
    model.eval()
    with torch.no_grad():
        pred = model(batch, teacher_forced=False, env=torch.as_tensor(vector, dtype=model.dtype),
                     durations=durations, pitch=pitch)
    values = pred.mel[0].double().numpy()
    values = np.maximum(values, SILENCE_LOG_MEL)
    mel = dsp.MelSpectrogram(values)
    wave = dsp.griffin_lim(mel, iterations=req.griffin_lim_iterations) if req.render_waveform else None
    return SynthesisResult(mel, pred.durations[0].numpy(), wave)


def save_mel(path, mel: dsp.MelSpectrogram, extra: dict | None = None) -> Path:
    """Raw little-endian float32 matrix plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mel.values.astype("<f4").tofile(path)
    sidecar = {"shape": list(mel.values.shape), "dtype": "float32", "hop": mel.hop,
               "frame_size": mel.frame_size, "sample_rate": mel.sample_rate}
    sidecar.update(extra or {})
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))
    return path


def load_mel(path) -> dsp.MelSpectrogram:
    path = Path(path)
    side = path.with_suffix(path.suffix + ".json")
    if not path.exists() or not side.exists():
        raise ArtifactError(f"mel file or sidecar missing: {path}")
    meta = json.loads(side.read_text())
    values = np.fromfile(path, dtype="<f4").astype(np.float64).reshape(meta["shape"])
    return dsp.MelSpectrogram(values, meta["frame_size"], meta["hop"], meta["sample_rate"])
