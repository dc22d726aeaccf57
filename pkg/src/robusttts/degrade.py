"""Degraded-corpus construction: image-source room simulation, LUFS-calibrated
noise mixing, four-way condition assignment and a synthetic toy-speech
generator for small runs."""
from __future__ import annotations

import enum
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import signal

from . import dsp
from .dsp import Waveform
from .errors import ConfigError, DegenerateGeometry, InvalidInput, UnachievableReverb

FRACTIONAL_DELAY_TAPS = 81


class DegradationCondition(str, enum.Enum):
    CLEAN = "clean"
    NOISE = "noise"
    REVERB = "reverb"
    NOISE_REVERB = "noise_reverb"

    @property
    def has_noise(self) -> bool:
        return self in (DegradationCondition.NOISE, DegradationCondition.NOISE_REVERB)

    @property
    def has_reverb(self) -> bool:
        return self in (DegradationCondition.REVERB, DegradationCondition.NOISE_REVERB)


ALL_CONDITIONS = tuple(DegradationCondition)


def parse_conditions(text: str | Iterable) -> tuple[DegradationCondition, ...]:
    if isinstance(text, str):
        text = [t for t in text.replace("+", "_").split(",") if t.strip()]
    return tuple(DegradationCondition(str(t).strip().lower()) for t in text)


@dataclass(frozen=True)
class RoomSpec:
    dims: tuple[float, float, float] = (10.0, 7.5, 3.5)
    source_pos: tuple[float, float, float] = (5.0, 3.0, 1.6)
    mic_pos: tuple[float, float, float] = (0.5, 4.0, 0.5)
    noise_pos: tuple[float, float, float] = (3.0, 7.0, 0.2)
    t60: float = 0.2
    speed_of_sound: float = 343.0

    def __post_init__(self):
        for name in ("dims", "source_pos", "mic_pos", "noise_pos"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 3:
                raise InvalidInput(f"{name} must have three coordinates")
            object.__setattr__(self, name, value)
        if min(self.dims) <= 0:
            raise InvalidInput("room dimensions must be positive")
        for name in ("source_pos", "mic_pos", "noise_pos"):
            pos = getattr(self, name)
            if not all(0.0 < p < d for p, d in zip(pos, self.dims)):
                raise InvalidInput(f"{name} {pos} is not strictly inside the room {self.dims}")
        if self.t60 <= 0:
            raise InvalidInput("t60 must be positive")
        if self.speed_of_sound <= 0:
            raise InvalidInput("speed of sound must be positive")

    @property
    def volume(self) -> float:
        l, w, h = self.dims
        return l * w * h

    @property
    def surface(self) -> float:
        l, w, h = self.dims
        return 2.0 * (l * w + l * h + w * h)


def sabine_absorption(room: RoomSpec) -> float:
    """Uniform wall absorption that gives ``room.t60`` under Sabine's formula."""
    alpha = 0.161 * room.volume / (room.surface * room.t60)
    if alpha > 1.0:
        raise UnachievableReverb(
            f"t60 = {room.t60} s needs absorption {alpha:.3f} > 1 in a {room.dims} room")
    return alpha


def _axis_images(src: float, length: float, max_dist: float):
    n_max = int(math.ceil(max_dist / (2.0 * length))) + 1
    n = np.arange(-n_max, n_max + 1)
    pos = np.concatenate([src + 2.0 * n * length, -src + 2.0 * n * length])
    reflections = np.concatenate([np.abs(2 * n), np.abs(2 * n - 1)])
    return pos, reflections


def simulate_rir(room: RoomSpec, src=None, mic=None, sample_rate: int = dsp.SAMPLE_RATE,
                 absorption: float | None = None) -> Waveform:
    """Image-source impulse response of a shoebox room with uniform absorption.

    Images are enumerated out to the distance sound travels in 1.5 * t60;
    each contributes (1 - alpha)^(k/2) / (4 pi d) at fractional delay d / c,
    spread with an 81-tap Hann-windowed sinc.
    """
    src = np.asarray(room.source_pos if src is None else src, dtype=np.float64)
    mic = np.asarray(room.mic_pos if mic is None else mic, dtype=np.float64)
    if np.allclose(src, mic):
        raise DegenerateGeometry("source and microphone coincide")
    alpha = sabine_absorption(room) if absorption is None else float(absorption)
    if not 0.0 < alpha <= 1.0:
        raise UnachievableReverb(f"absorption must lie in (0, 1], got {alpha}")
    c = room.speed_of_sound
    direct = float(np.linalg.norm(src - mic))
    half = FRACTIONAL_DELAY_TAPS // 2
    n_len = max(int(math.ceil(1.5 * room.t60 * sample_rate)),
                int(math.ceil(direct / c * sample_rate)) + half + 1)
    max_dist = n_len / sample_rate * c

    axes = [_axis_images(s, L, max_dist) for s, L in zip(src, room.dims)]
    px, kx = axes[0]
    py, ky = axes[1]
    pz, kz = axes[2]
    dx = (px - mic[0])[:, None, None]
    dy = (py - mic[1])[None, :, None]
    dz = (pz - mic[2])[None, None, :]
    dist = np.sqrt(dx ** 2 + dy ** 2 + dz ** 2).ravel()
    order = (kx[:, None, None] + ky[None, :, None] + kz[None, None, :]).ravel()
    keep = dist <= max_dist
    dist, order = dist[keep], order[keep]

    reflection = math.sqrt(1.0 - alpha)
    with np.errstate(divide="ignore"):
        amp = np.where(order == 0, 1.0, reflection ** order) / (4.0 * math.pi * dist)
    keep = amp > 0
    dist, amp = dist[keep], amp[keep]

    delay = dist / c * sample_rate
    base = np.floor(delay).astype(np.int64)
    offsets = np.arange(-half, half + 1)
    idx = base[:, None] + offsets[None, :]
    frac = idx - delay[:, None]
    kernel = 0.5 * (1.0 + np.cos(2.0 * math.pi * frac / FRACTIONAL_DELAY_TAPS)) * np.sinc(frac)
    vals = amp[:, None] * kernel
    valid = (idx >= 0) & (idx < n_len)
    h = np.bincount(idx[valid], weights=vals[valid], minlength=n_len)[:n_len]
    return Waveform(h, sample_rate)


def direct_path_scale(room: RoomSpec) -> float:
    """Gain that gives the speech source's direct path unit amplitude."""
    return 4.0 * math.pi * float(np.linalg.norm(np.subtract(room.source_pos, room.mic_pos)))


@lru_cache(maxsize=16)
def degradation_rir(room: RoomSpec, which: str, sample_rate: int = dsp.SAMPLE_RATE) -> Waveform:
    """RIR used when degrading: speech or noise source, both scaled by
    :func:`direct_path_scale` so dry and reverberant speech have comparable level."""
    src = room.source_pos if which == "speech" else room.noise_pos
    h = simulate_rir(room, src, room.mic_pos, sample_rate)
    return Waveform(h.samples * direct_path_scale(room), sample_rate)


def schroeder_t60(rir: Waveform, lo_db: float = -5.0, hi_db: float = -35.0) -> float:
    """Reverberation time from a line fit to the backward-integrated energy decay."""
    energy = np.cumsum(rir.samples[::-1] ** 2)[::-1]
    edc = 10.0 * np.log10(energy / energy[0] + 1e-300)
    start = int(np.argmax(edc <= lo_db))
    stop = int(np.argmax(edc <= hi_db))
    if stop <= start + 1:
        raise InvalidInput("decay curve does not span the fit range")
    t = np.arange(start, stop) / rir.sample_rate
    slope = np.polyfit(t, edc[start:stop], 1)[0]
    return -60.0 / slope


def apply_rir(w: Waveform, rir: Waveform) -> tuple[Waveform, float]:
    """Convolve and truncate to the input length.

    If the result would clip it is rescaled to the input's peak; the applied
    gain (1.0 when untouched) is returned alongside.
    """
    if w.sample_rate != rir.sample_rate:
        raise InvalidInput(f"sample rates differ: {w.sample_rate} vs {rir.sample_rate}")
    if len(w) == 0:
        return Waveform(np.zeros(0), w.sample_rate), 1.0
    out = signal.fftconvolve(w.samples, rir.samples)[:len(w)]
    gain = 1.0
    peak = np.max(np.abs(out))
    if peak > 1.0:
        gain = float(np.max(np.abs(w.samples)) / peak)
        out = out * gain
    return Waveform(out, w.sample_rate), gain


def fit_noise_length(noise: Waveform, n_samples: int) -> Waveform:
    """Tile ``noise`` and truncate to exactly ``n_samples``."""
    if len(noise) == 0:
        raise InvalidInput("noise clip is empty")
    return Waveform(np.resize(noise.samples, n_samples), noise.sample_rate)


@dataclass
class DegradeResult:
    waveform: Waveform
    noise_lufs: float | None = None
    rir_seed: int | None = None
    gain: float = 1.0
    noise_component: Waveform | None = None


def degrade_utterance(clean: Waveform, noise: Waveform | None, cond: DegradationCondition,
                      room: RoomSpec, rng: np.random.Generator,
                      lufs_range: tuple[float, float] = (-40.0, -32.0),
                      rir_seed: int | None = None) -> DegradeResult:
    cond = DegradationCondition(cond)
    n = len(clean)
    sr = clean.sample_rate
    if cond is DegradationCondition.CLEAN:
        return DegradeResult(Waveform(clean.samples.copy(), sr), rir_seed=rir_seed)

    speech = clean
    gain = 1.0
    if cond.has_reverb:
        speech, g = apply_rir(clean, degradation_rir(room, "speech", sr))
        gain *= g
    if not cond.has_noise:
        return DegradeResult(speech, rir_seed=rir_seed, gain=gain)

    if noise is None:
        raise InvalidInput(f"condition {cond.value} needs a noise clip")
    target = float(rng.uniform(*lufs_range))
    scaled, _ = dsp.scale_to_lufs(fit_noise_length(noise, n), target)
    component = scaled
    if cond.has_reverb:
        component, g = apply_rir(scaled, degradation_rir(room, "noise", sr))
        gain *= g
    mix = speech.samples + component.samples
    peak = np.max(np.abs(mix)) if n else 0.0
    if peak > 1.0:
        gain /= peak
        mix = mix / peak
    return DegradeResult(Waveform(mix, sr), noise_lufs=target, rir_seed=rir_seed, gain=gain,
                         noise_component=scaled)


# -- manifests ------------------------------------------------------------------

@dataclass
class UtteranceRecord:
    id: str
    speaker_id: str
    phonemes: list[str]
    durations: list[int]
    condition: str | None = None
    clean_path: str | None = None
    degraded_path: str | None = None
    noise_lufs: float | None = None
    rir_seed: int | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=False)

    @classmethod
    def from_dict(cls, row: dict) -> "UtteranceRecord":
        known = set(cls.__dataclass_fields__)
        unknown = set(row) - known
        if unknown:
            raise InvalidInput(f"unknown manifest fields {sorted(unknown)}")
        rec = cls(**row)
        if len(rec.phonemes) != len(rec.durations):
            raise InvalidInput(f"{rec.id}: {len(rec.phonemes)} phonemes but {len(rec.durations)} durations")
        if any(d < 0 for d in rec.durations):
            raise InvalidInput(f"{rec.id}: negative duration")
        return rec


_PATH_FIELDS = ("clean_path", "degraded_path")


def write_manifest(path: str | Path, records: Iterable) -> None:
    """JSON lines; audio paths are stored relative to the manifest's directory
    so identical corpora hash identically wherever they are written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            if isinstance(rec, UtteranceRecord):
                rel = {k: os.path.relpath(Path(v).resolve(), base) for k in _PATH_FIELDS
                       if (v := getattr(rec, k)) is not None}
                rec = replace(rec, **rel)
            f.write((rec.to_json() if hasattr(rec, "to_json") else json.dumps(rec)) + "\n")


def read_manifest(path: str | Path) -> list[UtteranceRecord]:
    """Relative audio paths resolve against the manifest's directory."""
    base = Path(path).parent.resolve()
    with open(path, encoding="utf-8") as f:
        records = [UtteranceRecord.from_dict(json.loads(line)) for line in f if line.strip()]
    return [replace(r, **{k: str((base / v).resolve()) for k in _PATH_FIELDS
                          if (v := getattr(r, k)) is not None and not Path(v).is_absolute()})
            for r in records]


def corpus_hash(path_or_lines) -> str:
    """Digest over manifest lines (order-sensitive)."""
    if isinstance(path_or_lines, (str, Path)):
        with open(path_or_lines, encoding="utf-8") as f:
            lines = [line.rstrip("\n") for line in f if line.strip()]
    else:
        lines = [r.to_json() if hasattr(r, "to_json") else str(r) for r in path_or_lines]
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def utterance_seed(seed: int, utt_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{utt_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


def utterance_rng(seed: int, utt_id: str) -> np.random.Generator:
    return np.random.default_rng(utterance_seed(seed, utt_id))


def check_ratios(ratios: dict) -> tuple[list[DegradationCondition], np.ndarray]:
    try:
        conds = [DegradationCondition(c) for c in ratios]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    weights = np.array([float(ratios[c]) for c in ratios])
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-6:
        raise ConfigError(f"condition ratios must be non-negative and sum to 1, got {dict(ratios)}")
    return conds, weights


def partition_speakers(speakers: Sequence[str], ratios: dict, rng: np.random.Generator) -> dict:
    """Randomly assign each speaker one condition, counts by largest remainder."""
    conds, weights = check_ratios(ratios)
    speakers = sorted(set(speakers))
    exact = weights * len(speakers)
    counts = np.floor(exact).astype(int)
    for i in np.argsort(-(exact - counts), kind="stable")[:len(speakers) - counts.sum()]:
        counts[i] += 1
    order = rng.permutation(len(speakers))
    assignment, pos = {}, 0
    for cond, k in zip(conds, counts):
        for idx in order[pos:pos + k]:
            assignment[speakers[idx]] = cond
        pos += k
    return assignment


@dataclass
class DegradeConfig:
    room: RoomSpec = field(default_factory=RoomSpec)
    noise_lufs: tuple[float, float] = (-40.0, -32.0)
    mixture_lufs: tuple[float, float] = (-38.0, -30.0)
    ratios: dict = field(default_factory=lambda: {c.value: 0.25 for c in DegradationCondition})

    def __post_init__(self):
        check_ratios(self.ratios)
        for name in ("noise_lufs", "mixture_lufs"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} range is reversed: {lo} > {hi}")


@dataclass
class CorpusResult:
    records: list[UtteranceRecord]
    counts: dict
    errors: list[tuple[str, str]]
    meta: list[dict]
    audio: dict = field(default_factory=dict)


def build_corpus(records: Sequence[UtteranceRecord], noises: Sequence[Waveform],
                 config: DegradeConfig, seed: int, out_root: str | Path | None = None,
                 load_audio: Callable[[str], Waveform] | None = None,
                 clean_audio: dict | None = None, sample_rate: int = dsp.SAMPLE_RATE) -> CorpusResult:
    """Assign conditions per speaker and degrade every utterance.

    Audio is taken from ``clean_audio[id]`` when given, otherwise loaded from
    ``clean_path``. Each utterance draws from its own generator seeded by
    (seed, id), so results do not depend on processing order.
    """
    load_audio = load_audio or (lambda p: dsp.load_wav(p, sample_rate))
    assignment = partition_speakers([r.speaker_id for r in records], config.ratios,
                                    np.random.default_rng(seed))
    out, errors, meta, audio = [], [], [], {}
    counts = {c.value: 0 for c in DegradationCondition}
    for rec in records:
        cond = assignment[rec.speaker_id]
        try:
            clean = clean_audio[rec.id] if clean_audio is not None else load_audio(rec.clean_path)
            useed = utterance_seed(seed, rec.id)
            rng = np.random.default_rng(useed)
            noise = None
            if cond.has_noise:
                if not noises:
                    raise InvalidInput("noise condition requested but the noise pool is empty")
                noise = noises[int(rng.integers(len(noises)))]
            result = degrade_utterance(clean, noise, cond, config.room, rng, tuple(config.noise_lufs),
                                       rir_seed=useed)
        except Exception as exc:  # per-row failure, reported not raised
            errors.append((rec.id, f"{type(exc).__name__}: {exc}"))
            continue
        degraded_path = None
        if out_root is not None:
            rel = Path(cond.value) / rec.speaker_id / f"{rec.id}.wav"
            dsp.save_wav(Path(out_root) / rel, result.waveform)
            degraded_path = str(Path(out_root) / rel)
        new = UtteranceRecord(rec.id, rec.speaker_id, list(rec.phonemes), list(rec.durations),
                              cond.value, rec.clean_path, degraded_path,
                              result.noise_lufs, result.rir_seed)
        out.append(new)
        meta.append({"id": rec.id, "gain": result.gain, "noise_lufs": result.noise_lufs})
        counts[cond.value] += 1
        if out_root is None:
            audio[rec.id] = result.waveform
    return CorpusResult(out, counts, errors, meta, audio)


# -- toy speech -----------------------------------------------------------------

SILENCE = "sil"


@dataclass
class ToyCorpusSpec:
    n_speakers: int = 4
    n_utterances: int = 8
    n_phonemes: int = 12
    phonemes_per_utterance: tuple[int, int] = (6, 10)
    duration_range: tuple[int, int] = (4, 20)
    f0_range: tuple[float, float] = (95.0, 240.0)
    sample_rate: int = dsp.SAMPLE_RATE
    hop: int = dsp.HOP
    peak: float = 0.5


@dataclass
class ToyUtterance:
    record: UtteranceRecord
    waveform: Waveform
    base_f0: float


def phoneme_inventory(n_phonemes: int) -> list[str]:
    return [SILENCE] + [f"p{i:02d}" for i in range(1, n_phonemes)]


def _toy_voices(spec: ToyCorpusSpec, rng: np.random.Generator):
    lo, hi = spec.f0_range
    base = np.linspace(lo, hi, spec.n_speakers) if spec.n_speakers > 1 else np.array([lo])
    base = base[rng.permutation(spec.n_speakers)]
    tract = rng.uniform(0.88, 1.15, spec.n_speakers)
    inventory = phoneme_inventory(spec.n_phonemes)
    formants = {}
    for name in inventory[1:]:
        centers = np.sort(rng.uniform([250, 900, 2000], [850, 2200, 3600]))
        widths = rng.uniform(80, 220, 3)
        gains = rng.uniform([0.0, -10.0, -18.0], [0.0, -2.0, -6.0])
        formants[name] = (centers, widths, gains, rng.uniform(-0.08, 0.08))
    return base, tract, formants


def render_toy_utterance(phonemes: Sequence[str], durations: Sequence[int], base_f0: float,
                         tract: float, formants: dict, spec: ToyCorpusSpec) -> Waveform:
    hop, sr = spec.hop, spec.sample_rate
    n_frames = int(sum(durations))
    n = n_frames * hop
    frame_f0 = np.zeros(n_frames)
    frame_amp = np.zeros(n_frames)
    frame_ph = []
    pos = 0
    for ph, d in zip(phonemes, durations):
        for j in range(d):
            if ph != SILENCE:
                # gentle intra-phoneme declination
                frame_f0[pos + j] = base_f0 * (1 + formants[ph][3]) * (1 - 0.04 * j / max(d, 1))
                frame_amp[pos + j] = 1.0
            frame_ph.append(ph)
        pos += d
    voiced = frame_amp > 0
    if voiced.any():
        idx = np.arange(n_frames)
        frame_f0 = np.interp(idx, idx[voiced], frame_f0[voiced])
    else:
        frame_f0[:] = base_f0
    t_frames = (np.arange(n_frames) + 0.5) * hop
    t = np.arange(n)
    f0 = np.interp(t, t_frames, frame_f0)
    # 10 ms smoothing of the on/off envelope avoids clicks at boundaries
    ramp = max(1, int(0.01 * sr))
    env = np.repeat(frame_amp, hop)
    env = np.convolve(env, np.ones(ramp) / ramp, mode="same")
    phase = 2 * np.pi * np.cumsum(f0) / sr

    n_harm = int(0.45 * sr / max(f0.min(), 1.0))
    n_harm = min(n_harm, 60)
    harmonic_amp = np.zeros((n_frames, n_harm))
    for i, ph in enumerate(frame_ph):
        if ph == SILENCE:
            continue
        centers, widths, gains, _ = formants[ph]
        freqs = frame_f0[i] * np.arange(1, n_harm + 1)
        level = np.full(n_harm, -40.0) - 6.0 * np.log2(freqs / 100.0)
        for c, bw, g in zip(centers * tract, widths, gains):
            level = np.maximum(level, g - 0.5 * ((freqs - c) / bw) ** 2 * 3.0)
        amp = 10 ** (level / 20)
        amp[freqs >= 0.45 * sr] = 0.0
        harmonic_amp[i] = amp
    out = np.zeros(n)
    for k in range(n_harm):
        a = np.interp(t, t_frames, harmonic_amp[:, k])
        if not a.any():
            continue
        out += a * np.sin((k + 1) * phase)
    out *= env
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= spec.peak / peak
    return Waveform(out, sr)


def generate_toy_corpus(spec: ToyCorpusSpec, seed: int, out_dir: str | Path | None = None) -> list[ToyUtterance]:
    """Synthetic multi-speaker "speech" with ground-truth phoneme durations.

    Phonemes are harmonic complexes with phoneme-specific formant envelopes;
    speakers differ in base F0 and a vocal-tract scale. Every utterance starts
    and ends with silence. Output is deterministic in ``seed``.
    """
    rng = np.random.default_rng(seed)
    base, tract, formants = _toy_voices(spec, rng)
    inventory = phoneme_inventory(spec.n_phonemes)
    lo_d, hi_d = spec.duration_range
    out = []
    for u in range(spec.n_utterances):
        spk = u % spec.n_speakers
        urng = np.random.default_rng([seed, u])
        n_ph = int(urng.integers(spec.phonemes_per_utterance[0], spec.phonemes_per_utterance[1] + 1))
        body = list(urng.choice(inventory[1:], size=n_ph))
        phonemes = [SILENCE] + [str(p) for p in body] + [SILENCE]
        durations = [int(d) for d in urng.integers(lo_d, hi_d + 1, size=len(phonemes))]
        wave = render_toy_utterance(phonemes, durations, float(base[spk]), float(tract[spk]), formants, spec)
        utt_id = f"toy{u:05d}"
        speaker = f"spk{spk:02d}"
        clean_path = None
        if out_dir is not None:
            clean_path = str(Path(out_dir) / "clean" / speaker / f"{utt_id}.wav")
            dsp.save_wav(clean_path, wave)
        rec = UtteranceRecord(utt_id, speaker, phonemes, durations, clean_path=clean_path)
        out.append(ToyUtterance(rec, wave, float(base[spk])))
    return out


def generate_noise_bank(n_clips: int, seed: int, duration: float = 1.5,
                        sample_rate: int = dsp.SAMPLE_RATE) -> list[Waveform]:
    """Non-speech noise clips: coloured noise, hum, gated bursts and sweeps."""
    rng = np.random.default_rng(seed)
    n = int(duration * sample_rate)
    t = np.arange(n) / sample_rate
    clips = []
    for i in range(n_clips):
        kind = i % 4
        white = rng.standard_normal(n)
        if kind == 0:
            lo = rng.uniform(100, 1500)
            sos = signal.butter(2, [lo, min(lo * rng.uniform(2, 6), 0.45 * sample_rate)], "bandpass",
                                fs=sample_rate, output="sos")
            x = signal.sosfilt(sos, white)
        elif kind == 1:
            f = rng.choice([50.0, 60.0]) * rng.uniform(0.98, 1.02)
            x = sum(np.sin(2 * np.pi * f * k * t + rng.uniform(0, 2 * np.pi)) / k for k in range(1, 8))
            x = x + 0.2 * white
        elif kind == 2:
            rate = rng.uniform(2, 8)
            gate = (np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)) > 0.3).astype(float)
            gate = np.convolve(gate, np.ones(220) / 220, mode="same")
            x = white * gate
        else:
            f0, f1 = rng.uniform(300, 1000), rng.uniform(1500, 5000)
            x = signal.chirp(t, f0, t[-1], f1, method="logarithmic") + 0.1 * white
        x = x / (np.max(np.abs(x)) + 1e-12) * 0.5
        clips.append(Waveform(x, sample_rate))
    return clips


@dataclass
class Mixture:
    id: str
    mixture: Waveform
    clean: Waveform
    noise: Waveform
    noise_lufs: float


def build_mixtures(utterances: Sequence[tuple[str, Waveform]], noises: Sequence[Waveform], seed: int,
                   lufs_range: tuple[float, float] = (-38.0, -30.0)) -> list[Mixture]:
    """(mixture, clean, noise) triples for separator pretraining."""
    out = []
    for utt_id, clean in utterances:
        rng = utterance_rng(seed, "mix:" + utt_id)
        noise = noises[int(rng.integers(len(noises)))]
        target = float(rng.uniform(*lufs_range))
        scaled, _ = dsp.scale_to_lufs(fit_noise_length(noise, len(clean)), target)
        mix = clean.samples + scaled.samples
        out.append(Mixture(utt_id, Waveform(mix, clean.sample_rate), clean, scaled, target))
    return out
