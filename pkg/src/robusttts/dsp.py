"""Signal-processing primitives: framing, mel analysis, loudness, pitch, phase
reconstruction and WAV I/O.

Everything here is plain numpy/scipy and free of hidden state, so every
function can be called concurrently on distinct inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .errors import CannotScale, InvalidInput

SAMPLE_RATE = 22050
FRAME_SIZE = 1024
HOP = 256
N_MELS = 80
LOG_FLOOR = 1e-5

F0_MIN = 50.0
F0_MAX = 800.0

# Integrated loudness of a signal whose every block is gated out.
BELOW_GATE = float("-inf")


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidInput(f"waveform must be mono (1-D), got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise InvalidInput(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInput("waveform contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelSpectrogram:
    values: np.ndarray
    frame_size: int = FRAME_SIZE
    hop: int = HOP
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != N_MELS:
            raise InvalidInput(f"mel must be T x {N_MELS}, got {self.values.shape}")
        if self.values.shape[0] < 1:
            raise InvalidInput("mel must have at least one frame")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInput("mel contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass
class F0Track:
    f0: np.ndarray
    voiced: np.ndarray = field(default=None)
    hop: int = HOP

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        if self.voiced is None:
            self.voiced = self.f0 > 0
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.voiced.shape != self.f0.shape:
            raise InvalidInput("f0 and voicing flags must have equal length")
        if np.any((self.f0 > 0) != self.voiced):
            raise InvalidInput("f0 must be positive exactly on voiced frames")


def _as_samples(w) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def num_frames(n_samples: int, hop: int = HOP) -> int:
    return n_samples // hop + 1


def _frame(x: np.ndarray, frame_size: int, hop: int) -> np.ndarray:
    """Centered, reflection-padded frames; shape (n_frames, frame_size)."""
    pad = frame_size // 2
    mode = "reflect" if len(x) > 1 else "constant"
    padded = np.pad(x, (pad, pad), mode=mode)
    n = num_frames(len(x), hop)
    return np.lib.stride_tricks.sliding_window_view(padded, frame_size)[::hop][:n]


@lru_cache(maxsize=8)
def _hann(frame_size: int) -> np.ndarray:
    return signal.get_window("hann", frame_size, fftbins=True)


def stft(w, frame_size: int = FRAME_SIZE, hop: int = HOP) -> np.ndarray:
    """Complex STFT, shape (T, frame_size // 2 + 1) with T = len // hop + 1."""
    x = _as_samples(w)
    if len(x) == 0:
        raise InvalidInput("cannot analyse an empty waveform")
    if frame_size <= 0 or frame_size & (frame_size - 1):
        raise InvalidInput(f"frame size must be a power of two, got {frame_size}")
    if not 0 < hop <= frame_size:
        raise InvalidInput(f"hop must lie in (0, frame_size], got {hop}")
    frames = _frame(x, frame_size, hop) * _hann(frame_size)
    return np.fft.rfft(frames, axis=1)


def istft(spec: np.ndarray, frame_size: int = FRAME_SIZE, hop: int = HOP,
          length: int | None = None) -> np.ndarray:
    """Least-squares inverse of :func:`stft` (weighted overlap-add)."""
    n_frames = spec.shape[0]
    win = _hann(frame_size)
    frames = np.fft.irfft(spec, n=frame_size, axis=1) * win
    total = frame_size + hop * (n_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    for t in range(n_frames):
        out[t * hop:t * hop + frame_size] += frames[t]
        norm[t * hop:t * hop + frame_size] += win ** 2
    out = out / np.maximum(norm, 1e-10)
    pad = frame_size // 2
    if length is None:
        length = hop * (n_frames - 1)
    out = out[pad:pad + length]
    if len(out) < length:
        out = np.pad(out, (0, length - len(out)))
    return out


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int = SAMPLE_RATE, frame_size: int = FRAME_SIZE,
                   n_mels: int = N_MELS) -> np.ndarray:
    """Triangular HTK-mel filters spanning 0..sr/2, shape (n_mels, frame_size // 2 + 1)."""
    n_bins = frame_size // 2 + 1
    freqs = np.linspace(0.0, sample_rate / 2.0, n_bins)
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def mel_filter_centers(sample_rate: int = SAMPLE_RATE, n_mels: int = N_MELS) -> np.ndarray:
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))[1:-1]


def mel_spectrogram(w, frame_size: int = FRAME_SIZE, hop: int = HOP) -> MelSpectrogram:
    sr = w.sample_rate if isinstance(w, Waveform) else SAMPLE_RATE
    mag = np.abs(stft(w, frame_size, hop))
    mel = mag @ mel_filterbank(sr, frame_size, N_MELS).T
    return MelSpectrogram(np.log(np.maximum(mel, LOG_FLOOR)), frame_size, hop, sr)


def silence_mel(n_frames: int, sample_rate: int = SAMPLE_RATE) -> MelSpectrogram:
    """Mel of an all-zero waveform with ``n_frames`` frames."""
    return MelSpectrogram(np.full((n_frames, N_MELS), math.log(LOG_FLOOR)), sample_rate=sample_rate)


# -- loudness (ITU-R BS.1770) ------------------------------------------------

@lru_cache(maxsize=8)
def k_weighting(sample_rate: int):
    """Second-order sections (shelf, high-pass) of the K-weighting pre-filter.

    Coefficients are derived from the analog prototype so that they match the
    tabulated 48 kHz values and remain valid at other rates.
    """
    f0 = 1681.974450955533
    gain_db = 3.999843853973347
    q = 0.7071752369554196
    k = math.tan(math.pi * f0 / sample_rate)
    vh = 10.0 ** (gain_db / 20.0)
    vb = vh ** 0.4996667741545416
    a0 = 1.0 + k / q + k * k
    shelf_b = [(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0, (vh - vb * k / q + k * k) / a0]
    shelf_a = [1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0]

    f0 = 38.13547087602444
    q = 0.5003270373238773
    k = math.tan(math.pi * f0 / sample_rate)
    a0 = 1.0 + k / q + k * k
    hp_b = [1.0, -2.0, 1.0]
    hp_a = [1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0]
    return np.array([shelf_b + shelf_a, hp_b + hp_a])


def _block_powers(x: np.ndarray, sample_rate: int) -> np.ndarray:
    y = signal.sosfilt(k_weighting(sample_rate), x)
    block = int(round(0.4 * sample_rate))
    step = int(round(0.1 * sample_rate))
    n_blocks = (len(y) - block) // step + 1
    sq = np.concatenate([[0.0], np.cumsum(y * y)])
    starts = np.arange(n_blocks) * step
    return (sq[starts + block] - sq[starts]) / block


def _loudness(power):
    with np.errstate(divide="ignore"):
        return -0.691 + 10.0 * np.log10(power)


def measure_lufs(w: Waveform) -> float:
    """Gated integrated loudness in LUFS, or ``BELOW_GATE`` if nothing survives gating."""
    x = _as_samples(w)
    sr = w.sample_rate if isinstance(w, Waveform) else SAMPLE_RATE
    if len(x) < int(round(0.4 * sr)):
        raise InvalidInput(f"loudness needs at least 400 ms of audio, got {len(x) / sr * 1000:.1f} ms")
    z = _block_powers(x, sr)
    z = z[_loudness(z) > -70.0]
    if len(z) == 0:
        return BELOW_GATE
    relative_gate = _loudness(z.mean()) - 10.0
    z = z[_loudness(z) > relative_gate]
    if len(z) == 0:
        return BELOW_GATE
    return float(_loudness(z.mean()))


def scale_to_lufs(w: Waveform, target: float, tol: float = 0.01,
                  max_rounds: int = 10) -> tuple[Waveform, float]:
    """Scale ``w`` by a single gain so its integrated loudness equals ``target``.

    Returns the scaled waveform and the applied gain.
    """
    current = measure_lufs(w)
    if current == BELOW_GATE:
        raise CannotScale("signal is silent or entirely below the loudness gate")
    gain = 1.0
    for _ in range(max_rounds):
        gain *= 10.0 ** ((target - current) / 20.0)
        current = measure_lufs(Waveform(w.samples * gain, w.sample_rate))
        if current == BELOW_GATE:
            raise CannotScale(f"gain {gain:g} pushes the signal below the gate")
        if abs(current - target) <= tol:
            break
    return Waveform(w.samples * gain, w.sample_rate), gain


# -- pitch ------------------------------------------------------------------

def estimate_f0(w: Waveform, hop: int = HOP, frame_size: int = FRAME_SIZE,
                voicing_threshold: float = 0.5, rms_threshold: float = 1e-3) -> F0Track:
    """Normalised-autocorrelation pitch tracker on the same frame grid as the mel.

    The first lag whose correlation peak reaches 90% of the global maximum is
    taken, which suppresses octave-down picks on strongly periodic frames.
    """
    x = _as_samples(w)
    sr = w.sample_rate if isinstance(w, Waveform) else SAMPLE_RATE
    frames = _frame(x, frame_size, hop)
    frames = frames - frames.mean(axis=1, keepdims=True)
    n_frames = frames.shape[0]
    min_lag = int(math.floor(sr / F0_MAX))
    max_lag = min(int(math.ceil(sr / F0_MIN)), frame_size - 2)

    n_fft = 2 * frame_size
    spec = np.fft.rfft(frames, n=n_fft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), n=n_fft, axis=1)[:, :max_lag + 2]
    sq = np.cumsum(frames ** 2, axis=1)
    total = sq[:, -1:]
    lags = np.arange(max_lag + 2)
    # energy of x[0:W-lag] and x[lag:W]
    head = np.where(lags > 0, sq[:, np.clip(frame_size - 1 - lags, 0, None)], total)
    tail = total - np.where(lags > 0, sq[:, np.clip(lags - 1, 0, None)], 0.0)
    denom = np.sqrt(np.maximum(head * tail, 1e-20))
    nacf = acf / denom

    rms = np.sqrt(total[:, 0] / frame_size)
    f0 = np.zeros(n_frames)
    for t in range(n_frames):
        if rms[t] < rms_threshold:
            continue
        r = nacf[t]
        seg = r[min_lag:max_lag + 1]
        inner = np.arange(min_lag, max_lag + 1)
        is_peak = (seg >= r[inner - 1]) & (seg > r[inner + 1])
        peaks = inner[is_peak]
        if len(peaks) == 0:
            continue
        best = r[peaks].max()
        if best < voicing_threshold:
            continue
        lag = peaks[np.argmax(r[peaks] >= 0.9 * best)]
        a, b, c = r[lag - 1], r[lag], r[lag + 1]
        denom_p = a - 2 * b + c
        shift = 0.5 * (a - c) / denom_p if denom_p != 0 else 0.0
        freq = sr / (lag + float(np.clip(shift, -0.5, 0.5)))
        if F0_MIN <= freq <= F0_MAX:
            f0[t] = freq
    return F0Track(f0, f0 > 0, hop)


# -- phase reconstruction -----------------------------------------------------

def nnls_frames(basis: np.ndarray, targets: np.ndarray, iterations: int = 500) -> np.ndarray:
    """Solve min ||basis @ s - target||, s >= 0 for every row of ``targets`` at once.

    Accelerated projected gradient (FISTA); rows are independent problems.
    """
    gram = basis.T @ basis
    step = 1.0 / np.linalg.eigvalsh(gram)[-1]
    proj = targets @ basis
    s = np.maximum(targets @ np.linalg.pinv(basis).T, 0.0)
    y, t = s.copy(), 1.0
    for _ in range(iterations):
        s_next = np.maximum(y - step * (y @ gram - proj), 0.0)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = s_next + ((t - 1.0) / t_next) * (s_next - s)
        s, t = s_next, t_next
    return s


def mel_to_linear(m: MelSpectrogram) -> np.ndarray:
    """Non-negative least-squares inversion of the mel filterbank, shape (T, F)."""
    fb = mel_filterbank(m.sample_rate, m.frame_size, N_MELS)
    target = np.exp(m.values)
    out = nnls_frames(fb, target)
    # frames at the log floor are silence, not a tiny flat spectrum
    out[np.all(m.values <= math.log(LOG_FLOOR) + 1e-9, axis=1)] = 0.0
    return out


def griffin_lim(m: MelSpectrogram, iterations: int = 32, seed: int = 0,
                return_residuals: bool = False):
    """Reconstruct a waveform from a log-mel spectrogram by iterative phase retrieval.

    With ``return_residuals`` the spectral-consistency residual after each
    iteration is returned too; it is non-increasing.
    """
    if iterations < 1:
        raise InvalidInput("griffin_lim needs at least one iteration")
    mag = mel_to_linear(m)
    length = m.hop * (m.n_frames - 1)
    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.random(mag.shape))
    residuals = []
    x = np.zeros(length)
    for _ in range(iterations):
        x = istft(mag * phase, m.frame_size, m.hop, length)
        if length == 0:
            break
        rebuilt = stft(x, m.frame_size, m.hop)
        residuals.append(float(np.linalg.norm(np.abs(rebuilt) - mag)))
        phase = np.exp(1j * np.angle(rebuilt))
    out = Waveform(x, m.sample_rate)
    return (out, residuals) if return_residuals else out


# -- WAV I/O ------------------------------------------------------------------

def load_wav(path: str | Path, sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Read a mono PCM-16 / float32 WAV, resampling to ``sample_rate`` if needed."""
    sr, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise InvalidInput(f"{path}: only mono audio is supported, got shape {data.shape}")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(np.float64)
    else:
        raise InvalidInput(f"{path}: unsupported sample format {data.dtype}")
    if sr != sample_rate:
        g = math.gcd(sr, sample_rate)
        x = signal.resample_poly(x, sample_rate // g, sr // g, window=("kaiser", 5.0))
    return Waveform(x, sample_rate)


def save_wav(path: str | Path, w: Waveform, pcm16: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if pcm16:
        data = np.round(np.clip(w.samples, -1.0, 1.0 - 1 / 32768) * 32768).astype(np.int16)
    else:
        data = w.samples.astype(np.float32)
    wavfile.write(str(path), w.sample_rate, data)
