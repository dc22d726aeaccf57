import numpy as np
import pytest
import torch
from hypothesis import settings

from robusttts import degrade, dsp

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

SR = dsp.SAMPLE_RATE


def sine(freq, seconds=1.0, amp=1.0, sr=SR, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return dsp.Waveform(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def harmonic(f0, seconds=1.0, n_harmonics=6, sr=SR):
    t = np.arange(int(round(seconds * sr))) / sr
    x = sum(np.sin(2 * np.pi * f0 * k * t) / k for k in range(1, n_harmonics + 1) if f0 * k < sr / 2)
    return dsp.Waveform(0.3 * x, sr)


@pytest.fixture(scope="session")
def toy_utterances():
    return degrade.generate_toy_corpus(degrade.ToyCorpusSpec(n_speakers=4, n_utterances=8), seed=0)


@pytest.fixture(scope="session")
def noise_bank():
    return degrade.generate_noise_bank(4, seed=1)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)


def fd_relative_error(loss_fn, param, n_coords=6, eps=1e-6, seed=0):
    """Norm-wise relative error between autograd and central differences on a
    random subset of ``param``'s coordinates (64-bit)."""
    param.grad = None
    loss = loss_fn()
    (grad,) = torch.autograd.grad(loss, [param])
    flat = param.data.view(-1)
    rng = np.random.default_rng(seed)
    idx = rng.choice(flat.numel(), size=min(n_coords, flat.numel()), replace=False)
    analytic, numeric = [], []
    for i in idx:
        orig = flat[i].item()
        flat[i] = orig + eps
        with torch.no_grad():
            up = loss_fn().item()
        flat[i] = orig - eps
        with torch.no_grad():
            down = loss_fn().item()
        flat[i] = orig
        numeric.append((up - down) / (2 * eps))
        analytic.append(grad.view(-1)[i].item())
    a, n = np.array(analytic), np.array(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale), a, n


@pytest.fixture(scope="session")
def toy_features(toy_utterances, noise_bank):
    """In-memory degraded corpus (one speaker per condition) turned into features
    with identity separators."""
    from robusttts import train
    from robusttts.separation import IdentitySeparator
    records = [u.record for u in toy_utterances]
    audio = {u.record.id: u.waveform for u in toy_utterances}
    corpus = degrade.build_corpus(records, noise_bank, degrade.DegradeConfig(), seed=0, clean_audio=audio)
    feats, errors = train.prepare_batch_features(corpus.records, IdentitySeparator(), IdentitySeparator(),
                                                 audio=corpus.audio, clean_audio=audio)
    assert not errors
    return feats


@pytest.fixture(scope="session")
def toy_vocab(toy_features):
    from robusttts import train
    return train.build_vocab(toy_features), train.build_speakers(toy_features), \
        train.compute_variance_stats(toy_features)
