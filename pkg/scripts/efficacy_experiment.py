"""Controlled toy experiment for the averaged clean embedding.

Clean and Reverb utterances only, one fixed room impulse response, identity
separators. Each training sentence is present in both conditions, so the
environment embedding is the only thing that can tell the decoder whether to
add reverberation. For each seed, two models are trained (alpha = 0 and
alpha = 1) and evaluated on held-out utterances against their clean
references:

* clean-vs-reverb: MCD with the averaged clean embedding against MCD with the
  embedding of a reverberant training utterance (alpha = 1 model);
* alpha effect: clean-embedding MCD of the alpha = 1 model against the
  alpha = 0 model, per utterance.

Two diagnostics are reported alongside: the same clean-vs-reverb comparison
in mel L1, and whether a clean test utterance's own embedding is closer (cosine)
to the clean average than to the reverb average.

Usage: python3 scripts/efficacy_experiment.py [--seeds 0 1 2] [--steps 1500] [--t60 0.2] [--out results.json]
"""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import dataclass

import numpy as np

from robusttts import degrade, dsp, infer, metrics, train
from robusttts.model import ModelConfig
from robusttts.separation import IdentitySeparator

N_SPEAKERS = 4
TRAIN_PER_SPEAKER = 8
TEST_PER_SPEAKER = 4
EXPERIMENT_T60 = 0.2


@dataclass
class SeedResult:
    seed: int
    clean_beats_reverb: list[bool]
    alpha1_beats_alpha0: list[bool]
    mcd_clean_alpha1: list[float]
    mcd_reverb_alpha1: list[float]
    mcd_clean_alpha0: list[float]
    l1_clean_beats_reverb: list[bool]
    cosine_prefers_clean: list[bool]
    seconds: float


def experiment_model_config() -> ModelConfig:
    return ModelConfig.micro(hidden=32, enc_blocks=2, dec_blocks=2, ffn_hidden=64, phoneme_emb=32,
                             speaker_emb=32, style_dim=32, ref_channels=(8, 8, 16, 16), predictor_hidden=32)


def build_data(seed: int, t60: float = EXPERIMENT_T60):
    """Training features and held-out test utterances.

    Every training sentence appears twice, once clean and once through the
    fixed RIR. Phoneme content then carries no information about the
    condition, so only the environment embedding can explain the difference.
    """
    rir = degrade.degradation_rir(degrade.RoomSpec(t60=t60), "speech")
    spec = degrade.ToyCorpusSpec(n_speakers=N_SPEAKERS,
                                 n_utterances=N_SPEAKERS * (TRAIN_PER_SPEAKER + TEST_PER_SPEAKER))
    utts = degrade.generate_toy_corpus(spec, seed)
    train_utts = utts[:N_SPEAKERS * TRAIN_PER_SPEAKER]
    test_utts = utts[N_SPEAKERS * TRAIN_PER_SPEAKER:]
    ident = IdentitySeparator()
    feats = []
    for u in train_utts:
        for cond in ("clean", "reverb"):
            wave = degrade.apply_rir(u.waveform, rir)[0] if cond == "reverb" else u.waveform
            rec = degrade.UtteranceRecord(f"{u.record.id}_{cond}", u.record.speaker_id, u.record.phonemes,
                                          u.record.durations, cond)
            feats.append(train.features_from_audio(rec, wave, ident, ident, ("clean", "reverb")))
    return feats, test_utts


def test_scores(model, vocab, speakers, embedding, utt, order=metrics.DEFAULT_ORDER) -> tuple[float, float]:
    """(MCD, mel L1) of the predicted mel (ground-truth durations) against the clean reference mel."""
    req = infer.SynthesisRequest(list(utt.record.phonemes), utt.record.speaker_id,
                                 durations=list(utt.record.durations))
    syn = infer.synthesize(req, model, vocab, speakers, embedding).mel.values
    ref = train.fit_frames(dsp.mel_spectrogram(utt.waveform).values, syn.shape[0])
    return (metrics.mcd(metrics.mel_cepstra(ref, order), metrics.mel_cepstra(syn, order)),
            float(np.mean(np.abs(ref - syn))))


def cosine(a, b) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def run_seed(seed: int, steps: int = 1500, batch_size: int = 8, t60: float = EXPERIMENT_T60,
             verbose: bool = False) -> SeedResult:
    start = time.time()
    feats, test_utts = build_data(seed, t60)
    vocab, speakers = train.build_vocab(feats), train.build_speakers(feats)
    stats = train.compute_variance_stats(feats)
    trained = {}
    for alpha in (0.0, 1.0):
        cfg = train.TrainConfig(alpha=alpha, batch_size=batch_size, max_steps=steps,
                                checkpoint_every=steps, seed=seed, clean_env_conditions=("clean",))
        res = train.train_loop(feats, experiment_model_config(), cfg, vocab=vocab, speakers=speakers,
                               stats=stats)
        clean_items = [(f.id, f.condition, f.denoised_mel) for f in feats]
        emb = infer.compute_average_clean_embedding(res.model, clean_items, ("clean",))
        trained[alpha] = (res.model, emb)
        if verbose:
            print(f"seed {seed} alpha {alpha}: final mel L1 {res.history[-1]['mel_l1']:.3f}", flush=True)
    model1, emb1 = trained[1.0]
    model0, emb0 = trained[0.0]
    reverb_feats = [f for f in feats if f.condition == "reverb"]
    reverb_avg = infer.compute_average_clean_embedding(
        model1, [(f.id, f.condition, f.denoised_mel) for f in reverb_feats], ("reverb",)).embedding
    rng = np.random.default_rng(seed)
    c1, r1, c0, l1_wins, cos_wins = [], [], [], [], []
    for utt in test_utts:
        ref_feat = reverb_feats[int(rng.integers(len(reverb_feats)))]
        reverb_emb = infer.env_embeddings(model1, [ref_feat.denoised_mel])[0]
        mcd_clean, l1_clean = test_scores(model1, vocab, speakers, emb1, utt)
        mcd_reverb, l1_reverb = test_scores(model1, vocab, speakers, reverb_emb, utt)
        c1.append(mcd_clean)
        r1.append(mcd_reverb)
        c0.append(test_scores(model0, vocab, speakers, emb0, utt)[0])
        l1_wins.append(l1_clean < l1_reverb)
        own = infer.embed_reference(model1, utt.waveform, IdentitySeparator())
        cos_wins.append(cosine(own, emb1.embedding) > cosine(own, reverb_avg))
    return SeedResult(seed, [a < b for a, b in zip(c1, r1)], [a < b for a, b in zip(c1, c0)],
                      c1, r1, c0, l1_wins, cos_wins, time.time() - start)


def summarize(results: list[SeedResult]) -> dict:
    clean_vs_reverb = [x for r in results for x in r.clean_beats_reverb]
    alpha = [x for r in results for x in r.alpha1_beats_alpha0]
    return {
        "clean_beats_reverb_fraction": float(np.mean(clean_vs_reverb)),
        "alpha1_beats_alpha0_fraction": float(np.mean(alpha)),
        "n_test_utterances": len(alpha),
        "l1_clean_beats_reverb_fraction": float(np.mean([x for r in results for x in r.l1_clean_beats_reverb])),
        "cosine_prefers_clean_fraction": float(np.mean([x for r in results for x in r.cosine_prefers_clean])),
        "per_seed": [{"seed": r.seed,
                      "clean_beats_reverb": float(np.mean(r.clean_beats_reverb)),
                      "alpha1_beats_alpha0": float(np.mean(r.alpha1_beats_alpha0)),
                      "mean_mcd_clean_alpha1": float(np.mean(r.mcd_clean_alpha1)),
                      "mean_mcd_reverb_alpha1": float(np.mean(r.mcd_reverb_alpha1)),
                      "mean_mcd_clean_alpha0": float(np.mean(r.mcd_clean_alpha0)),
                      "seconds": r.seconds} for r in results],
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--t60", type=float, default=EXPERIMENT_T60)
    p.add_argument("--out")
    args = p.parse_args()
    results = [run_seed(s, args.steps, t60=args.t60, verbose=True) for s in args.seeds]
    summary = summarize(results)
    print(json.dumps(summary, indent=2))
    if args.out:
        with open(args.out, "w") as f:
            json.dump(summary, f, indent=2)


if __name__ == "__main__":
    main()
