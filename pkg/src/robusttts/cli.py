"""Command-line entry point.

Exit codes: 0 success, 1 runtime or data error, 2 configuration error,
3 missing or incompatible artifact.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
import warnings
from dataclasses import asdict, replace
from pathlib import Path

import filelock
import numpy as np

from . import degrade, dsp, infer, metrics, separation, train
from .config import SCHEMA_PATH, PipelineConfig, load_config
from .errors import ArtifactError, ConfigError, RobustTTSError, TrainingDiverged
from .model import load_model, save_model

log = logging.getLogger("robusttts")

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_ARTIFACT = 0, 1, 2, 3
LOCK_NAME = ".robusttts.lock"


class DataError(RobustTTSError):
    """Raised by commands when some input rows could not be processed."""


@contextlib.contextmanager
def locked(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = filelock.FileLock(str(out / LOCK_NAME), timeout=0)
    try:
        lock.acquire()
    except filelock.Timeout:
        raise DataError(f"{out} is locked by another writer") from None
    try:
        yield
    finally:
        lock.release()


def _require(path, what: str) -> Path:
    if path is None:
        raise ArtifactError(f"{what} artifact is required")
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"{what} artifact not found: {path}")
    return path


def _noise_bank(noise_dir: Path) -> list[dsp.Waveform]:
    files = sorted(noise_dir.glob("*.wav"))
    if not files:
        raise DataError(f"no noise clips in {noise_dir}")
    return [dsp.load_wav(f) for f in files]


def _report_errors(errors) -> None:
    for uid, message in errors:
        log.error("%s: %s", uid, message)
    if errors:
        raise DataError(f"{len(errors)} record(s) failed")


def _config_echo(cfg: PipelineConfig, *sections: str) -> dict:
    data = cfg.to_dict()
    return {"pipeline": {s: data[s] for s in sections}, "seed": cfg.seed}


# -- commands -----------------------------------------------------------------------

def cmd_toy_corpus(args, cfg: PipelineConfig) -> int:
    out = Path(args.out).resolve()
    with locked(out):
        utts = degrade.generate_toy_corpus(cfg.toy.corpus, cfg.seed, out)
        manifest = out / "clean_manifest.jsonl"
        degrade.write_manifest(manifest, [u.record for u in utts])
        for i, clip in enumerate(degrade.generate_noise_bank(cfg.toy.n_noise_clips, cfg.seed + 1)):
            dsp.save_wav(out / "noise" / f"noise_{i:03d}.wav", clip)
    speakers = {u.record.speaker_id for u in utts}
    print(f"toy corpus: {len(utts)} utterances, {len(speakers)} speakers, "
          f"{cfg.toy.n_noise_clips} noise clips")
    print(f"manifest {manifest} sha256 {degrade.corpus_hash(manifest)}")
    return EXIT_OK


def cmd_degrade(args, cfg: PipelineConfig) -> int:
    out = Path(args.out).resolve()
    records = degrade.read_manifest(args.manifest)
    noises = _noise_bank(Path(args.noise_dir))
    dcfg = cfg.degrade
    if args.conditions:
        conds = degrade.parse_conditions(args.conditions)
        dcfg = replace(dcfg, ratios={c.value: 1.0 / len(conds) for c in conds})
    with locked(out):
        result = degrade.build_corpus(records, noises, dcfg, cfg.seed, out)
        manifest = out / "manifest.jsonl"
        degrade.write_manifest(manifest, result.records)
        (out / "degrade_meta.json").write_text(json.dumps(
            {**_config_echo(cfg, "degrade"), "source_hash": degrade.corpus_hash(args.manifest),
             "utterances": result.meta}, indent=2))
    for cond, n in result.counts.items():
        print(f"{cond:>14s}: {n}")
    print(f"manifest {manifest} sha256 {degrade.corpus_hash(manifest)}")
    _report_errors(result.errors)
    return EXIT_OK


def _pretrain_triples(records, noises, cfg: PipelineConfig):
    clean = [(r.id, dsp.load_wav(r.clean_path)) for r in records]
    mixtures = degrade.build_mixtures(clean, noises, cfg.seed, tuple(cfg.degrade.mixture_lufs))
    n_val = max(1, int(round(cfg.separation.validation_fraction * len(mixtures))))
    if len(mixtures) < 2:
        return mixtures, mixtures
    return mixtures[:-n_val], mixtures[-n_val:]


def cmd_pretrain(args, cfg: PipelineConfig) -> int:
    mode = separation.SeparationMode(args.mode)
    sep_cfg = cfg.separation.extractor if mode is separation.SeparationMode.EXTRACT_NOISE else cfg.separation.denoiser
    sep_cfg = replace(sep_cfg, mode=mode.value)
    out = Path(args.out).resolve()
    records = degrade.read_manifest(args.manifest)
    train_set, val_set = _pretrain_triples(records, _noise_bank(Path(args.noise_dir)), cfg)
    hyper = replace(cfg.separation.pretrain, seed=cfg.seed)
    model, optim, start = None, None, 0
    if args.resume:
        model, meta, optim = separation.load_separator(_require(args.resume, "resume"))
        if meta.get("config", {}).get("mode") != mode.value:
            raise ArtifactError(f"resume checkpoint was trained in mode {meta['config'].get('mode')}",
                                expected=mode.value, found=meta["config"].get("mode"))
        model.train()
        start = int(meta["last_step"])
    else:
        model = separation.Separator(sep_cfg)
    path = out / f"{mode.value}.npz"
    extra = {**_config_echo(cfg, "separation"), "corpus_hash": degrade.corpus_hash(args.manifest)}
    with locked(out), open(out / f"{mode.value}_metrics.jsonl", "a", encoding="utf-8") as logf:
        def on_log(entry):
            logf.write(json.dumps(entry) + "\n")
            logf.flush()
        try:
            res = separation.pretrain_separator(train_set, sep_cfg, hyper, val_set, model, optim, start, on_log)
        except TrainingDiverged:
            separation.save_separator(path, model, {**extra, "last_step": start, "diverged": True})
            print(f"training diverged; best weights so far kept in {path}")
            raise
        separation.save_separator(path, res.model, {**extra, "last_step": res.last_step,
                                                    "best_step": res.best_step,
                                                    "best_val_si_snr": res.best_val_si_snr}, res.optimizer)
    print(f"checkpoint {path}")
    print(f"best validation SI-SNR {res.best_val_si_snr:.3f} dB at step {res.best_step}")
    return EXIT_OK


def _load_separators(args):
    extractor, emeta, _ = separation.load_separator(_require(args.extractor, "extractor"))
    denoiser, dmeta, _ = separation.load_separator(_require(args.denoiser, "denoiser"))
    for name, meta, want in (("extractor", emeta, "extract-noise"), ("denoiser", dmeta, "denoise")):
        found = meta.get("config", {}).get("mode")
        if found != want:
            raise ArtifactError(f"{name} checkpoint has mode {found}", expected=want, found=found)
    return extractor, denoiser


def cmd_train(args, cfg: PipelineConfig) -> int:
    out = Path(args.out).resolve()
    records = degrade.read_manifest(args.manifest)
    extractor, denoiser = _load_separators(args)
    tcfg = cfg.train
    if args.conditions:
        tcfg = replace(tcfg, clean_env_conditions=tuple(c.value for c in degrade.parse_conditions(args.conditions)))
    feats, errors = train.prepare_batch_features(records, extractor, denoiser, tcfg.silence_conditions)
    for uid, message in errors:
        log.error("%s: %s", uid, message)
    if not feats:
        raise DataError("no usable training records")
    val = feats
    if args.val_manifest:
        val, verr = train.prepare_batch_features(degrade.read_manifest(args.val_manifest), extractor, denoiser,
                                                 tcfg.silence_conditions)
        _report_errors(verr)
    chash = degrade.corpus_hash(args.manifest)
    provenance = {**_config_echo(cfg, "model", "train"), "corpus_hash": chash}
    with locked(out):
        result = train.train_loop(feats, cfg.model, tcfg, out, provenance=provenance)
        best, losses = train.select_best_checkpoint(result, val)
        save_model(out / "best" / "model.npz", result.model, result.vocab, result.speakers,
                   {**provenance, "step": best.step, "validation_mel_l1": losses})
    last = result.history[-1] if result.history else {}
    print(f"trained {tcfg.max_steps} steps; final total loss {last.get('total', float('nan')):.4f}")
    print(f"best checkpoint step {best.step} (validation mel L1 {min(losses):.4f}) -> {out / 'best' / 'model.npz'}")
    _report_errors(errors)
    return EXIT_OK


def _denoised_items(records, denoiser):
    for r in records:
        wave = dsp.load_wav(r.degraded_path)
        yield r.id, r.condition, dsp.mel_spectrogram(separation.separator_forward(wave, denoiser)).values


def cmd_embed_clean(args, cfg: PipelineConfig) -> int:
    model, _ = load_model(_require(args.model, "model"))
    denoiser, dmeta, _ = separation.load_separator(_require(args.denoiser, "denoiser"))
    conds = (tuple(c.value for c in degrade.parse_conditions(args.conditions))
             if args.conditions else cfg.eval.embedding_conditions)
    records = degrade.read_manifest(args.manifest)
    art = infer.compute_average_clean_embedding(model, _denoised_items(records, denoiser), conds,
                                                degrade.corpus_hash(args.manifest))
    out = Path(args.out).resolve()
    with locked(out):
        art.save(out / "clean_embedding.npz")
    print(f"averaged {art.n_utterances} utterances from {list(conds)} -> {out / 'clean_embedding.npz'}")
    return EXIT_OK


def _load_synthesis_inputs(args):
    model_path = _require(args.model, "model")
    emb_path = _require(args.embedding, "clean-embedding")
    model, meta = load_model(model_path)
    emb = infer.CleanEmbeddingArtifact.load(emb_path)
    return model, meta, emb


def cmd_synthesize(args, cfg: PipelineConfig) -> int:
    model, meta, emb = _load_synthesis_inputs(args)
    req = infer.SynthesisRequest(args.phonemes.split(), args.speaker,
                                 [int(d) for d in args.durations.split()] if args.durations else None,
                                 render_waveform=args.wav,
                                 griffin_lim_iterations=cfg.eval.griffin_lim_iterations)
    res = infer.synthesize(req, model, meta["vocab"], meta["speakers"], emb, meta.get("corpus_hash"))
    out = Path(args.out).resolve()
    with locked(out):
        infer.save_mel(out / "mel.f32", res.mel, {"durations": res.durations.tolist(),
                                                  "corpus_hash": meta.get("corpus_hash")})
        if res.waveform is not None:
            dsp.save_wav(out / "synth.wav", res.waveform)
    print(f"{res.mel.values.shape[0]} frames -> {out / 'mel.f32'}")
    return EXIT_OK


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    records = degrade.read_manifest(args.manifest)
    if args.conditions:
        keep = {c.value for c in degrade.parse_conditions(args.conditions)}
        records = [r for r in records if r.condition in keep]
    by_id = {r.id: r for r in records}
    synth = None
    echo = {"manifest_hash": degrade.corpus_hash(args.manifest)}
    if not args.self_check:
        model, meta, emb = _load_synthesis_inputs(args)
        echo.update(model_corpus_hash=meta.get("corpus_hash"), embedding_corpus_hash=emb.corpus_hash)

        def synth(uid):
            r = by_id[uid]
            req = infer.SynthesisRequest(list(r.phonemes), r.speaker_id, render_waveform=True,
                                         griffin_lim_iterations=cfg.eval.griffin_lim_iterations)
            return infer.synthesize(req, model, meta["vocab"], meta["speakers"], emb,
                                    meta.get("corpus_hash")).waveform

    report = metrics.evaluate_corpus([(r.id, r.condition) for r in records],
                                     lambda uid: dsp.load_wav(by_id[uid].clean_path), synth,
                                     cfg.eval.cepstral_order, echo)
    out = Path(args.out).resolve()
    with locked(out):
        (out / "report.json").write_text(report.to_json())
        (out / "report.txt").write_text(report.to_table())
    print(report.to_table(), end="")
    failed = [s for s in report.scores if s.error]
    _report_errors([(s.id, s.error) for s in failed])
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON configuration (schema: {SCHEMA_PATH})")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="configuration override, repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="robusttts", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("toy-corpus", parents=[common], help="generate a synthetic corpus and noise bank")
    s.set_defaults(func=cmd_toy_corpus)

    s = sub.add_parser("degrade", parents=[common], help="assign conditions and degrade a clean corpus")
    s.add_argument("--manifest", required=True)
    s.add_argument("--noise-dir", required=True)
    s.add_argument("--conditions", help="comma-separated subset, split evenly")
    s.set_defaults(func=cmd_degrade)

    s = sub.add_parser("pretrain", parents=[common], help="pretrain a separator")
    s.add_argument("--manifest", required=True)
    s.add_argument("--noise-dir", required=True)
    s.add_argument("--mode", required=True, choices=[m.value for m in separation.SeparationMode])
    s.add_argument("--resume", help="separator checkpoint to continue from")
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("train", parents=[common], help="train the acoustic model")
    s.add_argument("--manifest", required=True)
    s.add_argument("--val-manifest")
    s.add_argument("--extractor")
    s.add_argument("--denoiser")
    s.add_argument("--conditions", help="clean-environment conditions for the averaging subtask")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("embed-clean", parents=[common], help="average clean environment embedding")
    s.add_argument("--manifest", required=True)
    s.add_argument("--model")
    s.add_argument("--denoiser")
    s.add_argument("--conditions")
    s.set_defaults(func=cmd_embed_clean)

    s = sub.add_parser("synthesize", parents=[common], help="synthesize one phoneme sequence")
    s.add_argument("--model")
    s.add_argument("--embedding")
    s.add_argument("--phonemes", required=True, help="space-separated tokens")
    s.add_argument("--speaker", required=True)
    s.add_argument("--durations", help="space-separated frame counts")
    s.add_argument("--wav", action="store_true", help="also render a waveform")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("evaluate", parents=[common], help="objective evaluation against clean references")
    s.add_argument("--manifest", required=True)
    s.add_argument("--model")
    s.add_argument("--embedding")
    s.add_argument("--conditions")
    s.add_argument("--self-check", action="store_true", help="compare references with themselves")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        cfg = load_config(args.config, args.set)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        if exc.expected or exc.found:
            print(f"  expected: {exc.expected}\n  found:    {exc.found}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (RobustTTSError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
