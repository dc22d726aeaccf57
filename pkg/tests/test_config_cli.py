import hashlib
import json
from pathlib import Path

import filelock
import pytest

from robusttts import cli, config, degrade
from robusttts.errors import ConfigError

TINY = {
    "separation": {
        "extractor": {"n_filters": 8, "filter_len": 16, "bottleneck": 4, "hidden": 8, "blocks": 1, "repeats": 1},
        "denoiser": {"n_filters": 8, "filter_len": 16, "bottleneck": 4, "hidden": 8, "blocks": 1, "repeats": 1},
        "pretrain": {"steps": 2, "eval_every": 1, "batch_size": 2, "segment": 2048},
    },
    "model": {"hidden": 16, "enc_blocks": 1, "dec_blocks": 1, "heads": 2, "ffn_hidden": 16, "ffn_kernel": 3,
              "phoneme_emb": 16, "speaker_emb": 16, "style_dim": 16, "ref_channels": [4, 4, 4, 4],
              "predictor_hidden": 16, "dropout": 0.0},
    "train": {"batch_size": 4, "max_steps": 2, "checkpoint_every": 1},
    "eval": {"griffin_lim_iterations": 2},
    "toy": {"corpus": {"n_speakers": 2, "n_utterances": 6, "phonemes_per_utterance": [5, 7],
                       "duration_range": [10, 14]}, "n_noise_clips": 2},
}


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


@pytest.fixture(scope="module")
def pipeline(tiny_config, tmp_path_factory):
    """Runs the whole chain once at tiny size; tests inspect the artifacts."""
    root = tmp_path_factory.mktemp("run")
    c = ["--config", str(tiny_config)]
    steps = [
        ["toy-corpus", *c, "--out", str(root / "toy")],
        ["degrade", *c, "--out", str(root / "deg"), "--manifest", str(root / "toy/clean_manifest.jsonl"),
         "--noise-dir", str(root / "toy/noise")],
        ["pretrain", *c, "--out", str(root / "sep"), "--manifest", str(root / "toy/clean_manifest.jsonl"),
         "--noise-dir", str(root / "toy/noise"), "--mode", "extract-noise"],
        ["pretrain", *c, "--out", str(root / "sep"), "--manifest", str(root / "toy/clean_manifest.jsonl"),
         "--noise-dir", str(root / "toy/noise"), "--mode", "denoise"],
        ["train", *c, "--out", str(root / "tts"), "--manifest", str(root / "deg/manifest.jsonl"),
         "--extractor", str(root / "sep/extract-noise.npz"), "--denoiser", str(root / "sep/denoise.npz")],
        ["embed-clean", *c, "--out", str(root / "emb"), "--manifest", str(root / "deg/manifest.jsonl"),
         "--model", str(root / "tts/best/model.npz"), "--denoiser", str(root / "sep/denoise.npz"),
         "--conditions", "clean,noise,reverb,noise_reverb"],
    ]
    codes = [cli.main(s) for s in steps]
    return root, codes


class TestSchema:
    def test_file_current(self):
        assert config.load_schema() == config.generate_schema()

    def test_defaults_validate(self):
        cfg = config.load_config()
        assert cfg.train.alpha == 1.0 and cfg.dsp.sample_rate == 22050

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"train": {"alhpa": 1}}))
        with pytest.raises(ConfigError, match="alhpa"):
            config.load_config(p)

    def test_schema_violation_names_schema(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"train": {"alpha": -1}}))
        with pytest.raises(ConfigError, match="config.schema.json"):
            config.load_config(p)

    def test_dsp_fixed(self):
        with pytest.raises(ConfigError):
            config.load_config(overrides=["dsp.hop=512"])

    def test_ratios_must_sum(self):
        with pytest.raises(ConfigError):
            config.load_config(overrides=['degrade.ratios={"clean": 0.5, "noise": 0.2}'])

    def test_overrides_precedence(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"train": {"alpha": 0.1, "lr": 0.01}}))
        env = {"ROBUSTTTS_TRAIN__ALPHA": "0.2", "ROBUSTTTS_TRAIN__BATCH_SIZE": "3"}
        cfg = config.load_config(p, ["train.alpha=0.3"], environ=env)
        assert (cfg.train.alpha, cfg.train.lr, cfg.train.batch_size) == (0.3, 0.01, 3)

    def test_condition_lists(self):
        cfg = config.load_config(overrides=['train.clean_env_conditions=["clean"]'])
        assert cfg.train.clean_env_conditions == ("clean",)
        with pytest.raises(ConfigError):
            config.load_config(overrides=['train.clean_env_conditions=["studio"]'])


class TestExitCodes:
    def test_missing_config(self, tmp_path, capsys):
        code = cli.main(["toy-corpus", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert code == 2
        assert "config.schema.json" in capsys.readouterr().err

    def test_bad_mode(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["pretrain", "--out", str(tmp_path), "--manifest", "m", "--noise-dir", "n", "--mode", "both"])
        assert exc.value.code == 2

    def test_synthesize_without_embedding(self, tmp_path):
        code = cli.main(["synthesize", "--out", str(tmp_path), "--model", str(tmp_path / "m.npz"),
                         "--phonemes", "a b", "--speaker", "s"])
        assert code == 3

    def test_missing_manifest(self, tmp_path):
        code = cli.main(["degrade", "--out", str(tmp_path / "o"), "--manifest", str(tmp_path / "none.jsonl"),
                         "--noise-dir", str(tmp_path)])
        assert code == 1

    def test_lock_contention(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "toy"
        out.mkdir()
        with filelock.FileLock(str(out / cli.LOCK_NAME)):
            code = cli.main(["toy-corpus", "--config", str(tiny_config), "--out", str(out)])
        assert code == 1
        assert "locked" in capsys.readouterr().err


class TestToyCorpus:
    def test_reproducible(self, tiny_config, tmp_path, capsys):
        for name in ("a", "b"):
            assert cli.main(["toy-corpus", "--config", str(tiny_config), "--seed", "3",
                             "--out", str(tmp_path / name)]) == 0
        assert sha(tmp_path / "a/clean_manifest.jsonl") == sha(tmp_path / "b/clean_manifest.jsonl")
        wavs = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.wav"))
        assert wavs and all(sha(tmp_path / "a" / w) == sha(tmp_path / "b" / w) for w in wavs)
        printed = capsys.readouterr().out
        assert "6 utterances, 2 speakers, 2 noise clips" in printed

    def test_seed_changes_output(self, tiny_config, tmp_path):
        for seed in ("1", "2"):
            cli.main(["toy-corpus", "--config", str(tiny_config), "--seed", seed, "--out", str(tmp_path / seed)])
        assert sha(tmp_path / "1/clean_manifest.jsonl") != sha(tmp_path / "2/clean_manifest.jsonl")


class TestPipeline:
    def test_exit_codes(self, pipeline):
        assert pipeline[1] == [0] * 6

    def test_degrade_summary(self, pipeline):
        root = pipeline[0]
        records = degrade.read_manifest(root / "deg/manifest.jsonl")
        meta = json.loads((root / "deg/degrade_meta.json").read_text())
        assert len(records) == len(meta["utterances"]) == 6
        assert meta["pipeline"]["degrade"]["room"]["t60"] == 0.2
        assert all(Path(r.degraded_path).exists() for r in records)

    def test_training_outputs(self, pipeline):
        root = pipeline[0]
        assert (root / "tts/step_0/model.npz").exists() and (root / "tts/step_2/model.npz").exists()
        assert len((root / "tts/metrics.jsonl").read_text().splitlines()) == 2
        assert (root / "sep/extract-noise_metrics.jsonl").exists()

    def test_separator_mode_checked(self, pipeline, tiny_config, tmp_path, capsys):
        root = pipeline[0]
        code = cli.main(["train", "--config", str(tiny_config), "--out", str(tmp_path),
                         "--manifest", str(root / "deg/manifest.jsonl"),
                         "--extractor", str(root / "sep/denoise.npz"), "--denoiser", str(root / "sep/denoise.npz")])
        assert code == 3
        assert "expected: extract-noise" in capsys.readouterr().err

    def test_synthesize(self, pipeline, tiny_config, tmp_path):
        root = pipeline[0]
        from robusttts import infer, model
        _, meta = model.load_model(root / "tts/best/model.npz")
        phones = " ".join(meta["vocab"][1:4])
        code = cli.main(["synthesize", "--config", str(tiny_config), "--out", str(tmp_path),
                         "--model", str(root / "tts/best/model.npz"), "--embedding", str(root / "emb/clean_embedding.npz"),
                         "--phonemes", phones, "--speaker", meta["speakers"][0], "--durations", "2 3 4", "--wav"])
        assert code == 0
        assert infer.load_mel(tmp_path / "mel.f32").values.shape == (9, 80)
        assert (tmp_path / "synth.wav").exists()

    def test_unknown_phoneme_exit(self, pipeline, tiny_config, tmp_path):
        root = pipeline[0]
        code = cli.main(["synthesize", "--config", str(tiny_config), "--out", str(tmp_path),
                         "--model", str(root / "tts/best/model.npz"),
                         "--embedding", str(root / "emb/clean_embedding.npz"),
                         "--phonemes", "ZZZ", "--speaker", "spk00"])
        assert code == 1

    def test_wrong_artifact_kind(self, pipeline, tiny_config, tmp_path):
        root = pipeline[0]
        code = cli.main(["synthesize", "--config", str(tiny_config), "--out", str(tmp_path),
                         "--model", str(root / "tts/best/model.npz"), "--embedding", str(root / "sep/denoise.npz"),
                         "--phonemes", "a", "--speaker", "s"])
        assert code == 3

    def test_self_check_evaluate(self, pipeline, tiny_config, tmp_path):
        root = pipeline[0]
        code = cli.main(["evaluate", "--config", str(tiny_config), "--out", str(tmp_path),
                         "--manifest", str(root / "deg/manifest.jsonl"), "--self-check"])
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert all(r["mcd_mean"] == 0.0 for r in report["rows"])
        assert sum(r["n_utterances"] for r in report["rows"]) == 6
