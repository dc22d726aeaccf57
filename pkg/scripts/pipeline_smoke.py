"""Run the full command-line chain on a generated toy corpus.

toy-corpus -> degrade -> pretrain (both modes) -> train -> embed-clean ->
synthesize -> evaluate, all under one output root.

Usage: python3 scripts/pipeline_smoke.py OUT_DIR [--config scripts/configs/toy_smoke.json] [--seed 0]
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from robusttts import cli

HERE = Path(__file__).resolve().parent


def commands(root: Path, config: str, seed: int) -> list[list[str]]:
    c = ["--config", config, "--seed", str(seed)]
    toy, deg, sep, tts = root / "toy", root / "deg", root / "sep", root / "tts"
    model, emb = tts / "best" / "model.npz", root / "emb" / "clean_embedding.npz"
    return [
        ["toy-corpus", *c, "--out", str(toy)],
        ["degrade", *c, "--out", str(deg), "--manifest", str(toy / "clean_manifest.jsonl"),
         "--noise-dir", str(toy / "noise")],
        *[["pretrain", *c, "--out", str(sep), "--manifest", str(toy / "clean_manifest.jsonl"),
           "--noise-dir", str(toy / "noise"), "--mode", mode] for mode in ("extract-noise", "denoise")],
        ["train", *c, "--out", str(tts), "--manifest", str(deg / "manifest.jsonl"),
         "--extractor", str(sep / "extract-noise.npz"), "--denoiser", str(sep / "denoise.npz")],
        ["embed-clean", *c, "--out", str(root / "emb"), "--manifest", str(deg / "manifest.jsonl"),
         "--model", str(model), "--denoiser", str(sep / "denoise.npz")],
        ["synthesize", *c, "--out", str(root / "syn"), "--model", str(model), "--embedding", str(emb),
         "--phonemes", "p01 p02 p03 p04", "--speaker", "spk00", "--wav"],
        ["evaluate", *c, "--out", str(root / "eval"), "--manifest", str(deg / "manifest.jsonl"),
         "--model", str(model), "--embedding", str(emb)],
    ]


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out")
    p.add_argument("--config", default=str(HERE / "configs" / "toy_smoke.json"))
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    start = time.time()
    for argv in commands(Path(args.out).resolve(), args.config, args.seed):
        print(f"$ robusttts {' '.join(argv)}", flush=True)
        code = cli.main(argv)
        if code != 0:
            print(f"step {argv[0]} exited with {code}", file=sys.stderr)
            return code
    print(f"pipeline finished in {time.time() - start:.0f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
