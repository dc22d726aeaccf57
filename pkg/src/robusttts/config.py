"""Pipeline configuration: one JSON document with a section per module,
validated against a published schema, overridable from the environment and
from ``section.key=value`` flags."""
from __future__ import annotations

import copy
import dataclasses
import json
import os
import types
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from . import dsp
from .degrade import DegradationCondition, DegradeConfig, RoomSpec, ToyCorpusSpec
from .errors import ConfigError, RobustTTSError
from .metrics import DEFAULT_ORDER
from .model import ModelConfig
from .separation import PretrainConfig, SeparationMode, SeparatorConfig
from .train import TrainConfig

SCHEMA_PATH = Path(__file__).with_name("config.schema.json")
ENV_PREFIX = "ROBUSTTTS_"
CONDITIONS = [c.value for c in DegradationCondition]


@dataclass
class DspSection:
    sample_rate: int = dsp.SAMPLE_RATE
    frame_size: int = dsp.FRAME_SIZE
    hop: int = dsp.HOP
    n_mels: int = dsp.N_MELS


@dataclass
class SeparationSection:
    extractor: SeparatorConfig = field(default_factory=lambda: SeparatorConfig(mode="extract-noise"))
    denoiser: SeparatorConfig = field(default_factory=lambda: SeparatorConfig(mode="denoise"))
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    n_noise_clips: int = 8
    validation_fraction: float = 0.25


@dataclass
class ToySection:
    corpus: ToyCorpusSpec = field(default_factory=ToyCorpusSpec)
    n_noise_clips: int = 8


@dataclass
class EvalSection:
    cepstral_order: int = DEFAULT_ORDER
    griffin_lim_iterations: int = 32
    embedding_conditions: tuple[str, ...] = ("clean", "noise")


@dataclass
class PipelineConfig:
    dsp: DspSection = field(default_factory=DspSection)
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    separation: SeparationSection = field(default_factory=SeparationSection)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    toy: ToySection = field(default_factory=ToySection)
    seed: int = 0

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


# -- schema generation ---------------------------------------------------------------

# constraints the type annotations cannot express, keyed by dotted path
_CONSTRAINTS: dict[str, dict] = {
    "dsp.sample_rate": {"const": dsp.SAMPLE_RATE},
    "dsp.frame_size": {"const": dsp.FRAME_SIZE},
    "dsp.hop": {"const": dsp.HOP},
    "dsp.n_mels": {"const": dsp.N_MELS},
    "degrade.room.t60": {"exclusiveMinimum": 0},
    "degrade.room.speed_of_sound": {"exclusiveMinimum": 0},
    "separation.extractor.mode": {"enum": [m.value for m in SeparationMode]},
    "separation.denoiser.mode": {"enum": [m.value for m in SeparationMode]},
    "separation.pretrain.steps": {"minimum": 0},
    "separation.pretrain.batch_size": {"minimum": 1},
    "separation.pretrain.lr": {"exclusiveMinimum": 0},
    "separation.n_noise_clips": {"minimum": 1},
    "separation.validation_fraction": {"exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "model.dropout": {"minimum": 0, "maximum": 1},
    "train.alpha": {"minimum": 0},
    "train.batch_size": {"minimum": 1},
    "train.lr": {"exclusiveMinimum": 0},
    "train.max_steps": {"minimum": 0},
    "train.checkpoint_every": {"minimum": 1},
    "train.clean_env_conditions": {"minItems": 1},
    "eval.cepstral_order": {"minimum": 1, "maximum": dsp.N_MELS - 1},
    "eval.griffin_lim_iterations": {"minimum": 1},
    "eval.embedding_conditions": {"minItems": 1},
    "toy.n_noise_clips": {"minimum": 1},
}
_CONDITION_LISTS = {"train.clean_env_conditions", "train.silence_conditions", "eval.embedding_conditions"}


def _type_schema(tp, path: str) -> dict:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return _dataclass_schema(tp, path)
    if origin in (typing.Union, types.UnionType):
        return {"anyOf": [_type_schema(a, path) for a in args]}
    if tp is type(None):
        return {"type": "null"}
    if tp is bool:
        return {"type": "boolean"}
    if tp is int:
        return {"type": "integer"}
    if tp is float:
        return {"type": "number"}
    if tp is str:
        return {"type": "string"}
    if origin is tuple:
        if len(args) == 2 and args[1] is Ellipsis:
            item = _type_schema(args[0], path)
            if path in _CONDITION_LISTS:
                item = {"type": "string", "enum": CONDITIONS}
            return {"type": "array", "items": item}
        return {"type": "array", "prefixItems": [_type_schema(a, path) for a in args],
                "items": False, "minItems": len(args)}
    if tp is dict or origin is dict:
        return {"type": "object", "propertyNames": {"enum": CONDITIONS},
                "additionalProperties": {"type": "number", "minimum": 0}}
    raise TypeError(f"no schema mapping for {tp!r} at {path}")


def _dataclass_schema(cls, path: str) -> dict:
    hints = typing.get_type_hints(cls)
    props = {}
    for f in dataclasses.fields(cls):
        sub = f"{path}.{f.name}" if path else f.name
        props[f.name] = {**_type_schema(hints[f.name], sub), **_CONSTRAINTS.get(sub, {})}
    return {"type": "object", "properties": props, "additionalProperties": False}


def generate_schema() -> dict:
    schema = _dataclass_schema(PipelineConfig, "")
    return {"$schema": "https://json-schema.org/draft/2020-12/schema",
            "title": "robusttts pipeline configuration", **schema}


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


def write_schema(path: Path = SCHEMA_PATH) -> None:
    path.write_text(json.dumps(generate_schema(), indent=2) + "\n", encoding="utf-8")


# -- loading --------------------------------------------------------------------------

def _merge(base: dict, update: Mapping, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        here = f"{where}.{key}" if where else key
        if key not in out:
            raise ConfigError(f"unknown configuration key {here!r} (schema: {SCHEMA_PATH})")
        if isinstance(out[key], dict) and isinstance(value, Mapping) and key != "ratios":
            out[key] = _merge(out[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _nested(path: list[str], value) -> dict:
    out: dict = {}
    cur = out
    for key in path[:-1]:
        cur = cur.setdefault(key, {})
    cur[path[-1]] = value
    return out


def env_overrides(environ: Mapping[str, str] | None = None) -> list[dict]:
    """``ROBUSTTTS_TRAIN__ALPHA=0.5`` sets ``train.alpha``; values parse as JSON
    when possible, otherwise as strings."""
    environ = os.environ if environ is None else environ
    out = []
    for name in sorted(environ):
        if name.startswith(ENV_PREFIX):
            path = name[len(ENV_PREFIX):].lower().split("__")
            out.append(_nested(path, _parse_value(environ[name])))
    return out


def flag_overrides(items) -> list[dict]:
    out = []
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, value = item.split("=", 1)
        out.append(_nested(key.strip().split("."), _parse_value(value)))
    return out


def build_config(data: Mapping) -> PipelineConfig:
    """Validate a full plain-data document and construct the dataclasses."""
    try:
        jsonschema.validate(data, load_schema())
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid configuration at {where}: {exc.message} (schema: {SCHEMA_PATH})") from None
    try:
        d = data
        sep = d["separation"]
        toy = d["toy"]
        deg = d["degrade"]
        return PipelineConfig(
            dsp=DspSection(**d["dsp"]),
            degrade=DegradeConfig(RoomSpec(**deg["room"]), tuple(deg["noise_lufs"]),
                                  tuple(deg["mixture_lufs"]), dict(deg["ratios"])),
            separation=SeparationSection(SeparatorConfig(**sep["extractor"]), SeparatorConfig(**sep["denoiser"]),
                                         PretrainConfig(**sep["pretrain"]), sep["n_noise_clips"],
                                         sep["validation_fraction"]),
            model=ModelConfig(**d["model"]),
            train=TrainConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in d["train"].items()}),
            eval=EvalSection(**{k: tuple(v) if isinstance(v, list) else v for k, v in d["eval"].items()}),
            toy=ToySection(ToyCorpusSpec(**{k: tuple(v) if isinstance(v, list) else v
                                            for k, v in toy["corpus"].items()}), toy["n_noise_clips"]),
            seed=d["seed"],
        )
    except ConfigError:
        raise
    except (RobustTTSError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc} (schema: {SCHEMA_PATH})") from None


def load_config(path: str | Path | None = None, overrides=(), environ: Mapping[str, str] | None = None
                ) -> PipelineConfig:
    """Defaults <- file <- environment <- flag overrides, then validation."""
    data = PipelineConfig().to_dict()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"configuration file not found: {path} (schema: {SCHEMA_PATH})")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc} (schema: {SCHEMA_PATH})") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path} must hold a JSON object (schema: {SCHEMA_PATH})")
        data = _merge(data, loaded)
    for update in env_overrides(environ) + flag_overrides(overrides):
        data = _merge(data, update)
    return build_config(data)
