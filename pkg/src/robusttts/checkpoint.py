"""Versioned artifact container: one ``.npz`` holding named arrays plus a JSON
header (format tag, config echo, provenance)."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .errors import ArtifactError

FORMAT_VERSION = 1
_META_KEY = "__meta__"


def format_tag(kind: str, version: int = FORMAT_VERSION) -> str:
    return f"robusttts.{kind}/v{version}"


def save_artifact(path: str | Path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(meta)
    header["format"] = format_tag(kind)
    payload = {_META_KEY: np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)}
    for name, arr in arrays.items():
        if name == _META_KEY:
            raise ValueError(f"array name {_META_KEY!r} is reserved")
        payload[name] = np.asarray(arr)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        np.savez(f, **payload)
    tmp.replace(path)
    return path


def load_artifact(path: str | Path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"artifact not found: {path}", expected=format_tag(kind))
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(bytes(data[_META_KEY]).decode("utf-8"))
            arrays = {k: data[k] for k in data.files if k != _META_KEY}
    except (OSError, ValueError, KeyError) as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}", expected=format_tag(kind)) from exc
    found = header.get("format")
    if found != format_tag(kind):
        raise ArtifactError(f"{path}: expected {format_tag(kind)}, found {found}",
                            expected=format_tag(kind), found=found)
    return header, arrays


def state_to_arrays(module: torch.nn.Module, prefix: str = "") -> dict[str, np.ndarray]:
    return {prefix + k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def arrays_to_state(arrays: dict[str, np.ndarray], prefix: str = "") -> dict[str, torch.Tensor]:
    return {k[len(prefix):]: torch.from_numpy(np.array(v)) for k, v in arrays.items() if k.startswith(prefix)}


def optimizer_to_arrays(opt: torch.optim.Optimizer, prefix: str = "optim/") -> dict[str, np.ndarray]:
    out = {}
    for idx, state in opt.state_dict()["state"].items():
        for name, value in state.items():
            out[f"{prefix}{idx}/{name}"] = torch.as_tensor(value).detach().cpu().numpy().copy()
    return out


def arrays_to_optimizer(opt: torch.optim.Optimizer, arrays: dict[str, np.ndarray],
                        prefix: str = "optim/") -> None:
    sd = opt.state_dict()
    state: dict[int, dict] = {}
    for key, value in arrays.items():
        if not key.startswith(prefix):
            continue
        idx, name = key[len(prefix):].split("/", 1)
        state.setdefault(int(idx), {})[name] = torch.from_numpy(np.array(value))
    sd["state"] = state
    opt.load_state_dict(sd)
