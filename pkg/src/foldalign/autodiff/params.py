"""Named parameters, Adam, initialisation and the checkpoint format.

A checkpoint is ``<stem>.json`` (manifest) plus ``<stem>.bin``: little-endian
float64 values, each tensor at the byte offset listed in the manifest.
Adam moments are stored as extra entries named ``adam.m/<name>`` and
``adam.v/<name>``; step counts live in the manifest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


class ParamStore:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.steps: dict[str, int] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        self.steps[name] = 0
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for name, t in self._params.items():
            other.add(name, t.data)
            other.m[name] = self.m[name].copy()
            other.v[name] = self.v[name].copy()
            other.steps[name] = self.steps[name]
        return other

    def state_equal(self, other: "ParamStore") -> bool:
        return self.names() == other.names() and all(
            np.array_equal(self[n].data, other[n].data) for n in self
        )


def adam_step(store: ParamStore, config: AdamConfig) -> None:
    """One bias-corrected Adam update of every parameter; clears gradients."""
    missing = [n for n, t in store.items() if t.grad is None]
    if missing:
        raise ValueError(f"no gradient for parameters: {', '.join(missing)}")
    b1, b2 = config.beta1, config.beta2
    for name, t in store.items():
        g = t.grad
        step = store.steps[name] + 1
        m = store.m[name]
        v = store.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        # lr * m_hat / (sqrt(v_hat) + eps), evaluated with in-place temporaries
        denom = np.sqrt(v)
        denom /= math.sqrt(1.0 - b2**step)
        denom += config.epsilon
        update = m / denom
        update *= config.learning_rate / (1.0 - b1**step)
        t.data -= update
        store.steps[name] = step
        t.grad = None


def kaiming_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def add_linear(store: ParamStore, prefix: str, fan_in: int, fan_out: int, rng: np.random.Generator) -> None:
    store.add(f"{prefix}.weight", kaiming_uniform(rng, fan_in, fan_out))
    store.add(f"{prefix}.bias", np.zeros((1, fan_out)))


def _entries(store: ParamStore, with_adam: bool):
    for name, t in store.items():
        yield name, t.data
    if with_adam:
        for name in store:
            yield f"adam.m/{name}", store.m[name]
        for name in store:
            yield f"adam.v/{name}", store.v[name]


def save_checkpoint(store: ParamStore, path, meta: dict | None = None, with_adam: bool = True) -> Path:
    path = Path(path)
    manifest_path = path.with_suffix(".json")
    blob_path = path.with_suffix(".bin")
    entries = []
    offset = 0
    with open(blob_path, "wb") as blob:
        for name, arr in _entries(store, with_adam):
            raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            entries.append({"name": name, "shape": list(arr.shape), "dtype": "f64", "offset": offset})
            blob.write(raw)
            offset += len(raw)
    manifest = {
        "format": "foldalign-params/1",
        "blob": blob_path.name,
        "byte_order": "little",
        "tensors": entries,
        "adam_steps": dict(store.steps) if with_adam else {},
        "meta": meta or {},
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    manifest_path = Path(path).with_suffix(".json")
    manifest = json.loads(manifest_path.read_text())
    raw = (manifest_path.parent / manifest["blob"]).read_bytes()
    store = ParamStore()
    moments: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        if entry["dtype"] != "f64":
            raise ValueError(f"unsupported dtype {entry['dtype']!r}")
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=entry["offset"]).reshape(entry["shape"])
        if entry["name"].startswith("adam."):
            moments[entry["name"]] = arr.astype(np.float64)
        else:
            store.add(entry["name"], arr)
    for name in store:
        if f"adam.m/{name}" in moments:
            store.m[name] = moments[f"adam.m/{name}"]
            store.v[name] = moments[f"adam.v/{name}"]
        store.steps[name] = int(manifest.get("adam_steps", {}).get(name, 0))
    return store, manifest.get("meta", {})
