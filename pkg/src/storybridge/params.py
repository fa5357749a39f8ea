"""Named parameter container with seeded init and exact JSON checkpoints."""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .autodiff import Tensor

FORMAT_VERSION = 1


class ParameterStore:
    """Ordered map of name -> trainable Tensor, plus the seed that built it.

    Creation order is deterministic for a fixed seed, so two stores built by
    the same code with the same seed hold bit-identical values. A store can
    be frozen for inference; frozen stores refuse further allocation.
    """

    def __init__(self, rng_seed: int):
        self.rng_seed = int(rng_seed)
        self._rng = np.random.Generator(np.random.PCG64(self.rng_seed))
        self._params: dict[str, Tensor] = {}
        self.frozen = False

    def __len__(self) -> int:
        return len(self._params)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def param(self, name: str, shape: tuple[int, ...], init: str = "xavier") -> Tensor:
        """Return the named parameter, allocating it on first use.

        init is one of "xavier" (uniform with Glorot limit), "zeros", "ones".
        """
        if name in self._params:
            t = self._params[name]
            if t.shape != tuple(shape):
                raise ValueError(f"parameter '{name}' exists with shape {t.shape}, wanted {tuple(shape)}")
            return t
        if self.frozen:
            raise ValueError(f"store is frozen; cannot allocate parameter '{name}'")
        shape = tuple(int(s) for s in shape)
        if init == "xavier":
            fan_in = shape[0] if len(shape) > 1 else shape[0]
            fan_out = shape[-1]
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            data = self._rng.uniform(-limit, limit, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            raise ValueError(f"unknown init '{init}'")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def freeze(self) -> "ParameterStore":
        self.frozen = True
        return self

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def collect_grads(self) -> dict[str, np.ndarray]:
        """Gradients by name; parameters untouched by the last backward get zeros."""
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self._params.items()
        }

    def to_payload(self, schedule: dict | None = None, extra: dict | None = None) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "rng_seed": self.rng_seed,
            "schedule": schedule,
            "extra": extra or {},
            "params": {
                name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
                for name, t in self._params.items()
            },
        }

    def save(self, path: str, schedule: dict | None = None, extra: dict | None = None) -> None:
        payload = self.to_payload(schedule=schedule, extra=extra)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_payload(cls, payload: dict) -> tuple["ParameterStore", dict]:
        version = payload.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format_version {version!r}")
        store = cls(payload["rng_seed"])
        for name, entry in payload["params"].items():
            shape = tuple(entry["shape"])
            data = np.asarray(entry["data"], dtype=np.float64).reshape(shape)
            store._params[name] = Tensor(data, requires_grad=True)
        return store, {"schedule": payload.get("schedule"), "extra": payload.get("extra", {})}

    @classmethod
    def load(cls, path: str) -> tuple["ParameterStore", dict]:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls.from_payload(payload)
