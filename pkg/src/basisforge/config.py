"""Run configuration: JSON in, canonical JSON echo out."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from basisforge.errors import ConfigurationError

_KEYS = {"input", "schedule", "dense_family", "epsilon", "steps", "verify", "alpha", "tolerances"}
_TOLERANCE_KEYS = {"lambda_min", "fallback_floor"}


@dataclass
class RunConfig:
    input: dict[str, Any]
    schedule: dict[str, Any]
    dense_family: dict[str, Any] = field(default_factory=lambda: {"type": "generated"})
    epsilon: float | None = None
    steps: int | None = None
    verify: bool = False
    alpha: float | None = None
    tolerances: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> RunConfig:
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = set(raw) - _KEYS
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        for key in ("input", "schedule"):
            if not isinstance(raw.get(key), dict):
                raise ConfigurationError(f"config needs an object under {key!r}")
        tolerances = dict(raw.get("tolerances") or {})
        if set(tolerances) - _TOLERANCE_KEYS:
            raise ConfigurationError(f"unknown tolerances {sorted(set(tolerances) - _TOLERANCE_KEYS)}")
        epsilon = raw.get("epsilon")
        steps = raw.get("steps")
        alpha = raw.get("alpha")
        return cls(
            input=raw["input"],
            schedule=raw["schedule"],
            dense_family=raw.get("dense_family") or {"type": "generated"},
            epsilon=None if epsilon is None else float(epsilon),
            steps=None if steps is None else int(steps),
            verify=bool(raw.get("verify", False)),
            alpha=None if alpha is None else float(alpha),
            tolerances={k: float(v) for k, v in tolerances.items()},
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def canonical(self) -> str:
        return canonical_json(self.to_dict())


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    return RunConfig.from_dict(raw)
