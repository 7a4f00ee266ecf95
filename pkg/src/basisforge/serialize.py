"""JSON form of a completed run: config echo, step records, report."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from basisforge.config import RunConfig
from basisforge.driver import CompletionResult, StepRecord, prepare
from basisforge.errors import ConfigurationError
from basisforge.l2core import SparseL2Vector
from basisforge.verify import CompletionReport

FORMAT = "basisforge.completion/1"


def vector_to_json(v: SparseL2Vector) -> dict[str, Any]:
    return {"coords": {str(i): c for i, c in v}}


def vector_from_json(doc: dict[str, Any]) -> SparseL2Vector:
    return SparseL2Vector.from_dict(doc["coords"])


def _step_to_json(step: StepRecord, include_vectors: bool) -> dict[str, Any]:
    out: dict[str, Any] = {
        "k": step.k,
        "n": step.n,
        "lambda": step.lam,
        "fallback_used": step.fallback_used,
    }
    if include_vectors:
        out["prior_coefficients"] = list(step.prior_coefficients)
        out["g_k"] = vector_to_json(step.g_k)
        out["g_corr"] = vector_to_json(step.g_corr)
        out["psis"] = [vector_to_json(p) for p in step.psis]
        out["h"] = vector_to_json(step.h)
    return out


def result_to_json(
    result: CompletionResult, report: CompletionReport | None = None, include_vectors: bool = True
) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "format": FORMAT,
        "config": result.config,
        "metadata": result.metadata,
        "steps": [_step_to_json(s, include_vectors) for s in result.steps],
    }
    if report is not None:
        doc["report"] = report.to_dict()
    return doc


def dumps(doc: dict[str, Any]) -> str:
    # float repr is the shortest string that round-trips, so nothing is lost.
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def result_from_json(doc: dict[str, Any]) -> CompletionResult:
    """Rebuild a result (input system included) from its saved JSON form."""
    if doc.get("format") != FORMAT:
        raise ConfigurationError(f"not a {FORMAT} document")
    config = RunConfig.from_dict(doc["config"])
    prep = prepare(config)
    steps = []
    for s in doc["steps"]:
        if "psis" not in s:
            raise ConfigurationError("saved result has no vector payload (written with --no-vectors)")
        steps.append(
            StepRecord(
                k=int(s["k"]),
                n=int(s["n"]),
                g_k=vector_from_json(s["g_k"]),
                prior_coefficients=[float(c) for c in s["prior_coefficients"]],
                lam=float(s["lambda"]),
                g_corr=vector_from_json(s["g_corr"]),
                psis=[vector_from_json(p) for p in s["psis"]],
                h=vector_from_json(s["h"]),
                fallback_used=bool(s["fallback_used"]),
            )
        )
    return CompletionResult(steps, prep.system, prep.schedule, prep.index,
                            config.to_dict(), dict(doc.get("metadata", {})))


def load_result(path: str | Path) -> CompletionResult:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot load result {path}: {exc}") from None
    return result_from_json(doc)
