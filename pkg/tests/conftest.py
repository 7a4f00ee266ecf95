from __future__ import annotations

import math

import numpy as np
import pytest

from basisforge.config import RunConfig
from basisforge.driver import run
from basisforge.l2core import SparseL2Vector


def vec(coords: dict[int, float]) -> SparseL2Vector:
    return SparseL2Vector.from_dict(coords)


def rotated_basis(n: int, seed: int, offset: int = 0) -> list[SparseL2Vector]:
    """n orthonormal vectors: a permutation of reference coordinates with random
    2x2 rotations applied to disjoint pairs."""
    rng = np.random.default_rng(seed)
    coords = offset + rng.permutation(3 * n + 4)[:n]
    out, i = [], 0
    while i < n:
        if i + 1 < n and rng.random() < 0.5:
            t = rng.uniform(0, 2 * math.pi)
            a, b = int(coords[i]), int(coords[i + 1])
            out.append(vec({a: math.cos(t), b: math.sin(t)}))
            out.append(vec({a: -math.sin(t), b: math.cos(t)}))
            i += 2
        else:
            out.append(SparseL2Vector.basis(int(coords[i])))
            i += 1
    return out


def max_coefficient_gap(u: SparseL2Vector, v: SparseL2Vector) -> float:
    d = u - v
    return float(np.abs(d.values).max()) if len(d) else 0.0


def even_config(count: int, schedule: dict, **extra) -> RunConfig:
    raw = {
        "input": {"type": "reference_subset", "start": 2, "step": 2, "count": count},
        "schedule": schedule,
    }
    raw.update(extra)
    return RunConfig.from_dict(raw)


@pytest.fixture(scope="session")
def geometric_run():
    """chi_n = e_{2n}, n_k = 2^k, K = 10, generated targets."""
    cfg = even_config(2046, {"type": "geometric", "n1": 2, "base": 2, "steps": 10})
    return run(cfg)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":ab"))):
            terminalreporter.write_line(line)
