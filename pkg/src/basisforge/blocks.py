"""
Problem model: the input system, its block schedule, and the family of target
vectors g_k that the completed system must approximate.

Block k holds the next n_k input vectors. ``L^(k)`` is the span of block k,
``L_k`` the span of blocks k, k+1, ..., and ``L_0`` the orthogonal complement
of everything. Each target g_k must be orthogonal to ``L_k``. Inside the
truncated coordinate range ``L_0`` is witnessed by reference coordinates that
no input vector touches.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from basisforge.errors import ConfigurationError, ExhaustionError
from basisforge.l2core import (
    ORTHO_TOL,
    SparseL2Vector,
    gram_defect,
    inner,
    linear_combination,
    norm,
)

WORKING_RANGE_PAD = 16
UNIT_TOL = 1e-12
# Candidates whose component outside L_k is shorter than this are skipped.
PROJECTION_FLOOR = 0.5


@dataclass
class InputSystem:
    chis: list[SparseL2Vector]
    ambient_guard: int | None = None  # largest coordinate index in the working range
    _owners: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.chis)

    @property
    def max_support_index(self) -> int:
        return max((chi.max_index for chi in self.chis), default=-1)

    def working_max(self) -> int:
        if self.ambient_guard is not None:
            return self.ambient_guard
        return self.max_support_index + WORKING_RANGE_PAD

    def touching(self, coords: np.ndarray) -> np.ndarray:
        """Indices of input vectors whose support meets ``coords``."""
        if self._owners is None:
            if self.chis:
                c = np.concatenate([chi.indices for chi in self.chis])
                o = np.concatenate([np.full(len(chi), i) for i, chi in enumerate(self.chis)])
            else:
                c = o = np.zeros(0, dtype=np.int64)
            order = np.argsort(c, kind="stable")
            self._owners = (c[order], o[order])
        c, o = self._owners
        lo = np.searchsorted(c, coords, side="left")
        hi = np.searchsorted(c, coords, side="right")
        hits = [o[a:b] for a, b in zip(lo, hi) if b > a]
        if not hits:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(hits))


@dataclass
class ValidationReport:
    n_vectors: int
    max_defect: float
    working_max: int
    witnesses: np.ndarray

    @property
    def witness_found(self) -> bool:
        return self.witnesses.size > 0

    @property
    def message(self) -> str:
        if self.witness_found:
            return f"{self.witnesses.size} L0 witness coordinates in [0, {self.working_max}]"
        return "no witness found in working range"


def l0_witnesses(sys: InputSystem) -> np.ndarray:
    """Reference coordinates in the working range untouched by every input vector."""
    touched = (
        np.unique(np.concatenate([chi.indices for chi in sys.chis]))
        if sys.chis
        else np.zeros(0, dtype=np.int64)
    )
    return np.setdiff1d(np.arange(sys.working_max() + 1), touched, assume_unique=True)


def validate_input(sys: InputSystem) -> ValidationReport:
    if not sys.chis:
        raise ConfigurationError("input system is empty")
    working_max = sys.working_max()
    if sys.max_support_index > working_max:
        raise ConfigurationError(
            f"input vector touches coordinate {sys.max_support_index} beyond the "
            f"working range [0, {working_max}]"
        )
    defect = gram_defect(sys.chis)
    if defect > ORTHO_TOL:
        raise ConfigurationError(f"input system is not orthonormal: defect {defect:.3e}")
    return ValidationReport(len(sys.chis), defect, working_max, l0_witnesses(sys))


@dataclass(frozen=True)
class BlockSchedule:
    values: tuple[int, ...]
    kind: str = "explicit"
    base: int | None = None

    def __post_init__(self) -> None:
        vals = tuple(self.values)
        if any(isinstance(v, bool) or int(v) != v for v in vals):
            raise ConfigurationError(f"block sizes must be integers: {vals}")
        vals = tuple(int(v) for v in vals)
        object.__setattr__(self, "values", vals)
        if vals and vals[0] <= 0:
            raise ConfigurationError("block sizes must be positive")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigurationError(f"block sizes must be strictly increasing: {vals}")

    @classmethod
    def explicit(cls, values: Sequence[int]) -> BlockSchedule:
        return cls(tuple(values))

    @classmethod
    def geometric(cls, n1: int, base: int, steps: int) -> BlockSchedule:
        if isinstance(base, bool) or int(base) != base or base < 2:
            raise ConfigurationError(f"geometric base must be an integer >= 2, got {base!r}")
        if steps < 0:
            raise ConfigurationError("steps must be non-negative")
        return cls(tuple(int(n1) * int(base) ** i for i in range(steps)), "geometric", int(base))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def total(self) -> int:
        return sum(self.values)

    def truncated(self, steps: int) -> BlockSchedule:
        if steps > len(self.values):
            raise ConfigurationError(f"{steps} steps requested but schedule has {len(self.values)}")
        return BlockSchedule(self.values[:steps], self.kind, self.base)

    def ratio(self) -> int | None:
        """Common integer ratio (>= 2) if the values form a geometric progression."""
        if self.kind == "geometric":
            return self.base
        vals = self.values
        if len(vals) == 1:
            return 2
        if len(vals) == 0 or vals[1] % vals[0]:
            return None
        r = vals[1] // vals[0]
        if r >= 2 and all(b == a * r for a, b in zip(vals, vals[1:])):
            return r
        return None


def epsilon_threshold(epsilon: float) -> Fraction:
    """``1/epsilon**2`` computed exactly from the decimal form of epsilon."""
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon!r}")
    eps = Fraction(repr(float(epsilon)))
    return 1 / (eps * eps)


def first_block_for_epsilon(epsilon: float, base: int) -> int:
    """Smallest power of ``base`` strictly above ``1/epsilon**2``."""
    bound = epsilon_threshold(epsilon)
    n1 = 1
    while n1 <= bound:
        n1 *= base
    return n1


@dataclass
class SubspaceIndex:
    system: InputSystem
    block_ranges: list[range]
    l0_coords: np.ndarray

    def start(self, k: int) -> int:
        """First input index belonging to block ``k`` (1-based)."""
        return self.block_ranges[k - 1].start if k <= len(self.block_ranges) else sum(
            len(r) for r in self.block_ranges
        )

    def block(self, k: int) -> list[SparseL2Vector]:
        return [self.system.chis[i] for i in self.block_ranges[k - 1]]

    def earlier_coords(self, k: int) -> np.ndarray:
        """Coordinates touched by blocks before ``k``."""
        chis = self.system.chis[: self.start(k)]
        if not chis:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([chi.indices for chi in chis]))

    def complement_pool(self, k: int) -> np.ndarray:
        """Coordinates known to meet only ``L_k``-orthogonal directions, plus L0."""
        return np.union1d(self.l0_coords, self.earlier_coords(k))

    def remove_tail(self, v: SparseL2Vector, k: int) -> SparseL2Vector:
        """Subtract the components of ``v`` along every input vector in blocks >= k."""
        start = self.start(k)
        owners = self.system.touching(v.indices)
        owners = owners[owners >= start]
        if not owners.size:
            return v
        chis = [self.system.chis[i] for i in owners]
        coeffs = [-inner(v, chi) for chi in chis]
        return linear_combination([1.0, *coeffs], [v, *chis])

    def tail_overlap(self, v: SparseL2Vector, k: int) -> float:
        """Largest ``|inner(v, chi)|`` over input vectors in blocks >= k."""
        owners = self.system.touching(v.indices)
        owners = owners[owners >= self.start(k)]
        return max((abs(inner(v, self.system.chis[i])) for i in owners), default=0.0)


def split_blocks(sys: InputSystem, sched: BlockSchedule) -> SubspaceIndex:
    if sched.total > len(sys.chis):
        raise ConfigurationError(
            f"schedule needs {sched.total} input vectors but only {len(sys.chis)} are available"
        )
    ranges, start = [], 0
    for n in sched.values:
        ranges.append(range(start, start + n))
        start += n
    return SubspaceIndex(sys, ranges, l0_witnesses(sys))


@dataclass
class DenseFamily:
    """Target vectors g_1, g_2, ... with ``g_k`` orthogonal to ``L_k``.

    In ``"explicit"`` mode ``g_k`` is ``vectors[k-1]``. In ``"generated"`` mode
    a cursor walks a deterministic sequence of candidates: candidate ``t`` has
    ``1 + t % max_support`` coordinates drawn from the pool of coordinates
    orthogonal to ``L_k`` (L0 witnesses and coordinates of earlier blocks),
    limited to ``[0, R_k]`` with ``R_k`` growing with k, and coefficients on
    the dyadic grid of spacing ``2**-(1 + t // refine_every)``. Any remaining
    ``L_k`` component is projected out before normalising.
    """

    mode: str = "generated"
    vectors: list[SparseL2Vector] = field(default_factory=list)
    seed: int = 0
    max_support: int = 3
    refine_every: int = 4
    range_pad: int = 8
    max_bits: int = 30
    max_candidates: int = 10_000
    cursor: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("generated", "explicit"):
            raise ConfigurationError(f"unknown dense family mode {self.mode!r}")
        if self.max_support < 1 or self.refine_every < 1:
            raise ConfigurationError("max_support and refine_every must be >= 1")

    def describe(self) -> dict[str, Any]:
        if self.mode == "explicit":
            return {"mode": "explicit", "count": len(self.vectors)}
        return {
            "mode": "generated",
            "seed": self.seed,
            "max_support": self.max_support,
            "refine_every": self.refine_every,
            "range_pad": self.range_pad,
            "note": "deterministic dyadic enumeration over the truncated coordinate range; "
            "dense only in the limit",
        }

    def _pool(self, k: int, idx: SubspaceIndex) -> np.ndarray:
        earlier = idx.earlier_coords(k)
        pool = np.union1d(idx.l0_coords, earlier)
        if not pool.size:
            return pool
        anchor = max(
            int(earlier[-1]) if earlier.size else -1,
            int(idx.l0_coords[0]) if idx.l0_coords.size else -1,
        )
        return pool[pool <= anchor + self.range_pad]

    def _candidate(self, pool: np.ndarray) -> SparseL2Vector:
        t = self.cursor
        self.cursor += 1
        rng = np.random.default_rng([self.seed, t])
        size = min(1 + t % self.max_support, pool.size)
        coords = rng.choice(pool, size=size, replace=False)
        scale = 2 ** min(1 + t // self.refine_every, self.max_bits)
        steps = rng.integers(1, scale + 1, size=size) * rng.choice([-1, 1], size=size)
        return SparseL2Vector(coords, steps / scale)


def _check_member(g: SparseL2Vector, k: int, idx: SubspaceIndex) -> None:
    if abs(norm(g) - 1.0) > UNIT_TOL:
        raise ConfigurationError(f"g_{k} is not a unit vector (norm {norm(g)!r})")
    overlap = idx.tail_overlap(g, k)
    if overlap > ORTHO_TOL:
        raise ConfigurationError(f"g_{k} is not orthogonal to L_{k} (overlap {overlap:.3e})")


def next_dense_vector(fam: DenseFamily, k: int, idx: SubspaceIndex) -> SparseL2Vector:
    """Return the target vector g_k, a unit vector orthogonal to ``L_k``."""
    if fam.mode == "explicit":
        if k > len(fam.vectors):
            raise ExhaustionError(f"explicit dense family has no member g_{k}")
        g = fam.vectors[k - 1]
        _check_member(g, k, idx)
        return g
    pool = fam._pool(k, idx)
    if not pool.size:
        raise ExhaustionError(f"no coordinates orthogonal to L_{k} in the working range")
    for _ in range(fam.max_candidates):
        c = fam._candidate(pool)
        c = c / norm(c)
        c = idx.remove_tail(c, k)
        length = norm(c)
        if length < PROJECTION_FLOOR:
            continue
        g = c / length
        _check_member(g, k, idx)
        return g
    raise ExhaustionError(f"no acceptable candidate for g_{k} after {fam.max_candidates} tries")


# JSON specs ---------------------------------------------------------------


def _vector_from_spec(spec: Mapping[str, Any]) -> SparseL2Vector:
    coords = spec.get("coords") if isinstance(spec, Mapping) else None
    if not isinstance(coords, Mapping):
        raise ConfigurationError(f"vector spec needs a 'coords' map: {spec!r}")
    try:
        return SparseL2Vector.from_dict(coords)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad vector spec: {exc}") from None


def input_system_from_spec(spec: Mapping[str, Any], ambient_guard: int | None = None) -> InputSystem:
    """Build the input system from ``reference_subset`` or ``explicit`` JSON."""
    kind = spec.get("type")
    if kind == "reference_subset":
        if "indices" in spec:
            indices = [int(i) for i in spec["indices"]]
        elif "count" in spec:
            start, step = int(spec.get("start", 0)), int(spec.get("step", 1))
            indices = [start + step * i for i in range(int(spec["count"]))]
        else:
            raise ConfigurationError("reference_subset needs 'indices' or 'count'")
        if any(i < 0 for i in indices):
            raise ConfigurationError("reference indices must be non-negative")
        chis = [SparseL2Vector.basis(i) for i in indices]
    elif kind == "explicit":
        chis = [_vector_from_spec(v) for v in spec.get("vectors", [])]
    else:
        raise ConfigurationError(f"unknown input system type {kind!r}")
    guard = spec.get("ambient_guard", ambient_guard)
    return InputSystem(chis, None if guard is None else int(guard))


def schedule_from_spec(spec: Mapping[str, Any], epsilon: float | None = None) -> BlockSchedule:
    """Build a schedule; with ``epsilon`` set, enforce ``n_1 > 1/epsilon**2``."""
    kind = spec.get("type")
    if kind == "explicit":
        sched = BlockSchedule.explicit(spec.get("values", []))
    elif kind == "geometric":
        base = spec.get("base", 2)
        if "n1" in spec:
            n1 = spec["n1"]
        elif epsilon is not None:
            n1 = first_block_for_epsilon(epsilon, int(base))
        else:
            raise ConfigurationError("geometric schedule needs 'n1' (or an epsilon to derive it)")
        sched = BlockSchedule.geometric(n1, base, int(spec.get("steps", 0)))
    else:
        raise ConfigurationError(f"unknown schedule type {kind!r}")
    if epsilon is not None and sched.values and sched.values[0] <= epsilon_threshold(epsilon):
        raise ConfigurationError(
            f"epsilon={epsilon} needs n1 > {float(epsilon_threshold(epsilon)):g}, "
            f"got n1={sched.values[0]}"
        )
    return sched


def family_from_spec(spec: Mapping[str, Any] | None) -> DenseFamily:
    spec = spec or {"type": "generated"}
    kind = spec.get("type")
    if kind == "explicit":
        return DenseFamily("explicit", [_vector_from_spec(v) for v in spec.get("vectors", [])])
    if kind == "generated":
        params = {k: int(v) for k, v in spec.items() if k != "type"}
        unknown = set(params) - {"seed", "max_support", "refine_every", "range_pad", "max_candidates"}
        if unknown:
            raise ConfigurationError(f"unknown generated-family parameters {sorted(unknown)}")
        return DenseFamily("generated", **params)
    raise ConfigurationError(f"unknown dense family type {kind!r}")


def default_working_max(sys: InputSystem, sched: BlockSchedule) -> int:
    return sys.max_support_index + sched.total + WORKING_RANGE_PAD
