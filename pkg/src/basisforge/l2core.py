"""
Finitely supported real vectors in l2.

A vector is a sorted array of coordinate indices into the fixed reference
basis e_0, e_1, ... together with the matching coefficients. Binary
operations merge the two sorted supports, so their cost is linear in the
support sizes rather than in the ambient dimension.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy import sparse

DROP_TOL = 1e-15
ORTHO_TOL = 1e-10

# Above this many dense cells the Gram matrix is formed with sparse products.
_DENSE_GRAM_CELLS = 40_000_000


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class SparseL2Vector:
    """Immutable finitely supported vector over the reference basis of l2."""

    __slots__ = ("_idx", "_val")

    def __init__(self, indices: Iterable[int] = (), values: Iterable[float] = ()):
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices,
                         dtype=np.int64).ravel()
        val = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                         dtype=np.float64).ravel()
        if idx.shape != val.shape:
            raise ValueError(f"{idx.size} indices but {val.size} values")
        if idx.size and idx.min() < 0:
            raise ValueError("coordinate indices must be non-negative")
        if not np.all(np.isfinite(val)):
            raise ValueError("coefficients must be finite")
        order = np.argsort(idx, kind="stable")
        idx, val = idx[order], val[order]
        if idx.size > 1 and np.any(idx[1:] == idx[:-1]):
            raise ValueError("duplicate coordinate index")
        keep = np.abs(val) >= DROP_TOL
        self._idx = _frozen(idx[keep].copy())
        self._val = _frozen(val[keep].copy())

    @classmethod
    def _trusted(cls, idx: np.ndarray, val: np.ndarray) -> SparseL2Vector:
        # Caller guarantees sorted unique indices and hands over fresh or frozen
        # arrays; only the drop rule is applied.
        keep = np.abs(val) >= DROP_TOL
        if not keep.all():
            idx, val = idx[keep], val[keep]
        return cls._wrap(idx, val)

    @classmethod
    def _wrap(cls, idx: np.ndarray, val: np.ndarray) -> SparseL2Vector:
        # No checks at all: the drop rule must already hold.
        out = object.__new__(cls)
        out._idx = _frozen(idx.astype(np.int64, copy=False))
        out._val = _frozen(val.astype(np.float64, copy=False))
        return out

    @classmethod
    def from_dict(cls, coords: Mapping[int | str, float]) -> SparseL2Vector:
        """Build from a ``{index: coefficient}`` map; string keys are accepted (JSON)."""
        items = [(int(k), float(v)) for k, v in coords.items()]
        return cls([i for i, _ in items], [v for _, v in items])

    @classmethod
    def basis(cls, index: int, coefficient: float = 1.0) -> SparseL2Vector:
        return cls([index], [coefficient])

    @classmethod
    def zero(cls) -> SparseL2Vector:
        return cls()

    @property
    def indices(self) -> np.ndarray:
        return self._idx

    @property
    def values(self) -> np.ndarray:
        return self._val

    @property
    def max_index(self) -> int:
        return int(self._idx[-1]) if self._idx.size else -1

    def is_zero(self) -> bool:
        return self._idx.size == 0

    def to_dict(self) -> dict[int, float]:
        return {int(i): float(v) for i, v in zip(self._idx, self._val)}

    def to_dense(self, size: int | None = None) -> np.ndarray:
        size = self.max_index + 1 if size is None else size
        out = np.zeros(size)
        out[self._idx] = self._val
        return out

    def __len__(self) -> int:
        return int(self._idx.size)

    def __iter__(self) -> Iterator[tuple[int, float]]:
        return ((int(i), float(v)) for i, v in zip(self._idx, self._val))

    def __getitem__(self, index: int) -> float:
        pos = np.searchsorted(self._idx, index)
        if pos < self._idx.size and self._idx[pos] == index:
            return float(self._val[pos])
        return 0.0

    def __neg__(self) -> SparseL2Vector:
        return SparseL2Vector._trusted(self._idx, -self._val)

    def __mul__(self, scalar: float) -> SparseL2Vector:
        return SparseL2Vector._trusted(self._idx, self._val * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> SparseL2Vector:
        return SparseL2Vector._trusted(self._idx, self._val / float(scalar))

    def __add__(self, other: SparseL2Vector) -> SparseL2Vector:
        return axpy(1.0, other, self)

    def __sub__(self, other: SparseL2Vector) -> SparseL2Vector:
        return axpy(-1.0, other, self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseL2Vector):
            return NotImplemented
        return np.array_equal(self._idx, other._idx) and np.array_equal(self._val, other._val)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        if len(self) > 6:
            head = ", ".join(f"{i}: {v:.6g}" for i, v in list(self)[:6])
            return f"SparseL2Vector({{{head}, ...}} nnz={len(self)})"
        return f"SparseL2Vector({self.to_dict()})"


def _positions(big: np.ndarray, small: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positions of ``small`` entries inside sorted ``big`` and a found-mask."""
    pos = np.searchsorted(big, small)
    found = pos < big.size
    found[found] = big[pos[found]] == small[found]
    return pos, found


def inner(u: SparseL2Vector, v: SparseL2Vector) -> float:
    """Standard l2 inner product over the shared support."""
    if len(u) > len(v):
        u, v = v, u
    if not len(u):
        return 0.0
    pos, found = _positions(v.indices, u.indices)
    return float(np.dot(u.values[found], v.values[pos[found]]))


def norm(u: SparseL2Vector) -> float:
    return math.sqrt(float(np.dot(u.values, u.values)))


def axpy(a: float, u: SparseL2Vector, v: SparseL2Vector) -> SparseL2Vector:
    """Return ``v + a*u`` with small coefficients dropped."""
    a = float(a)
    if not len(u) or a == 0.0:
        return v
    if not len(v):
        return u * a
    pos, found = _positions(v.indices, u.indices)
    if found.all():
        val = v.values.copy()
        val[pos] += a * u.values
        return SparseL2Vector._trusted(v.indices, val)
    idx = np.union1d(v.indices, u.indices)
    val = np.zeros(idx.size)
    val[np.searchsorted(idx, v.indices)] = v.values
    val[np.searchsorted(idx, u.indices)] += a * u.values
    return SparseL2Vector._trusted(idx, val)


def linear_combination(
    coefficients: Sequence[float] | np.ndarray, vectors: Sequence[SparseL2Vector]
) -> SparseL2Vector:
    """Return ``sum_i coefficients[i] * vectors[i]`` in a single merge pass."""
    if len(coefficients) != len(vectors):
        raise ValueError("coefficient and vector counts differ")
    if not vectors:
        return SparseL2Vector.zero()
    idx = np.concatenate([v.indices for v in vectors])
    val = np.concatenate([float(c) * v.values for c, v in zip(coefficients, vectors)])
    if not idx.size:
        return SparseL2Vector.zero()
    uniq, inv = np.unique(idx, return_inverse=True)
    return SparseL2Vector._trusted(uniq, np.bincount(inv, weights=val, minlength=uniq.size))


def _stack(vectors: Sequence[SparseL2Vector], columns: np.ndarray) -> sparse.csr_array:
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    np.cumsum([len(v) for v in vectors], out=indptr[1:])
    if vectors:
        col = np.searchsorted(columns, np.concatenate([v.indices for v in vectors]))
        data = np.concatenate([v.values for v in vectors])
    else:
        col, data = np.zeros(0, dtype=np.int64), np.zeros(0)
    return sparse.csr_array((data, col, indptr), shape=(len(vectors), columns.size))


def _union_support(vectors: Sequence[SparseL2Vector]) -> np.ndarray:
    if not vectors:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate([v.indices for v in vectors]))


class Projector:
    """Orthogonal projection onto the span of a fixed orthonormal family.

    Stacks the family once as a sparse row matrix so that repeated projections
    cost one sparse mat-vec each instead of one merge per family member.
    """

    def __init__(self, family: Sequence[SparseL2Vector]):
        self.family = list(family)
        self.columns = _union_support(self.family)
        self._rows = _stack(self.family, self.columns)

    def __len__(self) -> int:
        return len(self.family)

    def head(self, m: int) -> Projector:
        """Projector onto the first ``m`` family members, sharing storage."""
        out = object.__new__(Projector)
        out.family = self.family[:m]
        out.columns = self.columns
        out._rows = self._rows[:m]
        return out

    def coefficients(self, g: SparseL2Vector) -> np.ndarray:
        return self._rows @ self._restrict(g)

    def _restrict(self, g: SparseL2Vector) -> np.ndarray:
        dense = np.zeros(self.columns.size)
        pos, found = _positions(self.columns, g.indices)
        dense[pos[found]] = g.values[found]
        return dense

    def project(self, g: SparseL2Vector) -> tuple[np.ndarray, SparseL2Vector]:
        if not self.family:
            return np.zeros(0), g
        dense = self._restrict(g)
        coeffs = self._rows @ dense
        dense = dense - self._rows.T @ coeffs
        _, found = _positions(self.columns, g.indices)
        idx = np.concatenate([self.columns, g.indices[~found]])
        val = np.concatenate([dense, g.values[~found]])
        order = np.argsort(idx, kind="stable")
        return coeffs, SparseL2Vector._trusted(idx[order], val[order])


def project_onto_orthonormal(
    g: SparseL2Vector, family: Sequence[SparseL2Vector] | Projector
) -> tuple[list[float], SparseL2Vector]:
    """Split ``g`` into coefficients along an orthonormal family and a residual.

    ``coefficients[i]`` is ``inner(g, family[i])`` and the residual is
    ``g - sum_i coefficients[i] * family[i]``. Orthonormality of the family is
    the caller's responsibility. Pass a prebuilt :class:`Projector` when the
    same family is used for many projections.
    """
    projector = family if isinstance(family, Projector) else Projector(family)
    coeffs, residual = projector.project(g)
    return [float(c) for c in coeffs], residual


def stack_dense(vectors: Sequence[SparseL2Vector]) -> tuple[np.ndarray, np.ndarray]:
    """Dense row matrix over the union support, and that support."""
    columns = _union_support(vectors)
    out = np.zeros((len(vectors), columns.size))
    for row, v in zip(out, vectors):
        row[np.searchsorted(columns, v.indices)] = v.values
    return out, columns


def gram_matrix(vectors: Sequence[SparseL2Vector]) -> np.ndarray:
    """Dense Gram matrix ``G[i, j] = inner(vectors[i], vectors[j])``."""
    columns = _union_support(vectors)
    if len(vectors) * columns.size <= _DENSE_GRAM_CELLS:
        dense, _ = stack_dense(vectors)
        return dense @ dense.T
    rows = _stack(vectors, columns)
    return (rows @ rows.T).toarray()


def gram_defect(vectors: Sequence[SparseL2Vector]) -> float:
    """Largest entry of ``|G - I|``; zero for an empty family."""
    if not vectors:
        return 0.0
    g = gram_matrix(vectors)
    g[np.diag_indices_from(g)] -= 1.0
    return float(np.abs(g).max())
