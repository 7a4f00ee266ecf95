"""
The orthogonal completion matrices A_n.

A_n is (n+1)x(n+1): the top-left n x n block is ``I - gamma*J`` with
``gamma = 1/((2+sqrt2) n)`` and J the all-ones matrix, the last column is
``1/sqrt(2n)`` above a corner of ``1/sqrt2``, and the last row is
``-1/sqrt(2n)``. Applied to an orthonormal tuple (chi_1..chi_n, g) it yields
an orthonormal tuple (psi_1..psi_n, h) with every psi_j close to chi_j.

Only the two parameters are stored. :func:`apply_structured` shares the sum of
the block across all outputs, so an application costs O(n) vector operations;
:func:`apply_naive` multiplies by the dense matrix and serves as its oracle.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from basisforge.l2core import DROP_TOL, SparseL2Vector, stack_dense

MAX_MATERIALIZE_N = 2**15

# ||psi_j - chi_j||^2 = (1 + 1/(3 + 2 sqrt2)) / (2n) = (2 - sqrt2) / n, as 1/(3 + 2 sqrt2) = 3 - 2 sqrt2.
PERTURBATION_CONSTANT = 2.0 - math.sqrt(2.0)


@dataclass(frozen=True)
class CompletionMatrix:
    n: int
    gamma: float

    @property
    def border(self) -> float:
        """Magnitude ``1/sqrt(2n)`` of the last row and column."""
        return 1.0 / math.sqrt(2.0 * self.n)

    @property
    def corner(self) -> float:
        return 1.0 / math.sqrt(2.0)


def make_completion_matrix(n: int) -> CompletionMatrix:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"completion matrix needs n >= 1, got {n!r}")
    n = int(n)
    return CompletionMatrix(n=n, gamma=1.0 / ((2.0 + math.sqrt(2.0)) * n))


def materialize(m: CompletionMatrix) -> np.ndarray:
    if m.n > MAX_MATERIALIZE_N:
        raise ValueError(f"refusing to materialize A_n for n={m.n} > {MAX_MATERIALIZE_N}")
    n = m.n
    a = np.full((n + 1, n + 1), -m.gamma)
    a[np.arange(n), np.arange(n)] = 1.0 - m.gamma
    a[:n, n] = m.border
    a[n, :n] = -m.border
    a[n, n] = m.corner
    return a


def orthogonality_defect(m: CompletionMatrix) -> float:
    """Max absolute entry of ``A^T A - I`` from the dense matrix."""
    a = materialize(m)
    gram = a.T @ a
    gram[np.diag_indices_from(gram)] -= 1.0
    return float(np.abs(gram).max())


def _check_block(m: CompletionMatrix, block: Sequence[SparseL2Vector]) -> None:
    if len(block) != m.n:
        raise ValueError(f"block has {len(block)} vectors but the matrix has n={m.n}")


def apply_structured(
    m: CompletionMatrix,
    block: Sequence[SparseL2Vector],
    g: SparseL2Vector,
    workers: int = 1,
) -> tuple[list[SparseL2Vector], SparseL2Vector]:
    """Apply A_n to (block..., g) using the shared block sum.

    ``psi_j = chi_j - gamma*S + g/sqrt(2n)`` and ``h = -S/sqrt(2n) + g/sqrt2``
    where ``S`` is the sum of the block. With ``workers > 1`` the n outputs
    are formed on a thread pool; results do not depend on the worker count.
    """
    _check_block(m, block)
    # Work densely over the union support of the inputs; S is the block sum.
    lengths = np.array([len(chi) for chi in block], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    chi_idx = np.concatenate([chi.indices for chi in block] + [g.indices])
    columns, where = np.unique(chi_idx, return_inverse=True)
    n_chi = int(offsets[-1])
    total = np.bincount(where[:n_chi], weights=np.concatenate([chi.values for chi in block]),
                        minlength=columns.size)
    g_dense = np.zeros(columns.size)
    g_dense[where[n_chi:]] = g.values
    base = (-m.gamma) * total + m.border * g_dense
    h = SparseL2Vector._trusted(columns, (-m.border) * total + m.corner * g_dense)
    # Rows whose chi misses an entry that is tiny in ``base`` need the full drop rule.
    holes = bool((np.abs(base) < DROP_TOL).any())
    rows = np.empty((m.n, columns.size))

    def fill(lo: int, hi: int) -> list[SparseL2Vector]:
        part = rows[lo:hi]
        part[:] = base
        r = np.repeat(np.arange(hi - lo), lengths[lo:hi])
        c = where[offsets[lo]:offsets[hi]]
        part[r, c] += np.concatenate([chi.values for chi in block[lo:hi]])
        tiny = np.zeros(hi - lo, dtype=bool)
        np.logical_or.at(tiny, r, np.abs(part[r, c]) < DROP_TOL)
        return [
            SparseL2Vector._trusted(columns, row) if holes or drop else SparseL2Vector._wrap(columns, row)
            for row, drop in zip(part, tiny)
        ]

    if workers > 1 and m.n > 1:
        bounds = np.linspace(0, m.n, min(workers, m.n) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(fill, bounds[:-1], bounds[1:]))
        psis = [psi for chunk in chunks for psi in chunk]
    else:
        psis = fill(0, m.n)
    return psis, h


def apply_naive(
    m: CompletionMatrix, block: Sequence[SparseL2Vector], g: SparseL2Vector
) -> tuple[list[SparseL2Vector], SparseL2Vector]:
    """Apply A_n by a dense matrix product over the union support."""
    _check_block(m, block)
    a = materialize(m)
    inputs, columns = stack_dense([*block, g])
    out = a @ inputs
    rows = [SparseL2Vector._trusted(columns, row.copy()) for row in out]
    return rows[:-1], rows[-1]
