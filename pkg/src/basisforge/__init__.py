"""Completion of non-complete orthonormal systems in l2 by small perturbations."""

from basisforge.l2core import (
    DROP_TOL,
    ORTHO_TOL,
    Projector,
    SparseL2Vector,
    axpy,
    gram_defect,
    inner,
    linear_combination,
    norm,
    project_onto_orthonormal,
)
from basisforge.perturbation import (
    CompletionMatrix,
    apply_naive,
    apply_structured,
    make_completion_matrix,
    materialize,
    orthogonality_defect,
)

__all__ = [
    "DROP_TOL",
    "ORTHO_TOL",
    "CompletionMatrix",
    "Projector",
    "SparseL2Vector",
    "apply_naive",
    "apply_structured",
    "axpy",
    "gram_defect",
    "inner",
    "linear_combination",
    "make_completion_matrix",
    "materialize",
    "norm",
    "orthogonality_defect",
    "project_onto_orthonormal",
]

__version__ = "0.1.0"
