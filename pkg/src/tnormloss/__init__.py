"""Differentiable t-norm constraint losses with a memory-efficient sparse path."""

from .constraints import (
    Clause,
    ConstraintError,
    ConstraintSet,
    LabelSpace,
    Literal,
    compile_constraints,
    load_constraints,
    parse_clauses,
    parse_labels,
    serialize_clauses,
    stats,
)
from .dense import dense_goal, dense_loss, dense_peak_bytes
from .gradients import FDReport, finite_diff_check, logic_grad, loss_grad
from .sparse import BatchLossResult, LossResult, sparse_goal, sparse_loss, sparse_loss_batch
from .tnorms import DomainError, TNormKind, neg, tconorm, tconorm_fold, tnorm

__version__ = "0.1.0"
