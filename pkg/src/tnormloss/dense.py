"""Dense reference formulation of the goal matrix.

The prediction matrix and both constraint matrices are stacked into explicit
``D x |clauses| x |labels|`` tensors, the literal tensor
``P*C+ + (C- - P*C-)`` is formed, and the t-conorm is folded along the label
axis. This is deliberately wasteful: it is the correctness oracle for the
sparse path and the memory baseline the benchmarks compare against.
"""

from __future__ import annotations

import numpy as np

from .constraints import ConstraintSet
from .sparse import LossResult, goal_loss
from .tnorms import TNormKind, tconorm_array
from .validation import check_prediction_matrix

# How many D x |clauses| x |labels| tensors the dense loss is modelled as holding.
DENSE_TENSOR_COUNT = 5
INT64_MAX = 2**63 - 1


class DenseAllocationError(MemoryError):
    def __init__(self, requested_bytes: int):
        super().__init__(f"dense goal computation could not allocate {requested_bytes} bytes")
        self.requested_bytes = requested_bytes


def dense_peak_bytes(d: int, n_constraints: int, n_labels: int, elem_bytes: int = 4) -> tuple[int, int]:
    """Return ``(single_tensor_bytes, total_bytes)`` for the dense formulation."""
    for name, v in (("D", d), ("n_constraints", n_constraints), ("n_labels", n_labels), ("elem_bytes", elem_bytes)):
        if int(v) <= 0:
            raise ValueError(f"{name} must be positive, got {v}")
    single = int(d) * int(n_constraints) * int(n_labels) * int(elem_bytes)
    total = DENSE_TENSOR_COUNT * single
    if total > INT64_MAX:
        raise OverflowError(f"dense memory estimate {total} B does not fit in a signed 64-bit count")
    return single, total


def dense_goal(cs: ConstraintSet, p, kind: TNormKind | str = TNormKind.GODEL, *, strict: bool = True) -> np.ndarray:
    kind = TNormKind.parse(kind)
    if cs.n_constraints < 1:
        raise ValueError("dense goal needs at least one constraint")
    p = check_prediction_matrix(p, cs.n_labels, strict=strict)
    dtype = p.dtype
    d, n_c, n_l = p.shape[0], cs.n_constraints, cs.n_labels
    shape = (d, n_c, n_l)
    try:
        p_hat = np.broadcast_to(p[:, None, :], shape).copy()
        c_plus_hat = np.broadcast_to(cs.c_plus.astype(dtype)[None], shape).copy()
        c_minus_hat = np.broadcast_to(cs.c_minus.astype(dtype)[None], shape).copy()
        literal = p_hat * c_plus_hat
        neg = p_hat * c_minus_hat
        np.subtract(c_minus_hat, neg, out=neg)
        literal += neg
    except MemoryError:
        raise DenseAllocationError(DENSE_TENSOR_COUNT * d * n_c * n_l * dtype.itemsize) from None
    g = np.zeros((d, n_c), dtype=dtype)
    occ = cs.occurrence
    for a in range(n_l):
        # labels absent from a clause are skipped rather than folded as 0
        g = np.where(occ[:, a], tconorm_array(kind, g, literal[:, :, a]), g)
    return g


def dense_loss(cs: ConstraintSet, p, kind: TNormKind | str = TNormKind.GODEL, *, strict: bool = True) -> LossResult:
    goal = dense_goal(cs, p, kind, strict=strict)
    return LossResult(goal_loss(goal), goal)
