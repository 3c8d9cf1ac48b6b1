"""Memory-efficient constraint loss.

The goal matrix ``G`` (outputs x clauses) starts at the disjunction identity
0. Labels are visited in ascending order. Each label's prediction column
(or its strong negation) is folded with the t-conorm into only the columns
of ``G`` listed in that label's positive (negative) index sequence. No
outputs x clauses x labels tensor is ever built.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .constraints import ConstraintSet
from .gradients import logic_grad
from .tnorms import TNormKind, tconorm_array
from .validation import ShapeMismatchError, check_prediction_matrix


@dataclass
class LossResult:
    loss: float
    goal: np.ndarray | None = field(default=None, repr=False)
    grad: np.ndarray | None = field(default=None, repr=False)


@dataclass
class BatchLossResult:
    results: list[LossResult]
    loss: float
    grads: list[np.ndarray] | None = field(default=None, repr=False)


def goal_loss(goal: np.ndarray) -> float:
    """``1 - mean(G)``; an empty goal matrix (no clauses or no outputs) has loss 0."""
    if goal.size == 0:
        return 0.0
    return float(1.0 - goal.mean(dtype=np.float64))


def _fold_rows(cs: ConstraintSet, p: np.ndarray, gt: np.ndarray, kind: TNormKind, callback=None) -> None:
    # gt is clause-major (|clauses| x rows) so selecting a label's clauses reads contiguous rows
    for a in range(cs.n_labels):
        pos, neg = cs.plus_index[a], cs.minus_index[a]
        if not (pos.size or neg.size):
            if callback is not None:
                callback(a, gt.T)
            continue
        col = np.ascontiguousarray(p[:, a])
        if pos.size:
            sub = gt[pos]
            tconorm_array(kind, sub, col, out=sub)
            gt[pos] = sub
        if neg.size:
            sub = gt[neg]
            tconorm_array(kind, sub, 1 - col, out=sub)
            gt[neg] = sub
        if callback is not None:
            callback(a, gt.T)


def sparse_goal(
    cs: ConstraintSet,
    p,
    kind: TNormKind | str = TNormKind.GODEL,
    *,
    strict: bool = True,
    n_threads: int = 1,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Compute the goal matrix with per-label column updates.

    ``callback(label_index, G)`` is invoked after each label's update (single
    thread only) and is how the intermediate states can be inspected.
    With ``n_threads > 1`` rows are split into contiguous blocks; every block
    runs the same ascending-label sequence, so results are bit-identical to
    the sequential run. The result is a ``D x |clauses|`` view of clause-major
    storage.
    """
    kind = TNormKind.parse(kind)
    p = check_prediction_matrix(p, cs.n_labels, strict=strict)
    d = p.shape[0]
    gt = np.zeros((cs.n_constraints, d), dtype=p.dtype)
    if cs.n_constraints == 0 or d == 0:
        return gt.T
    if n_threads <= 1 or callback is not None or d < 2 * n_threads:
        _fold_rows(cs, p, gt, kind, callback)
        return gt.T
    bounds = np.linspace(0, d, n_threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        futures = [
            pool.submit(_fold_rows, cs, p[lo:hi], gt[:, lo:hi], kind)
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        for f in futures:
            f.result()
    return gt.T


def sparse_loss(
    cs: ConstraintSet,
    p,
    kind: TNormKind | str = TNormKind.GODEL,
    want_grad: bool = False,
    *,
    strict: bool = True,
    n_threads: int = 1,
    grad_dtype=np.float32,
) -> LossResult:
    p = check_prediction_matrix(p, cs.n_labels, strict=strict)
    goal = sparse_goal(cs, p, kind, strict=strict, n_threads=n_threads)
    grad = logic_grad(cs, p, kind, out_dtype=grad_dtype) if want_grad else None
    return LossResult(goal_loss(goal), goal, grad)


def sparse_loss_batch(
    cs: ConstraintSet,
    batch: Sequence,
    kind: TNormKind | str = TNormKind.GODEL,
    want_grad: bool = False,
    **kwargs,
) -> BatchLossResult:
    """Per-frame losses and their mean.

    ``grads`` holds each frame's gradient of the *mean* loss, i.e. the
    per-frame gradient divided by the batch size.
    """
    if not batch:
        raise ValueError("empty batch")
    widths = {np.shape(p)[1] if np.ndim(p) == 2 else None for p in batch}
    if len(widths) != 1:
        raise ShapeMismatchError(f"inconsistent label dimension across batch: {sorted(map(str, widths))}")
    results = [sparse_loss(cs, p, kind, want_grad, **kwargs) for p in batch]
    k = len(results)
    mean = float(np.mean([r.loss for r in results]))
    grads = [r.grad / k for r in results] if want_grad else None
    return BatchLossResult(results, mean, grads)
