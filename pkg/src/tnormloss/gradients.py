"""Hand-written reverse-mode gradient of the constraint loss, and a
central-difference checker for it.

For a clause with relaxed literal values ``v_l`` (``P`` for a positive
literal, ``1 - P`` for a negative one, with sign ``s = +1 / -1``):

* product:      ``G = 1 - prod(1 - v_l)``, ``dG/dP_A = s * prod_{l != A}(1 - v_l)``
* Łukasiewicz:  ``G = min(sum v_l, 1)``,  ``dG/dP_A = s`` if the sum is below 1, else 0
* Gödel:        ``G = max v_l``,          ``dG/dP_A = s`` for the first (lowest label)
  argmax literal only

and ``dL/dG = -1 / (D * |clauses|)`` for every cell. The leave-one-out
products come from exclusive prefix and suffix products, so a literal equal
to 1 never causes a division by zero. Work is done per row block, in
double precision, over clauses grouped by length; per-literal partials are
then summed into label columns with a label-sorted ``reduceat``. Memory
stays proportional to ``rows_in_block x literals``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .constraints import ConstraintSet
from .tnorms import DomainError, TNormKind

# Literal-value buffers hold at least this many float64 elements per block,
# or D * |clauses| / 8 if that is larger (i.e. a quarter of a float32 goal matrix).
MIN_BLOCK_ELEMENTS = 1 << 16


def _block_rows(cs: ConstraintSet, d: int) -> int:
    width = max(cs.n_literals, cs.n_labels, 1)
    budget = max(MIN_BLOCK_ELEMENTS, d * cs.n_constraints // 8)
    return max(1, min(d, budget // width))


def _group_partials(kind: TNormKind, pt: np.ndarray, group, out: np.ndarray) -> None:
    """Write dG/dP for every literal of ``group`` into ``out``, shape ``(length, clauses, rows)``.

    The loops run over literal positions (at most the clause length), each
    step being a whole-slab vector operation.
    """
    n = out.shape[0]
    if kind is TNormKind.PRODUCT:
        # q = 1 - v: 1 - P for positive literals, P for negative ones
        q = pt[group.label_idx.T]
        q *= -group.sign_t
        q += 1.0 - group.neg_t
        out[0] = 1.0
        for k in range(1, n):
            np.multiply(out[k - 1], q[k - 1], out=out[k])
        suffix = np.ones_like(q[0])
        for k in range(n - 2, -1, -1):
            suffix *= q[k + 1]
            out[k] *= suffix
    else:
        v = group.values(pt)
        if kind is TNormKind.LUKASIEWICZ:
            total = v[0].copy()
            for k in range(1, n):
                total += v[k]
            np.less(total, 1.0, out=out[0])
            out[1:] = out[0]
        else:
            # Gödel: strict '>' keeps the first maximum, and labels within a clause ascend
            best = v.max(axis=0)
            taken = np.zeros(best.shape, dtype=bool)
            for k in range(n):
                hit = v[k] == best
                hit &= ~taken
                taken |= hit
                out[k] = hit
    out *= group.sign_t


def logic_grad(cs: ConstraintSet, p: np.ndarray, kind: TNormKind | str, out_dtype=np.float32) -> np.ndarray:
    """Gradient of ``1 - mean(G)`` with respect to the prediction matrix.

    ``p`` is assumed already validated (see :func:`check_prediction_matrix`).
    """
    kind = TNormKind.parse(kind)
    d, n_labels = p.shape
    grad = np.zeros((d, n_labels), dtype=out_dtype)
    if d == 0 or cs.n_constraints == 0:
        return grad
    coef = -1.0 / (d * cs.n_constraints)
    rows = _block_rows(cs, d)
    order, starts, present = cs.literal_layout
    for lo in range(0, d, rows):
        pt = np.ascontiguousarray(p[lo : lo + rows].T, dtype=np.float64)
        partials = _literal_partials(kind, pt, cs)
        sums = np.add.reduceat(partials[order], starts, axis=0)
        sums *= coef
        grad[lo : lo + rows, present] = sums.T
    return grad


def _literal_partials(kind: TNormKind, pt: np.ndarray, cs: ConstraintSet) -> np.ndarray:
    """``literals x rows`` matrix of dG/dP in ``literal_layout`` numbering."""
    rows = pt.shape[1]
    out = np.empty((cs.n_literals, rows))
    off = 0
    for group in cs.literal_groups:
        n_clauses, length = group.label_idx.shape
        width = n_clauses * length
        _group_partials(kind, pt, group, out[off : off + width].reshape(length, n_clauses, rows))
        off += width
    return out


def loss_grad(cs: ConstraintSet, p, kind: TNormKind | str = TNormKind.GODEL, *, strict: bool = True, out_dtype=np.float32):
    """Return ``(loss, grad)``."""
    from .sparse import sparse_loss

    res = sparse_loss(cs, p, kind, want_grad=True, strict=strict, grad_dtype=out_dtype)
    return res.loss, res.grad


@dataclass
class FDReport:
    max_abs_error: float
    max_rel_error: float
    num_skipped_nonsmooth: int
    step_size: float
    num_coordinates: int

    def to_dict(self) -> dict:
        return asdict(self)


def nonsmooth_mask(cs: ConstraintSet, p: np.ndarray, kind: TNormKind | str, margin: float) -> np.ndarray:
    """Boolean ``D x |labels|`` mask of coordinates near a kink of the loss.

    Gödel: the label's literal is within ``margin`` of the best other literal
    of some clause. Łukasiewicz: some clause containing the label has its
    literal sum within ``margin`` of 1. The product loss is smooth.
    """
    kind = TNormKind.parse(kind)
    p = np.asarray(p, dtype=np.float64)
    mask = np.zeros(p.shape, dtype=bool)
    if kind is TNormKind.PRODUCT:
        return mask
    pt = np.ascontiguousarray(p.T)
    for group in cs.literal_groups:
        v = group.values(pt)
        n = v.shape[0]
        if kind is TNormKind.LUKASIEWICZ:
            near = np.broadcast_to(np.abs(v.sum(axis=0) - 1.0) < margin, v.shape)
        else:
            if n == 1:
                continue
            near = np.zeros(v.shape, dtype=bool)
            for k in range(n):
                others = np.delete(v, k, axis=0).max(axis=0)
                near[k] = np.abs(v[k] - others) < margin
        # near is (length, clauses, rows); map each literal back to its label
        pos, clause, row = np.nonzero(near)
        mask[row, group.label_idx[clause, pos]] = True
    return mask


def finite_diff_check(
    cs: ConstraintSet,
    p,
    kind: TNormKind | str = TNormKind.PRODUCT,
    step: float = 1e-4,
    nonsmooth_margin: float = 1e-3,
    rel_floor: float = 1e-7,
) -> FDReport:
    """Compare :func:`logic_grad` with central differences of the loss.

    Everything runs in double precision. The relative error of a coordinate
    is ``|g - fd| / max(|g|, |fd|, rel_floor)``; the floor keeps coordinates
    whose true derivative is (near) zero from dividing round-off by zero.
    """
    from .sparse import sparse_loss

    if not 0 < step <= 1e-2:
        raise DomainError(f"step {step} outside (0, 1e-2]")
    kind = TNormKind.parse(kind)
    p = np.array(p, dtype=np.float64)
    if p.size and (p.min() < step or p.max() > 1 - step):
        raise DomainError("prediction entries must lie in [step, 1 - step]")
    grad = logic_grad(cs, p, kind, out_dtype=np.float64)
    skip = nonsmooth_mask(cs, p, kind, nonsmooth_margin)
    max_abs = max_rel = 0.0
    for i, a in np.ndindex(*p.shape):
        if skip[i, a]:
            continue
        orig = p[i, a]
        p[i, a] = orig + step
        up = sparse_loss(cs, p, kind).loss
        p[i, a] = orig - step
        down = sparse_loss(cs, p, kind).loss
        p[i, a] = orig
        fd = (up - down) / (2 * step)
        err = abs(grad[i, a] - fd)
        max_abs = max(max_abs, err)
        max_rel = max(max_rel, err / max(abs(grad[i, a]), abs(fd), rel_floor))
    return FDReport(
        max_abs_error=max_abs,
        max_rel_error=max_rel,
        num_skipped_nonsmooth=int(skip.sum()),
        step_size=step,
        num_coordinates=int(math.prod(p.shape)),
    )
