"""Clause sets over a label space.

Constraints are propositional clauses ``l_1 v l_2 v ... v l_n`` where every
literal is a label or its negation. They are read from a DIMACS-CNF body
(label ``k`` is written ``k+1``, negation is a leading minus sign) paired
with a label-map file, and compiled into

* ``c_plus`` / ``c_minus``: ``|clauses| x |labels|`` 0/1 incidence matrices;
* ``j_plus`` / ``j_minus``: for every label, the ascending indices of the
  clauses where it occurs positively / negatively.

The per-label index sequences are what the sparse loss iterates over.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class ConstraintError(ValueError):
    """Base class for malformed label maps and clause files."""


class DuplicateLabelError(ConstraintError):
    pass


class LabelIndexError(ConstraintError):
    """Explicit label indices are not exactly 0..n-1 in order."""


class EmptyLabelSpaceError(ConstraintError):
    pass


class EmptyClauseError(ConstraintError):
    pass


class LabelOutOfRangeError(ConstraintError):
    pass


class DuplicateOccurrenceError(ConstraintError):
    """A label occurs twice in one clause (repeated literal or tautology)."""


class HeaderMismatchError(ConstraintError):
    pass


@dataclass(frozen=True)
class LabelSpace:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise EmptyLabelSpaceError("label space is empty")
        for name in names:
            if not isinstance(name, str) or not name.strip():
                raise ConstraintError(f"invalid label name {name!r}")
        dupes = [n for n, c in Counter(names).items() if c > 1]
        if dupes:
            raise DuplicateLabelError(f"duplicate label(s): {', '.join(dupes)}")

    @property
    def count(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class Literal:
    label: int
    negated: bool = False

    def to_dimacs(self) -> int:
        return -(self.label + 1) if self.negated else self.label + 1

    @classmethod
    def from_dimacs(cls, token: int) -> "Literal":
        if token == 0:
            raise ConstraintError("0 is not a literal")
        return cls(abs(token) - 1, token < 0)


@dataclass(frozen=True)
class Clause:
    literals: tuple[Literal, ...]

    def __post_init__(self):
        lits = tuple(self.literals)
        object.__setattr__(self, "literals", lits)
        if not lits:
            raise EmptyClauseError("clause has no literals")
        seen = Counter(lit.label for lit in lits)
        repeated = sorted(label for label, c in seen.items() if c > 1)
        if repeated:
            raise DuplicateOccurrenceError(
                f"label index {repeated[0]} occurs more than once in clause"
            )

    def __len__(self) -> int:
        return len(self.literals)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(lit.label for lit in self.literals)

    def satisfied_by(self, bits) -> bool:
        """Boolean truth of the clause under a 0/1 label assignment."""
        return any(bool(bits[lit.label]) != lit.negated for lit in self.literals)

    def describe(self, labels: LabelSpace | None = None) -> str:
        def name(i):
            return labels.names[i] if labels is not None else str(i)

        return " v ".join(("~" if lit.negated else "") + name(lit.label) for lit in self.literals)


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Compiled, immutable clause set. Build it with :func:`compile_constraints`."""

    labels: LabelSpace
    clauses: tuple[Clause, ...]
    c_plus: np.ndarray = field(repr=False)
    c_minus: np.ndarray = field(repr=False)
    j_plus: tuple[tuple[int, ...], ...] = field(repr=False)
    j_minus: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def n_constraints(self) -> int:
        return len(self.clauses)

    @property
    def n_labels(self) -> int:
        return self.labels.count

    def __eq__(self, other):
        if not isinstance(other, ConstraintSet):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.j_plus == other.j_plus
            and self.j_minus == other.j_minus
            and np.array_equal(self.c_plus, other.c_plus)
            and np.array_equal(self.c_minus, other.c_minus)
        )

    def __hash__(self):
        return hash((self.labels, self.j_plus, self.j_minus))

    @cached_property
    def plus_index(self) -> tuple[np.ndarray, ...]:
        """``j_plus`` as integer arrays, ready for column fancy-indexing."""
        return tuple(np.asarray(seq, dtype=np.intp) for seq in self.j_plus)

    @cached_property
    def minus_index(self) -> tuple[np.ndarray, ...]:
        return tuple(np.asarray(seq, dtype=np.intp) for seq in self.j_minus)

    @cached_property
    def occurrence(self) -> np.ndarray:
        """Boolean ``|clauses| x |labels|`` mask of any-polarity occurrence."""
        return (self.c_plus + self.c_minus).astype(bool)

    @cached_property
    def literal_groups(self) -> tuple["LiteralGroup", ...]:
        return tuple(LiteralGroup(*g) for g in clause_groups(self))

    @cached_property
    def literal_layout(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """How to sum per-literal values into label columns.

        Literals are numbered group by group, position-major within a group
        (all first literals, then all second literals, ...).
        Returns ``(order, starts, labels)``: ``order`` sorts literals by label
        (stably), and ``starts`` are the segment offsets of each label in
        ``labels`` (the labels that occur at all) for ``np.add.reduceat``.
        """
        flat = np.concatenate([g.label_idx.T.ravel() for g in self.literal_groups]) if self.clauses else np.zeros(0, np.intp)
        order = np.argsort(flat, kind="stable")
        labels, starts = np.unique(flat[order], return_index=True)
        return order, starts, labels

    @property
    def n_literals(self) -> int:
        return sum(len(c) for c in self.clauses)

    def violations(self, bits: np.ndarray) -> np.ndarray:
        """Boolean ``n x |clauses|`` matrix, True where a 0/1 row falsifies a clause."""
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim == 1:
            bits = bits[None, :]
        # a clause is satisfied if a positive label is on or a negative label is off
        pos_hit = bits.astype(np.int64) @ self.c_plus.T.astype(np.int64)
        neg_hit = (~bits).astype(np.int64) @ self.c_minus.T.astype(np.int64)
        return (pos_hit + neg_hit) == 0


def parse_labels(text: str) -> LabelSpace:
    """Parse a label map: one name per line, optionally ``index<TAB>name``."""
    names: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip("\r\n")
        if not line.strip():
            continue
        if "\t" in line:
            idx_text, name = line.split("\t", 1)
            try:
                idx = int(idx_text)
            except ValueError:
                raise LabelIndexError(f"line {lineno}: bad index {idx_text!r}") from None
            if idx != len(names):
                raise LabelIndexError(
                    f"line {lineno}: expected index {len(names)}, got {idx}"
                )
        else:
            name = line
        names.append(name.strip())
    if not names:
        raise EmptyLabelSpaceError("label map contains no labels")
    return LabelSpace(tuple(names))


def parse_clauses(text: str, labels: LabelSpace) -> list[Clause]:
    """Parse a DIMACS-CNF body, one clause per line terminated by ``0``."""
    header: tuple[int, int] | None = None
    clauses: list[Clause] = []
    n = labels.count
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if header is not None or clauses:
                raise ConstraintError(f"line {lineno}: misplaced problem line")
            if len(parts) != 4 or parts[1] != "cnf":
                raise ConstraintError(f"line {lineno}: malformed problem line {line!r}")
            header = (int(parts[2]), int(parts[3]))
            if header[0] != n:
                raise HeaderMismatchError(
                    f"header declares {header[0]} variables but label map has {n}"
                )
            continue
        try:
            tokens = [int(t) for t in line.split()]
        except ValueError:
            raise ConstraintError(f"line {lineno}: non-integer token in {line!r}") from None
        if tokens[-1] != 0:
            raise ConstraintError(f"line {lineno}: clause not terminated by 0")
        body = tokens[:-1]
        if 0 in body:
            raise ConstraintError(f"line {lineno}: more than one clause on a line")
        if not body:
            raise EmptyClauseError(f"line {lineno}: empty clause")
        for tok in body:
            if abs(tok) > n:
                raise LabelOutOfRangeError(
                    f"line {lineno}: literal {tok} refers to label {abs(tok) - 1}, "
                    f"but only {n} labels exist"
                )
        try:
            clauses.append(Clause(tuple(Literal.from_dimacs(t) for t in body)))
        except DuplicateOccurrenceError as exc:
            raise DuplicateOccurrenceError(f"line {lineno}: {exc}") from None
    if header is not None and header[1] != len(clauses):
        raise HeaderMismatchError(
            f"header declares {header[1]} clauses but {len(clauses)} were read"
        )
    return clauses


def compile_constraints(labels: LabelSpace, clauses: Iterable[Clause]) -> ConstraintSet:
    clauses = tuple(clauses)
    n_c, n_l = len(clauses), labels.count
    c_plus = np.zeros((n_c, n_l), dtype=np.int8)
    c_minus = np.zeros((n_c, n_l), dtype=np.int8)
    for i, clause in enumerate(clauses):
        for lit in clause.literals:
            if not 0 <= lit.label < n_l:
                raise LabelOutOfRangeError(f"clause {i}: label index {lit.label} out of range")
            (c_minus if lit.negated else c_plus)[i, lit.label] = 1
    c_plus.setflags(write=False)
    c_minus.setflags(write=False)
    j_plus = tuple(tuple(int(i) for i in np.flatnonzero(c_plus[:, a])) for a in range(n_l))
    j_minus = tuple(tuple(int(i) for i in np.flatnonzero(c_minus[:, a])) for a in range(n_l))
    return ConstraintSet(labels, clauses, c_plus, c_minus, j_plus, j_minus)


def load_constraints(cnf_text: str, labels_text: str) -> ConstraintSet:
    labels = parse_labels(labels_text)
    return compile_constraints(labels, parse_clauses(cnf_text, labels))


def serialize_clauses(cs: ConstraintSet, header: bool = False) -> str:
    lines = [f"p cnf {cs.n_labels} {cs.n_constraints}"] if header else []
    for clause in cs.clauses:
        lines.append(" ".join(str(lit.to_dimacs()) for lit in clause.literals) + " 0")
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_labels(labels: LabelSpace) -> str:
    return "\n".join(labels.names) + "\n"


@dataclass(frozen=True)
class ConstraintStats:
    constraints: int
    labels: int
    literals: int
    max_len: int
    fanout: tuple[int, ...]
    density: float
    duplicate_clauses: int

    def to_dict(self) -> dict:
        return {
            "constraints": self.constraints,
            "labels": self.labels,
            "literals": self.literals,
            "max_len": self.max_len,
            "fanout": list(self.fanout),
            "density": self.density,
            "duplicate_clauses": self.duplicate_clauses,
        }


def stats(cs: ConstraintSet) -> ConstraintStats:
    literals = sum(len(c) for c in cs.clauses)
    cells = cs.n_constraints * cs.n_labels
    # duplicates compare clauses as literal sets, since literal order is not semantic
    keys = Counter(frozenset(c.literals) for c in cs.clauses)
    return ConstraintStats(
        constraints=cs.n_constraints,
        labels=cs.n_labels,
        literals=literals,
        max_len=max((len(c) for c in cs.clauses), default=0),
        fanout=tuple(len(p) + len(m) for p, m in zip(cs.j_plus, cs.j_minus)),
        density=literals / cells if cells else 0.0,
        duplicate_clauses=sum(c - 1 for c in keys.values()),
    )


def random_constraint_set(
    rng: np.random.Generator,
    n_labels: int,
    n_constraints: int,
    min_len: int = 2,
    max_len: int = 15,
    labels: LabelSpace | None = None,
) -> ConstraintSet:
    """Draw a synthetic clause set.

    Clause lengths are uniform on ``[min_len, min(max_len, n_labels)]``, labels
    are drawn without replacement (so tautologies cannot arise) and every
    literal is negated with probability 1/2.
    """
    if labels is None:
        labels = LabelSpace(tuple(f"L{i}" for i in range(n_labels)))
    hi = min(max_len, n_labels)
    lo = min(min_len, hi)
    clauses = []
    for _ in range(n_constraints):
        k = int(rng.integers(lo, hi + 1))
        chosen = rng.choice(n_labels, size=k, replace=False)
        signs = rng.random(k) < 0.5
        clauses.append(Clause(tuple(Literal(int(a), bool(s)) for a, s in zip(chosen, signs))))
    return compile_constraints(labels, clauses)


def clause_groups(cs: ConstraintSet) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Group clauses by length for vectorised per-clause work.

    Returns ``(clause_ids, label_idx, negated)`` triples where ``label_idx`` and
    ``negated`` are ``m x n`` arrays with each row's labels ascending.
    """
    by_len: dict[int, list[int]] = {}
    for i, clause in enumerate(cs.clauses):
        by_len.setdefault(len(clause), []).append(i)
    groups = []
    for n in sorted(by_len):
        ids = np.asarray(by_len[n], dtype=np.intp)
        idx = np.empty((len(ids), n), dtype=np.intp)
        neg = np.empty((len(ids), n), dtype=bool)
        for r, ci in enumerate(ids):
            lits: Sequence[Literal] = sorted(cs.clauses[ci].literals, key=lambda lit: lit.label)
            idx[r] = [lit.label for lit in lits]
            neg[r] = [lit.negated for lit in lits]
        groups.append((ids, idx, neg))
    return groups


class LiteralGroup:
    """Clauses of one length ``n``: ``m x n`` label indices (ascending per
    row) and negation flags.

    ``sign_t`` / ``neg_t`` are the +1/-1 polarity and 0/1 negation as float
    arrays of shape ``(n, m, 1)``, ready to broadcast against
    position-major ``(n, m, rows)`` literal blocks.
    """

    __slots__ = ("clause_ids", "label_idx", "negated", "sign_t", "neg_t")

    def __init__(self, clause_ids, label_idx, negated):
        self.clause_ids = clause_ids
        self.label_idx = label_idx
        self.negated = negated
        self.neg_t = negated.T[..., None].astype(np.float64)
        self.sign_t = 1.0 - 2.0 * self.neg_t

    def values(self, pt: np.ndarray) -> np.ndarray:
        """Relaxed literal values ``(n, m, rows)`` from label-major ``pt``."""
        v = pt[self.label_idx.T]
        v *= self.sign_t
        v += self.neg_t
        return v
