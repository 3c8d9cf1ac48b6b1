"""Toy-scale training runs: does the constraint loss reduce violations?

A synthetic multi-label task is drawn from a fixed linear-plus-noise model
whose label vectors are rejection-sampled to satisfy a clause set; a
:class:`~tnormloss.estimators.TNormRegularizedClassifier` is trained on it and
scored by how often its thresholded predictions falsify a clause.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.metrics import average_precision_score

from .constraints import Clause, ConstraintSet, LabelSpace, Literal, compile_constraints
from .estimators import TNormRegularizedClassifier
from .sparse import sparse_loss
from .tnorms import TNormKind


class RejectionBudgetError(RuntimeError):
    """Too many draws were rejected: the constraints are (nearly) unsatisfiable."""


def demo_constraints() -> ConstraintSet:
    """A small road-scene clause set: 8 labels, 13 clauses."""
    names = ("Car", "Pedestrian", "Cyclist", "Moving", "Stopped", "Crossing", "VehicleLane", "Pavement")
    idx = {n: i for i, n in enumerate(names)}

    def c(*lits):
        return Clause(tuple(Literal(idx[l.lstrip("~")], l.startswith("~")) for l in lits))

    clauses = [
        c("~Moving", "Car", "Cyclist", "Pedestrian"),
        c("~Moving", "~Stopped"),
        c("Moving", "Stopped"),
        c("Car", "Pedestrian", "Cyclist"),
        c("~Car", "~Pedestrian"),
        c("~Car", "~Cyclist"),
        c("~Pedestrian", "~Cyclist"),
        c("~Crossing", "Pedestrian"),
        c("~Crossing", "Moving"),
        c("~Car", "~Pavement"),
        c("VehicleLane", "Pavement"),
        c("~VehicleLane", "~Pavement"),
        c("~Pedestrian", "~VehicleLane", "Crossing"),
    ]
    return compile_constraints(LabelSpace(names), clauses)


@dataclass
class SyntheticTask:
    constraints: ConstraintSet
    n_features: int
    seed: int
    X_labelled: np.ndarray
    Y_labelled: np.ndarray
    X_unlabelled: np.ndarray
    Y_unlabelled: np.ndarray
    X_eval: np.ndarray
    Y_eval: np.ndarray

    @property
    def n_labels(self) -> int:
        return self.constraints.n_labels


def make_task(
    seed: int,
    n_features: int,
    sizes: tuple[int, int, int],
    cs: ConstraintSet,
    noise: float = 1.0,
    max_tries: int = 10_000,
) -> SyntheticTask:
    """Draw labelled / unlabelled / evaluation splits of sizes ``sizes``.

    Features are standard normal; label ``A`` is on when
    ``x @ W[:, A] + b[A] + noise * eps > 0`` with ``W``, ``b`` fixed by the
    seed. Draws whose label vector falsifies a clause are rejected, so every
    stored label vector satisfies ``cs``. The splits are disjoint draws.
    """
    if min(sizes) < 0 or sum(sizes) == 0:
        raise ValueError("split sizes must be non-negative and not all zero")
    rng = np.random.default_rng(seed)
    n_labels = cs.n_labels
    weights = rng.normal(size=(n_features, n_labels))
    bias = rng.normal(scale=0.5, size=n_labels)
    total = sum(sizes)
    X = np.empty((total, n_features))
    Y = np.empty((total, n_labels))
    filled = tries = 0
    while filled < total:
        batch = max(64, 2 * (total - filled))
        xb = rng.normal(size=(batch, n_features))
        yb = (xb @ weights + bias + noise * rng.normal(size=(batch, n_labels))) > 0
        ok = ~cs.violations(yb).any(axis=1) if cs.n_constraints else np.ones(batch, dtype=bool)
        tries += batch
        take = np.flatnonzero(ok)[: total - filled]
        X[filled : filled + take.size] = xb[take]
        Y[filled : filled + take.size] = yb[take]
        filled += take.size
        if tries > max_tries * total:
            raise RejectionBudgetError(f"accepted only {filled} of {total} examples after {tries} draws")
    a, b, _ = sizes
    return SyntheticTask(
        cs, n_features, seed,
        X[:a], Y[:a], X[a : a + b], Y[a : a + b], X[a + b :], Y[a + b :],
    )


@dataclass
class TrainConfig:
    tnorm: str = "godel"
    logic_weight: float = 10.0
    warmup_epochs: int | None = None
    epochs: int = 300
    learning_rate: float = 0.5
    threshold: float = 0.5
    seed: int = 0
    use_unlabelled: bool = True

    def __post_init__(self):
        self.tnorm = TNormKind.parse(self.tnorm).value
        if self.logic_weight < 0:
            raise ValueError("logic_weight must be non-negative")
        if self.warmup_epochs is not None and not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError("warmup_epochs must lie in [0, epochs]")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")

    def resolved_warmup(self) -> int:
        return self.epochs // 3 if self.warmup_epochs is None else self.warmup_epochs


@dataclass
class EvalReport:
    violation_rate: float
    mean_average_precision: float
    average_precision: list[float]
    logic_loss: float
    curves: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(model, task: SyntheticTask, threshold: float = 0.5, cs: ConstraintSet | None = None) -> EvalReport:
    """Score ``model`` on the evaluation split.

    ``violation_rate`` is the fraction of (example, clause) pairs falsified
    by predictions thresholded at ``threshold``; ``average_precision`` is
    per label (NaN where the split has no positives for that label).
    """
    cs = task.constraints if cs is None else cs
    proba = np.asarray(model.predict_proba(task.X_eval), dtype=np.float64)
    bits = proba >= threshold
    viol = cs.violations(bits)
    rate = float(viol.mean()) if viol.size else 0.0
    aps = []
    for a in range(task.n_labels):
        y = task.Y_eval[:, a]
        aps.append(float(average_precision_score(y, proba[:, a])) if y.any() else float("nan"))
    finite = [v for v in aps if v == v]
    logic = sparse_loss(cs, proba, TNormKind.GODEL).loss if cs.n_constraints else 0.0
    curves = dict(getattr(model, "history_", {}))
    return EvalReport(rate, float(np.mean(finite)) if finite else float("nan"), aps, logic, curves)


def train(task: SyntheticTask, config: TrainConfig) -> tuple[TNormRegularizedClassifier, EvalReport]:
    model = TNormRegularizedClassifier(
        constraints=task.constraints,
        tnorm=config.tnorm,
        logic_weight=config.logic_weight,
        warmup_epochs=config.resolved_warmup(),
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        threshold=config.threshold,
        random_state=config.seed,
    )
    unl = task.X_unlabelled if config.use_unlabelled and len(task.X_unlabelled) else None
    model.fit(task.X_labelled, task.Y_labelled, X_unlabelled=unl)
    return model, evaluate(model, task, config.threshold)
