"""Command-line entry point: ``tnormloss <subcommand> ...``.

Exit codes: 0 success, 1 computation error, 2 usage error (bad flags,
missing or malformed input files).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import memory
from .constraints import ConstraintError, ConstraintSet, load_constraints, random_constraint_set, serialize_clauses
from .dense import dense_goal
from .gradients import finite_diff_check
from .matrix_io import MatrixFormatError, format_csv, read_matrix, write_matrix
from .sparse import sparse_goal, sparse_loss
from .tnorms import DomainError, TNormKind
from .trainer import RejectionBudgetError, TrainConfig, make_task, train
from .validation import ShapeMismatchError

TNORM_CHOICES = [k.value for k in TNormKind]


class UsageError(Exception):
    pass


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True)


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {path}")
    return p


def _load_cs(args) -> ConstraintSet:
    cnf = _existing(args.constraints).read_text(encoding="utf-8")
    labels = _existing(args.labels).read_text(encoding="utf-8")
    try:
        return load_constraints(cnf, labels)
    except ConstraintError as e:
        raise UsageError(f"{args.constraints}: {e}") from None


def _load_pred(path: str) -> np.ndarray:
    try:
        return read_matrix(_existing(path))
    except (MatrixFormatError, UnicodeDecodeError) as e:
        raise UsageError(f"{path}: {e}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _counts(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad count list {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("constraint counts must be positive integers")
    return vals


def _fmt(x: float) -> str:
    return format(x, ".10g")


def cmd_loss(args) -> int:
    cs = _load_cs(args)
    p = _load_pred(args.pred)
    want_grad = args.grad_out is not None
    res = sparse_loss(cs, p, args.tnorm, want_grad, strict=not args.lenient, n_threads=args.threads)
    print(f"loss {_fmt(res.loss)}")
    print(f"weighted_loss {_fmt(args.weight * res.loss)}")
    if want_grad:
        write_matrix(args.grad_out, args.weight * res.grad if args.scale_grad else res.grad)
    return 0


def cmd_grad(args) -> int:
    cs = _load_cs(args)
    p = _load_pred(args.pred)
    if args.fd_check:
        report = finite_diff_check(cs, p, args.tnorm, step=args.step, nonsmooth_margin=args.margin)
        print(_json(report.to_dict()))
        if args.grad_out:
            res = sparse_loss(cs, p, args.tnorm, True, strict=not args.lenient)
            write_matrix(args.grad_out, res.grad)
        return 0
    res = sparse_loss(cs, p, args.tnorm, True, strict=not args.lenient, n_threads=args.threads)
    print(f"loss {_fmt(res.loss)}")
    print(f"weighted_loss {_fmt(args.weight * res.loss)}")
    if args.grad_out:
        write_matrix(args.grad_out, res.grad)
    else:
        sys.stdout.write(format_csv(res.grad))
    return 0


def run_check(trials: int, max_d: int = 64, max_labels: int = 16, max_constraints: int = 32, seed: int = 0) -> dict:
    """Compare dense and sparse goal matrices on random instances.

    Every trial draws one clause set and one prediction matrix and checks all
    three t-norms in single and double precision. The report's ``failure``
    entry, when present, holds the first offending instance in replayable form.
    """
    for name, v in (("trials", trials), ("max_d", max_d), ("max_labels", max_labels), ("max_constraints", max_constraints)):
        if v < 1:
            raise ValueError(f"{name} must be positive")
    tol = {"float32": 1e-6, "float64": 1e-12}
    worst = {k.value: {"float32": 0.0, "float64": 0.0} for k in TNormKind}
    failure = None
    rng = np.random.default_rng(seed)
    for t in range(trials):
        n_labels = int(rng.integers(2, max_labels + 1)) if max_labels >= 2 else 1
        n_c = int(rng.integers(1, max_constraints + 1))
        d = int(rng.integers(1, max_d + 1))
        cs = random_constraint_set(rng, n_labels, n_c, min_len=1, max_len=n_labels)
        p64 = rng.random((d, n_labels))
        for dtype in ("float32", "float64"):
            p = p64.astype(dtype)
            for kind in TNormKind:
                dev = float(np.max(np.abs(dense_goal(cs, p, kind) - sparse_goal(cs, p, kind))))
                worst[kind.value][dtype] = max(worst[kind.value][dtype], dev)
                if dev > tol[dtype] and failure is None:
                    failure = {
                        "trial": t,
                        "tnorm": kind.value,
                        "dtype": dtype,
                        "deviation": dev,
                        "cnf": serialize_clauses(cs, header=True),
                        "pred_csv": format_csv(p),
                    }
    return {
        "trials": trials,
        "seed": seed,
        "max_d": max_d,
        "max_labels": max_labels,
        "max_constraints": max_constraints,
        "tolerance": tol,
        "max_deviation": worst,
        "passed": failure is None,
        "failure": failure,
    }


def cmd_check(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    report = run_check(args.trials, args.max_d, args.max_labels, args.max_constraints, args.seed)
    print(_json(report))
    if not report["passed"]:
        print(f"dense and sparse disagree on trial {report['failure']['trial']}", file=sys.stderr)
        return 1
    return 0


def cmd_bench(args) -> int:
    paths = ["dense", "sparse"] if args.path == "both" else [args.path]
    records = []
    for path in paths:
        family = memory.constraint_family(args.constraint_counts, args.labels_n, seed=args.seed)
        records += memory.run_sweep(
            family, args.d, args.tnorm, path, args.iters,
            budget_bytes=args.budget_bytes, n_threads=args.threads, seed=args.seed,
        )
    text = memory.emit_csv(records)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_estimate(args) -> int:
    model = memory.estimate(args.d, args.n_constraints, args.labels_n, args.elem_bytes, args.k)
    out = model.to_dict()
    out["dense_crossover_constraints"] = memory.dense_crossover(args.budget_bytes, args.d, args.labels_n, args.elem_bytes)
    out["budget_bytes"] = args.budget_bytes
    print(_json(out))
    return 0


def cmd_train_demo(args) -> int:
    from .trainer import demo_constraints

    if (args.constraints is None) != (args.labels is None):
        raise UsageError("--constraints and --labels must be given together")
    cs = _load_cs(args) if args.constraints else demo_constraints()
    if not 0 <= args.unlabelled_frac < 1:
        raise UsageError("--unlabelled-frac must lie in [0, 1)")
    n = args.n_examples
    n_unl = int(round(args.unlabelled_frac * n))
    n_lab = int(round(args.labelled_frac * n))
    if n_lab < 1 or n_lab + n_unl >= n:
        raise UsageError("labelled and unlabelled fractions leave no evaluation examples")
    try:
        config = TrainConfig(
            tnorm=args.tnorm,
            logic_weight=args.weight,
            warmup_epochs=args.warmup_epochs,
            epochs=args.epochs,
            learning_rate=args.learning_rate,
            threshold=args.threshold,
            seed=args.seed,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    task = make_task(args.seed, args.n_features, (n_lab, n_unl, n - n_lab - n_unl), cs, noise=args.noise)
    _, report = train(task, config)
    out = report.to_dict()
    out["config"] = asdict(config) | {
        "warmup_epochs": config.resolved_warmup(),
        "n_examples": n,
        "n_labelled": n_lab,
        "n_unlabelled": n_unl,
        "n_features": args.n_features,
        "noise": args.noise,
        "n_constraints": cs.n_constraints,
        "n_labels": cs.n_labels,
    }
    text = _json(out)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tnormloss", description="t-norm constraint losses over prediction matrices")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True

    def common(p, pred=True):
        p.add_argument("--constraints", required=True, help="DIMACS-style clause file")
        p.add_argument("--labels", required=True, help="label map, one name per line")
        if pred:
            p.add_argument("--pred", required=True, help="prediction matrix (PMAT or CSV)")
        p.add_argument("--tnorm", choices=TNORM_CHOICES, default="godel")
        p.add_argument("--weight", type=float, default=10.0, help="logic loss weight (default 10)")
        p.add_argument("--grad-out", help="write the gradient as a PMAT file (CSV if the name ends in .csv)")
        p.add_argument("--lenient", action="store_true", help="clip confidences into [0, 1] instead of failing")
        p.add_argument("--threads", type=_positive_int, default=1)

    p = sub.add_parser("loss", help="constraint loss of a prediction matrix")
    common(p)
    p.add_argument("--scale-grad", action="store_true", help="multiply the written gradient by --weight")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("grad", help="gradient of the constraint loss, optionally checked by finite differences")
    common(p)
    p.add_argument("--fd-check", action="store_true")
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--margin", type=float, default=1e-3)
    p.set_defaults(func=cmd_grad)

    p = sub.add_parser("check", help="dense vs sparse equivalence on random instances")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--max-d", type=_positive_int, default=64)
    p.add_argument("--max-labels", type=_positive_int, default=16)
    p.add_argument("--max-constraints", type=_positive_int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="peak-memory sweep over clause counts (CSV)")
    p.add_argument("--path", choices=["dense", "sparse", "both"], default="both")
    p.add_argument("--tnorm", choices=TNORM_CHOICES, default="product")
    p.add_argument("--d", type=_positive_int, default=65536)
    p.add_argument("--labels-n", type=_positive_int, default=41)
    p.add_argument("--constraint-counts", type=_counts, default=list(memory.DEFAULT_COUNTS))
    p.add_argument("--iters", type=_positive_int, default=50)
    p.add_argument("--budget-bytes", type=_positive_int, default=memory.DEFAULT_BUDGET)
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("estimate", help="analytic memory model (JSON)")
    p.add_argument("--d", type=_positive_int, required=True)
    p.add_argument("--n-constraints", type=_positive_int, required=True)
    p.add_argument("--labels-n", type=_positive_int, required=True)
    p.add_argument("--elem-bytes", type=_positive_int, default=4)
    p.add_argument("--k", type=float, default=4.0, help="sparse auxiliary factor in (0, 8]")
    p.add_argument("--budget-bytes", type=_positive_int, default=memory.DEFAULT_BUDGET)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("train-demo", help="train a toy classifier with and without the constraint loss")
    p.add_argument("--constraints", help="clause file (default: built-in road-scene set)")
    p.add_argument("--labels", help="label map for --constraints")
    p.add_argument("--tnorm", choices=TNORM_CHOICES, default="godel")
    p.add_argument("--weight", type=float, default=10.0)
    p.add_argument("--warmup-epochs", type=int, default=None, help="default: a third of --epochs")
    p.add_argument("--epochs", type=_positive_int, default=300)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--n-examples", type=_positive_int, default=1000)
    p.add_argument("--n-features", type=_positive_int, default=5)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--labelled-frac", type=float, default=0.1)
    p.add_argument("--unlabelled-frac", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="also write the JSON report to this path")
    p.set_defaults(func=cmd_train_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"tnormloss {args.command}: {e}", file=sys.stderr)
        return 2
    except (DomainError, ShapeMismatchError, ValueError, ArithmeticError, MemoryError, RejectionBudgetError) as e:
        print(f"tnormloss {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
