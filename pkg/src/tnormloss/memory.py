"""Analytic memory model and allocation-measuring sweep for dense vs sparse losses.

Peak memory is measured on the host with :mod:`tracemalloc` (numpy reports
its data buffers to it), relative to a snapshot taken after the inputs are
built. These are host-allocator numbers, not GPU numbers: they reproduce the
asymptotic gap (3-D vs 2-D working set), not any absolute GiB figure.
"""

from __future__ import annotations

import csv
import gc
import io
import statistics
import time
import tracemalloc
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Iterator, Sequence

import numpy as np
import psutil

from .constraints import ConstraintSet, compile_constraints, random_constraint_set
from .dense import DENSE_TENSOR_COUNT, INT64_MAX, dense_loss, dense_peak_bytes
from .sparse import sparse_loss
from .tnorms import TNormKind

GIB = 1 << 30
MIB = 1 << 20
DEFAULT_BUDGET = 24 * GIB
DEFAULT_COUNTS = (8, 16, 32, 64, 128, 243)
CSV_HEADER = ("path", "tnorm", "n_constraints", "D", "n_labels", "peak_bytes", "wall_seconds", "estimated")


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class MemoryModel:
    D: int
    n_constraints: int
    n_labels: int
    elem_bytes: int
    dense_single_tensor_bytes: int
    dense_total_bytes: int
    sparse_goal_bytes: int
    sparse_aux_factor: float
    sparse_total_bytes: int

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("dense_single_tensor_bytes", "dense_total_bytes", "sparse_goal_bytes", "sparse_total_bytes"):
            out[key.replace("_bytes", "_gib")] = getattr(self, key) / GIB
        return out


def estimate(d: int, n_constraints: int, n_labels: int, elem_bytes: int = 4, k: float = 4) -> MemoryModel:
    if not 0 < k <= 8:
        raise ValueError(f"sparse auxiliary factor must be in (0, 8], got {k}")
    single, total = dense_peak_bytes(d, n_constraints, n_labels, elem_bytes)
    goal = int(d) * int(n_constraints) * int(elem_bytes)
    sparse_total = int(round(k * goal))
    if sparse_total > INT64_MAX:
        raise OverflowError("sparse memory estimate overflows a signed 64-bit count")
    return MemoryModel(int(d), int(n_constraints), int(n_labels), int(elem_bytes), single, total, goal, k, sparse_total)


def dense_crossover(budget_bytes: int, d: int, n_labels: int, elem_bytes: int = 4) -> int:
    """Smallest clause count whose dense total estimate exceeds ``budget_bytes``."""
    per_clause = DENSE_TENSOR_COUNT * d * n_labels * elem_bytes
    return budget_bytes // per_clause + 1


@dataclass
class BenchRecord:
    path: str
    tnorm: str
    n_constraints: int
    D: int
    n_labels: int
    peak_bytes: int
    wall_seconds: float | None
    estimated: bool = False
    iterations: int = 0


def constraint_family(
    counts: Sequence[int] = DEFAULT_COUNTS,
    n_labels: int = 41,
    seed: int = 0,
    min_len: int = 2,
    max_len: int = 15,
) -> Iterator[ConstraintSet]:
    """Nested synthetic clause sets: each one is a prefix of a single draw."""
    rng = np.random.default_rng(seed)
    full = random_constraint_set(rng, n_labels, max(counts), min_len, max_len)
    for n in counts:
        yield compile_constraints(full.labels, full.clauses[:n])


def _warm(cs: ConstraintSet) -> None:
    # cached index structures count as inputs, not loss-time allocations
    cs.plus_index, cs.minus_index, cs.occurrence, cs.literal_groups


def measure_peak(fn, iters: int) -> tuple[int, float]:
    """Run ``fn`` ``iters`` times; return (peak traced bytes above baseline, median seconds).

    One untimed call precedes the measurement so that one-off caches filled on
    first use are part of the baseline rather than the peak.
    """
    started = not tracemalloc.is_tracing()
    if started:
        tracemalloc.start()
    try:
        fn()
        gc.collect()
        base = tracemalloc.get_traced_memory()[0]
        tracemalloc.reset_peak()
        times = []
        for _ in range(iters):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        peak = tracemalloc.get_traced_memory()[1] - base
    finally:
        if started:
            tracemalloc.stop()
    return max(int(peak), 0), statistics.median(times)


def run_sweep(
    cs_family: Iterable[ConstraintSet],
    d: int,
    kind: TNormKind | str,
    path: str,
    iters: int = 50,
    *,
    budget_bytes: int = DEFAULT_BUDGET,
    estimate_fallback: bool = True,
    host_memory_fraction: float | None = 0.6,
    n_threads: int = 1,
    seed: int = 0,
) -> list[BenchRecord]:
    """Measure peak loss-time allocation per clause set.

    Dense configurations whose modelled footprint exceeds ``budget_bytes``
    (or ``host_memory_fraction`` of currently available RAM) are not run;
    they are emitted with ``estimated=True`` and the model's byte count.
    """
    kind = TNormKind.parse(kind)
    if path not in ("dense", "sparse"):
        raise ValueError(f"path must be 'dense' or 'sparse', got {path!r}")
    if iters < 1:
        raise ValueError("iters must be positive")
    records = []
    for cs in cs_family:
        n_c, n_l = cs.n_constraints, cs.n_labels
        if path == "dense":
            _, total = dense_peak_bytes(d, n_c, n_l, 4)
            limit = budget_bytes
            if host_memory_fraction is not None:
                limit = min(limit, int(host_memory_fraction * psutil.virtual_memory().available))
            if total > limit:
                if not estimate_fallback:
                    raise BudgetExceededError(
                        f"dense run with {n_c} constraints needs ~{total} B, above the {limit} B limit"
                    )
                records.append(BenchRecord("dense", kind.value, n_c, d, n_l, total, None, True, 0))
                continue
        rng = np.random.default_rng([seed, n_c])
        p = rng.random((d, n_l), dtype=np.float32)
        _warm(cs)
        if path == "dense":
            fn = lambda: dense_loss(cs, p, kind)  # noqa: E731
        else:
            fn = lambda: sparse_loss(cs, p, kind, want_grad=True, n_threads=n_threads)  # noqa: E731
        peak, wall = measure_peak(fn, iters)
        records.append(BenchRecord(path, kind.value, n_c, d, n_l, peak, wall, False, iters))
        del p, fn
        gc.collect()
    return records


def emit_csv(records: Sequence[BenchRecord]) -> str:
    if not records:
        raise ValueError("no records to emit")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in sorted(records, key=lambda r: (r.path, r.tnorm, r.n_constraints, r.D, r.n_labels)):
        writer.writerow([
            r.path,
            r.tnorm,
            r.n_constraints,
            r.D,
            r.n_labels,
            r.peak_bytes,
            "" if r.wall_seconds is None else repr(r.wall_seconds),
            "true" if r.estimated else "false",
        ])
    return buf.getvalue()


def parse_csv(text: str) -> list[BenchRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    out = []
    for row in reader:
        out.append(BenchRecord(
            path=row["path"],
            tnorm=row["tnorm"],
            n_constraints=int(row["n_constraints"]),
            D=int(row["D"]),
            n_labels=int(row["n_labels"]),
            peak_bytes=int(row["peak_bytes"]),
            wall_seconds=float(row["wall_seconds"]) if row["wall_seconds"] else None,
            estimated=row["estimated"] == "true",
        ))
    return out


def csv_fields(record: BenchRecord) -> tuple:
    """The subset of a record that survives a CSV round trip."""
    return tuple(getattr(record, f.name) for f in fields(record) if f.name != "iterations")
