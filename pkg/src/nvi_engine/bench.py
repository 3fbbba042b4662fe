"""
Host-side latency and determinism bench for the scalar scoring path.

A fixed table of inputs (about a third of rows with one or more absent
modalities) is scored ``iters`` times, cycling through the table, into a
preallocated ``array('d')``. Three things are measured:

* wall latency per call (``perf_counter_ns`` around each call),
* heap growth across the hot loop after warmup, traced with
  :mod:`tracemalloc` (the loop must leave no live allocation behind),
* the SHA-256 of the output buffer for each repetition, which must agree.
"""

from __future__ import annotations

import hashlib
import math
import time
import tracemalloc
from array import array
from dataclasses import asdict, dataclass

import numpy as np

from .nvi import fused_score

N_CASES = 1024
MIN_ITERS = 1000


class BenchError(RuntimeError):
    """Nondeterministic output or hot-path heap growth."""


def bench_inputs(n: int = N_CASES, seed: int = 0) -> list:
    """Deterministic input rows ``(spo2, rmssd, pi, phase_l, phase_r)`` with ``nan`` = absent."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    cols = np.column_stack([
        rng.uniform(80.0, 100.0, n),
        rng.uniform(5.0, 120.0, n),
        rng.uniform(0.0, 0.3, n),
        rng.uniform(-180.0, 180.0, n),
        rng.uniform(-180.0, 180.0, n),
    ])
    absent = rng.random((n, 4)) < 0.1
    absent[np.all(absent, axis=1), 0] = False
    for j in range(3):
        cols[absent[:, j], j] = math.nan
    cols[absent[:, 3], 3:] = math.nan
    return [tuple(float(v) for v in row) for row in cols]


@dataclass
class BenchReport:
    iters: int
    warmup: int
    reps: int
    p50_ns: float
    p99_ns: float
    max_ns: float
    mean_ns: float
    alloc_delta_bytes: int
    alloc_delta_blocks: int
    output_sha256: str
    deterministic: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _run(cases, out, iters):
    n = len(cases)
    for i in range(iters):
        a, b, c, d, e = cases[i % n]
        out[i % n] = fused_score(a, b, c, d, e)


def _timed(cases, out, lat, iters):
    n = len(cases)
    clock = time.perf_counter_ns
    for i in range(iters):
        a, b, c, d, e = cases[i % n]
        t0 = clock()
        out[i % n] = fused_score(a, b, c, d, e)
        lat[i] = clock() - t0


def _traced_delta(cases, out, iters, warmup):
    """Net traced heap bytes/blocks left behind by ``iters`` calls after warmup."""
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    try:
        _run(cases, out, warmup)
        before = tracemalloc.take_snapshot()
        _run(cases, out, iters)
        after = tracemalloc.take_snapshot()
    finally:
        if not was_tracing:
            tracemalloc.stop()
    flt = [tracemalloc.Filter(True, __file__), tracemalloc.Filter(True, fused_score.__code__.co_filename)]
    diff = after.filter_traces(flt).compare_to(before.filter_traces(flt), "filename")
    return sum(d.size_diff for d in diff), sum(d.count_diff for d in diff)


def run_bench(iters: int = 1_000_000, warmup: int = 10_000, reps: int = 3, seed: int = 0) -> BenchReport:
    """Score the fixed table ``reps`` times and check byte-identical outputs."""
    if iters < MIN_ITERS:
        raise ValueError(f"iters must be >= {MIN_ITERS}")
    if reps < 1 or warmup < 0:
        raise ValueError("reps must be >= 1 and warmup >= 0")
    cases = bench_inputs(seed=seed)
    lat = array("q", bytes(8 * iters))
    outputs = []
    for _ in range(reps):
        out = array("d", bytes(8 * len(cases)))
        _run(cases, out, warmup)
        _timed(cases, out, lat, iters)
        outputs.append(out)
    ref = outputs[0].tobytes()
    for r, out in enumerate(outputs[1:], start=1):
        if out.tobytes() != ref:
            k = next(i for i in range(len(out)) if out[i] != outputs[0][i])
            raise BenchError(f"repetition {r} diverges at case {k} {cases[k]}: "
                             f"{outputs[0][k]!r} != {out[k]!r}")
    size, blocks = _traced_delta(cases, array("d", bytes(8 * len(cases))), min(iters, 200_000), warmup)
    ns = np.frombuffer(lat, dtype=np.int64)
    return BenchReport(iters, warmup, reps, float(np.percentile(ns, 50)), float(np.percentile(ns, 99)),
                       float(ns.max()), float(ns.mean()), int(size), int(blocks),
                       hashlib.sha256(ref).hexdigest(), True)
