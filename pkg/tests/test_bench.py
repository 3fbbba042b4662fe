import itertools
import math

import pytest

from nvi_engine import bench
from nvi_engine.nvi import fused_score


def test_inputs_fixed_and_every_row_scoreable():
    a, b = bench.bench_inputs(), bench.bench_inputs()
    assert len(a) == bench.N_CASES
    assert repr(a) == repr(b)
    assert any(math.isnan(v) for row in a for v in row)
    assert all(math.isfinite(fused_score(*row)) for row in a)


def test_report_is_deterministic():
    r1 = bench.run_bench(iters=5000, warmup=500, reps=3)
    r2 = bench.run_bench(iters=5000, warmup=500, reps=2)
    assert r1.deterministic and r1.output_sha256 == r2.output_sha256
    assert (r1.alloc_delta_bytes, r1.alloc_delta_blocks) == (0, 0)
    assert 0 < r1.p50_ns <= r1.p99_ns <= r1.max_ns


def test_iteration_floor():
    with pytest.raises(ValueError):
        bench.run_bench(iters=999)


_kept = []


def _leaky(*args):
    _kept.append([args])
    return fused_score(*args)


def test_heap_growth_is_detected(monkeypatch):
    monkeypatch.setattr(bench, "fused_score", _leaky)
    r = bench.run_bench(iters=2000, warmup=100, reps=1)
    assert r.alloc_delta_blocks > 0 and r.alloc_delta_bytes > 0
    _kept.clear()


def test_nondeterminism_names_first_divergent_case(monkeypatch):
    calls = itertools.count()

    def drifting(*args):
        return fused_score(*args) + (1e-9 if next(calls) >= 1500 else 0.0)

    monkeypatch.setattr(bench, "fused_score", drifting)
    with pytest.raises(bench.BenchError, match="repetition 1 diverges at case 476 "):
        bench.run_bench(iters=1024, warmup=0, reps=2)
