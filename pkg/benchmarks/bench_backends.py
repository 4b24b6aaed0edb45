#!/usr/bin/env python3
"""Benchmark the JIT ladder kernels against the pure-Python fallback.

Covers the layers that dominate runtime: single field multiplications,
full kP ladders on B-233 (both backends), and the attack pipeline from
trace synthesis to candidate scoring.

    python3 benchmarks/bench_backends.py [--quick]
"""

import argparse
import os
import random
import time

from kpsca import _fastladder, attack, gf2m
from kpsca.curve import Scalar, get_curve, kp_multiply, kp_point
from kpsca.leaksim import LeakModel, build_schedule, synthesize_trace
from kpsca.traces import CompressionMethod, compress, segment


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def bench_field(repeats):
    rng = random.Random(1)
    spec = gf2m.B233
    a, b = spec.random_element(rng), spec.random_element(rng)
    rows = [
        ("mul_classical (B-233)", timeit(lambda: gf2m.mul_classical(a, b), repeats)),
        ("mul_karatsuba4 (B-233)", timeit(lambda: gf2m.mul_karatsuba4(a, b), repeats)),
        ("square (B-233)", timeit(lambda: gf2m.square(a), repeats)),
        ("invert (B-233)", timeit(lambda: gf2m.invert(a), max(repeats // 10, 1))),
    ]
    return rows


def bench_ladder(repeats):
    rng = random.Random(2)
    params = get_curve("b233")
    k = Scalar.random(rng, 232)
    rows = []
    for backend in ("numba", "python"):
        if backend == "numba" and not _fastladder.HAVE_NUMBA:
            continue
        os.environ[_fastladder.BACKEND_ENV] = backend
        kp_point(k, params.g, params)  # warm up (JIT compile)
        rows.append((
            f"kP B-233 [{backend}]",
            timeit(lambda: kp_point(k, params.g, params), repeats),
        ))
        rows.append((
            f"kP B-233 + transcript [{backend}]",
            timeit(lambda: kp_multiply(k, params.g, params), max(repeats // 4, 1)),
        ))
    os.environ.pop(_fastladder.BACKEND_ENV, None)
    return rows


def bench_attack_pipeline():
    rng = random.Random(3)
    params = get_curve("b233")
    k = Scalar.random(rng, 232)
    _, transcript = kp_multiply(k, params.g, params)

    t0 = time.perf_counter()
    schedule = build_schedule(transcript)
    t_sched = time.perf_counter() - t0

    model = LeakModel(addr_weight=1.0, noise_sigma=0.5, samples_per_cycle=10, rng_seed=0)
    t0 = time.perf_counter()
    trace = synthesize_trace(schedule, model)
    t_synth = time.perf_counter() - t0

    t0 = time.perf_counter()
    ct = compress(trace, CompressionMethod.MEAN)
    matrix = segment(ct, ct.cycle0_offset, 54, schedule.num_slots)
    report = attack.evaluate(matrix, truth_bits=k.main_loop_bits)
    t_attack = time.perf_counter() - t0

    return [
        ("build_schedule (230 slots)", t_sched),
        ("synthesize_trace (129k samples)", t_synth),
        ("compress+segment+attack", t_attack),
    ], report.best_delta


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="fewer repetitions")
    args = parser.parse_args()
    reps = 50 if args.quick else 400

    print(f"backend available: numba={_fastladder.HAVE_NUMBA}, "
          f"active={_fastladder.active_backend()}")
    print()
    rows = bench_field(reps * 5)
    rows += bench_ladder(max(reps // 10, 5))
    pipeline_rows, best_delta = bench_attack_pipeline()
    rows += pipeline_rows

    width = max(len(name) for name, _ in rows)
    for name, seconds in rows:
        print(f"{name:<{width}}  {seconds * 1e3:10.4f} ms")
    print(f"\nattack sanity: best delta on the benchmark trace = {best_delta:.3f}")


if __name__ == "__main__":
    main()
