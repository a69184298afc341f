"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they
complete. The full module takes several minutes: it exercises the
23040-point profile twice (five timed serial reference runs) and a
60032-point capacity check on top of the randomized equivalence sweep.
"""

import os
import statistics
import time

import numpy as np
import pytest

from densescan import (
    CapacityExceeded,
    FlopFormula,
    KernelVariant,
    MergeAudit,
    MergeBackend,
    PipelineConfig,
    VariantId,
    build_clusters_from_dist,
    dist_baseline,
    dist_soa,
    dist_tiled,
    flop_count,
    fused_build,
    generate_blobs,
    labelings_equivalent,
    merge_iterative,
    run_dbscan,
    serial_dbscan,
    validate_params,
)
from densescan.merge import CoreAdjacency, warshall_closure
from densescan._bitmat import pack_rows, unpack_rows
from conftest import bfs_components, margin_safe_eps, random_margin_instance

pytestmark = pytest.mark.acceptance

GIB = 1024**3
THREADS = os.cpu_count() or 1


def report(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {number} [{name}]: {status} {detail}".rstrip())
    assert ok, f"acceptance criterion {number} ({name}) failed: {detail}"


@pytest.fixture(scope="module")
def blob_23040():
    points = generate_blobs(23040, 3, 0.03, 0.02, 1)
    params = validate_params(0.1, 8)
    return points, params


@pytest.fixture(scope="module")
def serial_runs_23040(blob_23040):
    points, params = blob_23040
    return [serial_dbscan(points, params) for _ in range(5)]


def test_1_oracle_equivalence_property():
    rng = np.random.default_rng(91)
    forced_sizes = [1, 2, 3, 4, 5, 8, 31, 32, 33, 255, 256, 257, 1999, 2000]
    thread_counts = sorted({1, 4, THREADS})
    instances = 200
    checks = 0
    started = time.perf_counter()
    for index in range(instances):
        if index < len(forced_sizes):
            n = forced_sizes[index]
            k = int(rng.integers(1, min(5, n) + 1))
            points = generate_blobs(n, k, float(rng.uniform(0.02, 0.2)),
                                    float(rng.uniform(0.0, 0.3)),
                                    int(rng.integers(2**31)))
            eps = margin_safe_eps(points, rng)
            min_pts = int(rng.integers(1, 9))
        else:
            points, eps, min_pts = random_margin_instance(rng, max_n=2000)
        params = validate_params(eps, min_pts)
        reference, _ = serial_dbscan(points, params)
        for variant_id in VariantId:
            for backend in MergeBackend:
                for threads in thread_counts:
                    config = PipelineConfig(variant=KernelVariant(variant_id),
                                            merge_backend=backend, threads=threads)
                    labeling, _ = run_dbscan(points, params, config)
                    assert labelings_equivalent(labeling, reference), (
                        f"n={points.n} eps={eps} min_pts={min_pts} "
                        f"variant={variant_id.value} merge={backend.value} "
                        f"threads={threads}")
                    checks += 1
    elapsed = time.perf_counter() - started
    report(1, "oracle equivalence", True,
           f"({instances} instances, {checks} combination checks, "
           f"{elapsed:.0f}s, zero mismatches)")


def test_2_exact_variant_equality():
    rng = np.random.default_rng(92)
    forced = [(5, 2, 1), (33, 32, 32), (255, 256, 32), (257, 256, 32),
              (31, 16, 8), (100, 7, 3)]
    cases = 0
    for trial in range(50):
        if trial < len(forced):
            n, tile, unroll = forced[trial]
        else:
            n = int(rng.integers(1, 600))
            unroll = int(rng.choice([1, 2, 4, 8, 32]))
            tile = unroll * int(rng.choice([1, 2, 4, 8]))
        points = generate_blobs(n, int(rng.integers(1, min(4, n) + 1)),
                                float(rng.uniform(0.01, 0.3)),
                                float(rng.uniform(0.0, 0.4)),
                                int(rng.integers(2**31)))
        reference = dist_baseline(points, threads=1)
        others = [
            dist_soa(points, threads=2),
            dist_tiled(points, KernelVariant(VariantId.TILED, tile, unroll), threads=2),
            dist_tiled(points, KernelVariant(VariantId.TILED_UNROLLED, tile, unroll),
                       threads=3),
        ]
        for other in others:
            assert np.array_equal(reference.values.view(np.uint32),
                                  other.values.view(np.uint32)), (
                f"n={n} tile={tile} unroll={unroll}")
        cases += 1
    report(2, "exact variant equality", True,
           f"({cases} instances incl. ragged tile/unroll remainders, bitwise)")


def test_3_fusion_ordering(blob_23040):
    points, params = blob_23040
    tiled = KernelVariant(VariantId.TILED)
    fused = KernelVariant(VariantId.FUSED)

    # one correctness pass: fusion must be a pure reassociation
    dist = dist_tiled(points, tiled, THREADS)
    nbr_a, valid_a = build_clusters_from_dist(dist, params, THREADS)
    del dist
    nbr_b, valid_b = fused_build(points, params, fused, THREADS)
    assert np.array_equal(nbr_a.bits, nbr_b.bits)
    assert np.array_equal(valid_a.valid, valid_b.valid)
    del nbr_a, nbr_b

    separated, fused_times = [], []
    for _ in range(5):
        t0 = time.perf_counter()
        dist = dist_tiled(points, tiled, THREADS)
        t1 = time.perf_counter()
        build_clusters_from_dist(dist, params, THREADS)
        t2 = time.perf_counter()
        del dist
        separated.append((t2 - t0) * 1e3)
        t3 = time.perf_counter()
        fused_build(points, params, fused, THREADS)
        fused_times.append((time.perf_counter() - t3) * 1e3)
    med_separated = statistics.median(separated)
    med_fused = statistics.median(fused_times)
    report(3, "fusion ordering", med_fused < med_separated,
           f"(n=23040, median-of-5: fused {med_fused:.0f}ms < "
           f"separated {med_separated:.0f}ms)")


def test_4_flop_counts():
    direct = flop_count(FlopFormula.DIRECT)
    algebraic = flop_count(FlopFormula.ALGEBRAIC_INNER)
    report(4, "flop counts", direct == 8 and algebraic == 6,
           f"(direct={direct}, algebraic inner={algebraic})")


def test_5_serial_profile_shape(serial_runs_23040):
    _, trace = serial_runs_23040[0]
    total = trace.dist_sq_ms + trace.cluster_build_ms + trace.merge_ms
    share = trace.dist_sq_ms / total
    report(5, "serial profile shape", share >= 0.50,
           f"(n=23040, distance stage {100 * share:.1f}% of {total:.0f}ms total)")


def test_6_parallel_speedup_sanity(blob_23040, serial_runs_23040):
    points, params = blob_23040
    serial_dc = min(t.dist_sq_ms + t.cluster_build_ms for _, t in serial_runs_23040)
    config = PipelineConfig(variant=KernelVariant(VariantId.FUSED_ALGEBRAIC),
                            merge_backend=MergeBackend.ITERATIVE, threads=THREADS)
    pipeline_total = min(run_dbscan(points, params, config)[1].total_ms
                         for _ in range(5))
    ratio = serial_dc / pipeline_total
    report(6, "parallel speedup sanity", ratio >= 2.0,
           f"(n=23040, min-of-5: serial dist+cluster {serial_dc:.0f}ms / "
           f"default pipeline {pipeline_total:.0f}ms = {ratio:.1f}x; "
           f"{THREADS} hardware thread(s) available)")


def test_7_warshall_component_oracle():
    rng = np.random.default_rng(97)
    cases = 0
    for trial in range(100):
        m = int(rng.integers(1, 301))
        density = float(rng.choice([0.0, 0.005, 0.02, 0.05, 1.0]))
        adj_bool = rng.random((m, m)) < density
        adj_bool |= adj_bool.T
        np.fill_diagonal(adj_bool, True)
        adj = CoreAdjacency(m=m, core_indices=np.arange(m, dtype=np.int64),
                            bits=pack_rows(adj_bool))
        closed = unpack_rows(warshall_closure(adj, threads=2).bits, m)
        reps = closed.argmax(axis=1)
        expected = bfs_components(adj_bool)
        # identical partitions: same-rep iff same component
        rep_of_comp = {}
        ok = True
        for node in range(m):
            comp = int(expected[node])
            if comp in rep_of_comp:
                ok = ok and rep_of_comp[comp] == reps[node]
            else:
                ok = ok and int(reps[node]) not in rep_of_comp.values()
                rep_of_comp[comp] = int(reps[node])
        assert ok, f"m={m} density={density}"
        cases += 1
    report(7, "warshall component oracle", True,
           f"({cases} random adjacency matrices, m <= 300, exact match)")


def test_8_monotonicity_audit():
    rng = np.random.default_rng(98)
    total_events = 0
    for _ in range(20):
        # dense blob-heavy instances so the audit sees real merge traffic
        n = int(rng.integers(50, 400))
        points = generate_blobs(n, int(rng.integers(1, 5)),
                                float(rng.uniform(0.02, 0.08)),
                                float(rng.uniform(0.0, 0.1)),
                                int(rng.integers(2**31)))
        params = validate_params(margin_safe_eps(points, rng),
                                 int(rng.integers(1, 5)))
        nbr, valid = build_clusters_from_dist(dist_soa(points), params)
        audit = MergeAudit()
        merge_iterative(nbr, valid, audit=audit)
        assert audit.bit_downgrades == 0, "observed a 1->0 bit transition"
        assert audit.valid_upgrades == 0, "observed a 0->1 valid transition"
        total_events += audit.merge_events
    report(8, "monotonicity audit", total_events > 0,
           f"(20 instances, {total_events} audited merge events, "
           "zero 1->0 bit or 0->1 valid transitions)")


def test_9_memory_guard_at_60032():
    points = generate_blobs(60032, 3, 0.03, 0.02, 2)
    params = validate_params(0.1, 8)
    cap = 1 * GIB

    matrix_cfg = PipelineConfig(variant=KernelVariant(VariantId.TILED),
                                threads=THREADS, mem_cap=cap)
    with pytest.raises(CapacityExceeded) as exc:
        run_dbscan(points, params, matrix_cfg)
    required = exc.value.required_bytes
    assert required == 4 * 60032 * 60032
    assert exc.value.cap_bytes == cap

    cluster_counts = []
    for variant_id in (VariantId.FUSED, VariantId.FUSED_ALGEBRAIC):
        config = PipelineConfig(variant=KernelVariant(variant_id),
                                merge_backend=MergeBackend.ITERATIVE,
                                threads=THREADS, mem_cap=cap)
        labeling, _ = run_dbscan(points, params, config)
        assert labeling.n == 60032
        cluster_counts.append(labeling.cluster_count())
    report(9, "memory guard", all(c >= 3 for c in cluster_counts),
           f"(matrix variant: CapacityExceeded, {required / GIB:.1f} GiB > 1 GiB cap; "
           f"fused variants completed under the cap with {cluster_counts} clusters)")
