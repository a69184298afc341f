"""Command-line interface: dataset generation, clustering, benchmarking.

Exit codes: 0 success, 1 runtime failure (I/O, capacity, equivalence
violation), 2 usage error (bad flags or invalid parameter values).
"""

import argparse
import csv
import json
import os
import sys

from .core import (
    EmptyDataset,
    InvalidParams,
    ParseError,
    generate_blobs,
    load_points,
    validate_params,
    write_labels,
    write_points,
)
from .kernels import CapacityExceeded, KernelVariant, VariantId, resolve_mem_cap
from .oracle import serial_dbscan
from .pipeline import (
    MergeBackend,
    PipelineConfig,
    first_difference,
    labelings_equivalent,
    run_dbscan,
)

VARIANT_NAMES = [v.value for v in VariantId]
MERGE_NAMES = [b.value for b in MergeBackend]

# shape of the synthetic benchmark datasets
_BENCH_CLUSTERS = 3
_BENCH_SPREAD = 0.03
_BENCH_NOISE = 0.02


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densescan",
        description="Dense-matrix DBSCAN: generate datasets, cluster them, "
                    "and benchmark the kernel variants against the serial reference.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic blob dataset")
    gen.add_argument("--n", type=int, required=True, help="total point count")
    gen.add_argument("--clusters", type=int, required=True, help="number of blobs")
    gen.add_argument("--spread", type=float, required=True, help="blob standard deviation")
    gen.add_argument("--noise", type=float, required=True,
                     help="fraction of uniform background noise in [0, 1]")
    gen.add_argument("--seed", type=int, required=True, help="RNG seed")
    gen.add_argument("--out", required=True, help="output point file")

    cluster = sub.add_parser("cluster", help="cluster a point file")
    cluster.add_argument("--input", required=True, help="point file to read")
    cluster.add_argument("--eps", type=float, required=True, help="neighborhood radius")
    cluster.add_argument("--minpts", type=int, required=True, help="core-point threshold")
    cluster.add_argument("--variant", default=VariantId.FUSED_ALGEBRAIC.value,
                         choices=VARIANT_NAMES + ["serial"],
                         help="kernel variant, or 'serial' for the reference path")
    cluster.add_argument("--merge", default=MergeBackend.ITERATIVE.value,
                         choices=MERGE_NAMES, help="merge backend")
    cluster.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                         help="worker threads")
    cluster.add_argument("--tile", type=int, default=256, help="column tile size")
    cluster.add_argument("--unroll", type=int, default=32, help="inner unroll width")
    cluster.add_argument("--output", required=True, help="label file to write")

    bench = sub.add_parser("bench", help="profile all variants against the serial reference")
    bench.add_argument("--sizes", required=True,
                       help="comma-separated dataset sizes, e.g. 1000,5061")
    bench.add_argument("--eps", type=float, required=True, help="neighborhood radius")
    bench.add_argument("--minpts", type=int, required=True, help="core-point threshold")
    bench.add_argument("--seed", type=int, default=0, help="RNG seed for the datasets")
    bench.add_argument("--repeats", type=int, default=5,
                       help="runs per combination; the minimum is reported")
    bench.add_argument("--report", required=True, help="report file to write")
    bench.add_argument("--format", default="csv", choices=["csv", "json"],
                       help="report format")
    return parser


def cmd_gen(args) -> int:
    points = generate_blobs(args.n, args.clusters, args.spread, args.noise, args.seed)
    write_points(points, args.out)
    print(f"wrote {args.out} n={points.n}")
    return 0


def cmd_cluster(args) -> int:
    points = load_points(args.input)
    params = validate_params(args.eps, args.minpts)
    parts = [f"input={args.input}", f"n={points.n}", f"variant={args.variant}"]
    if args.variant == "serial":
        labeling, trace = serial_dbscan(points, params)
        parts += [f"dist_ms={trace.dist_sq_ms:.3f}",
                  f"cluster_ms={trace.cluster_build_ms:.3f}",
                  f"merge_ms={trace.merge_ms:.3f}",
                  f"total_ms={trace.dist_sq_ms + trace.cluster_build_ms + trace.merge_ms:.3f}"]
    else:
        variant = KernelVariant(VariantId(args.variant), tile_size=args.tile,
                                unroll_width=args.unroll)
        config = PipelineConfig(variant=variant,
                                merge_backend=MergeBackend(args.merge),
                                threads=args.threads)
        labeling, timings = run_dbscan(points, params, config)
        parts.append(f"merge={args.merge}")
        parts.append(f"threads={args.threads}")
        if timings.fused_ms is not None:
            parts.append(f"fused_ms={timings.fused_ms:.3f}")
        else:
            parts.append(f"dist_ms={timings.dist_ms:.3f}")
            parts.append(f"cluster_ms={timings.cluster_ms:.3f}")
        parts += [f"merge_ms={timings.merge_ms:.3f}", f"total_ms={timings.total_ms:.3f}"]
    write_labels(labeling, args.output)
    parts += [f"clusters={labeling.cluster_count()}", f"noise={labeling.noise_count()}"]
    print(" ".join(parts))
    return 0


def _bench_combination(points, params, variant_id, backend, threads, repeats):
    """Best-of-N timings for one combination, or a capacity error marker."""
    best = None
    labeling = None
    for _ in range(repeats):
        config = PipelineConfig(variant=KernelVariant(variant_id),
                                merge_backend=backend, threads=threads)
        try:
            labeling, timings = run_dbscan(points, params, config)
        except CapacityExceeded as err:
            return None, {"status": "capacity_exceeded",
                          "required_bytes": err.required_bytes,
                          "cap_bytes": err.cap_bytes}
        if best is None or timings.total_ms < best.total_ms:
            best = timings
    return labeling, {"status": "ok", "timings": best}


class EquivalenceViolation(Exception):
    """A benchmark combination disagreed with the serial reference."""

    def __init__(self, size, variant_id, backend, index):
        super().__init__(
            f"equivalence violation: size={size} variant={variant_id.value} "
            f"merge={backend.value} first differing point index={index}")


def collect_bench_report(sizes, params, seed, repeats, threads) -> dict:
    """Run the full benchmark grid and return the report structure.

    Every combination's labeling is verified against the serial
    reference before its timing is recorded; a mismatch raises
    EquivalenceViolation instead of producing a report.
    """
    report = {
        "format": "densescan-bench-1",
        "timing": f"min over {repeats} repeats per combination "
                  "(reduces scheduler noise)",
        "environment": {
            "threads": threads,
            "kernel_dtype": "float32",
            "oracle_dtype": "float64",
            "mem_cap_bytes": resolve_mem_cap(),
            "repeats": repeats,
        },
        "serial": {},
        "combinations": [],
    }

    for size in sizes:
        points = generate_blobs(size, _BENCH_CLUSTERS, _BENCH_SPREAD, _BENCH_NOISE,
                                seed)
        oracle_labeling, trace = serial_dbscan(points, params)
        serial_total = trace.dist_sq_ms + trace.cluster_build_ms + trace.merge_ms
        report["serial"][str(size)] = {
            "dist_ms": trace.dist_sq_ms,
            "cluster_ms": trace.cluster_build_ms,
            "merge_ms": trace.merge_ms,
            "total_ms": serial_total,
            "dist_pct": 100.0 * trace.dist_sq_ms / serial_total,
            "cluster_pct": 100.0 * trace.cluster_build_ms / serial_total,
            "merge_pct": 100.0 * trace.merge_ms / serial_total,
            "core_count": trace.core_count,
        }

        baseline_kernel_ms = {}
        for variant_id in VariantId:
            for backend in MergeBackend:
                labeling, outcome = _bench_combination(
                    points, params, variant_id, backend, threads, repeats)
                row = {
                    "data_size": size,
                    "variant": variant_id.value,
                    "merge_backend": backend.value,
                    "threads": threads,
                    "status": outcome["status"],
                    "dist_ms": None, "cluster_ms": None, "fused_ms": None,
                    "merge_ms": None, "total_ms": None,
                    "speedup_vs_serial": None,
                    "speedup_vs_baseline_variant": None,
                    "equivalent": None,
                    "error": None,
                }
                if outcome["status"] != "ok":
                    row["error"] = (f"requires {outcome['required_bytes']} bytes, "
                                    f"cap is {outcome['cap_bytes']} bytes")
                    report["combinations"].append(row)
                    continue
                if not labelings_equivalent(labeling, oracle_labeling):
                    raise EquivalenceViolation(
                        size, variant_id, backend,
                        first_difference(labeling, oracle_labeling))
                timings = outcome["timings"]
                kernel_ms = timings.kernel_ms()
                if variant_id is VariantId.BASELINE:
                    baseline_kernel_ms[backend] = kernel_ms
                base = baseline_kernel_ms.get(backend)
                row.update({
                    "dist_ms": timings.dist_ms,
                    "cluster_ms": timings.cluster_ms,
                    "fused_ms": timings.fused_ms,
                    "merge_ms": timings.merge_ms,
                    "total_ms": timings.total_ms,
                    "speedup_vs_serial": serial_total / timings.total_ms,
                    "speedup_vs_baseline_variant":
                        (base / kernel_ms) if base is not None else None,
                    "equivalent": True,
                })
                report["combinations"].append(row)
    return report


def cmd_bench(args) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise InvalidParams("sizes",
                            f"expected comma-separated integers, got {args.sizes!r}")
    if not sizes:
        raise InvalidParams("sizes", "at least one size is required")
    params = validate_params(args.eps, args.minpts)
    if args.repeats < 1:
        raise InvalidParams("repeats", "must be >= 1")
    try:
        report = collect_bench_report(sizes, params, args.seed, args.repeats,
                                      os.cpu_count() or 1)
    except EquivalenceViolation as err:
        print(err, file=sys.stderr)
        return 1
    if args.format == "json":
        _write_json_report(report, args.report)
    else:
        _write_csv_report(report, args.report)
    print(f"wrote {args.report} "
          f"({len(report['combinations'])} combinations over {len(sizes)} sizes)")
    return 0


_CSV_COLUMNS = ["data_size", "variant", "merge_backend", "threads", "status",
                "dist_ms", "cluster_ms", "fused_ms", "merge_ms", "total_ms",
                "speedup_vs_serial", "speedup_vs_baseline_variant",
                "equivalent", "error"]


def _write_json_report(report: dict, path) -> None:
    # JSON is nested by size; values are shared with the CSV writer
    by_size = {}
    for row in report["combinations"]:
        by_size.setdefault(str(row["data_size"]), []).append(row)
    doc = dict(report)
    doc["combinations"] = by_size
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_csv_report(report: dict, path) -> None:
    env = report["environment"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {report['format']}\n")
        fh.write(f"# timing: {report['timing']}\n")
        fh.write("# environment: " + " ".join(f"{k}={v}" for k, v in env.items()) + "\n")
        for size, s in report["serial"].items():
            fh.write(f"# serial[{size}]: "
                     f"dist_ms={s['dist_ms']} ({s['dist_pct']:.2f}%) "
                     f"cluster_ms={s['cluster_ms']} ({s['cluster_pct']:.2f}%) "
                     f"merge_ms={s['merge_ms']} ({s['merge_pct']:.2f}%) "
                     f"total_ms={s['total_ms']} core_count={s['core_count']}\n")
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for row in report["combinations"]:
            writer.writerow(["" if row[col] is None else row[col]
                             for col in _CSV_COLUMNS])


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "cluster":
            return cmd_cluster(args)
        return cmd_bench(args)
    except InvalidParams as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except CapacityExceeded as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ParseError, EmptyDataset, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
