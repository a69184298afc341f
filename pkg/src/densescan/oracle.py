"""Single-threaded reference DBSCAN.

This is the ground truth the parallel kernel variants are checked
against, and the timing baseline for the benchmark reports. It runs the
classic three stages strictly in sequence — fill the full squared
distance matrix, derive per-point neighborhoods and core flags from it,
then connect cores and attach borders — and times each stage
separately. Everything is float64 and written for auditability, not
speed.

Conventions shared with every other module:
  * the neighborhood of i includes i itself (self-distance 0),
  * the boundary is inclusive: j is a neighbor iff distSq(i, j) <= eps_sq,
  * i is a core point iff its neighborhood holds at least min_pts points,
  * a non-core point in range of one or more cores joins the cluster of
    its lowest-indexed in-range core,
  * everything else is NOISE.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import _bitmat
from .core import NOISE, DbscanParams, Labeling, PointSet, canonicalize


@dataclass
class OracleTrace:
    """Per-stage wall times (ms) and the number of core points found."""

    dist_sq_ms: float
    cluster_build_ms: float
    merge_ms: float
    core_count: int


def brute_force_neighbors(points: PointSet, i: int, params: DbscanParams) -> set:
    """All j with distSq(i, j) <= eps_sq, including i itself."""
    if not 0 <= i < points.n:
        raise IndexError(f"point index {i} out of range [0, {points.n})")
    xs, ys, zs = points.coords_soa
    d = (xs - xs[i]) ** 2 + (ys - ys[i]) ** 2 + (zs - zs[i]) ** 2
    return set(int(j) for j in np.nonzero(d <= params.eps_sq)[0])


def serial_dbscan(points: PointSet, params: DbscanParams):
    """Reference clustering; returns (Labeling, OracleTrace).

    The full n x n float64 distance matrix is materialized in stage 1
    (about 8*n*n bytes), re-read in stage 2, and freed before stage 3.
    """
    n = points.n
    xs, ys, zs = points.coords_soa
    eps_sq = params.eps_sq

    # stage 1: squared distance matrix, one row at a time
    t0 = time.perf_counter()
    dist_sq = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        dx = xs - xs[i]
        row = dx * dx
        dy = ys - ys[i]
        row += dy * dy
        dz = zs - zs[i]
        row += dz * dz
        dist_sq[i] = row
    t1 = time.perf_counter()

    # stage 2: neighborhoods (bit-packed rows), neighbor counts, core flags
    neighbors = np.empty((n, _bitmat.row_bytes(n)), dtype=np.uint8)
    counts = np.empty(n, dtype=np.int64)
    for i in range(n):
        in_range = dist_sq[i] <= eps_sq
        counts[i] = np.count_nonzero(in_range)
        neighbors[i] = np.packbits(in_range)
    core = counts >= params.min_pts
    t2 = time.perf_counter()
    del dist_sq

    # stage 3: connect cores (BFS over core-core in-range pairs), attach
    # borders to their lowest-indexed in-range core, label the rest NOISE
    labels = np.full(n, NOISE, dtype=np.int64)
    next_id = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != NOISE:
            continue
        labels[seed] = next_id
        stack = [seed]
        while stack:
            c = stack.pop()
            reachable = _bitmat.unpack_row(neighbors[c], n) & core
            fresh = np.nonzero(reachable & (labels == NOISE))[0]
            labels[fresh] = next_id
            stack.extend(int(q) for q in fresh)
        next_id += 1
    for p in np.nonzero(~core)[0]:
        in_range_cores = np.nonzero(_bitmat.unpack_row(neighbors[p], n) & core)[0]
        if in_range_cores.size:
            labels[p] = labels[in_range_cores[0]]
    labeling = canonicalize(Labeling(labels))
    t3 = time.perf_counter()

    trace = OracleTrace(
        dist_sq_ms=(t1 - t0) * 1e3,
        cluster_build_ms=(t2 - t1) * 1e3,
        merge_ms=(t3 - t2) * 1e3,
        core_count=int(core.sum()),
    )
    return labeling, trace
