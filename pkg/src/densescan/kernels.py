"""Stage 1 and 2 kernel variants: squared distances and primitive clusters.

The variants form a ladder of equivalent kernels, each adding one
optimization while keeping the observable output locked down:

  BASELINE         one worker row at a time, point-major (AoS) reads.
  SOA              same arithmetic, coordinate-major (SoA) contiguous reads.
  TILED            column dimension processed in tile_size blocks staged
                   into worker-local buffers and reused across the
                   worker's rows; row coordinates hoisted into locals.
  TILED_UNROLLED   TILED plus fixed unroll_width inner blocks with a
                   scalar epilogue for ragged remainders.
  FUSED            TILED arithmetic, but the comparison against eps^2
                   happens in-flight and only the boolean neighborhood
                   matrix is written; the float matrix never exists.
  FUSED_ALGEBRAIC  FUSED with the distance rewritten as
                   T + P[j] - (X*x_j + Y*y_j + Z*z_j), where the row
                   terms T, X, Y, Z and the per-point norms P are
                   hoisted out of the inner loop.

BASELINE/SOA/TILED/TILED_UNROLLED produce bitwise-identical float32
matrices (same per-entry operation order: x^2 + y^2 + z^2). FUSED is
boolean-equal to the two-stage path on every input. FUSED_ALGEBRAIC
rounds differently, so its boolean output is only guaranteed to match
away from the eps^2 margin band (ALGEBRAIC_MARGIN on unit-scale data).

Kernel arithmetic is float32; the float64 coordinates are narrowed on
load. Work is partitioned by disjoint row ranges, so results are
identical for any thread count.
"""

import os
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _bitmat
from ._parallel import run_partitioned
from .core import DensescanError, DbscanParams, InvalidParams, PointSet

DEFAULT_MEM_CAP = 4 * 1024**3
MEM_CAP_ENV_VAR = "DENSESCAN_MEM_CAP"

# absolute eps^2 band (unit-scale data) inside which the algebraic
# rewrite may classify pairs differently from the direct formula
ALGEBRAIC_MARGIN = 1e-2

# rows processed per inner block; a tuning constant with no effect on
# results (all per-entry arithmetic is elementwise)
_ROW_BLOCK = 256


class CapacityExceeded(DensescanError):
    """An n x n allocation would exceed the configured memory cap."""

    def __init__(self, required_bytes: int, cap_bytes: int):
        super().__init__(
            f"requires {required_bytes} bytes but the memory cap is {cap_bytes} bytes"
            f" (override with {MEM_CAP_ENV_VAR} or mem_cap=)")
        self.required_bytes = required_bytes
        self.cap_bytes = cap_bytes


def resolve_mem_cap(mem_cap=None) -> int:
    """Explicit argument, else the environment variable, else 4 GiB."""
    if mem_cap is not None:
        return int(mem_cap)
    env = os.environ.get(MEM_CAP_ENV_VAR)
    if env is not None:
        return int(env)
    return DEFAULT_MEM_CAP


def _ensure_capacity(required_bytes: int, mem_cap) -> None:
    cap = resolve_mem_cap(mem_cap)
    if required_bytes > cap:
        raise CapacityExceeded(required_bytes, cap)


class VariantId(Enum):
    BASELINE = "baseline"
    SOA = "soa"
    TILED = "tiled"
    TILED_UNROLLED = "tiled-unrolled"
    FUSED = "fused"
    FUSED_ALGEBRAIC = "fused-algebraic"


@dataclass(frozen=True)
class KernelVariant:
    """A rung of the kernel ladder plus its blocking parameters."""

    id: VariantId
    tile_size: int = 256
    unroll_width: int = 32

    def __post_init__(self):
        if not (isinstance(self.unroll_width, (int, np.integer)) and self.unroll_width >= 1):
            raise InvalidParams("unroll_width", f"must be an integer >= 1, got {self.unroll_width!r}")
        if not (isinstance(self.tile_size, (int, np.integer))
                and self.tile_size >= self.unroll_width):
            raise InvalidParams("tile_size",
                                f"must be an integer >= unroll_width, got {self.tile_size!r}")

    def materializes_distance(self) -> bool:
        return self.id in (VariantId.BASELINE, VariantId.SOA,
                           VariantId.TILED, VariantId.TILED_UNROLLED)


@dataclass
class DistSqMatrix:
    """Dense float32 matrix of pairwise squared Euclidean distances."""

    n: int
    values: np.ndarray


@dataclass
class NeighborhoodMatrix:
    """Bit-packed boolean matrix: bit (i, j) set iff distSq(i, j) <= eps^2.

    neighbor_count[i] is the popcount of row i (includes i itself).
    """

    n: int
    bits: np.ndarray
    neighbor_count: np.ndarray

    def row(self, i: int) -> np.ndarray:
        """Row i as an unpacked boolean vector."""
        return _bitmat.unpack_row(self.bits[i], self.n)

    def to_bool(self) -> np.ndarray:
        """Whole matrix as an unpacked boolean array (small n only)."""
        return _bitmat.unpack_rows(self.bits, self.n)


@dataclass
class ValidVector:
    """Per-point liveness: valid[i] iff neighbor_count[i] >= min_pts."""

    valid: np.ndarray
    min_pts: int


def _narrow_soa(points: PointSet):
    soa = points.coords_soa.astype(np.float32)
    return soa[0], soa[1], soa[2]


def _dist_rowwise(points: PointSet, threads: int, mem_cap, col_source) -> DistSqMatrix:
    """Shared skeleton of the two row-at-a-time variants."""
    n = points.n
    _ensure_capacity(4 * n * n, mem_cap)
    col_x, col_y, col_z = col_source
    out = np.empty((n, n), dtype=np.float32)

    def worker(lo, hi):
        tmp = np.empty(n, dtype=np.float32)
        for i in range(lo, hi):
            row = out[i]
            np.subtract(col_x, col_x[i], out=row)
            np.multiply(row, row, out=row)
            np.subtract(col_y, col_y[i], out=tmp)
            np.multiply(tmp, tmp, out=tmp)
            np.add(row, tmp, out=row)
            np.subtract(col_z, col_z[i], out=tmp)
            np.multiply(tmp, tmp, out=tmp)
            np.add(row, tmp, out=row)

    run_partitioned(n, threads, worker)
    return DistSqMatrix(n=n, values=out)


def dist_baseline(points: PointSet, threads: int = 1, mem_cap=None) -> DistSqMatrix:
    """Ladder rung 0: direct formula, point-major (strided) coordinate reads."""
    aos = points.coords_aos.astype(np.float32)
    return _dist_rowwise(points, threads, mem_cap, (aos[:, 0], aos[:, 1], aos[:, 2]))


def dist_soa(points: PointSet, threads: int = 1, mem_cap=None) -> DistSqMatrix:
    """Ladder rung 1: identical arithmetic, contiguous coordinate-major reads."""
    return _dist_rowwise(points, threads, mem_cap, _narrow_soa(points))


def _stage_tiles(xs, ys, zs, n, tile_size):
    """Copy each column tile once into worker-local staging buffers."""
    tiles = []
    for c0 in range(0, n, tile_size):
        c1 = min(c0 + tile_size, n)
        tiles.append((c0, xs[c0:c1].copy(), ys[c0:c1].copy(), zs[c0:c1].copy()))
    return tiles


def _direct_block(px, py, pz, tx, ty, tz, seg, tmp):
    """seg <- (tx-px)^2 + (ty-py)^2 + (tz-pz)^2, elementwise over a block.

    The accumulation order (x term, then y, then z) is shared by every
    direct-formula variant; it is what makes them bitwise-identical.
    """
    np.subtract(tx, px, out=seg)
    np.multiply(seg, seg, out=seg)
    np.subtract(ty, py, out=tmp)
    np.multiply(tmp, tmp, out=tmp)
    np.add(seg, tmp, out=seg)
    np.subtract(tz, pz, out=tmp)
    np.multiply(tmp, tmp, out=tmp)
    np.add(seg, tmp, out=seg)


def _scalar_distance(px, py, pz, tx, ty, tz):
    """One distance in float32 scalars, same operation order as the blocks."""
    dx = tx - px
    seg = dx * dx
    dy = ty - py
    seg = seg + dy * dy
    dz = tz - pz
    return seg + dz * dz


def _fill_tile_rows(rows_x, rows_y, rows_z, tile, target, tmp, unroll_width):
    """Compute one (row block) x (tile) slab of squared distances.

    unroll_width=0 processes the whole tile as a single block; otherwise
    the columns are walked in unroll_width sub-blocks with a scalar
    epilogue over the ragged remainder.
    """
    c0, tx, ty, tz = tile
    cb = tx.shape[0]
    px = rows_x[:, None]
    py = rows_y[:, None]
    pz = rows_z[:, None]
    if not unroll_width:
        _direct_block(px, py, pz, tx[None, :], ty[None, :], tz[None, :],
                      target[:, :cb], tmp[:, :cb])
        return
    main = cb - cb % unroll_width
    for b0 in range(0, main, unroll_width):
        b1 = b0 + unroll_width
        _direct_block(px, py, pz, tx[None, b0:b1], ty[None, b0:b1], tz[None, b0:b1],
                      target[:, b0:b1], tmp[:, b0:b1])
    if main < cb:
        for r in range(rows_x.shape[0]):
            rx, ry, rz = rows_x[r], rows_y[r], rows_z[r]
            for j in range(main, cb):
                target[r, j] = _scalar_distance(rx, ry, rz, tx[j], ty[j], tz[j])


def dist_tiled(points: PointSet, variant: KernelVariant, threads: int = 1,
               mem_cap=None) -> DistSqMatrix:
    """Ladder rungs 2-3: tile-staged column blocks, optional inner unrolling.

    Each worker stages every column tile once up front and reuses the
    staged copies for all of its rows; row coordinates are hoisted into
    locals per block. Output is written in contiguous row stripes.
    """
    if variant.id not in (VariantId.TILED, VariantId.TILED_UNROLLED):
        raise ValueError(f"dist_tiled cannot run variant {variant.id.value}")
    n = points.n
    _ensure_capacity(4 * n * n, mem_cap)
    xs, ys, zs = _narrow_soa(points)
    unroll = variant.unroll_width if variant.id is VariantId.TILED_UNROLLED else 0
    out = np.empty((n, n), dtype=np.float32)

    def worker(lo, hi):
        tiles = _stage_tiles(xs, ys, zs, n, variant.tile_size)
        stripe = np.empty((min(_ROW_BLOCK, hi - lo), n), dtype=np.float32)
        tmp = np.empty((stripe.shape[0], variant.tile_size), dtype=np.float32)
        for r0 in range(lo, hi, _ROW_BLOCK):
            r1 = min(r0 + _ROW_BLOCK, hi)
            rb = r1 - r0
            for tile in tiles:
                _fill_tile_rows(xs[r0:r1], ys[r0:r1], zs[r0:r1], tile,
                                stripe[:rb, tile[0]:tile[0] + tile[1].shape[0]],
                                tmp[:rb], unroll)
            out[r0:r1] = stripe[:rb]

    run_partitioned(n, threads, worker)
    return DistSqMatrix(n=n, values=out)


def build_clusters_from_dist(dist: DistSqMatrix, params: DbscanParams,
                             threads: int = 1, mem_cap=None):
    """Stage 2: threshold the distance matrix into the boolean
    neighborhood matrix plus per-row neighbor counts and core flags.

    Rows are whole-owned by workers so the counts need no cross-worker
    accumulation. Returns (NeighborhoodMatrix, ValidVector).
    """
    n = dist.n
    _ensure_capacity(n * _bitmat.row_bytes(n), mem_cap)
    eps32 = np.float32(params.eps_sq)
    bits = np.empty((n, _bitmat.row_bytes(n)), dtype=np.uint8)
    counts = np.empty(n, dtype=np.int64)

    def worker(lo, hi):
        for r0 in range(lo, hi, _ROW_BLOCK):
            r1 = min(r0 + _ROW_BLOCK, hi)
            in_range = dist.values[r0:r1] <= eps32
            counts[r0:r1] = in_range.sum(axis=1)
            bits[r0:r1] = _bitmat.pack_rows(in_range)

    run_partitioned(n, threads, worker)
    valid = counts >= params.min_pts
    return (NeighborhoodMatrix(n=n, bits=bits, neighbor_count=counts),
            ValidVector(valid=valid, min_pts=params.min_pts))


def _fused_skeleton(points: PointSet, params: DbscanParams, threads: int,
                    mem_cap, tile_size: int, fill_block):
    """Shared driver for the two fused variants: tile loop, in-flight
    comparison, packed boolean rows, counts. fill_block(row_slice, tile,
    bool_target, buffers) computes one slab of comparisons.
    """
    n = points.n
    _ensure_capacity(n * _bitmat.row_bytes(n), mem_cap)
    bits = np.empty((n, _bitmat.row_bytes(n)), dtype=np.uint8)
    counts = np.empty(n, dtype=np.int64)

    def worker(lo, hi):
        state = fill_block.stage(lo, hi)
        rows = min(_ROW_BLOCK, hi - lo)
        bool_stripe = np.empty((rows, n), dtype=bool)
        for r0 in range(lo, hi, _ROW_BLOCK):
            r1 = min(r0 + _ROW_BLOCK, hi)
            rb = r1 - r0
            for tile_index in range(len(state.tiles)):
                fill_block(state, r0, r1, tile_index, bool_stripe[:rb])
            counts[r0:r1] = bool_stripe[:rb].sum(axis=1)
            bits[r0:r1] = _bitmat.pack_rows(bool_stripe[:rb])

    run_partitioned(n, threads, worker)
    valid = counts >= params.min_pts
    return (NeighborhoodMatrix(n=n, bits=bits, neighbor_count=counts),
            ValidVector(valid=valid, min_pts=params.min_pts))


class _WorkerState:
    __slots__ = ("tiles", "buf_a", "buf_b", "extra")

    def __init__(self, tiles, tile_size, rows):
        self.tiles = tiles
        self.buf_a = np.empty((rows, tile_size), dtype=np.float32)
        self.buf_b = np.empty((rows, tile_size), dtype=np.float32)
        self.extra = None


class _FusedDirect:
    """Fused stage-1+2 with the direct formula (same values as TILED)."""

    def __init__(self, points, params, tile_size):
        self.xs, self.ys, self.zs = _narrow_soa(points)
        self.eps32 = np.float32(params.eps_sq)
        self.tile_size = tile_size
        self.n = points.n

    def stage(self, lo, hi):
        tiles = _stage_tiles(self.xs, self.ys, self.zs, self.n, self.tile_size)
        return _WorkerState(tiles, self.tile_size, min(_ROW_BLOCK, hi - lo))

    def __call__(self, state, r0, r1, tile_index, bool_stripe):
        c0, tx, ty, tz = state.tiles[tile_index]
        cb = tx.shape[0]
        rb = r1 - r0
        seg = state.buf_a[:rb, :cb]
        tmp = state.buf_b[:rb, :cb]
        _direct_block(self.xs[r0:r1, None], self.ys[r0:r1, None], self.zs[r0:r1, None],
                      tx[None, :], ty[None, :], tz[None, :], seg, tmp)
        np.less_equal(seg, self.eps32, out=bool_stripe[:, c0:c0 + cb])


class _FusedAlgebraic:
    """Fused variant with the rewritten distance.

    Per point j the squared norm P[j] = x^2 + y^2 + z^2 is computed once
    when the tile is staged; per row the terms T (own squared norm) and
    X, Y, Z (doubled coordinates) are hoisted before the column loop.
    The inner loop is T + P[j] - (X*x_j + Y*y_j + Z*z_j) <= eps^2.
    """

    def __init__(self, points, params, tile_size):
        self.xs, self.ys, self.zs = _narrow_soa(points)
        self.eps32 = np.float32(params.eps_sq)
        self.tile_size = tile_size
        self.n = points.n
        norms = self.xs * self.xs
        norms += self.ys * self.ys
        norms += self.zs * self.zs
        self.norms = norms
        two = np.float32(2.0)
        self.dbl_x = two * self.xs
        self.dbl_y = two * self.ys
        self.dbl_z = two * self.zs

    def stage(self, lo, hi):
        tiles = []
        for c0, tx, ty, tz in _stage_tiles(self.xs, self.ys, self.zs, self.n, self.tile_size):
            tiles.append((c0, tx, ty, tz, self.norms[c0:c0 + tx.shape[0]].copy()))
        return _WorkerState(tiles, self.tile_size, min(_ROW_BLOCK, hi - lo))

    def __call__(self, state, r0, r1, tile_index, bool_stripe):
        c0, tx, ty, tz, pt = state.tiles[tile_index]
        cb = tx.shape[0]
        rb = r1 - r0
        cross = state.buf_a[:rb, :cb]
        tmp = state.buf_b[:rb, :cb]
        big_t = self.norms[r0:r1, None]
        np.multiply(self.dbl_x[r0:r1, None], tx[None, :], out=cross)
        np.multiply(self.dbl_y[r0:r1, None], ty[None, :], out=tmp)
        np.add(cross, tmp, out=cross)
        np.multiply(self.dbl_z[r0:r1, None], tz[None, :], out=tmp)
        np.add(cross, tmp, out=cross)
        np.add(big_t, pt[None, :], out=tmp)
        np.subtract(tmp, cross, out=tmp)
        np.less_equal(tmp, self.eps32, out=bool_stripe[:, c0:c0 + cb])


def fused_build(points: PointSet, params: DbscanParams, variant: KernelVariant,
                threads: int = 1, mem_cap=None):
    """Stage 1+2 fused: boolean output identical to
    build_clusters_from_dist(dist_tiled(...)) with no float matrix.
    """
    if variant.id is not VariantId.FUSED:
        raise ValueError(f"fused_build cannot run variant {variant.id.value}")
    return _fused_skeleton(points, params, threads, mem_cap, variant.tile_size,
                           _FusedDirect(points, params, variant.tile_size))


def fused_build_algebraic(points: PointSet, params: DbscanParams,
                          variant: KernelVariant, threads: int = 1, mem_cap=None):
    """Fused stage 1+2 with hoisted-term distance rewrite.

    Matches fused_build exactly on inputs where no pair's squared
    distance falls within ALGEBRAIC_MARGIN of eps^2; pairs inside the
    band may flip either way because the rewrite rounds differently.
    """
    if variant.id is not VariantId.FUSED_ALGEBRAIC:
        raise ValueError(f"fused_build_algebraic cannot run variant {variant.id.value}")
    return _fused_skeleton(points, params, threads, mem_cap, variant.tile_size,
                           _FusedAlgebraic(points, params, variant.tile_size))


def run_variant(points: PointSet, params: DbscanParams, variant: KernelVariant,
                threads: int = 1, mem_cap=None):
    """Run one ladder rung end-to-end to (NeighborhoodMatrix, ValidVector).

    Returns (nbr, valid, dist_ms, cluster_ms, fused_ms); the stage pair
    is populated for matrix-materializing variants, fused_ms otherwise.
    """
    if variant.id is VariantId.FUSED:
        t0 = time.perf_counter()
        nbr, valid = fused_build(points, params, variant, threads, mem_cap)
        return nbr, valid, None, None, (time.perf_counter() - t0) * 1e3
    if variant.id is VariantId.FUSED_ALGEBRAIC:
        t0 = time.perf_counter()
        nbr, valid = fused_build_algebraic(points, params, variant, threads, mem_cap)
        return nbr, valid, None, None, (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    if variant.id is VariantId.BASELINE:
        dist = dist_baseline(points, threads, mem_cap)
    elif variant.id is VariantId.SOA:
        dist = dist_soa(points, threads, mem_cap)
    else:
        dist = dist_tiled(points, variant, threads, mem_cap)
    t1 = time.perf_counter()
    nbr, valid = build_clusters_from_dist(dist, params, threads, mem_cap)
    t2 = time.perf_counter()
    return nbr, valid, (t1 - t0) * 1e3, (t2 - t1) * 1e3, None


# --- instrumented flop counting ------------------------------------------

class FlopFormula(Enum):
    DIRECT = "direct"
    ALGEBRAIC_INNER = "algebraic-inner"


class _Tape:
    __slots__ = ("ops",)

    def __init__(self):
        self.ops = 0


class _Counted:
    """A float that counts the arithmetic performed on it."""

    __slots__ = ("value", "tape")

    def __init__(self, value, tape):
        self.value = value
        self.tape = tape

    def __add__(self, other):
        self.tape.ops += 1
        return _Counted(self.value + other.value, self.tape)

    def __sub__(self, other):
        self.tape.ops += 1
        return _Counted(self.value - other.value, self.tape)

    def __mul__(self, other):
        self.tape.ops += 1
        return _Counted(self.value * other.value, self.tape)


_PROBE_PAIR = ((1.0, 2.0, 3.0), (4.0, 6.0, 3.0))


def flop_count(formula: FlopFormula, pair=_PROBE_PAIR) -> int:
    """Floating-point operations per inner-loop distance evaluation.

    Counts by executing an instrumented scalar evaluator on one pair
    (the count is input-independent). DIRECT evaluates the plain
    three-term formula; ALGEBRAIC_INNER evaluates the rewritten inner
    loop with the row terms and the staged-point norm already hoisted.
    """
    (t, p) = pair
    tape = _Tape()
    if formula is FlopFormula.DIRECT:
        tx, ty, tz = (_Counted(v, tape) for v in t)
        px, py, pz = (_Counted(v, tape) for v in p)
        dx = tx - px
        dy = ty - py
        dz = tz - pz
        total = dx * dx + dy * dy
        total = total + dz * dz
    elif formula is FlopFormula.ALGEBRAIC_INNER:
        # hoisted outside the inner loop: T, X, Y, Z per row and the
        # staged norm P (folded with T at staging time), none counted
        big_t = t[0] * t[0] + t[1] * t[1] + t[2] * t[2]
        norm_p = p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
        base = _Counted(big_t + norm_p, tape)
        x2, y2, z2 = (_Counted(2.0 * v, tape) for v in t)
        px, py, pz = (_Counted(v, tape) for v in p)
        cross = x2 * px + y2 * py
        cross = cross + z2 * pz
        total = base - cross
    else:
        raise ValueError(f"unknown flop formula {formula!r}")
    assert total.value >= 0.0
    return tape.ops
