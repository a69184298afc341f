"""Stage 3: merging primitive clusters into final clusters.

Two interchangeable backends produce the same labeling:

  merge_iterative   monotone target-merge. Targets are visited in
                    ascending point order; every still-live cluster
                    whose bit is set in the target row is absorbed
                    (row OR-ed into the target, liveness cleared), and
                    the pass repeats until the target stops growing, so
                    reachability chains close before the next target.
                    Bits only ever flip 0->1 and liveness only 1->0,
                    which is what makes the concurrent source scans
                    safe without locks.

  merge_warshall    transitive closure of the core-to-core adjacency by
                    the Warshall recurrence; closure components become
                    the clusters.

Both attach non-core border points afterwards to the cluster of their
lowest-indexed in-range core, matching the serial reference.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _bitmat
from ._parallel import run_partitioned, split_ranges
from .core import NOISE, DensescanError, Labeling, canonicalize
from .kernels import NeighborhoodMatrix, ValidVector

# OR-reduction work (rows x row bytes) above which worker threads help
_PARALLEL_OR_THRESHOLD = 1 << 21


class InconsistentInput(DensescanError):
    """The valid vector disagrees with the neighbor counts."""


@dataclass
class MergeAudit:
    """Observed mutation tally for instrumented merge runs.

    A correct run shows zero bit downgrades (1->0) and zero valid
    upgrades (0->1); the counterpart fields tally the expected monotone
    transitions.
    """

    bit_upgrades: int = 0
    bit_downgrades: int = 0
    valid_upgrades: int = 0
    valid_downgrades: int = 0
    merge_events: int = 0

    def record_bits(self, before: np.ndarray, after: np.ndarray) -> None:
        self.bit_upgrades += _bitmat.popcount(after & ~before)
        self.bit_downgrades += _bitmat.popcount(before & ~after)

    def record_valid(self, before: np.ndarray, after: np.ndarray) -> None:
        self.valid_upgrades += int(np.count_nonzero(after & ~before))
        self.valid_downgrades += int(np.count_nonzero(before & ~after))


@dataclass
class MergeState:
    """Working state of the iterative merge.

    bits and valid are the caller's arrays, mutated in place; core is a
    frozen snapshot of the initial liveness (the core-point flags).
    """

    bits: np.ndarray
    valid: np.ndarray
    core: np.ndarray
    audit: MergeAudit | None = None

    def absorb(self, target: int, sources: np.ndarray, threads: int) -> None:
        """OR the source rows into the target row, then retire the sources."""
        merged = _or_rows(self.bits, sources, threads)
        if self.audit is not None:
            before = self.bits[target].copy()
            after = before | merged
            self.audit.record_bits(before, after)
            before_valid = self.valid.copy()
            self.valid[sources] = False
            self.audit.record_valid(before_valid, self.valid)
            self.audit.merge_events += 1
            self.bits[target] = after
        else:
            self.bits[target] |= merged
            self.valid[sources] = False


def _or_rows(bits: np.ndarray, rows: np.ndarray, threads: int) -> np.ndarray:
    """OR of the selected packed rows; sources may be scanned concurrently."""
    width = bits.shape[1]
    if threads > 1 and rows.size * width >= _PARALLEL_OR_THRESHOLD:
        parts = split_ranges(rows.size, threads)
        partials = np.zeros((len(parts), width), dtype=np.uint8)

        def worker(slot_lo, slot_hi):
            for slot in range(slot_lo, slot_hi):
                lo, hi = parts[slot]
                for c0 in range(lo, hi, 2048):
                    chunk = rows[c0:min(c0 + 2048, hi)]
                    partials[slot] |= np.bitwise_or.reduce(bits[chunk], axis=0)

        run_partitioned(len(parts), len(parts), worker)
        return np.bitwise_or.reduce(partials, axis=0)
    acc = np.zeros(width, dtype=np.uint8)
    for c0 in range(0, rows.size, 2048):
        acc |= np.bitwise_or.reduce(bits[rows[c0:c0 + 2048]], axis=0)
    return acc


def _attach_borders(bits: np.ndarray, core: np.ndarray, labels: np.ndarray) -> None:
    """Label each non-core point by its lowest-indexed in-range core.

    Non-core rows are never mutated by the merge, so they still hold the
    original neighborhoods.
    """
    n = core.shape[0]
    non_core = np.nonzero(~core)[0]
    for b0 in range(0, non_core.size, 512):
        block = non_core[b0:b0 + 512]
        rows = _bitmat.unpack_rows(bits[block], n) & core[None, :]
        hit = rows.any(axis=1)
        first_core = rows.argmax(axis=1)
        sel = block[hit]
        labels[sel] = labels[first_core[hit]]


def merge_iterative(nbr: NeighborhoodMatrix, valid_vec: ValidVector,
                    threads: int = 1, audit: MergeAudit | None = None) -> Labeling:
    """Monotone target-merge backend. Returns the canonical labeling.

    Mutates nbr.bits (0->1 only) and valid_vec.valid (1->0 only) in
    place; pass an audit to record the observed transitions.
    """
    n = nbr.n
    expected = nbr.neighbor_count >= valid_vec.min_pts
    if not np.array_equal(expected, valid_vec.valid):
        bad = int(np.nonzero(expected != valid_vec.valid)[0][0])
        raise InconsistentInput(
            f"valid[{bad}] disagrees with neighbor_count[{bad}] >= min_pts")

    state = MergeState(bits=nbr.bits, valid=valid_vec.valid,
                       core=valid_vec.valid.copy(), audit=audit)
    for target in range(n):
        if not state.valid[target]:
            continue
        while True:
            reach = _bitmat.unpack_row(state.bits[target], n)
            candidates = reach & state.valid & state.core
            candidates[target] = False
            sources = np.nonzero(candidates)[0]
            if sources.size == 0:
                break
            state.absorb(target, sources, threads)

    labels = np.full(n, NOISE, dtype=np.int64)
    for target in np.nonzero(state.valid)[0]:
        members = _bitmat.unpack_row(state.bits[target], n) & state.core
        labels[members] = target
    _attach_borders(state.bits, state.core, labels)
    return canonicalize(Labeling(labels))


@dataclass
class CoreAdjacency:
    """Core-to-core in-range relation, bit-packed, with the index map
    from core rank back to point index."""

    m: int
    core_indices: np.ndarray
    bits: np.ndarray


def build_core_adjacency(nbr: NeighborhoodMatrix, valid_vec: ValidVector) -> CoreAdjacency:
    """Restrict the neighborhood matrix to core rows and columns."""
    core_indices = np.nonzero(valid_vec.valid)[0]
    m = core_indices.size
    adj = np.zeros((m, _bitmat.row_bytes(m)), dtype=np.uint8)
    for b0 in range(0, m, 512):
        block = core_indices[b0:b0 + 512]
        rows = _bitmat.unpack_rows(nbr.bits[block], nbr.n)[:, core_indices]
        adj[b0:b0 + block.size] = _bitmat.pack_rows(rows)
    return CoreAdjacency(m=m, core_indices=core_indices, bits=adj)


def warshall_closure(adj: CoreAdjacency, threads: int = 1) -> CoreAdjacency:
    """Transitive closure by the Warshall recurrence.

    For each pivot k, every row with bit k set absorbs row k; rows are
    updated in parallel within a pivot with a barrier between pivots.
    Expects a symmetric, reflexive input relation.
    """
    m = adj.m
    closed = adj.bits.copy()
    for k in range(m):
        col = _bitmat.column_bits(closed, k)
        col[k] = False
        rows = np.nonzero(col)[0]
        if rows.size == 0:
            continue
        pivot_row = closed[k]
        if threads > 1 and rows.size * closed.shape[1] >= _PARALLEL_OR_THRESHOLD:
            def worker(lo, hi):
                sel = rows[lo:hi]
                closed[sel] |= pivot_row

            run_partitioned(rows.size, threads, worker)
        else:
            closed[rows] |= pivot_row
    return CoreAdjacency(m=m, core_indices=adj.core_indices.copy(), bits=closed)


def merge_warshall(nbr: NeighborhoodMatrix, valid_vec: ValidVector,
                   threads: int = 1) -> Labeling:
    """Transitive-closure backend. Returns the canonical labeling.

    Does not mutate its inputs: the core adjacency is extracted into a
    separate matrix before the closure runs.
    """
    adj = build_core_adjacency(nbr, valid_vec)
    labels = np.full(nbr.n, NOISE, dtype=np.int64)
    if adj.m:
        closure = warshall_closure(adj, threads)
        representative = np.empty(adj.m, dtype=np.int64)
        for b0 in range(0, adj.m, 512):
            b1 = min(b0 + 512, adj.m)
            rows = _bitmat.unpack_rows(closure.bits[b0:b1], adj.m)
            representative[b0:b1] = rows.argmax(axis=1)
        labels[adj.core_indices] = adj.core_indices[representative]
        core = np.zeros(nbr.n, dtype=bool)
        core[adj.core_indices] = True
        _attach_borders(nbr.bits, core, labels)
    return canonicalize(Labeling(labels))
