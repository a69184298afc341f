"""End-to-end clustering: kernel variant + merge backend + timings.

Every (variant, backend, thread count) combination yields the same
canonical labeling as the serial reference, with the usual caveat that
the algebraic variant is only pinned down away from the eps^2 margin
band.
"""

import os
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels, merge
from .core import DensescanError, DbscanParams, Labeling, PointSet, canonicalize
from .kernels import KernelVariant, VariantId


class LengthMismatch(DensescanError):
    """Two labelings of different lengths cannot be compared."""


class MergeBackend(Enum):
    ITERATIVE = "iterative"
    WARSHALL = "warshall"


@dataclass
class PipelineConfig:
    """Which kernel rung and merge backend run, and with how many workers."""

    variant: KernelVariant
    merge_backend: MergeBackend = MergeBackend.ITERATIVE
    threads: int = 1
    mem_cap: int | None = None

    def __post_init__(self):
        if not (isinstance(self.threads, (int, np.integer)) and self.threads >= 1):
            raise ValueError(f"threads must be an integer >= 1, got {self.threads!r}")


def default_config() -> PipelineConfig:
    """The fastest combination: fused algebraic kernel, iterative merge,
    all available workers."""
    return PipelineConfig(variant=KernelVariant(VariantId.FUSED_ALGEBRAIC),
                          merge_backend=MergeBackend.ITERATIVE,
                          threads=os.cpu_count() or 1)


@dataclass
class StageTimings:
    """Wall time (ms) per executed stage; dist/cluster are None when the
    variant fused them, fused_ms is None otherwise."""

    dist_ms: float | None = None
    cluster_ms: float | None = None
    fused_ms: float | None = None
    merge_ms: float | None = None
    total_ms: float = 0.0

    def kernel_ms(self) -> float:
        """Time spent producing the neighborhood matrix (stages 1+2)."""
        if self.fused_ms is not None:
            return self.fused_ms
        return (self.dist_ms or 0.0) + (self.cluster_ms or 0.0)


def run_dbscan(points: PointSet, params: DbscanParams, config: PipelineConfig):
    """Cluster `points` with the configured variant and merge backend.

    Returns (Labeling, StageTimings); the labeling is canonical. The
    input PointSet is never mutated (its arrays are frozen anyway).
    """
    t_start = time.perf_counter()
    nbr, valid, dist_ms, cluster_ms, fused_ms = kernels.run_variant(
        points, params, config.variant, config.threads, config.mem_cap)
    t_merge = time.perf_counter()
    if config.merge_backend is MergeBackend.ITERATIVE:
        labeling = merge.merge_iterative(nbr, valid, config.threads)
    else:
        labeling = merge.merge_warshall(nbr, valid, config.threads)
    t_end = time.perf_counter()
    timings = StageTimings(
        dist_ms=dist_ms,
        cluster_ms=cluster_ms,
        fused_ms=fused_ms,
        merge_ms=(t_end - t_merge) * 1e3,
        total_ms=(t_end - t_start) * 1e3,
    )
    return labeling, timings


def labelings_equivalent(a: Labeling, b: Labeling) -> bool:
    """True iff the labelings are identical after canonicalization.

    Noise must match noise position by position; cluster ids only have
    to agree up to relabeling.
    """
    if a.n != b.n:
        raise LengthMismatch(f"labelings have lengths {a.n} and {b.n}")
    return bool(np.array_equal(canonicalize(a).labels, canonicalize(b).labels))


def first_difference(a: Labeling, b: Labeling) -> int | None:
    """Index of the first disagreement between canonical forms, if any."""
    if a.n != b.n:
        raise LengthMismatch(f"labelings have lengths {a.n} and {b.n}")
    ca = canonicalize(a).labels
    cb = canonicalize(b).labels
    diff = np.nonzero(ca != cb)[0]
    return int(diff[0]) if diff.size else None
