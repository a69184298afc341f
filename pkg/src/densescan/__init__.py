"""densescan: dense-matrix DBSCAN with a ladder of blocked CPU kernels.

The library clusters 3-D point sets with the classic three-stage
dense-matrix DBSCAN (pairwise squared distances, boolean neighborhood
matrix with core flags, cluster merging) and exposes each stage as a
set of interchangeable kernel variants whose outputs are checked
against a single-threaded float64 reference. A benchmark CLI profiles
the stages and reports per-variant speedups.
"""

from .core import (
    NOISE,
    DbscanParams,
    DensescanError,
    EmptyDataset,
    InvalidParams,
    Labeling,
    ParseError,
    PointSet,
    canonicalize,
    generate_blobs,
    load_points,
    validate_params,
    write_labels,
    write_points,
)
from .kernels import (
    ALGEBRAIC_MARGIN,
    DEFAULT_MEM_CAP,
    MEM_CAP_ENV_VAR,
    CapacityExceeded,
    DistSqMatrix,
    FlopFormula,
    KernelVariant,
    NeighborhoodMatrix,
    ValidVector,
    VariantId,
    build_clusters_from_dist,
    dist_baseline,
    dist_soa,
    dist_tiled,
    flop_count,
    fused_build,
    fused_build_algebraic,
)
from .merge import (
    CoreAdjacency,
    InconsistentInput,
    MergeAudit,
    MergeState,
    build_core_adjacency,
    merge_iterative,
    merge_warshall,
    warshall_closure,
)
from .oracle import OracleTrace, brute_force_neighbors, serial_dbscan
from .pipeline import (
    LengthMismatch,
    MergeBackend,
    PipelineConfig,
    StageTimings,
    default_config,
    first_difference,
    labelings_equivalent,
    run_dbscan,
)

__version__ = "0.1.0"
