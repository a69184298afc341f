"""Domain types, parameter validation, dataset generation and file I/O.

Everything downstream works on 3-D point sets. Points are held in two
mirrored layouts: point-major (n records of x, y, z) and
coordinate-major (three length-n arrays), so kernels can pick whichever
traversal they are built around. Coordinates are float64 here; kernels
narrow to float32 on load.
"""

import math
from dataclasses import dataclass

import numpy as np

NOISE = -1


class DensescanError(Exception):
    """Base class for errors raised by this package."""


class InvalidParams(DensescanError):
    """A parameter failed validation; `field` names the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ParseError(DensescanError):
    """A point file line could not be parsed."""

    def __init__(self, line_no: int, token: str, message: str):
        super().__init__(f"line {line_no}: {message} ({token!r})")
        self.line_no = line_no
        self.token = token


class EmptyDataset(DensescanError):
    """A point file contained no points."""


class PointSet:
    """n points in 3-D, stored in both point-major and coordinate-major layouts.

    coords_aos has shape (n, 3); coords_soa has shape (3, n) and mirrors
    the same values. Both arrays are C-contiguous, float64 and frozen
    after construction, so a PointSet can be shared across workers.
    """

    def __init__(self, coords):
        aos = np.ascontiguousarray(coords, dtype=np.float64)
        if aos.ndim != 2 or aos.shape[1] != 3:
            raise ValueError(f"expected (n, 3) coordinates, got shape {aos.shape}")
        if aos.shape[0] < 1:
            raise ValueError("a PointSet needs at least one point")
        if not np.all(np.isfinite(aos)):
            raise ValueError("coordinates must be finite")
        soa = np.ascontiguousarray(aos.T)
        aos.flags.writeable = False
        soa.flags.writeable = False
        self.n = aos.shape[0]
        self.coords_aos = aos
        self.coords_soa = soa

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"PointSet(n={self.n})"


@dataclass(frozen=True)
class DbscanParams:
    """Neighborhood radius and core-point threshold.

    eps_sq is cached once at validation time; all distance comparisons
    are made against the squared radius.
    """

    eps: float
    eps_sq: float
    min_pts: int


def validate_params(eps: float, min_pts: int) -> DbscanParams:
    """Validate (eps, min_pts) and cache eps squared."""
    if not (isinstance(eps, (int, float)) and math.isfinite(eps) and eps > 0):
        raise InvalidParams("eps", f"radius must be a positive finite real, got {eps!r}")
    if not (isinstance(min_pts, (int, np.integer)) and min_pts >= 1):
        raise InvalidParams("min_pts", f"threshold must be an integer >= 1, got {min_pts!r}")
    eps = float(eps)
    return DbscanParams(eps=eps, eps_sq=eps * eps, min_pts=int(min_pts))


@dataclass
class Labeling:
    """Per-point cluster ids; NOISE (-1) marks unclustered points."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def cluster_count(self) -> int:
        return int(np.unique(self.labels[self.labels != NOISE]).size)

    def noise_count(self) -> int:
        return int(np.count_nonzero(self.labels == NOISE))


def canonicalize(labeling: Labeling) -> Labeling:
    """Relabel clusters to 0, 1, 2, ... in order of first appearance.

    NOISE entries are left untouched. Idempotent, and the basis for
    comparing labelings across backends.
    """
    labels = labeling.labels
    out = np.full(labels.shape, NOISE, dtype=np.int64)
    mask = labels != NOISE
    if not mask.any():
        return Labeling(out)
    ids, first_pos = np.unique(labels[mask], return_index=True)
    order = np.argsort(first_pos, kind="stable")
    remap = np.empty(ids.size, dtype=np.int64)
    remap[order] = np.arange(ids.size)
    out[mask] = remap[np.searchsorted(ids, labels[mask])]
    return Labeling(out)


def load_points(path) -> PointSet:
    """Read a text point file: one `x y z` (or `x,y,z`) triple per line.

    Blank lines and lines starting with '#' are skipped. Raises
    ParseError with the 1-based line number on malformed lines,
    EmptyDataset if nothing remains, OSError on I/O failure.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 3:
                raise ParseError(line_no, line, f"expected 3 coordinates, found {len(parts)}")
            values = []
            for token in parts:
                try:
                    v = float(token)
                except ValueError:
                    raise ParseError(line_no, token, "not a number") from None
                if not math.isfinite(v):
                    raise ParseError(line_no, token, "coordinate must be finite")
                values.append(v)
            rows.append(values)
    if not rows:
        raise EmptyDataset(f"no points in {path}")
    return PointSet(np.array(rows, dtype=np.float64))


def write_points(points: PointSet, path) -> None:
    """Write a point file that load_points reads back value-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in points.coords_aos:
            # %.17g round-trips any float64
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def write_labels(labeling: Labeling, path) -> None:
    """Write one signed integer label per line, -1 for noise."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in labeling.labels:
            fh.write(f"{int(v)}\n")


def generate_blobs(n: int, k: int, spread: float, noise_fraction: float,
                   seed: int) -> PointSet:
    """Generate k Gaussian blobs plus uniform background noise, seeded.

    Blob centers sit on a coarse integer lattice with pitch
    max(10 * spread, 1), which keeps centers at least 10 standard
    deviations apart so the blobs stay separable. Noise points are
    uniform over the lattice bounding box padded by half a pitch.
    Deterministic: identical arguments give bitwise-identical points.
    """
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise InvalidParams("n", f"point count must be >= 1, got {n!r}")
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= n):
        raise InvalidParams("k", f"cluster count must satisfy 1 <= k <= n, got {k!r}")
    if not (isinstance(spread, (int, float)) and math.isfinite(spread) and spread >= 0):
        raise InvalidParams("spread", f"spread must be a finite real >= 0, got {spread!r}")
    if not (isinstance(noise_fraction, (int, float)) and 0.0 <= noise_fraction <= 1.0):
        raise InvalidParams("noise_fraction",
                            f"noise fraction must lie in [0, 1], got {noise_fraction!r}")

    rng = np.random.default_rng(seed)
    pitch = max(10.0 * float(spread), 1.0)
    side = math.ceil(k ** (1.0 / 3.0))
    cells = np.array([(i, j, l)
                      for l in range(side)
                      for j in range(side)
                      for i in range(side)][:k], dtype=np.float64)
    centers = cells * pitch

    n_noise = min(int(round(noise_fraction * n)), n - k)
    n_blob = n - n_noise
    counts = np.full(k, n_blob // k, dtype=np.int64)
    counts[: n_blob % k] += 1

    chunks = []
    for center, count in zip(centers, counts):
        chunks.append(center + rng.normal(0.0, float(spread), size=(int(count), 3)))
    if n_noise:
        lo = centers.min(axis=0) - pitch / 2.0
        hi = centers.max(axis=0) + pitch / 2.0
        chunks.append(rng.uniform(lo, hi, size=(n_noise, 3)))
    return PointSet(np.concatenate(chunks, axis=0))
