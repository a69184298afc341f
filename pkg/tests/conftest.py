"""Shared test helpers: margin-safe instance generation and independent
graph oracles used to cross-check the library's own algorithms."""

import numpy as np
import pytest

from densescan import PointSet, generate_blobs

# the float32 algebraic rewrite is only pinned down when every pair's
# squared distance stays at least this far from eps^2
MARGIN = 1e-2
_GAP = 2.2e-2  # required gap around the chosen eps^2 (> 2 * MARGIN)


def pair_dist_sq(points: PointSet) -> np.ndarray:
    """All pairwise squared distances (i < j), float64, brute force."""
    xs, ys, zs = points.coords_soa
    d = (xs[:, None] - xs) ** 2 + (ys[:, None] - ys) ** 2 + (zs[:, None] - zs) ** 2
    return d[np.triu_indices(points.n, 1)]


def margin_safe_eps(points: PointSet, rng: np.random.Generator) -> float:
    """An eps whose square sits in a wide gap of the pair-distance
    distribution, so the algebraic variant cannot flip any pair.

    Falls back to an eps beyond the largest pair distance when no
    interior gap is wide enough.
    """
    if points.n == 1:
        return 0.5
    dist_sq = np.unique(pair_dist_sq(points))
    top = float(dist_sq[-1])
    candidates = []
    if dist_sq[0] > _GAP:  # below the smallest distance: everything isolated
        candidates.append(dist_sq[0] / 2.0)
    gaps = np.diff(dist_sq)
    wide = np.nonzero(gaps > _GAP)[0]
    candidates.extend((dist_sq[g] + dist_sq[g + 1]) / 2.0 for g in wide)
    if candidates:
        eps_sq = float(candidates[int(rng.integers(len(candidates)))])
    else:
        eps_sq = top + 1.0  # everything connected
    return float(np.sqrt(eps_sq))


def random_margin_instance(rng: np.random.Generator, max_n: int = 2000):
    """A random blob/noise mix with a margin-safe eps and random min_pts.

    Sizes are log-uniform over [1, max_n] so small edge cases dominate
    while large instances still appear.
    """
    n = int(np.exp(rng.uniform(0.0, np.log(max_n))))
    n = max(1, min(n, max_n))
    k = int(rng.integers(1, min(5, n) + 1))
    spread = float(rng.uniform(0.02, 0.2))
    noise = float(rng.uniform(0.0, 0.3))
    points = generate_blobs(n, k, spread, noise, int(rng.integers(2**31)))
    eps = margin_safe_eps(points, rng)
    min_pts = int(rng.integers(1, 9))
    return points, eps, min_pts


def bfs_components(adj: np.ndarray) -> np.ndarray:
    """Connected-component ids of a symmetric boolean adjacency matrix.

    Plain breadth-first search; independent of the library's Warshall
    and merge code paths.
    """
    m = adj.shape[0]
    comp = np.full(m, -1, dtype=np.int64)
    next_id = 0
    for start in range(m):
        if comp[start] >= 0:
            continue
        comp[start] = next_id
        frontier = [start]
        while frontier:
            node = frontier.pop()
            for other in np.nonzero(adj[node])[0]:
                if comp[other] < 0:
                    comp[other] = next_id
                    frontier.append(int(other))
        next_id += 1
    return comp


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
