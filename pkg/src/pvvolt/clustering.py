"""Deflation clustering of the stacked power matrix.

Each pass extracts a sparse rank-one factor from the residual, puts every row
with a positive left-vector entry into a new cluster, and subtracts
``sigma x y^T``. Rows never picked up form the final, remainder cluster.
Clusters may overlap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroMatrix
from .sparse_svd import SparseFactor, SparseSvdConfig, dominant_pair, procedure

log = logging.getLogger(__name__)

# Residual energy below this fraction of the input counts as fully explained.
EXHAUSTED_RTOL = 1e-20


@dataclass(frozen=True)
class ClusterSet:
    """Clusters over rows of H; the last entry of ``clusters`` is the remainder.

    ``bases[t]`` is the right vector that defined ``clusters[t]``. The optional
    ``spare_factor`` is one further factor of the final residual, reported
    but not used for grouping. ``energy`` holds ``||H_t||_F^2`` before each
    pass and after the last one.
    """

    clusters: list
    bases: list
    factors: list
    spare_factor: SparseFactor | None = None
    energy: list = field(default_factory=list)
    n_rows: int = 0

    @property
    def C(self) -> int:
        return len(self.clusters)

    @property
    def remainder(self) -> np.ndarray:
        return self.clusters[-1]

    def for_block(self, start: int, stop: int) -> list:
        """Cluster membership restricted to rows ``[start, stop)``, re-indexed from 0."""
        return [c[(c >= start) & (c < stop)] - start for c in self.clusters]

    def to_json(self) -> dict:
        return {str(k + 1): [int(i) for i in c] for k, c in enumerate(self.clusters)}


def assign_cluster(x) -> np.ndarray:
    """Rows whose left-vector entry is strictly positive."""
    return np.flatnonzero(np.asarray(x) > 0)


def run_clustering(
    H,
    config: SparseSvdConfig = SparseSvdConfig(),
    max_clusters: int = 3,
    spare: bool = True,
) -> ClusterSet:
    """Group the rows of ``H`` into at most ``max_clusters`` clusters.

    Stops early when a factor's left vector has at most one nonzero entry, when
    it collapses to zero, or when the residual has no energy left.
    """
    if max_clusters < 2:
        raise ValueError("max_clusters must be >= 2")
    H = np.asarray(H, dtype=float)
    total = float(np.sum(H**2))
    if total == 0.0:
        raise ZeroMatrix("run_clustering needs a nonzero matrix")
    m = H.shape[0]
    residual = H.copy()
    clusters, bases, factors = [], [], []
    energy = [total]
    for t in range(max_clusters - 1):
        factor = procedure(residual, config)
        if factor.zero_solution:
            log.info("pass %d: l1 step removed every row; stopping", t + 1)
            break
        clusters.append(assign_cluster(factor.x))
        bases.append(factor.y)
        factors.append(factor)
        residual = residual - factor.sigma * np.outer(factor.x, factor.y)
        energy.append(float(np.sum(residual**2)))
        if factor.support <= 1:
            log.info("pass %d: single-row factor; stopping", t + 1)
            break
        if energy[-1] <= EXHAUSTED_RTOL * total:
            log.info("pass %d: residual exhausted; stopping", t + 1)
            break
    covered = np.zeros(m, dtype=bool)
    for c in clusters:
        covered[c] = True
    clusters.append(np.flatnonzero(~covered))

    spare_factor = None
    if spare and energy[-1] > EXHAUSTED_RTOL * total:
        spare_factor = procedure(residual, config)
    return ClusterSet(clusters, bases, factors, spare_factor, energy, m)


def singular_spectrum(H, count: int) -> np.ndarray:
    """Leading singular values from repeated dominant pairs and exact deflation."""
    H = np.asarray(H, dtype=float)
    if count > min(H.shape):
        raise ValueError(f"count {count} exceeds min dimension {min(H.shape)}")
    residual = H.copy()
    values = np.zeros(count)
    for i in range(count):
        try:
            x, y, _ = dominant_pair(residual)
        except ZeroMatrix:
            break
        sigma = float(x @ residual @ y)
        values[i] = sigma
        residual = residual - sigma * np.outer(x, y)
    return values
