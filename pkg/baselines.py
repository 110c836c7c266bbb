"""
Reference clustering algorithms: Lloyd's K-means with K-means++ seeding and
fuzzy c-means for a fuzzifier m > 1.

Both draw every random number from one numpy Generator seeded by the caller,
so a (dataset, K, seed) triple always yields the same result.
"""
import logging
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.spatial.distance import cdist

from objective import PointsLike, _points
from pkm_errors import InputError
from pkm_types import ClusterResult, IterationRecord, ProbabilityMatrix, init_probabilities, labels_from

logger = logging.getLogger(__name__)


@dataclass
class FcmConfig:
    m: float = 1.3
    max_iterations: int = 300
    tolerance: float = 1e-5
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.m > 1.0:
            raise InputError(f"FCM needs a fuzzifier m > 1, got {self.m}")
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise InputError("FCM tolerance must be positive and max_iterations at least 1")

    def to_dict(self) -> dict:
        return {"m": self.m, "max_iterations": self.max_iterations, "tolerance": self.tolerance, "seed": self.seed}


def _check_k(n_clusters: int, n_points: int):
    if not 1 <= n_clusters <= n_points:
        raise InputError(f"Need 1 <= K <= L, got K={n_clusters}, L={n_points}")


def kmeans_plusplus_init(points: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    """D^2 sampling of initial centers."""
    n_points = points.shape[0]
    chosen = [int(rng.integers(n_points))]
    closest = cdist(points, points[chosen], "sqeuclidean").ravel()
    for _ in range(1, n_clusters):
        total = closest.sum()
        if total > 0:
            index = int(rng.choice(n_points, p=closest / total))
        else:
            # every point already coincides with a center
            remaining = np.setdiff1d(np.arange(n_points), chosen)
            index = int(rng.choice(remaining))
        chosen.append(index)
        closest = np.minimum(closest, cdist(points, points[[index]], "sqeuclidean").ravel())
    return points[chosen].copy()


def _sse(points: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    return float(np.sum((points - centers[labels]) ** 2))


def kmeans_pp(X: PointsLike, n_clusters: int, seed=None, max_iterations: int = 300) -> ClusterResult:
    points = _points(X)
    n_points = points.shape[0]
    _check_k(n_clusters, n_points)
    rng = np.random.default_rng(seed)
    started = time.perf_counter()

    centers = kmeans_plusplus_init(points, n_clusters, rng)
    labels = np.full(n_points, -1)
    trace: List[IterationRecord] = []
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        distances = cdist(points, centers, "sqeuclidean")
        new_labels = np.argmin(distances, axis=1)
        if np.array_equal(new_labels, labels):
            converged = True
            iteration -= 1
            break
        labels = new_labels

        for j in range(n_clusters):
            members = labels == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its own center
                farthest = int(np.argmax(np.sum((points - centers[labels]) ** 2, axis=1)))
                logger.debug("Cluster %d emptied; re-seeding at point %d", j, farthest)
                centers[j] = points[farthest]
                labels[farthest] = j

        trace.append(
            IterationRecord(
                iteration=iteration,
                objective=_sse(points, labels, centers),
                step_length=0.0,
                active_count=0,
                wall_time=time.perf_counter() - started,
            )
        )

    return ClusterResult(
        probabilities=ProbabilityMatrix.one_hot(labels, n_clusters),
        centers=centers,
        labels=labels.astype(int),
        objective=_sse(points, labels, centers),
        trace=trace,
        method="kmeanspp",
        iterations=iteration,
        converged=converged,
        stop_reason="assignments_stable" if converged else "max_iterations",
        wall_time=time.perf_counter() - started,
        seed=seed,
    )


def fcm_memberships(points: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    """
    u_ij = 1 / sum_k (|x_i - c_j| / |x_i - c_k|)^(2/(m-1)).

    Computed relative to each row's nearest center so no power overflows. A
    point sitting on a center belongs fully to the first such center.
    """
    squared = cdist(points, centers, "sqeuclidean")
    nearest = squared.min(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        weights = (nearest / squared) ** (1.0 / (m - 1.0))
    coincident = nearest.ravel() <= 0.0
    weights[coincident] = 0.0
    weights[coincident, np.argmin(squared[coincident], axis=1)] = 1.0
    return weights / weights.sum(axis=1, keepdims=True)


def fcm_centers(points: np.ndarray, memberships: np.ndarray, m: float) -> np.ndarray:
    powered = memberships ** m
    return (powered.T @ points) / powered.sum(axis=0)[:, None]


def fcm_objective(points: np.ndarray, memberships: np.ndarray, centers: np.ndarray, m: float) -> float:
    return float(np.sum((memberships ** m) * cdist(points, centers, "sqeuclidean")))


def fcm(X: PointsLike, n_clusters: int, cfg: Optional[FcmConfig] = None) -> ClusterResult:
    cfg = cfg or FcmConfig()
    points = _points(X)
    _check_k(n_clusters, points.shape[0])
    started = time.perf_counter()

    memberships = init_probabilities(points.shape[0], n_clusters, cfg.seed).entries
    centers = fcm_centers(points, memberships, cfg.m)
    trace: List[IterationRecord] = []
    converged = False
    iteration = 0
    for iteration in range(1, cfg.max_iterations + 1):
        updated = fcm_memberships(points, centers, cfg.m)
        change = float(np.max(np.abs(updated - memberships)))
        memberships = updated
        centers = fcm_centers(points, memberships, cfg.m)
        trace.append(
            IterationRecord(
                iteration=iteration,
                objective=fcm_objective(points, memberships, centers, cfg.m),
                step_length=change,
                active_count=0,
                wall_time=time.perf_counter() - started,
            )
        )
        if change < cfg.tolerance:
            converged = True
            break

    probabilities = ProbabilityMatrix(memberships)
    return ClusterResult(
        probabilities=probabilities,
        centers=centers,
        labels=labels_from(probabilities),
        objective=fcm_objective(points, memberships, centers, cfg.m),
        trace=trace,
        method="fcm",
        iterations=iteration,
        converged=converged,
        stop_reason="membership_stable" if converged else "max_iterations",
        wall_time=time.perf_counter() - started,
        seed=cfg.seed,
    )
