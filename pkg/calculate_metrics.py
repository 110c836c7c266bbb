"""
Internal (SSE, DBI) and external (NMI, ARI, V-measure) clustering scores, and
the initialization-robustness protocol.
"""
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score, v_measure_score
from sklearn.metrics.cluster import contingency_matrix

from objective import PointsLike, _points
from pkm_errors import IdenticalCenters, InputError
from pkm_types import ClusterResult
from solvers import derive_seed

logger = logging.getLogger(__name__)

NMI_VARIANT = "geometric"


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    row_totals: np.ndarray
    column_totals: np.ndarray
    total: int


def _labels(labels) -> np.ndarray:
    return np.asarray(labels).ravel()


def _check_lengths(labels_a, labels_b):
    if labels_a.shape[0] != labels_b.shape[0]:
        raise InputError(f"Labelings differ in length: {labels_a.shape[0]} vs {labels_b.shape[0]}")


def contingency_table(labels_true, labels_pred) -> ContingencyTable:
    labels_true, labels_pred = _labels(labels_true), _labels(labels_pred)
    _check_lengths(labels_true, labels_pred)
    counts = contingency_matrix(labels_true, labels_pred)
    return ContingencyTable(
        counts=counts,
        row_totals=counts.sum(axis=1),
        column_totals=counts.sum(axis=0),
        total=int(counts.sum()),
    )


def label_means(X: PointsLike, labels) -> np.ndarray:
    """Per-label means; rows for labels with no members are NaN."""
    points = _points(X)
    labels = _labels(labels).astype(int)
    n_labels = int(labels.max()) + 1
    sums = np.zeros((n_labels, points.shape[1]))
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=n_labels).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / counts[:, None]


def sse(X: PointsLike, labels, centers) -> float:
    points = _points(X)
    labels = _labels(labels).astype(int)
    centers = np.asarray(centers, dtype=float)
    return float(np.sum((points - centers[labels]) ** 2))


def dbi(X: PointsLike, labels, centers) -> float:
    """
    Davies-Bouldin index: mean over clusters of max_{k != j} (s_j + s_k) / |c_j - c_k|,
    where s_j is the mean distance of cluster j's members to c_j.
    """
    points = _points(X)
    labels = _labels(labels).astype(int)
    centers = np.asarray(centers, dtype=float)
    present = np.unique(labels)
    if present.size < 2:
        raise InputError("Davies-Bouldin index needs at least two non-empty clusters")

    scatter = np.array(
        [np.linalg.norm(points[labels == j] - centers[j], axis=1).mean() for j in present]
    )
    separation = np.linalg.norm(centers[present][:, None, :] - centers[present][None, :, :], axis=2)
    ratios = np.full(separation.shape, -np.inf)
    for a in range(present.size):
        for b in range(present.size):
            if a == b:
                continue
            if separation[a, b] == 0.0:
                raise IdenticalCenters(int(present[a]), int(present[b]))
            ratios[a, b] = (scatter[a] + scatter[b]) / separation[a, b]
    return float(np.mean(ratios.max(axis=1)))


def _is_constant(labels: np.ndarray) -> bool:
    return np.unique(labels).size <= 1


def nmi(labels_a, labels_b) -> float:
    """Mutual information over sqrt(H(A) H(B)), natural logarithms."""
    labels_a, labels_b = _labels(labels_a), _labels(labels_b)
    _check_lengths(labels_a, labels_b)
    constant_a, constant_b = _is_constant(labels_a), _is_constant(labels_b)
    if constant_a or constant_b:
        # zero entropy on one side: perfect only when both sides are constant
        return 1.0 if constant_a and constant_b else 0.0
    score = normalized_mutual_info_score(labels_a, labels_b, average_method=NMI_VARIANT)
    return float(np.clip(score, 0.0, 1.0))


def ari(labels_a, labels_b) -> float:
    labels_a, labels_b = _labels(labels_a), _labels(labels_b)
    _check_lengths(labels_a, labels_b)
    if labels_a.shape[0] < 2:
        raise InputError("Adjusted Rand index needs at least two points")
    return float(adjusted_rand_score(labels_a, labels_b))


def v_measure(labels_true, labels_pred) -> float:
    labels_true, labels_pred = _labels(labels_true), _labels(labels_pred)
    _check_lengths(labels_true, labels_pred)
    return float(v_measure_score(labels_true, labels_pred))


def evaluate(X: PointsLike, labels, truth=None) -> Dict[str, Any]:
    """All five scores; SSE/DBI use the means of the labeled points as centers."""
    labels = _labels(labels).astype(int)
    means = label_means(X, labels)
    scores: Dict[str, Any] = {"sse": sse(X, labels, means)}
    try:
        scores["dbi"] = dbi(X, labels, means)
    except (InputError, IdenticalCenters) as e:
        logger.warning("DBI undefined: %s", e)
        scores["dbi"] = None
    if truth is not None:
        scores["nmi"] = nmi(truth, labels)
        scores["ari"] = ari(truth, labels)
        scores["vm"] = v_measure(truth, labels)
        scores["nmi_variant"] = NMI_VARIANT
    return scores


def is_permutation_match(labels_true, labels_pred) -> bool:
    """True iff the predicted labeling equals the truth up to renaming clusters."""
    table = contingency_table(labels_true, labels_pred)
    rows, cols = linear_sum_assignment(-table.counts)
    return int(table.counts[rows, cols].sum()) == table.total


def _run_labels(algorithm: Callable, X, seed) -> np.ndarray:
    outcome = algorithm(X, seed)
    if isinstance(outcome, ClusterResult):
        return outcome.labels
    return _labels(outcome)


def robustness(
    X: PointsLike,
    truth,
    algorithm: Callable[[Any, Optional[int]], Any],
    runs: int,
    seed: Optional[int] = 0,
    n_jobs: int = 1,
) -> int:
    """
    Number of runs, out of `runs` randomly initialized ones, whose labeling
    matches `truth` exactly up to relabeling. `algorithm(X, seed)` returns a
    label vector or a ClusterResult; run r uses derive_seed(seed, r).
    """
    if truth is None:
        raise InputError("Robustness needs ground-truth labels")
    if runs <= 0:
        return 0
    truth = _labels(truth)
    seeds = [derive_seed(seed, run) for run in range(runs)]
    labelings = Parallel(n_jobs=n_jobs)(delayed(_run_labels)(algorithm, X, s) for s in seeds)
    correct = sum(is_permutation_match(truth, labels) for labels in labelings)
    logger.info("Robustness: %d of %d runs recovered the reference partition", correct, runs)
    return int(correct)
