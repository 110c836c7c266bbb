"""
Value types shared by the solvers, baselines and metrics.

The probability matrix is stored as an L x K array; its row-major ravel is the
probability vector P, so p_ij sits at vector index i*K + j.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from pkm_errors import InvalidDataset, NonFiniteValue

ROW_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "dataset"
    label_names: Optional[Tuple[str, ...]] = None
    preprocessing: str = "none"

    def __post_init__(self):
        points = np.array(self.points, dtype=float, copy=True)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise InvalidDataset(f"Expected an L x D array with L, D >= 1, got shape {points.shape}")
        bad = np.argwhere(~np.isfinite(points))
        if bad.size:
            raise NonFiniteValue(int(bad[0, 0]), int(bad[0, 1]))
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

        if self.labels is not None:
            labels = np.array(self.labels, dtype=int, copy=True).ravel()
            if labels.shape[0] != points.shape[0]:
                raise InvalidDataset(
                    f"Label count {labels.shape[0]} does not match point count {points.shape[0]}"
                )
            upper = np.inf if self.label_names is None else len(self.label_names)
            outside = np.flatnonzero((labels < 0) | (labels >= upper))
            if outside.size:
                bad = int(outside[0])
                raise InvalidDataset(f"Label {labels[bad]} of point {bad} is outside [0, {upper})")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return self.points.shape[1]

    @property
    def n_classes(self) -> Optional[int]:
        if self.labels is None:
            return None
        return int(np.unique(self.labels).size)


class ProbabilityMatrix:
    """L x K assignment probabilities; every row lies on the probability simplex."""

    def __init__(self, entries, validate: bool = True):
        entries = np.array(entries, dtype=float, copy=True)
        if entries.ndim != 2:
            raise InvalidDataset(f"Probability matrix must be 2-D, got shape {entries.shape}")
        if validate:
            if not np.all(np.isfinite(entries)):
                raise InvalidDataset("Probabilities must be finite")
            if np.any(entries < 0.0) or np.any(entries > 1.0 + ROW_SUM_TOLERANCE):
                raise InvalidDataset("Probabilities must lie in [0, 1]")
            row_sums = entries.sum(axis=1)
            worst = int(np.argmax(np.abs(row_sums - 1.0)))
            if abs(row_sums[worst] - 1.0) > ROW_SUM_TOLERANCE:
                raise InvalidDataset(f"Row {worst} sums to {row_sums[worst]!r}, not 1")
        self.entries = entries

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    @property
    def n_points(self) -> int:
        return self.entries.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.entries.shape[1]

    @property
    def vector(self) -> np.ndarray:
        return self.entries.reshape(-1)

    @classmethod
    def from_vector(cls, vector, n_clusters: int, validate: bool = True) -> "ProbabilityMatrix":
        vector = np.asarray(vector, dtype=float)
        return cls(vector.reshape(-1, n_clusters), validate=validate)

    @classmethod
    def one_hot(cls, labels, n_clusters: Optional[int] = None) -> "ProbabilityMatrix":
        labels = np.asarray(labels, dtype=int)
        k = int(labels.max()) + 1 if n_clusters is None else n_clusters
        entries = np.zeros((labels.shape[0], k))
        entries[np.arange(labels.shape[0]), labels] = 1.0
        return cls(entries, validate=False)

    @staticmethod
    def vector_index(i: int, j: int, n_clusters: int) -> int:
        return i * n_clusters + j

    def __repr__(self) -> str:
        return f"ProbabilityMatrix(L={self.n_points}, K={self.n_clusters})"


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    step_length: float
    active_count: int
    wall_time: float


@dataclass
class ClusterResult:
    probabilities: ProbabilityMatrix
    centers: np.ndarray
    labels: np.ndarray
    objective: float
    trace: List[IterationRecord] = field(default_factory=list)
    method: str = ""
    iterations: int = 0
    converged: bool = True
    stop_reason: str = "kkt"
    wall_time: float = 0.0
    restarts: int = 0
    seed: Optional[int] = None

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [vars(record) for record in self.trace],
            columns=["iteration", "objective", "step_length", "active_count", "wall_time"],
        )


def init_probabilities(n_points: int, n_clusters: int, seed) -> ProbabilityMatrix:
    """Flat-Dirichlet rows: K standard exponentials per row, normalized."""
    if n_points < 1 or n_clusters < 1:
        raise InvalidDataset(f"Need L >= 1 and K >= 1, got L={n_points}, K={n_clusters}")
    rng = np.random.default_rng(seed)
    draws = rng.standard_exponential((n_points, n_clusters))
    # a zero draw has probability zero but would break strict positivity
    draws = np.maximum(draws, np.finfo(float).tiny)
    entries = draws / draws.sum(axis=1, keepdims=True)
    return ProbabilityMatrix(entries, validate=False)


def labels_from(probabilities: ProbabilityMatrix) -> np.ndarray:
    # np.argmax returns the first maximal column, i.e. smallest j on ties
    return np.argmax(probabilities.entries, axis=1).astype(int)
