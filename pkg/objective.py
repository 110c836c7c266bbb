"""
Probabilistic K-means objective, its cluster centers and analytic gradient.

J(P) = sum_j sum_i p_ij ||x_i - c_j(P)||^2 with c_j(P) the p-weighted mean of
the points. The gradient returned here is the vector of raw partials of that
expression over all of R^(LK) (the unconstrained extension); projecting it onto
the row-sum constraints is the constraint engine's job.
"""
from typing import Union

import numpy as np
from scipy.spatial.distance import cdist

from pkm_errors import DegenerateCluster
from pkm_types import Dataset, ProbabilityMatrix

COLUMN_MASS_FLOOR = 1e-12

PointsLike = Union[Dataset, np.ndarray]
ProbabilitiesLike = Union[ProbabilityMatrix, np.ndarray]


def _points(X: PointsLike) -> np.ndarray:
    if isinstance(X, Dataset):
        return X.points
    points = np.asarray(X, dtype=float)
    return points[:, None] if points.ndim == 1 else points


def _entries(P: ProbabilitiesLike) -> np.ndarray:
    if isinstance(P, ProbabilityMatrix):
        return P.entries
    return np.asarray(P, dtype=float)


def column_mass(P: ProbabilitiesLike) -> np.ndarray:
    entries = _entries(P)
    mass = entries.sum(axis=0)
    below = np.flatnonzero(mass < COLUMN_MASS_FLOOR)
    if below.size:
        raise DegenerateCluster(int(below[0]), float(mass[below[0]]))
    return mass


def centers(X: PointsLike, P: ProbabilitiesLike) -> np.ndarray:
    """K x D matrix of p-weighted means, one per column of P."""
    points = _points(X)
    entries = _entries(P)
    mass = column_mass(entries)
    return (entries.T @ points) / mass[:, None]


def soft_kmeans_objective(X: PointsLike, P: ProbabilitiesLike, C: np.ndarray) -> float:
    points = _points(X)
    entries = _entries(P)
    C = np.asarray(C, dtype=float).reshape(entries.shape[1], points.shape[1])
    return float(np.sum(entries * cdist(points, C, "sqeuclidean")))


def objective(X: PointsLike, P: ProbabilitiesLike) -> float:
    return soft_kmeans_objective(X, P, centers(X, P))


def gradient(X: PointsLike, P: ProbabilitiesLike) -> np.ndarray:
    """
    Raw partials dJ/dp_ij in row-major (i*K + j) order.

    dJ/dp_ij = ||x_i - c_j||^2 - (2 / m_j) * sum_k p_kj (x_k - c_j)^T (x_i - c_j)

    with m_j the column mass. Residuals x_i - c_j are formed once, so a call is
    O(LKD). The correction sum vanishes analytically at the weighted mean but is
    still evaluated so rounding in c_j is accounted for.
    """
    points = _points(X)
    entries = _entries(P)
    mass = column_mass(entries)
    C = (entries.T @ points) / mass[:, None]

    residuals = points[:, None, :] - C[None, :, :]  # L x K x D
    squared = np.einsum("lkd,lkd->lk", residuals, residuals)
    weighted = np.einsum("lk,lkd->kd", entries, residuals)  # K x D
    correction = (2.0 / mass)[None, :] * np.einsum("kd,lkd->lk", weighted, residuals)
    return (squared - correction).reshape(-1)
