"""
Linear constraint system of the probability simplex problem and its projections.

Constraints on the probability vector P (length LK, index i*K + j):

    A P >= 0   with A = I (one inequality per coordinate)
    E P  = 1   with E the L x LK matrix of per-point row sums

The active matrix N stacks the active inequality rows A_1 over E. The projection
G = N^T (N N^T)^-1 N maps onto the row space of N and Q = I - G onto its null
space, which is the set of feasible directions that keep every active
constraint tight.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from pkm_errors import DegenerateDirection, InvalidDataset, RankDeficient

logger = logging.getLogger(__name__)

ACTIVE_TOLERANCE = 1e-10
RANK_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ConstraintSystem:
    n_points: int
    n_clusters: int

    def __post_init__(self):
        if self.n_points < 1 or self.n_clusters < 1:
            raise InvalidDataset(
                f"Constraint system needs L >= 1 and K >= 1, got L={self.n_points}, K={self.n_clusters}"
            )

    @property
    def size(self) -> int:
        return self.n_points * self.n_clusters

    def point_of(self, coordinate: int) -> int:
        return coordinate // self.n_clusters

    def equality_matrix(self) -> np.ndarray:
        return np.kron(np.eye(self.n_points), np.ones((1, self.n_clusters)))


@dataclass(frozen=True)
class ActiveConstraintSet:
    """Sorted vector indices r with p_r pinned at zero."""

    coords: Tuple[int, ...] = ()
    _members: FrozenSet[int] = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        members = frozenset(int(r) for r in self.coords)
        object.__setattr__(self, "coords", tuple(sorted(members)))
        object.__setattr__(self, "_members", members)

    @classmethod
    def from_vector(cls, p: np.ndarray, tolerance: float = ACTIVE_TOLERANCE) -> "ActiveConstraintSet":
        return cls(tuple(np.flatnonzero(p <= tolerance)))

    def __contains__(self, coordinate: int) -> bool:
        return int(coordinate) in self._members

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def with_coordinate(self, coordinate: int) -> "ActiveConstraintSet":
        return ActiveConstraintSet(self.coords + (int(coordinate),))

    def without_coordinate(self, coordinate: int) -> "ActiveConstraintSet":
        return ActiveConstraintSet(tuple(r for r in self.coords if r != int(coordinate)))

    def check(self, system: ConstraintSystem):
        """Raise RankDeficient if some point has every coordinate active."""
        if not self.coords:
            return
        counts = np.bincount(np.asarray(self.coords) // system.n_clusters, minlength=system.n_points)
        full = np.flatnonzero(counts >= system.n_clusters)
        if full.size:
            raise RankDeficient(f"All {system.n_clusters} coordinates of point {int(full[0])} are active")


@dataclass
class ProjectionState:
    G: np.ndarray
    Q: np.ndarray
    active: ActiveConstraintSet = field(default_factory=ActiveConstraintSet)


@dataclass(frozen=True)
class Stop:
    multipliers: np.ndarray


@dataclass(frozen=True)
class Drop:
    coordinate: int
    multiplier: float


EscapeOutcome = Union[Stop, Drop]


def active_matrix(system: ConstraintSystem, active: ActiveConstraintSet) -> np.ndarray:
    """N = [A_1; E], shape (|active| + L) x LK."""
    selection = np.zeros((len(active), system.size))
    selection[np.arange(len(active)), list(active.coords)] = 1.0
    return np.vstack([selection, system.equality_matrix()])


def _local_patterns(system: ConstraintSystem, active: ActiveConstraintSet) -> List[Tuple[int, ...]]:
    # active columns of each point, ascending
    local: List[List[int]] = [[] for _ in range(system.n_points)]
    for r in active.coords:
        local[r // system.n_clusters].append(r % system.n_clusters)
    return [tuple(columns) for columns in local]


def _block_rows(n_clusters: int, local: Tuple[int, ...]) -> np.ndarray:
    """Rows of N touching one point: its active unit rows over its row-sum row."""
    rows = np.zeros((len(local) + 1, n_clusters))
    rows[np.arange(len(local)), list(local)] = 1.0
    rows[-1] = 1.0
    return rows


def _block_gram(n_clusters: int, local: Tuple[int, ...]) -> np.ndarray:
    # I bordered by ones, K in the corner (1^T 1)
    m = len(local)
    gram = np.eye(m + 1)
    gram[:m, m] = 1.0
    gram[m, :m] = 1.0
    gram[m, m] = n_clusters
    return gram


def _factor(gram: np.ndarray):
    try:
        factor = cho_factor(gram, lower=False, check_finite=False)
    except LinAlgError as e:
        raise RankDeficient(f"N N^T is singular: {e}") from e
    diagonal = np.abs(np.diag(factor[0]))
    if diagonal.min() <= np.sqrt(RANK_TOLERANCE) * max(1.0, diagonal.max()):
        raise RankDeficient("N N^T is numerically singular")
    return factor


def build_projection_direct(system: ConstraintSystem, active: ActiveConstraintSet) -> ProjectionState:
    """
    G = N^T (N N^T)^-1 N through a Cholesky factorization, Q = I - G.

    Every row of N touches a single point, so N N^T is block diagonal once its
    rows are grouped by point and G is assembled from one K x K block per point.
    Points sharing an active pattern share the factorization.
    """
    active.check(system)
    K = system.n_clusters
    blocks: Dict[Tuple[int, ...], np.ndarray] = {}
    G = np.zeros((system.size, system.size))
    for i, local in enumerate(_local_patterns(system, active)):
        if local not in blocks:
            N = _block_rows(K, local)
            block = N.T @ cho_solve(_factor(_block_gram(K, local)), N, check_finite=False)
            blocks[local] = 0.5 * (block + block.T)
        G[i * K:(i + 1) * K, i * K:(i + 1) * K] = blocks[local]
    Q = np.eye(system.size) - G
    return ProjectionState(G=G, Q=Q, active=active)


def build_projection_incremental(
    previous: ProjectionState, coordinate: int, inplace: bool = False
) -> ProjectionState:
    """
    Rank-one update for one more active row n = e_r:

        G' = G + Q n^T <Q n^T, Q n^T>^-1 n Q,   Q' = I - G'

    Only the entries where u = Q n^T is nonzero change. With inplace=True the
    matrices of `previous` are updated and shared with the returned state.
    """
    coordinate = int(coordinate)
    column = previous.Q[:, coordinate]
    support = np.flatnonzero(column)
    u = column[support]
    norm_sq = float(u @ u)
    if coordinate in previous.active or norm_sq < RANK_TOLERANCE:
        raise DegenerateDirection(coordinate, norm_sq)
    G = previous.G if inplace else previous.G.copy()
    Q = previous.Q if inplace else previous.Q.copy()
    block = np.ix_(support, support)
    G[block] += np.outer(u, u) / norm_sq
    Q[block] = np.eye(support.size) - G[block]
    return ProjectionState(G=G, Q=Q, active=previous.active.with_coordinate(coordinate))


def build_projection_incremental_many(
    previous: ProjectionState, coordinates: Iterable[int], inplace: bool = False
) -> ProjectionState:
    # several coordinates reaching zero on one step are added in ascending index order
    state = previous
    for coordinate in sorted(int(r) for r in coordinates):
        state = build_projection_incremental(state, coordinate, inplace=inplace)
    return state


def projected_gradient(state: ProjectionState, grad: np.ndarray) -> np.ndarray:
    return -(state.Q @ grad)


def multipliers(system: ConstraintSystem, active: ActiveConstraintSet, grad: np.ndarray) -> np.ndarray:
    """
    Least-squares multipliers q = (N N^T)^-1 N grad, ordered as the rows of N
    (active coordinates, then one row sum per point). When N is square this is
    exactly (N^T)^-1 grad.
    """
    K = system.n_clusters
    rows = np.asarray(grad, dtype=float).reshape(system.n_points, K)
    factors = {}
    inequality: List[float] = []
    equality = np.empty(system.n_points)
    for i, local in enumerate(_local_patterns(system, active)):
        if local not in factors:
            factors[local] = _factor(_block_gram(K, local))
        rhs = np.append(rows[i, list(local)], rows[i].sum())
        q = cho_solve(factors[local], rhs, check_finite=False)
        inequality.extend(q[:-1])
        equality[i] = q[-1]
    return np.concatenate([np.asarray(inequality, dtype=float), equality])


def escape_test(
    system: ConstraintSystem,
    active: ActiveConstraintSet,
    grad: np.ndarray,
    tolerance: float = 0.0,
) -> EscapeOutcome:
    """
    Multiplier test at a point where the projected gradient vanishes.

    Returns Stop when every inequality multiplier is >= -tolerance (a KKT
    point). Otherwise returns Drop for the active coordinate with the most
    negative multiplier; ties resolve to the smallest vector index.
    """
    active.check(system)
    q = multipliers(system, active, grad)
    q1 = q[: len(active)]
    if q1.size == 0 or q1.min() >= -tolerance:
        return Stop(multipliers=q1)
    position = int(np.argmin(q1))
    coordinate = active.coords[position]
    logger.debug("Releasing coordinate %d (multiplier %.3e)", coordinate, q1[position])
    return Drop(coordinate=coordinate, multiplier=float(q1[position]))
