"""
Active gradient projection solvers for the probabilistic K-means model.

All three methods share one loop:

    d = -Q grad J(P)
    if d ~ 0: multiplier test -> stop at a KKT point, or release one active row
    else:     P <- P + t d, pin newly zeroed coordinates, update the projection

They differ in the step length t and in how the projection is refreshed:

    agp     fixed t (clipped to the feasible maximum), direct projection
    msagp   maximum feasible t with a monotone-descent safeguard, direct projection
    fmsagp  as msagp, but new active rows enter through the rank-one update
"""
import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from constraints import (
    ACTIVE_TOLERANCE,
    ActiveConstraintSet,
    ConstraintSystem,
    Drop,
    ProjectionState,
    build_projection_direct,
    build_projection_incremental_many,
    escape_test,
    projected_gradient,
)
from objective import PointsLike, _points, centers, gradient, objective
from pkm_errors import DegenerateCluster, DimensionCap, InputError
from pkm_types import (
    ClusterResult,
    IterationRecord,
    ProbabilityMatrix,
    init_probabilities,
    labels_from,
)

logger = logging.getLogger(__name__)

DEFAULT_LK_CAP = 20_000
SAFEGUARD_HALVINGS = 50
MIN_STEP = 1e-15
ARMIJO = 1e-4


class Method(str, Enum):
    AGP = "agp"
    MSAGP = "msagp"
    FMSAGP = "fmsagp"


@dataclass
class SolverConfig:
    method: Method = Method.FMSAGP
    step_length: float = 0.01
    max_iterations: int = 200_000
    direction_tolerance: float = 1e-8
    objective_tolerance: float = 1e-12
    plateau_window: int = 50
    seed: Optional[int] = None
    lk_cap: int = DEFAULT_LK_CAP

    def __post_init__(self):
        self.method = Method(self.method)
        if self.step_length <= 0:
            raise InputError(f"step_length must be positive, got {self.step_length}")
        if self.direction_tolerance <= 0 or self.objective_tolerance <= 0:
            raise InputError("Tolerances must be positive")
        if self.max_iterations < 1 or self.plateau_window < 1:
            raise InputError("max_iterations and plateau_window must be at least 1")

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "step_length": self.step_length,
            "max_iterations": self.max_iterations,
            "direction_tolerance": self.direction_tolerance,
            "objective_tolerance": self.objective_tolerance,
            "plateau_window": self.plateau_window,
            "seed": self.seed,
            "lk_cap": self.lk_cap,
        }


@dataclass
class SolverState:
    points: np.ndarray
    system: ConstraintSystem
    p: np.ndarray
    projection: ProjectionState
    objective: float
    incremental: bool = False
    last_step: float = 0.0
    stalled: bool = False
    grad: Optional[np.ndarray] = field(default=None, repr=False)
    d: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def active(self) -> ActiveConstraintSet:
        return self.projection.active

    def direction(self):
        if self.grad is None:
            self.grad = gradient(self.points, self.p.reshape(self.system.n_points, self.system.n_clusters))
        if self.d is None:
            self.d = projected_gradient(self.projection, self.grad)
        return self.grad, self.d

    def value_at(self, p: np.ndarray) -> float:
        return objective(self.points, p.reshape(self.system.n_points, self.system.n_clusters))

    def release(self, coordinate: int) -> "SolverState":
        # removal has no rank-one form; rebuild from scratch
        projection = build_projection_direct(self.system, self.active.without_coordinate(coordinate))
        return replace(self, projection=projection, d=None, stalled=False)


def backtracking_step(
    p: np.ndarray,
    d: np.ndarray,
    objective_fn: Optional[Callable[[np.ndarray], float]] = None,
    initial: float = 1.0,
    armijo: float = ARMIJO,
    max_halvings: int = SAFEGUARD_HALVINGS,
) -> float:
    """
    Halve t from `initial` until p + t d is feasible and, when an objective is
    given, satisfies the Armijo condition J(p + t d) <= J(p) - c t |d|^2
    (for d = -Q grad, grad^T d = -|d|^2). Returns 0.0 if no such t is found.
    """
    t = initial
    base = objective_fn(p) if objective_fn is not None else None
    slope = float(d @ d)
    for _ in range(max_halvings + 1):
        trial = p + t * d
        if trial.min() >= -ACTIVE_TOLERANCE:
            if objective_fn is None:
                return t
            try:
                if objective_fn(np.maximum(trial, 0.0)) <= base - armijo * t * slope:
                    return t
            except DegenerateCluster:
                pass
        t *= 0.5
    return 0.0


def max_step(
    p: np.ndarray,
    d: np.ndarray,
    objective_fn: Optional[Callable[[np.ndarray], float]] = None,
) -> float:
    """t_max = min{-p_r / d_r : p_r > 0, d_r < 0}, else a backtracking step."""
    blocking = (p > 0.0) & (d < 0.0)
    if blocking.any():
        return float(np.min(-p[blocking] / d[blocking]))
    return backtracking_step(p, d, objective_fn)


def _project_onto_constraints(state: SolverState, p: np.ndarray) -> np.ndarray:
    p = p.copy()
    p[p <= ACTIVE_TOLERANCE] = 0.0
    if len(state.active):
        p[list(state.active.coords)] = 0.0
    rows = p.reshape(state.system.n_points, state.system.n_clusters)
    rows /= rows.sum(axis=1, keepdims=True)
    return p


def _moved(state: SolverState, p: np.ndarray, t: float, value: float) -> SolverState:
    zero = p == 0.0
    if len(state.active):
        zero[list(state.active.coords)] = False
    newly_zero = np.flatnonzero(zero).tolist()
    projection = state.projection
    if newly_zero:
        if state.incremental:
            # the state being replaced gives up its matrices
            projection = build_projection_incremental_many(projection, newly_zero, inplace=True)
        else:
            projection = build_projection_direct(
                state.system, ActiveConstraintSet(state.active.coords + tuple(newly_zero))
            )
        logger.debug("Activated %d coordinate(s), active set size %d", len(newly_zero), len(projection.active))
    return replace(
        state, p=p, projection=projection, objective=value, last_step=t, stalled=False, grad=None, d=None
    )


def agp_step(state: SolverState, cfg: SolverConfig) -> SolverState:
    """Fixed step cfg.step_length, clipped to the feasible maximum."""
    _, d = state.direction()
    if np.max(np.abs(d)) < cfg.direction_tolerance:
        return replace(state, last_step=0.0)
    t = min(cfg.step_length, max_step(state.p, d, state.value_at))
    if t <= 0.0:
        return replace(state, last_step=0.0, stalled=True)
    p = _project_onto_constraints(state, state.p + t * d)
    return _moved(state, p, t, state.value_at(p))


def msagp_step(state: SolverState, cfg: Optional[SolverConfig] = None) -> SolverState:
    """Maximum feasible step, halved until the objective does not increase."""
    tolerance = cfg.direction_tolerance if cfg is not None else SolverConfig.direction_tolerance
    _, d = state.direction()
    if np.max(np.abs(d)) < tolerance:
        return replace(state, last_step=0.0)
    t = max_step(state.p, d, state.value_at)
    for _ in range(SAFEGUARD_HALVINGS + 1):
        if t < MIN_STEP:
            break
        p = _project_onto_constraints(state, state.p + t * d)
        try:
            value = state.value_at(p)
        except DegenerateCluster:
            value = np.inf
        if value <= state.objective:
            return _moved(state, p, t, value)
        t *= 0.5
    return replace(state, last_step=0.0, stalled=True)


def speedup(msagp_seconds: float, fmsagp_seconds: float) -> float:
    """Running-time ratio T_fmsagp / T_msagp; below 1 means FMSAGP is faster."""
    if msagp_seconds <= 0:
        return float("nan")
    return fmsagp_seconds / msagp_seconds


def derive_seed(seed: Optional[int], index: int) -> Optional[int]:
    if seed is None:
        return None
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _initial_state(points: np.ndarray, n_clusters: int, cfg: SolverConfig, seed) -> SolverState:
    system = ConstraintSystem(points.shape[0], n_clusters)
    p = init_probabilities(points.shape[0], n_clusters, seed).vector.copy()
    projection = build_projection_direct(system, ActiveConstraintSet.from_vector(p))
    state = SolverState(
        points=points,
        system=system,
        p=p,
        projection=projection,
        objective=0.0,
        incremental=cfg.method is Method.FMSAGP,
    )
    state.objective = state.value_at(p)
    return state


def _run(
    points: np.ndarray,
    n_clusters: int,
    cfg: SolverConfig,
    seed,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> ClusterResult:
    state = _initial_state(points, n_clusters, cfg, seed)
    step = agp_step if cfg.method is Method.AGP else msagp_step
    trace: List[IterationRecord] = []
    stop_reason = "max_iterations"
    converged = False
    plateau = 0
    iteration = 0
    started = time.perf_counter()

    while iteration < cfg.max_iterations:
        grad, d = state.direction()
        if np.max(np.abs(d)) < cfg.direction_tolerance:
            outcome = escape_test(state.system, state.active, grad, cfg.direction_tolerance)
            if not isinstance(outcome, Drop):
                stop_reason, converged = "kkt", True
                break
            state = state.release(outcome.coordinate)
            continue

        previous = state.objective
        state = step(state, cfg)
        if state.stalled:
            # no admissible step: not an iteration
            outcome = escape_test(state.system, state.active, grad, cfg.direction_tolerance)
            if not isinstance(outcome, Drop):
                # d is not below tolerance here, so this is no KKT certificate
                stop_reason = "stalled"
                break
            state = state.release(outcome.coordinate)
            continue

        iteration += 1

        trace.append(
            IterationRecord(
                iteration=iteration,
                objective=state.objective,
                step_length=state.last_step,
                active_count=len(state.active),
                wall_time=time.perf_counter() - started,
            )
        )
        if callback is not None:
            callback(iteration, state.p)

        change = abs(previous - state.objective) / max(abs(previous), np.finfo(float).tiny)
        plateau = plateau + 1 if change < cfg.objective_tolerance else 0
        if plateau >= cfg.plateau_window:
            outcome = escape_test(state.system, state.active, state.direction()[0], cfg.direction_tolerance)
            if not isinstance(outcome, Drop):
                stop_reason, converged = "objective_plateau", True
                break
            plateau = 0

    wall_time = time.perf_counter() - started
    if not converged:
        logger.warning("%s stopped without a KKT certificate (%s)", cfg.method.value, stop_reason)

    L, K = state.system.n_points, state.system.n_clusters
    probabilities = ProbabilityMatrix(state.p.reshape(L, K))
    return ClusterResult(
        probabilities=probabilities,
        centers=centers(points, probabilities),
        labels=labels_from(probabilities),
        objective=objective(points, probabilities),
        trace=trace,
        method=f"pkm-{cfg.method.value}",
        iterations=iteration,
        converged=converged,
        stop_reason=stop_reason,
        wall_time=wall_time,
        seed=seed,
    )


def solve(
    X: PointsLike,
    n_clusters: int,
    cfg: Optional[SolverConfig] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> ClusterResult:
    """
    Minimize the probabilistic K-means objective over the product of simplices.

    A vanishing cluster aborts the run; it is retried once from a fresh seed
    before the DegenerateCluster error is surfaced.
    """
    cfg = cfg or SolverConfig()
    points = _points(X)
    L = points.shape[0]
    if not 1 <= n_clusters <= L:
        raise InputError(f"Need 1 <= K <= L, got K={n_clusters}, L={L}")
    if L * n_clusters > cfg.lk_cap:
        raise DimensionCap(L * n_clusters, cfg.lk_cap)

    logger.info("Solving PKM with %s: L=%d, K=%d, seed=%s", cfg.method.value, L, n_clusters, cfg.seed)
    try:
        result = _run(points, n_clusters, cfg, cfg.seed, callback)
    except DegenerateCluster as e:
        retry_seed = derive_seed(cfg.seed, 1) if cfg.seed is not None else None
        logger.warning("%s; restarting once with seed %s", e, retry_seed)
        result = _run(points, n_clusters, cfg, retry_seed, callback)
        result.restarts = 1
    logger.info(
        "%s finished: J=%.6f after %d iterations (%s, %.3fs)",
        result.method,
        result.objective,
        result.iterations,
        result.stop_reason,
        result.wall_time,
    )
    return result
