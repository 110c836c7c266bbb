from dataclasses import replace

import numpy as np
import pytest

import solvers
from conftest import benchmark, make_blobs
from pkm_errors import DegenerateCluster, DimensionCap, InputError
from solvers import (
    Method,
    SolverConfig,
    _initial_state,
    agp_step,
    backtracking_step,
    derive_seed,
    max_step,
    msagp_step,
    solve,
    speedup,
)

TOY = np.array([[1.0, 1.0], [2.0, 2.0]])


def test_max_step_single_blocker():
    assert max_step(np.array([0.25, 0.75]), np.array([-0.5, 0.5])) == pytest.approx(0.5)


def test_max_step_tied_blockers():
    assert max_step(np.array([0.5, 0.5]), np.array([-1.0, -1.0])) == pytest.approx(0.5)


def test_max_step_without_blockers_falls_back_to_a_feasible_step():
    p = np.array([0.0, 0.5, 0.5])
    d = np.array([0.2, 0.0, 0.0])
    t = max_step(p, d)
    assert t > 0.0
    assert np.all(p + t * d >= 0.0)


def test_backtracking_step_satisfies_armijo():
    target = np.array([0.2, 0.8])
    objective_fn = lambda p: float(np.sum((p - target) ** 2))  # noqa: E731
    p = np.array([0.6, 0.4])
    d = -(p - target)
    t = backtracking_step(p, d, objective_fn)
    assert 0.0 < t <= 1.0
    assert objective_fn(p + t * d) <= objective_fn(p) - 1e-4 * t * float(d @ d)


def test_agp_step_is_fixed_within_bound():
    cfg = SolverConfig(method=Method.AGP, seed=1)
    state = _initial_state(make_blobs().points, 3, cfg, seed=1)
    _, d = state.direction()
    t_max = max_step(state.p, d, state.value_at)
    cfg.step_length = t_max / 2
    assert agp_step(state, cfg).last_step == pytest.approx(t_max / 2)


def test_agp_step_is_clipped_to_the_feasible_maximum():
    cfg = SolverConfig(method=Method.AGP, seed=1)
    state = _initial_state(make_blobs().points, 3, cfg, seed=1)
    _, d = state.direction()
    t_max = max_step(state.p, d, state.value_at)
    cfg.step_length = 2 * t_max
    stepped = agp_step(state, cfg)
    assert stepped.last_step == pytest.approx(t_max)
    assert len(stepped.active) > len(state.active)


def test_agp_step_without_direction_is_a_no_op():
    cfg = SolverConfig(method=Method.AGP, seed=0)
    state = _initial_state(np.array([[1.0, 2.0]]), 1, cfg, seed=0)
    stepped = agp_step(state, cfg)
    assert stepped.last_step == 0.0
    assert np.array_equal(stepped.p, state.p)


def test_msagp_step_reaches_the_boundary_and_descends():
    cfg = SolverConfig(method=Method.MSAGP, seed=4)
    state = _initial_state(make_blobs().points, 3, cfg, seed=4)
    _, d = state.direction()
    t_max = max_step(state.p, d, state.value_at)
    stepped = msagp_step(state, cfg)
    assert stepped.objective <= state.objective
    if stepped.last_step == t_max:
        assert len(stepped.active) > len(state.active)
    else:
        assert stepped.last_step < t_max


@pytest.mark.parametrize("method", list(Method))
def test_toy_problem_reaches_a_hard_assignment(method):
    for seed in range(20):
        result = solve(TOY, 2, SolverConfig(method=method, seed=seed))
        assert result.converged
        assert result.objective == pytest.approx(0.0, abs=1e-9)
        P = result.probabilities.entries
        assert np.allclose(P, np.eye(2), atol=1e-8) or np.allclose(P, np.eye(2)[::-1], atol=1e-8)


@pytest.mark.parametrize("method", list(Method))
def test_iterates_stay_feasible(method):
    rows = []
    cfg = SolverConfig(method=method, seed=3, step_length=0.05)
    solve(make_blobs(), 3, cfg, callback=lambda _, p: rows.append(p.reshape(-1, 3).copy()))
    assert rows
    for P in rows:
        assert P.min() >= 0.0
        assert np.max(np.abs(P.sum(axis=1) - 1.0)) <= 1e-9


@pytest.mark.parametrize("method", [Method.MSAGP, Method.FMSAGP])
def test_descent_is_monotone(method):
    result = solve(make_blobs(seed=2), 3, SolverConfig(method=method, seed=11))
    values = [record.objective for record in result.trace]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_active_count_is_bounded():
    blobs = make_blobs()
    result = solve(blobs, 3, SolverConfig(method=Method.FMSAGP, seed=5))
    assert all(record.active_count <= 2 * blobs.n_points for record in result.trace)


def test_fmsagp_and_msagp_move_in_lockstep():
    blobs = make_blobs(sizes=(5, 4, 3), seed=9)
    iterates = {}
    for method in (Method.MSAGP, Method.FMSAGP):
        seen = []
        solve(blobs, 3, SolverConfig(method=method, seed=21), callback=lambda _, p, seen=seen: seen.append(p.copy()))
        iterates[method] = seen
    common = min(len(iterates[Method.MSAGP]), len(iterates[Method.FMSAGP]), 30)
    assert common > 0
    for a, b in zip(iterates[Method.MSAGP][:common], iterates[Method.FMSAGP][:common]):
        assert np.max(np.abs(a - b)) <= 1e-8


def test_result_fields():
    result = solve(make_blobs(), 3, SolverConfig(method=Method.FMSAGP, seed=0))
    assert result.method == "pkm-fmsagp"
    assert result.stop_reason in {"kkt", "stalled", "objective_plateau"}
    assert result.iterations == len(result.trace)
    assert result.restarts == 0
    assert result.centers.shape == (3, 2)


def test_blobs_are_recovered(blobs):
    from calculate_metrics import is_permutation_match

    results = [solve(blobs, 3, SolverConfig(method=Method.FMSAGP, seed=derive_seed(0, i))) for i in range(5)]
    result = min(results, key=lambda r: r.objective)
    assert is_permutation_match(blobs.labels, result.labels)


def test_iteration_cap_is_reported_not_raised():
    result = solve(make_blobs(), 3, SolverConfig(method=Method.AGP, step_length=1e-4, max_iterations=3, seed=0))
    assert not result.converged
    assert result.stop_reason == "max_iterations"
    assert result.iterations == 3


def test_stalled_run_is_not_converged(monkeypatch):
    monkeypatch.setattr(solvers, "msagp_step", lambda state, cfg=None: replace(state, last_step=0.0, stalled=True))
    result = solve(make_blobs(), 3, SolverConfig(method=Method.MSAGP, seed=0))
    assert result.stop_reason == "stalled"
    assert not result.converged
    assert result.iterations == 0


def test_k_out_of_range():
    with pytest.raises(InputError):
        solve(TOY, 3)
    with pytest.raises(InputError):
        solve(TOY, 0)


def test_dimension_cap():
    with pytest.raises(DimensionCap) as info:
        solve(make_blobs(), 3, SolverConfig(lk_cap=50))
    assert info.value.lk == 90


def test_config_validation():
    with pytest.raises(InputError):
        SolverConfig(step_length=0.0)
    assert SolverConfig(method="msagp").method is Method.MSAGP


def test_degenerate_cluster_restarts_once_from_a_derived_seed(monkeypatch):
    original = solvers._run
    seeds = []

    def flaky(points, n_clusters, cfg, seed, callback=None):
        seeds.append(seed)
        if len(seeds) == 1:
            raise DegenerateCluster(0, 0.0)
        return original(points, n_clusters, cfg, seed, callback)

    monkeypatch.setattr(solvers, "_run", flaky)
    result = solve(TOY, 2, SolverConfig(seed=5))
    assert result.restarts == 1
    assert seeds == [5, derive_seed(5, 1)]


def test_degenerate_cluster_surfaces_after_the_retry(monkeypatch):
    def always(points, n_clusters, cfg, seed, callback=None):
        raise DegenerateCluster(1, 0.0)

    monkeypatch.setattr(solvers, "_run", always)
    with pytest.raises(DegenerateCluster):
        solve(TOY, 2, SolverConfig(seed=5))


def test_same_seed_same_result():
    first = solve(make_blobs(), 3, SolverConfig(seed=8))
    second = solve(make_blobs(), 3, SolverConfig(seed=8))
    assert np.array_equal(first.probabilities.entries, second.probabilities.entries)
    assert first.iterations == second.iterations


def test_speedup_ratio():
    assert speedup(0.5692, 0.2691) == pytest.approx(0.4728, abs=1e-4)
    assert np.isnan(speedup(0.0, 1.0))


def test_derive_seed():
    assert derive_seed(None, 3) is None
    assert derive_seed(7, 0) == derive_seed(7, 0)
    assert len({derive_seed(7, i) for i in range(100)}) == 100


def _best_of_five(dataset, n_clusters, method):
    return min(
        (solve(dataset, n_clusters, SolverConfig(method=method, seed=derive_seed(0, i))) for i in range(5)),
        key=lambda r: r.objective,
    )


@pytest.mark.slow
@pytest.mark.parametrize("method", [Method.MSAGP, Method.FMSAGP])
def test_iris_objective(iris, method):
    best = _best_of_five(iris, 3, method)
    assert best.converged
    assert best.objective == pytest.approx(78.95, rel=0.01)


@pytest.mark.slow
def test_iris_msagp_needs_fewer_iterations_than_agp(iris):
    agp = solve(iris, 3, SolverConfig(method=Method.AGP, step_length=0.01, seed=1))
    msagp = solve(iris, 3, SolverConfig(method=Method.MSAGP, seed=1))
    assert agp.converged and msagp.converged
    assert msagp.iterations < agp.iterations


@pytest.mark.slow
def test_seeds_objective():
    dataset = benchmark("Seeds")
    best = _best_of_five(dataset, 3, Method.FMSAGP)
    assert best.objective == pytest.approx(587.32, rel=0.01)


@pytest.mark.slow
@pytest.mark.parametrize("step_length", [0.01, 0.1])
def test_iris_agp_objective(iris, step_length):
    best = min(
        (
            solve(iris, 3, SolverConfig(method=Method.AGP, step_length=step_length, seed=derive_seed(0, i)))
            for i in range(5)
        ),
        key=lambda r: r.objective,
    )
    assert best.objective == pytest.approx(78.95, rel=0.01)


@pytest.mark.slow
@pytest.mark.parametrize("name, n_clusters", [("Seeds", 3), ("Ionosphere", 2), ("Glass", 6)])
def test_msagp_needs_fewer_iterations_than_agp(name, n_clusters):
    dataset = benchmark(name)
    for i in range(3):
        seed = derive_seed(0, i)
        agp = solve(dataset, n_clusters, SolverConfig(method=Method.AGP, step_length=0.01, seed=seed))
        msagp = solve(dataset, n_clusters, SolverConfig(method=Method.MSAGP, seed=seed))
        assert msagp.iterations < agp.iterations, (name, seed)


@pytest.mark.slow
@pytest.mark.parametrize("method", [Method.MSAGP, Method.FMSAGP])
@pytest.mark.parametrize(
    "name, n_clusters", [("Glass", 6), ("Dermatology", 6), ("Breast-cancer", 2), ("Yeast", 3)]
)
def test_benchmark_descent_is_monotone(name, n_clusters, method):
    result = solve(benchmark(name), n_clusters, SolverConfig(method=method, seed=0))
    values = [record.objective for record in result.trace]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


@pytest.mark.slow
@pytest.mark.parametrize(
    "name, n_clusters", [("Iris", 3), ("Seeds", 3), ("Glass", 6), ("Breast-cancer", 2), ("Dermatology", 6)]
)
def test_fmsagp_is_faster_than_msagp(request, name, n_clusters):
    dataset = request.getfixturevalue("iris") if name == "Iris" else benchmark(name)
    msagp = solve(dataset, n_clusters, SolverConfig(method=Method.MSAGP, seed=0))
    fmsagp = solve(dataset, n_clusters, SolverConfig(method=Method.FMSAGP, seed=0))
    assert fmsagp.wall_time < msagp.wall_time
