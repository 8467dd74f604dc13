import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rpmsolve.errors import DimensionError
from rpmsolve.sketches import GaussianSketch, ReplaySource, basis_vector
from rpmsolve.solvers import (FullProjector, PartialBuffer, SolverState, StepKind,
                              TerminationCriteria, base_column_step, base_row_step,
                              full_ortho_step, general_rpm_step, modified_gram_schmidt,
                              partial_ortho_step, solve, twice_iterated_gram_schmidt)
from rpmsolve.system import (SpectrumSpec, gen_prescribed_svd, make_consistent_system,
                             min_norm_solution, rng_from_seed)


def random_system(n=12, d=7, seed=0):
    return make_consistent_system(rng_from_seed(seed).standard_normal((n, d)), seed + 1)


def test_base_row_step_projects_onto_hyperplane():
    s = random_system()
    state = SolverState.start(s.d)
    w = rng_from_seed(3).standard_normal(s.n)
    out = base_row_step(state, s, w)
    assert out.kind is StepKind.ADVANCED
    a = s.A.T @ w
    assert np.isclose(a @ state.x, w @ s.b)
    # the step is the minimum-norm correction, so it is parallel to a
    assert np.allclose(state.x, a * (w @ s.b) / (a @ a))


def test_base_column_step_minimises_along_line():
    s = random_system()
    x0 = rng_from_seed(4).standard_normal(s.d)
    state = SolverState.start(s.d, x0=x0)
    w = basis_vector(s.d, 2)
    base_column_step(state, s, w)
    t, *_ = np.linalg.lstsq(s.A @ w[:, None], s.b - s.A @ x0, rcond=None)
    assert np.allclose(state.x, x0 + t[0] * w)


def test_zero_sketch_is_skipped():
    s = random_system()
    for method, fn in [("base", base_row_step), ("partial", partial_ortho_step),
                       ("complete", full_ortho_step)]:
        state = SolverState.start(s.d, method, m=2)
        out = fn(state, s, np.zeros(s.n))
        assert out.kind is StepKind.SKIPPED_DEGENERATE
        assert state.skip_count == 1 and state.k == 1
        assert np.array_equal(state.x, np.zeros(s.d))


def test_repeated_row_is_skipped_by_complete():
    s = random_system()
    state = SolverState.start(s.d, "complete")
    w = basis_vector(s.n, 0)
    assert full_ortho_step(state, s, w).advanced
    assert not full_ortho_step(state, s, w).advanced


def test_complete_solves_square_system_in_d_steps():
    s = random_system(n=9, d=9, seed=2)
    state = SolverState.start(s.d, "complete")
    for i in range(s.d):
        full_ortho_step(state, s, basis_vector(s.n, i))
    assert np.allclose(state.x, s.x_star, atol=1e-9)
    assert np.allclose(state.memory.S, 0, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_projector_invariants(seed, steps):
    s = random_system(n=10, d=6, seed=seed % 997)
    rng = rng_from_seed(seed)
    state = SolverState.start(s.d, "complete")
    used = []
    for _ in range(steps):
        w = rng.standard_normal(s.n)
        if full_ortho_step(state, s, w).advanced:
            used.append(s.A.T @ w)
    S = state.memory.S
    assert np.abs(S @ S - S).max() <= 1e-8
    assert np.abs(S - S.T).max() <= 1e-10
    for q in used:
        assert np.linalg.norm(S @ q) <= 1e-8 * np.linalg.norm(q)
    assert np.isclose(np.trace(S), s.d - len(used))


def test_general_step_with_full_sketch_gives_min_norm():
    A = rng_from_seed(5).standard_normal((4, 9))
    s = make_consistent_system(A, 6)
    state = SolverState.start(s.d, "complete")
    general_rpm_step(state, s, np.eye(s.n))
    assert np.allclose(state.x, min_norm_solution(s), atol=1e-10)


def test_general_step_with_one_row_matches_rank_one_step():
    s = random_system()
    w = rng_from_seed(8).standard_normal(s.n)
    a = SolverState.start(s.d, "complete")
    b = SolverState.start(s.d, "complete")
    full_ortho_step(a, s, w)
    general_rpm_step(b, s, w[None, :])
    assert np.allclose(a.x, b.x) and np.allclose(a.memory.S, b.memory.S)
    with pytest.raises(DimensionError):
        general_rpm_step(b, s, np.ones((1, s.n + 1)))


def test_gram_schmidt_kernels_agree():
    rng = rng_from_seed(0)
    Z, _ = np.linalg.qr(rng.standard_normal((10, 4)))
    Z = list(Z.T)
    q = rng.standard_normal(10)
    t1 = modified_gram_schmidt(q, Z)
    t2 = twice_iterated_gram_schmidt(q, Z)
    assert np.allclose(t1, t2, atol=1e-13)
    assert np.abs(np.array(Z) @ t1).max() < 1e-13
    assert np.array_equal(twice_iterated_gram_schmidt(q, []), q)


def test_partial_buffer_is_fifo():
    buf = PartialBuffer(2)
    for k in range(3):
        buf.push(np.full(2, k))
    assert [v[0] for v in buf.vectors] == [1, 2]
    with pytest.raises(ValueError):
        PartialBuffer(-1)
    with pytest.raises(ValueError):
        PartialBuffer(1, "cgs")


@pytest.mark.parametrize("gs_kind", ["mgs", "tigs"])
def test_partial_with_zero_memory_is_base(gs_kind):
    s = random_system(seed=4)
    crit = TerminationCriteria(max_iterations=200)
    a = solve(s, "gaussian", "base", criteria=crit, seed=3, record_trace=True)
    b = solve(s, "gaussian", "partial", m=0, criteria=crit, seed=3, record_trace=True,
              gs_kind=gs_kind)
    for xa, xb in zip(a.trace.iterates, b.trace.iterates):
        assert np.array_equal(xa, xb)


@pytest.mark.parametrize("token", ["gaussian", "countsketch:3", "cyclic", "uniform", "rownorm",
                                   "maxres", "maxdist", "grk", "skm:3"])
@pytest.mark.parametrize("method, m", [("base", 0), ("partial", 3), ("complete", 0)])
def test_solve_converges(token, method, m):
    s = random_system(n=15, d=6, seed=7)
    rep = solve(s, token, method, m=m, criteria=TerminationCriteria(1e-8, 50000, check_every=1),
                seed=1)
    assert rep.converged, rep.to_json()
    assert np.allclose(rep.x, s.x_star, atol=1e-6)


@pytest.mark.parametrize("token", ["colcyclic", "coluniform"])
@pytest.mark.parametrize("method", ["base", "partial", "complete"])
def test_column_methods_converge(token, method):
    s = random_system(n=15, d=6, seed=9)
    rep = solve(s, token, method, m=2, criteria=TerminationCriteria(1e-8, 50000, check_every=1))
    assert rep.converged
    assert np.allclose(rep.x, s.x_star, atol=1e-6)


def test_solve_reports_and_callbacks():
    s = random_system()
    seen = []
    rep = solve(s, "cyclic", "complete", criteria=TerminationCriteria(1e-10, 500, check_every=1),
                callback=lambda k, x, w, out: seen.append((k, out.advanced)), record_trace=True)
    assert rep.converged
    assert len(seen) == rep.iterations == len(rep.trace.sketches)
    assert len(rep.trace.iterates) == rep.iterations + 1
    assert rep.advanced_steps == sum(a for _, a in seen)
    assert rep.advanced_steps <= s.d
    js = rep.to_json()
    assert js["method"] == "complete" and js["timed_out"] is False
    assert js["final_relative_residual"] <= 1e-10


def test_solve_budgets():
    s = make_consistent_system(gen_prescribed_svd(40, 40, SpectrumSpec.geometric(40, 1e6)), 0)
    rep = solve(s, "uniform", criteria=TerminationCriteria(1e-12, max_iterations=37))
    assert rep.timed_out and rep.iterations == 37
    rep = solve(s, "uniform", criteria=TerminationCriteria(1e-12, wall_clock_budget=0.05))
    assert rep.timed_out
    rep = solve(s, ReplaySource([np.eye(40)[0]]), criteria=TerminationCriteria(1e-12))
    assert rep.timed_out and rep.iterations == 1


def test_solve_at_solution_does_nothing():
    s = random_system()
    rep = solve(s, "gaussian", x0=s.x_star)
    assert rep.converged and rep.iterations == 0


def test_solve_validation():
    s = random_system()
    with pytest.raises(ValueError):
        solve(s, "gaussian", method="newton")
    with pytest.raises(DimensionError):
        solve(s, "gaussian", x0=np.zeros(s.d + 1))
    with pytest.raises(ValueError):
        TerminationCriteria()
    with pytest.raises(ValueError):
        TerminationCriteria(0.0)
    with pytest.raises(ValueError):
        TerminationCriteria(1e-3, check_every=0)
    with pytest.raises(DimensionError):
        base_row_step(SolverState.start(s.d), s, np.ones(s.n + 1))


def test_custom_source_object():
    s = random_system()
    rep = solve(s, GaussianSketch(s.n, 0), "complete",
                criteria=TerminationCriteria(1e-10, 100, check_every=1))
    assert rep.converged and rep.strategy == "gaussian"
