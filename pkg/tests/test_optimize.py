import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cold import lcd, models
from cold import optimize as opt
from cold.dynamics import ground_state, spin_endpoints
from cold.experiments import ExperimentSpec, SpinProblem, build_problem

BOX = ((-5.12, 5.12),) * 2


def quadratic_from(seed, dim=3):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(dim, dim))
    A = q @ q.T + 0.5 * np.eye(dim)
    xstar = rng.uniform(-2, 2, dim)
    return A, xstar, (lambda x: float((x - xstar) @ A @ (x - xstar)))


def rosenbrock(x):
    return float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)


def rastrigin(x):
    x = np.asarray(x)
    return float(10 * x.size + np.sum(x**2 - 10 * np.cos(2 * np.pi * x)))


def direction_volume(dirs):
    unit = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    return abs(np.linalg.det(unit))


# Nelder-Mead

def test_nelder_mead_one_dimensional():
    res = opt.nelder_mead(lambda x: float((x[0] - 3) ** 2), [0.0])
    assert abs(res.x[0] - 3) < 1e-6


def test_nelder_mead_rosenbrock():
    res = opt.nelder_mead(rosenbrock, [-1.2, 1.0])
    np.testing.assert_allclose(res.x, [1, 1], atol=1e-4)


def test_nelder_mead_shift_invariance():
    a = opt.nelder_mead(rosenbrock, [-1.2, 1.0])
    b = opt.nelder_mead(lambda x: rosenbrock(x) + 7, [-1.2, 1.0])
    np.testing.assert_allclose(a.x, b.x, atol=1e-4)


# Brent and Powell

def test_brent_finds_parabola_vertex():
    xmin, fmin = opt.brent(lambda t: (t - 0.7) ** 2 + 1, -3.0, 4.0)
    assert abs(xmin - 0.7) < 1e-7 and fmin == pytest.approx(1.0, abs=1e-12)


def test_powell_one_dimensional():
    res = opt.powell(lambda x: float((x[0] - 3) ** 2), [0.0])
    assert abs(res.x[0] - 3) < 1e-8


def test_powell_quadratic_fixed_instance():
    A, xstar, f = quadratic_from(3)
    res = opt.powell(f, np.zeros(3), opt.PowellSpec(max_iter=3, f_tol=0.0))
    assert res.n_iter <= 3
    np.testing.assert_allclose(res.x, xstar, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_powell_quadratic_in_three_iterations(seed):
    A, xstar, f = quadratic_from(seed)
    x0 = np.random.default_rng(seed + 1).uniform(-3, 3, 3)
    res = opt.powell(f, x0, opt.PowellSpec(max_iter=3, f_tol=0.0))
    # the appended displacements can become nearly parallel; conjugacy then fails
    assume(len(res.directions) > 2 and direction_volume(res.directions[2]) > 0.03)
    assert res.n_iter <= 3
    np.testing.assert_allclose(res.x, xstar, atol=1e-8)


def test_powell_direction_bookkeeping():
    _, _, f = quadratic_from(5)
    x0 = np.array([0.3, -1.0, 2.0])
    res = opt.powell(f, x0, opt.PowellSpec(max_iter=1))
    start, after = res.directions[0], res.directions[1]
    np.testing.assert_array_equal(start, np.eye(3))
    np.testing.assert_array_equal(after[:2], start[1:])
    assert not np.allclose(after[2], start[0])
    # the appended direction is the displacement of the sweep
    x = x0.copy()
    for d in start:
        _, x, _ = opt.line_minimize(opt._Counted(f), x, d, f(x), None, 1e-8)
    np.testing.assert_allclose(after[2], x - x0, atol=1e-12)


# dual annealing

def test_dual_annealing_rastrigin():
    res = opt.dual_annealing(rastrigin, opt.DualAnnealingSpec(bounds=BOX, max_iter=2000), seed=0)
    assert np.max(np.abs(res.x)) < 1e-3
    assert res.fun < 1e-3


def test_dual_annealing_same_seed_same_trajectory():
    spec = opt.DualAnnealingSpec(bounds=BOX, max_iter=60)
    runs = []
    for _ in range(2):
        trace = []
        opt.dual_annealing(rastrigin, spec, seed=42, record=lambda x, fx: trace.append((x.tobytes(), fx)))
        runs.append(trace)
    assert runs[0] == runs[1]
    other = []
    opt.dual_annealing(rastrigin, spec, seed=43, record=lambda x, fx: other.append((x.tobytes(), fx)))
    assert other != runs[0]


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e3, -1e-12), st.floats(1e-6, 1e4), st.floats(0, 10), st.integers(0, 2**32 - 1))
def test_downhill_moves_always_accepted(delta, temp, scale, seed):
    assert opt.accept_move(delta, temp, scale, np.random.default_rng(seed))


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e3), st.floats(1e-6, 1e4), st.integers(0, 2**32 - 1))
def test_zero_acceptance_scale_rejects_uphill(delta, temp, seed):
    assert not opt.accept_move(delta, temp, 0.0, np.random.default_rng(seed))


def test_zero_acceptance_scale_is_greedy(monkeypatch):
    # every visiting step is +0.1: uphill for x^2 from the origin
    monkeypatch.setattr(opt._Visiting, "sample", lambda self, temperature, size: np.full(size, 0.1))
    bounds = ((-5.0, 5.0),)
    greedy, warm = [], []
    spec = opt.DualAnnealingSpec(bounds=bounds, max_iter=20, local_search=False, acceptance_scale=0.0)
    opt.dual_annealing(lambda x: float(x[0] ** 2), spec, seed=0, x0=[0.0], record=lambda x, fx: greedy.append(x[0]))
    assert greedy[0] == 0.0 and all(x == pytest.approx(0.1) for x in greedy[1:])
    spec = opt.DualAnnealingSpec(bounds=bounds, max_iter=20, local_search=False, acceptance_scale=1.0)
    opt.dual_annealing(lambda x: float(x[0] ** 2), spec, seed=0, x0=[0.0], record=lambda x, fx: warm.append(x[0]))
    assert max(warm) > 0.15


def test_annealing_temperature_schedule():
    assert opt.annealing_temperature(1, 5230.0, 2.62) == pytest.approx(5230.0)
    t = [opt.annealing_temperature(k, 5230.0, 2.62) for k in range(1, 50)]
    assert all(b < a for a, b in zip(t, t[1:]))


def test_non_finite_cost_aborts_local_search():
    with pytest.raises(opt.NonFiniteCostError):
        opt.powell(lambda x: math.nan, [0.0])


def test_non_finite_candidates_skipped_by_annealing():
    def f(x):
        return math.inf if x[0] > 2 else float(x[0] ** 2)

    res = opt.dual_annealing(f, opt.DualAnnealingSpec(bounds=((-5.0, 5.0),), max_iter=50, local_search=False),
                             seed=1)
    assert math.isfinite(res.fun)


# shared contracts

SOLVERS = {
    "nelder-mead": lambda f, x0, b: opt.nelder_mead(f, x0, bounds=b),
    "powell": lambda f, x0, b: opt.powell(f, x0, bounds=b),
    "dual-annealing": lambda f, x0, b: opt.dual_annealing(f, opt.DualAnnealingSpec(bounds=tuple(b), max_iter=30),
                                                          seed=3, x0=x0),
}


@pytest.mark.parametrize("name", SOLVERS)
def test_every_candidate_inside_bounds(name):
    bounds = [(-1.0, 0.5), (0.2, 2.0)]
    seen = []

    def f(x):
        seen.append(np.array(x))
        return rosenbrock(x)

    SOLVERS[name](f, np.array([0.0, 1.0]), bounds)
    pts = np.array(seen)
    assert np.all(pts[:, 0] >= -1.0) and np.all(pts[:, 0] <= 0.5)
    assert np.all(pts[:, 1] >= 0.2) and np.all(pts[:, 1] <= 2.0)


@pytest.mark.parametrize("name", SOLVERS)
@pytest.mark.parametrize("factor", [0.25, 4.0])
def test_argmin_invariant_under_positive_scaling(name, factor):
    _, xstar, f = quadratic_from(11, dim=2)
    bounds = [(-4.0, 4.0)] * 2
    a = SOLVERS[name](f, np.zeros(2), bounds)
    b = SOLVERS[name](lambda x: factor * f(x), np.zeros(2), bounds)
    np.testing.assert_allclose(a.x, xstar, atol=1e-5)
    np.testing.assert_allclose(b.x, a.x, atol=1e-5)


# cost functions

def test_exact_cd_fidelity_cost_at_short_time():
    problem = build_problem(ExperimentSpec("two-spin", "lcd-exact"), 1e-3, ())
    assert opt.evaluate_cost(opt.Fidelity(), problem, np.array([])) < 1e-6


def test_coefficient_integral_vanishes_without_drive():
    model = models.ising_graph(2, {(0, 1): 1.0}, [0.5, 0.2], [0.1, -0.3])
    h0, h1 = spin_endpoints(model)
    problem = SpinProblem(model, 1.0, (), "none", None, lcd.graph_ansatz(2), ground_state(h1).vector,
                          ground_state(h0).vector)
    assert opt.evaluate_cost(opt.CoeffIntegral(), problem, np.array([])) == 0.0
    assert opt.evaluate_cost(opt.CoeffMaxAmplitude(), problem, np.array([])) == 0.0


@pytest.mark.parametrize("method, params", [("lcd-fo", []), ("lcd-so", [])])
def test_coefficient_integral_grid_refinement(method, params):
    problem = build_problem(ExperimentSpec("two-spin", method), 0.5, _templates(method))
    coarse = opt.evaluate_cost(opt.CoeffIntegral(), problem, np.array(params))
    fine = opt.evaluate_cost(opt.CoeffIntegral(n_grid=5001), problem, np.array(params))
    assert abs(coarse - fine) / abs(fine) < 1e-6


def _templates(method):
    from cold.pulses import BarePulse
    return (BarePulse((0.0,), mode="half"),) if method.startswith("cold") else ()


def test_coefficient_integral_carries_duration():
    a = build_problem(ExperimentSpec("two-spin", "lcd-fo"), 0.5, ())
    b = build_problem(ExperimentSpec("two-spin", "lcd-fo"), 2.0, ())
    ratio = opt.evaluate_cost(opt.CoeffIntegral(), b, np.array([])) / opt.evaluate_cost(opt.CoeffIntegral(), a,
                                                                                     np.array([]))
    assert ratio == pytest.approx(4.0, rel=1e-12)


def test_coefficient_subset_checked():
    problem = build_problem(ExperimentSpec("two-spin", "lcd-so"), 0.5, ())
    names, _ = problem.coefficients(np.array([]), np.linspace(0, 1, 3))
    one = opt.evaluate_cost(opt.CoeffIntegral((names[0],)), problem, np.array([]))
    every = opt.evaluate_cost(opt.CoeffIntegral(), problem, np.array([]))
    assert 0 < one <= every
    with pytest.raises(KeyError):
        opt.evaluate_cost(opt.CoeffIntegral(("nope",)), problem, np.array([]))


@pytest.mark.parametrize("base", [opt.Fidelity(), opt.Energy(), opt.CoeffIntegral(), opt.CoeffMaxAmplitude()])
def test_infinite_caps_leave_cost_unchanged(base):
    problem = build_problem(ExperimentSpec("two-spin", "cold-fo"), 0.3, _templates("cold-fo"))
    x = np.array([0.6])
    capped = opt.Constrained(base, (("cd", math.inf), ("control", math.inf)))
    assert opt.evaluate_cost(capped, problem, x) == opt.evaluate_cost(base, problem, x)


def test_step_penalty():
    assert opt.penalty_term({"cd": 2.0}, [("cd", 1.0)], 1e3) == 1e3
    assert opt.penalty_term({"cd": 0.5}, [("cd", 1.0)], 1e3) == 0.0
    with pytest.raises(KeyError):
        opt.penalty_term({"cd": 0.5}, [("control", 1.0)], 1e3)


# restart harness

def quadratic_builder(A, xstar):
    def build(i, seq):
        x0 = np.zeros(2) if i == 0 else np.random.default_rng(seq).uniform(-3, 3, 2)
        return opt.RestartProblem(lambda x: rastrigin(x - xstar) + float(x @ A @ x) * 1e-3, x0, list(BOX))

    return build


def test_single_restart_equals_direct_call():
    A, xstar, _ = quadratic_from(2, dim=2)
    build = quadratic_builder(A, xstar)
    spec = opt.PowellSpec()
    run = opt.run_restarts(build, spec, 1, master_seed=9)
    seq = np.random.SeedSequence(9).spawn(1)[0]
    prob = build(0, seq)
    direct = opt.minimize(spec, prob.objective, prob.x0, seq.spawn(1)[0], prob.bounds)
    np.testing.assert_array_equal(run.best_x, direct.x)
    assert run.best_cost == direct.fun and run.best_index == 0


def test_best_cost_non_increasing_in_restarts():
    A, xstar, _ = quadratic_from(4, dim=2)
    build = quadratic_builder(A, xstar)
    costs = [opt.run_restarts(build, opt.PowellSpec(), n, master_seed=1).best_cost for n in (1, 2, 4, 8)]
    assert all(b <= a for a, b in zip(costs, costs[1:]))


def test_thread_count_does_not_change_result():
    A, xstar, _ = quadratic_from(6, dim=2)
    build = quadratic_builder(A, xstar)
    spec = opt.DualAnnealingSpec(bounds=BOX, max_iter=40)
    one = opt.run_restarts(build, spec, 8, master_seed=5, threads=1)
    eight = opt.run_restarts(build, spec, 8, master_seed=5, threads=8)
    np.testing.assert_array_equal(one.best_x, eight.best_x)
    assert one.best_index == eight.best_index
    assert [r.cost for r in one.records] == [r.cost for r in eight.records]


def test_failed_restart_recorded():
    def build(i, seq):
        if i == 1:
            raise RuntimeError("boom")
        return opt.RestartProblem(lambda x: float(x[0] ** 2), np.array([1.0]))

    run = opt.run_restarts(build, opt.PowellSpec(), 3)
    assert run.records[1].error and math.isinf(run.records[1].cost)
    assert run.best_index == 0


def test_ties_go_to_lowest_index():
    run = opt.run_restarts(lambda i, seq: opt.RestartProblem(lambda x: 0.0, np.array([float(i)])),
                           opt.PowellSpec(), 4)
    assert run.best_index == 0


def test_restart_seeds_are_prefix_stable():
    short = [opt.seed_value(s) for s in opt.restart_seeds(3, 2)]
    long = [opt.seed_value(s) for s in opt.restart_seeds(3, 5)]
    assert long[:2] == short and len(set(long)) == 5
