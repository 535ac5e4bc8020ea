import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radner import TabulatedGamma, TabulatedKappa, TrajectoryModel, constant_twap
from radner._kernels import tv_denoise
from radner.errors import DomainError
from radner.verification import (
    AgentProblem,
    DiscreteStrategy,
    deviation_oracle,
    discrete_objective,
    gap_allowance,
    inject_drift_fault,
    inject_tau_fault,
    kkt_residual,
    oracle_checks,
    run_all_checks,
)

from conftest import market, solved

MODEL = constant_twap()
tt = np.linspace(0.0, 1.0, 65)
CURVED = TrajectoryModel(1.0, TabulatedKappa(tuple(0.1 * (1 + 0.5 * np.sin(3 * tt)))), TabulatedGamma(tuple(tt**1.5)))


def zero_drift(t):
    return np.zeros_like(np.asarray(t, dtype=float))


def tv_objective(v, c, x, lam):
    return 0.5 * np.sum(v * (x - c) ** 2) + lam * (abs(x[0]) + np.sum(np.abs(np.diff(x))))


# -- structural checks ---------------------------------------------------------


def test_twenty_agents_passes(twenty_solution):
    report = run_all_checks(twenty_solution)
    assert report.passed, report.failed()
    doc = json.loads(report.to_json())
    assert doc["passed"] and len(doc["checks"]) == len(report.checks)


@pytest.mark.parametrize("a", [[3.0, 3.0, 3.0], [1.0, -1.0], [-1.0, 0.0, 1.0]])
def test_small_scenarios_pass(a):
    assert run_all_checks(solved(a, 0.0125)).passed


def test_drift_fault_detected(twenty_solution):
    bad = inject_drift_fault(twenty_solution, 5, 1e-3)
    failed = run_all_checks(bad).failed()
    assert "market_clearing" in failed or "foc_bound" in failed


def test_tau_fault_detected(twenty_solution):
    bad = inject_tau_fault(twenty_solution, twenty_solution.n_agents - 1, 0.05)
    assert not run_all_checks(bad).passed


def test_report_lookup(twenty_solution):
    report = run_all_checks(twenty_solution, 101)
    assert report["market_clearing"].passed
    with pytest.raises(KeyError):
        report["nope"]


# -- discrete objective ----------------------------------------------------------


def test_objective_no_trade_unit_target():
    spec = market([1.0, -1.0], 0.1)
    problem = AgentProblem.from_spec(spec, MODEL, zero_drift, 1)
    assert problem.target == 1.0
    t = np.linspace(0, 1, 2001)
    value = discrete_objective(problem, DiscreteStrategy(t, np.zeros_like(t)))
    assert value == pytest.approx(-1.0 / 60.0, rel=1e-6)


def test_objective_trivial_zero():
    problem = AgentProblem(0.0, 0.0, 0.1, MODEL, zero_drift)
    t = np.linspace(0, 1, 11)
    assert discrete_objective(problem, DiscreteStrategy(t, np.zeros_like(t))) == 0.0


def test_candidate_beats_no_trade():
    sol = solved([-1.0, 0.0, 1.0], 0.0125)
    j = sol.ordering.rank_of(2)
    problem = AgentProblem.for_rank(sol, j)
    t = problem.grid(400)
    cand = DiscreteStrategy(t, sol.strategy(j, t))
    idle = DiscreteStrategy(t, np.zeros_like(t))
    assert discrete_objective(problem, cand) > discrete_objective(problem, idle)


def test_total_variation_counts_initial_jump():
    s = DiscreteStrategy(np.array([0.0, 0.5, 1.0]), np.array([1.0, 3.0, 2.0]), initial=0.5)
    assert s.total_variation == pytest.approx(0.5 + 2.0 + 1.0)


@pytest.mark.parametrize(
    "times,positions",
    [([0.0], [0.0]), ([0.0, 0.0], [0.0, 1.0]), ([0.0, 1.0], [0.0, float("nan")]), ([0.0, 1.0], [0.0])],
)
def test_discrete_strategy_validation(times, positions):
    with pytest.raises(DomainError):
        DiscreteStrategy(np.array(times), np.array(positions))


# -- oracle -----------------------------------------------------------------------


def test_oracle_trivial_problem():
    res = deviation_oracle(AgentProblem(0.0, 0.0, 0.1, MODEL, zero_drift), 100)
    assert np.all(res.optimal.positions == 0.0)
    assert res.objective == 0.0 and res.converged


def test_oracle_two_agents_matches():
    sol = solved([1.0, -1.0], 0.025)
    j = sol.ordering.rank_of(0)
    res = deviation_oracle(AgentProblem.for_rank(sol, j), 400)
    assert res.max_deviation <= 2.0 / 400
    assert res.gap >= -1e-12


@pytest.mark.parametrize("j", [1, 2, 3])
def test_oracle_three_agents_gap(j):
    res = deviation_oracle(AgentProblem.for_rank(solved([-1.0, 0.0, 1.0], 0.0125), j), 400)
    assert -1e-12 <= res.gap <= 1e-4


def test_oracle_checks_twenty_agents(twenty_solution):
    checks = oracle_checks(twenty_solution, 400)
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]


def test_oracle_argument_validation():
    problem = AgentProblem(0.0, 0.0, 0.1, MODEL, zero_drift)
    with pytest.raises(DomainError):
        deviation_oracle(problem, 10)
    with pytest.raises(DomainError):
        deviation_oracle(problem, 100, tol=1e-6)


@pytest.mark.parametrize("a,lam", [([1.0, -1.0], 0.025), ([-1.0, 0.0, 1.0], 0.0125), ([-2.0, -1.0, 1.0, 2.0], 0.01)])
@pytest.mark.parametrize("delta", [0.05, -0.05])
def test_tau_fault_gives_positive_gap(a, lam, delta):
    sol = solved(a, lam)
    for j in range(1, sol.n_agents + 1):
        if sol.ordering.A[j - 1] == 0:
            continue  # a zero coefficient makes the strategy independent of its stop time
        bad = inject_tau_fault(sol, j, delta)
        problem = AgentProblem.for_rank(bad, j)
        res = deviation_oracle(problem, 400)
        assert res.gap > gap_allowance(problem, 400)


def test_gap_vanishes_under_refinement_on_curved_model():
    sol = solved([-1.0, 0.0, 1.0], 0.0125, model=CURVED)
    j = sol.ordering.rank_of(2)
    gaps = [deviation_oracle(AgentProblem.for_rank(sol, j), n).gap for n in (200, 400, 800)]
    assert min(gaps) >= -1e-12
    orders = [math.log2(gaps[k] / gaps[k + 1]) for k in range(2)]
    assert min(orders) >= 1.0


# -- soundness of the exact solver ---------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.floats(1e-3, 5.0), st.integers(0, 2**31))
def test_tv_solution_satisfies_kkt(n, lam, seed):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0.001, 0.1, n)
    c = rng.normal(0, 5, n).cumsum()
    x = tv_denoise(v, c, lam)
    assert kkt_residual(v, c, x, lam) <= 1e-9 * (1 + lam)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 80), st.floats(1e-3, 2.0), st.integers(0, 2**31))
def test_tv_solution_beats_perturbations(n, lam, seed):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0.001, 0.1, n)
    c = rng.normal(0, 5, n)
    x = tv_denoise(v, c, lam)
    best = tv_objective(v, c, x, lam)
    for scale in (1e-1, 1e-3, 1e-6):
        for _ in range(5):
            assert tv_objective(v, c, x + scale * rng.normal(size=n), lam) >= best - 1e-12


def test_tv_solution_matches_cvxpy(rng):
    cp = pytest.importorskip("cvxpy")
    for _ in range(8):
        n = int(rng.integers(5, 60))
        v = rng.uniform(0.01, 1.0, n)
        c = rng.normal(0, 3, n)
        lam = float(10 ** rng.uniform(-2, 0.5))
        var = cp.Variable(n)
        tv = cp.abs(var[0]) + cp.sum(cp.abs(cp.diff(var)))
        prob = cp.Problem(cp.Minimize(0.5 * cp.sum(cp.multiply(v, cp.square(var - c))) + lam * tv))
        prob.solve()
        ours = tv_objective(v, c, tv_denoise(v, c, lam), lam)
        assert ours <= prob.value + 1e-7 * (1 + abs(prob.value))
        assert ours >= prob.value - 1e-5 * (1 + abs(prob.value))
