import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from radner import MarketSpec, TabulatedGamma, TabulatedKappa, TrajectoryModel, constant_twap, solve
from radner.equilibrium import drift, drift_integral, evaluation_grid, foc_process, gamma_process, initial_price, strategy
from radner.errors import DomainError, SpecError

from conftest import market, solved

MODEL = constant_twap()
targets = st.lists(st.floats(-300, 300, allow_nan=False), min_size=2, max_size=12)
lambdas = st.floats(1e-3, 1.0)


def test_drift_vanishes_at_zero(twenty_solution):
    assert drift(twenty_solution, 0.0) == 0.0


def test_antisymmetric_targets_have_zero_drift():
    sol = solved([-1.0, 0.0, 1.0], 0.0125)
    t = np.linspace(0, 1, 101)
    assert np.all(sol.drift(t) == 0.0)
    assert np.all(sol.drift_integral(t) == 0.0)
    assert initial_price(sol) == 0.0


def test_twenty_agents_last_regime_slope(twenty_solution):
    sol = twenty_solution
    t = np.linspace(sol.ordering.tau[-1] + 1e-3, 1.0, 50)
    assert np.allclose(np.diff(sol.drift(t)) / np.diff(t), 0.5, atol=1e-9)


def test_strategy_examples():
    sol = solved([-1.0, 0.0, 1.0], 0.0125)
    rank = sol.ordering.rank_of(2)
    assert strategy(sol, rank, 0.3) == pytest.approx(0.3, abs=1e-12)
    assert strategy(sol, rank, 0.8) == pytest.approx(0.5, abs=1e-12)
    for j in range(1, 4):
        assert strategy(sol, j, 0.0) == 0.0


def test_strategy_starts_at_endowment():
    sol = solved([3.0, -1.0, -2.0], 0.01, endowments=[1.0, 2.0, -0.5], supply=2.5)
    for j in range(1, 4):
        assert sol.strategy(j, 0.0) == pytest.approx(sol.theta0_rank[j - 1], abs=1e-14)


def test_twenty_agents_agent10_never_trades(twenty_solution):
    t = evaluation_grid(twenty_solution)
    assert np.all(twenty_solution.agent_strategy(9, t) == 0.0)


def test_gamma_process_examples(twenty_solution):
    sol = twenty_solution
    o = sol.ordering
    for j in range(1, sol.n_agents + 1):
        assert gamma_process(sol, j, 1.0) == 0.0
        assert foc_process(sol, j, 1.0) == 0.0
        tau = o.tau[j - 1]
        if tau > 0:
            early = np.linspace(0, tau, 7)
            assert np.allclose(sol.gamma_process(j, early), o.A[j - 1] * sol.model.F(tau), atol=1e-12)
            assert np.allclose(sol.gamma_process(j, early), o.c[j - 1] * sol.spec.lam, atol=1e-10)
            assert np.allclose(sol.foc_process(j, early), math.copysign(sol.spec.lam, o.A[j - 1]), atol=1e-12)


def test_middle_agent_gamma_zero():
    sol = solved([-1.0, 0.0, 1.0], 0.0125)
    t = np.linspace(0, 1, 11)
    assert np.all(sol.gamma_process(1, t) == 0.0)
    assert np.all(sol.foc_process(1, t) == 0.0)


def test_last_pair_foc_antisymmetric(twenty_solution):
    sol = twenty_solution
    t = evaluation_grid(sol, 301)
    y = sol.foc_processes(t)
    assert np.array_equal(y[-2], -y[-1])


def test_initial_price_trivial_cases():
    assert solved([0.0, 0.0, 0.0], 0.1, dividend_mean=3.5).s0 == 3.5
    assert solved([-1.0, 0.0, 1.0], 0.1, dividend_mean=-2.0).s0 == -2.0


def test_initial_price_matches_integrated_drift(twenty_solution):
    sol = twenty_solution
    integral = quad(lambda u: sol.drift(u), 0.0, 1.0, points=list(sol.breakpoints), limit=200, epsabs=1e-13)[0]
    assert sol.s0 == pytest.approx(sol.spec.dividend_mean - integral, abs=1e-8)
    assert drift_integral(sol, 0.0) == pytest.approx(sol.spec.dividend_mean - sol.s0, abs=1e-12)
    assert drift_integral(sol, 1.0) == 0.0


def test_price_skeleton_matches_quadrature(twenty_solution):
    sol = twenty_solution
    for t in (0.1, 0.55, 0.87, 0.95):
        ref = quad(lambda u: sol.drift(u), t, 1.0, points=[b for b in sol.breakpoints if b > t], limit=200, epsabs=1e-13)[0]
        assert sol.price_skeleton(t) == pytest.approx(-ref, abs=1e-10)


def test_two_agent_stop_time():
    sol = solved([1.0, -1.0], 0.025)
    assert np.allclose(sol.ordering.tau, 1 - math.sqrt(0.5), atol=1e-12)


def test_equal_targets_no_trade():
    sol = solved([2.0, 2.0, 2.0, 2.0], 0.05)
    assert np.all(sol.ordering.tau == 0.0)
    t = np.linspace(0, 1, 41)
    # all tau = 0: only the last regime is live, mu = -kappa gamma a_sigma/2
    assert np.allclose(sol.drift(t), -0.1 * t * 4.0 / 2.0, atol=1e-15)
    assert np.all(sol.strategies(t) == 0.0)


def test_solve_is_deterministic(twenty_agents):
    a = solve(twenty_agents.spec, twenty_agents.model)
    b = solve(twenty_agents.spec, twenty_agents.model)
    t = evaluation_grid(a)
    assert a.ordering.perm == b.ordering.perm
    assert np.array_equal(a.drift(t), b.drift(t))
    assert a.s0 == b.s0


def test_table_model_agrees_with_closed_form():
    table = TrajectoryModel(1.0, TabulatedKappa((0.1,) * 5), TabulatedGamma(tuple(np.linspace(0, 1, 9))))
    a = [-3.0, 1.0, 0.5, 2.0, -1.2]
    ref, alt = solved(a, 0.02), solved(a, 0.02, model=table)
    t = np.linspace(0, 1, 201)
    assert ref.ordering.perm == alt.ordering.perm
    assert np.allclose(ref.ordering.tau, alt.ordering.tau, atol=1e-10)
    assert np.allclose(ref.drift(t), alt.drift(t), atol=1e-10)
    assert ref.s0 == pytest.approx(alt.s0, abs=1e-12)


def test_breakpoints_sorted_distinct(twenty_solution):
    b = twenty_solution.breakpoints
    assert np.all(np.diff(b) > 1e-12)
    grid = evaluation_grid(twenty_solution, 2001)
    assert set(b).issubset(set(grid))
    assert grid[0] == 0.0 and grid[-1] == 1.0


def test_endowment_mismatch_warns():
    with pytest.warns(UserWarning):
        MarketSpec(1.0, 0.1, 1.0, ((1.0, 0.0), (0.0, 0.0)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        MarketSpec(1.0, 0.1, 1.0, ((1.0, 0.5), (0.0, 0.5)))


@pytest.mark.parametrize(
    "kwargs",
    [dict(lam=0.0), dict(lam=-1.0), dict(horizon=0.0), dict(agents=((1.0, 0.0),)), dict(supply=float("nan"))],
)
def test_spec_validation(kwargs):
    base = dict(horizon=1.0, lam=0.1, supply=0.0, agents=((1.0, 0.0), (-1.0, 0.0)))
    base.update(kwargs)
    with pytest.raises(SpecError):
        MarketSpec(**base)


def test_horizon_mismatch():
    with pytest.raises(SpecError):
        solve(market([1.0, -1.0], 0.1, horizon=2.0), MODEL)


def test_domain_errors(twenty_solution):
    with pytest.raises(DomainError):
        twenty_solution.drift(1.5)
    with pytest.raises(DomainError):
        twenty_solution.strategy(0, 0.5)
    with pytest.raises(DomainError):
        twenty_solution.foc_process(21, 0.5)


@settings(max_examples=120, deadline=None)
@given(targets, lambdas)
def test_clearing_and_boundedness(a, lam):
    sol = solved(a, lam)
    t = evaluation_grid(sol, 257)
    scale = 1 + max(abs(x) for x in a)
    assert np.max(np.abs(sol.strategies(t).sum(axis=0))) <= 1e-9 * scale
    assert np.max(np.abs(sol.foc_processes(t))) <= lam + 1e-9


@settings(max_examples=80, deadline=None)
@given(targets, lambdas, st.lists(st.floats(-50, 50), min_size=12, max_size=12))
def test_clearing_with_endowments(a, lam, endow):
    endow = endow[: len(a)]
    sol = solved(a, lam, endowments=endow, supply=float(sum(endow)))
    t = evaluation_grid(sol, 129)
    scale = 1 + abs(sum(endow)) + max(abs(x) for x in a)
    assert np.max(np.abs(sol.strategies(t).sum(axis=0) - sum(endow))) <= 1e-9 * scale


@settings(max_examples=80, deadline=None)
@given(targets, lambdas)
def test_drift_over_kappa_continuous(a, lam):
    sol = solved(a, lam)
    for r in range(1, sol.regime_tau.size):
        s = sol.regime_tau[r]
        g = sol.model.gamma_at(s)
        left = sol.regime_slope[r - 1] * g + sol.regime_const[r - 1]
        assert abs(left - sol.drift_over_kappa(s)) <= 1e-9
