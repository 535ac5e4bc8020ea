"""Certification of a solved market.

Two independent layers:

* :func:`run_all_checks` evaluates every structural property of the candidate
  (ordering, boundedness, clearing, monotonicity, continuity, representation of Y,
  reflection, constant identities) on a grid and reports the worst violation of each;
* :func:`deviation_oracle` re-solves each agent's deterministic problem on a time grid
  from scratch and compares the optimum with the candidate strategy.

The discretised agent problem is

    max  sum_k w_k mu_k theta_k - lam * TV(theta) - 1/2 sum_k w_k kappa_k (gamma_k a - (theta_k - theta_0-))^2

with trapezoid weights ``w``. Writing ``x = theta - theta_0-`` it is the weighted
total-variation denoising problem ``min 1/2 sum v_k (x_k - c_k)^2 + lam TV(x)`` with
``v = w kappa`` and ``c = gamma a + mu / kappa``, which :func:`radner._kernels.tv_denoise`
solves exactly. Optimality is certified through the dual sums
``z_k = sum_{i >= k} v_i (c_i - x_i)``: ``x`` is optimal iff ``|z_k| <= lam`` everywhere
and ``z_k = lam * sign(x_k - x_{k-1})`` wherever the position moves.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .equilibrium import EquilibriumSolution, MarketSpec, evaluation_grid
from .errors import DomainError
from .ranking import build_ordering
from .trajectory import TrajectoryModel

# thresholds of the structural checks
FOC_TOL = 1e-9
CLEARING_TOL = 1e-9
MONOTONE_TOL = 1e-10
CONTINUITY_TOL = 1e-9
YREP_TOL = 1e-7
REFLECTION_TOL = 1e-8
C_IDENTITY_TOL = 1e-9
SUM_IDENTITY_TOL = 1e-12
S0_TOL = 1e-8
YREP_SAMPLES = 21

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


@dataclass(frozen=True)
class Check:
    name: str
    max_violation: float
    threshold: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check(name, violation, threshold, detail="") -> Check:
    violation = float(violation)
    ok = bool(np.isfinite(violation) and violation <= threshold)
    return Check(name, violation, float(threshold), ok, detail)


def _scale(sol: EquilibriumSolution) -> float:
    return 1.0 + abs(sol.spec.supply) + float(np.max(np.abs(sol.ordering.a_rank)))


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------


def check_tau_ordering(sol: EquilibriumSolution) -> Check:
    tau, T = sol.ordering.tau, sol.horizon
    inversions = np.maximum(tau[:-1] - tau[1:], 0.0)
    worst = max(
        float(inversions.max(initial=0.0)),
        abs(tau[-1] - tau[-2]),
        float(np.maximum(-tau, 0.0).max()),
        float(np.maximum(tau - T, 0.0).max()),
    )
    return _check("tau_ordering", worst, 0.0, "0 <= tau^(1) <= ... <= tau^(I-1) = tau^(I) <= T")


def check_foc_bound(sol, y) -> Check:
    lam = sol.spec.lam
    return _check("foc_bound", np.max(np.abs(y)) - lam, FOC_TOL, "|Y^(j)_t| <= lambda")


def check_clearing(sol, theta) -> Check:
    excess = np.max(np.abs(theta.sum(axis=0) - sol.spec.supply))
    return _check("market_clearing", excess, CLEARING_TOL * _scale(sol), "sum_j theta^(j)_t = n")


def check_monotonicity(sol, theta) -> Check:
    d = np.diff(theta, axis=1)
    big_a = sol.ordering.A
    worst = 0.0
    for p in range(theta.shape[0]):
        if big_a[p] >= 0:
            worst = max(worst, float(np.max(-d[p], initial=0.0)))
        if big_a[p] <= 0:
            worst = max(worst, float(np.max(d[p], initial=0.0)))
    return _check("monotonicity", worst, MONOTONE_TOL, "theta^(j) moves in the direction of A^(j)")


def check_continuity(sol: EquilibriumSolution) -> Check:
    """Both regime formulas of mu/kappa evaluated exactly at each regime boundary."""
    g = sol.model.gamma_at(sol.regime_tau[1:])
    left = sol.regime_slope[:-1] * g + sol.regime_const[:-1]
    right = sol.regime_slope[1:] * g + sol.regime_const[1:]
    worst = float(np.max(np.abs(left - right), initial=0.0))
    return _check("drift_continuity", worst, CONTINUITY_TOL, "mu/kappa continuous at every tau")


def _integrand(sol: EquilibriumSolution, u: np.ndarray) -> np.ndarray:
    m = sol.model
    theta = sol.strategies(u)
    base = sol.drift(u)[None, :] + m.kappa_at(u)[None, :] * (
        m.gamma_at(u)[None, :] * sol.ordering.a_rank[:, None] + sol.theta0_rank[:, None]
    )
    return base - m.kappa_at(u)[None, :] * theta


def y_representation(sol: EquilibriumSolution, times) -> np.ndarray:
    """int_t^T kappa (mu/kappa + gamma a + theta_0- - theta) du by Gauss-Legendre.

    The integration cells are split at every breakpoint and every model node, where
    the integrand is a low-degree polynomial, so the rule is exact up to rounding.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    T = sol.horizon
    nodes = np.unique(np.concatenate([[0.0, T], sol.model.x, sol.breakpoints, times]))
    lo, hi = nodes[:-1], nodes[1:]
    half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
    u = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    vals = _integrand(sol, u).reshape(sol.n_agents, lo.size, _GL_NODES.size)
    cell = np.einsum("pcg,g->pc", vals, _GL_WEIGHTS) * half[None, :]
    tail = np.concatenate([np.cumsum(cell[:, ::-1], axis=1)[:, ::-1], np.zeros((sol.n_agents, 1))], axis=1)
    idx = np.searchsorted(nodes, times)
    return tail[:, idx]


def check_y_representation(sol: EquilibriumSolution) -> Check:
    ts = np.linspace(0.0, sol.horizon, YREP_SAMPLES)
    diff = np.abs(y_representation(sol, ts) - sol.foc_processes(ts))
    return _check("y_representation", np.max(diff), YREP_TOL, "Y from Gamma vs direct quadrature")


def check_reflection(sol, grid, theta, y) -> Check:
    lam = sol.spec.lam
    d = np.diff(theta, axis=1)
    worst = 0.0
    tol = MONOTONE_TOL
    for p in range(theta.shape[0]):
        for sgn, mask in ((1.0, d[p] > tol), (-1.0, d[p] < -tol)):
            if np.any(mask):
                ends = np.concatenate([y[p, :-1][mask], y[p, 1:][mask]])
                worst = max(worst, float(np.max(np.abs(ends - sgn * lam))))
    return _check("reflection", worst, REFLECTION_TOL, "Y = +lambda where buying, -lambda where selling")


def check_sign_condition(sol, grid, y) -> Check:
    o, lam = sol.ordering, sol.spec.lam
    worst = 0.0
    for p in range(sol.n_agents):
        if o.tau[p] > 0:
            on = grid <= o.tau[p]
            worst = max(worst, float(np.max(np.abs(y[p, on] - np.sign(o.A[p]) * lam))))
    return _check("sign_condition", worst, REFLECTION_TOL, "Y^(j) = sign(A^(j)) lambda on [0, tau^(j)]")


def check_c_identity(sol: EquilibriumSolution) -> Check:
    o, lam = sol.ordering, sol.spec.lam
    active = o.tau > 0
    if not np.any(active):
        return _check("c_identity", 0.0, C_IDENTITY_TOL * lam, "no active rank")
    lhs = o.A[active] * sol.model.F(o.tau[active])
    worst = np.max(np.abs(lhs - o.c[active] * lam))
    return _check("c_identity", worst, C_IDENTITY_TOL * lam, "A^(j) F(tau^(j)) = c_j lambda")


def check_sum_identity(sol: EquilibriumSolution) -> Check:
    o = sol.ordering
    I = o.size
    worst = 0.0
    for j in range(1, I - 1):
        acc = (I - j + 1) / (I - j) * o.A[j - 1]
        for m in range(0, I - 1 - j):
            if m > 0:
                acc += o.A[j + m - 1] / (I - j - m)
            rhs = o.a_rank[j - 1] - o.a_sigma_geq[j + m] / (I - j - m)
            worst = max(worst, abs(acc - rhs))
    return _check("sum_identity", worst, SUM_IDENTITY_TOL * _scale(sol), "telescoped A identity")


def check_initial_price(sol: EquilibriumSolution) -> Check:
    s_int = sol.spec.dividend_mean - sol.drift_integral(0.0)
    return _check("initial_price", abs(sol.s0 - s_int), S0_TOL * _scale(sol), "S0 = E[D] - int_0^T mu")


def run_all_checks(solution: EquilibriumSolution, grid_size: int = 2001) -> VerificationReport:
    """Run every structural check; failures are entries in the report, never exceptions."""
    grid = evaluation_grid(solution, grid_size)
    theta = solution.strategies(grid)
    y = solution.foc_processes(grid)
    checks = (
        check_tau_ordering(solution),
        check_foc_bound(solution, y),
        check_clearing(solution, theta),
        check_monotonicity(solution, theta),
        check_continuity(solution),
        check_y_representation(solution),
        check_reflection(solution, grid, theta, y),
        check_sign_condition(solution, grid, y),
        check_c_identity(solution),
        check_sum_identity(solution),
        check_initial_price(solution),
    )
    return VerificationReport(checks)


# ---------------------------------------------------------------------------
# fault injection (used by tests and the CLI)
# ---------------------------------------------------------------------------


def inject_tau_fault(solution: EquilibriumSolution, j: int, delta: float) -> EquilibriumSolution:
    """Copy of ``solution`` with the stop-trade time of rank ``j`` moved by ``delta``."""
    p = solution._rank(j)
    tau = solution.ordering.tau.copy()
    tau[p] = min(max(tau[p] + delta, 0.0), solution.horizon)
    tau.setflags(write=False)
    ordering = dataclasses.replace(solution.ordering, tau=tau)
    return dataclasses.replace(solution, ordering=ordering)


def inject_drift_fault(solution: EquilibriumSolution, regime: int, delta: float) -> EquilibriumSolution:
    """Copy of ``solution`` with mu/kappa shifted by ``delta`` on one regime."""
    const = solution.regime_const.copy()
    const[regime] += delta
    const.setflags(write=False)
    return dataclasses.replace(solution, regime_const=const)


# ---------------------------------------------------------------------------
# discretised agent problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteStrategy:
    times: np.ndarray
    positions: np.ndarray
    initial: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.positions, dtype=float)
        if t.ndim != 1 or t.shape != x.shape or t.size < 2:
            raise DomainError("times and positions must be 1-D arrays of equal length >= 2")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x)) and np.isfinite(self.initial)):
            raise DomainError("strategy values must be finite")
        if np.any(np.diff(t) <= 0):
            raise DomainError("strategy grid must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)

    @property
    def total_variation(self) -> float:
        x = self.positions
        return float(abs(x[0] - self.initial) + np.sum(np.abs(np.diff(x))))


@dataclass(frozen=True)
class AgentProblem:
    """Deterministic optimisation problem of one agent facing a given drift."""

    target: float
    initial: float
    lam: float
    model: TrajectoryModel
    drift_fn: Callable
    candidate_fn: Optional[Callable] = field(default=None, compare=False)
    breakpoints: tuple = ()

    @classmethod
    def for_rank(cls, solution: EquilibriumSolution, j: int) -> "AgentProblem":
        p = solution._rank(j)
        return cls(
            target=float(solution.ordering.a_rank[p]),
            initial=float(solution.theta0_rank[p]),
            lam=solution.spec.lam,
            model=solution.model,
            drift_fn=solution.drift,
            candidate_fn=lambda t, _j=j: solution.strategy(_j, t),
            breakpoints=tuple(float(b) for b in solution.breakpoints),
        )

    @classmethod
    def from_spec(cls, spec: MarketSpec, model: TrajectoryModel, drift_fn: Callable, j: int) -> "AgentProblem":
        """Problem of the agent holding rank ``j`` in ``spec``; the drift is arbitrary."""
        ordering = build_ordering(spec.agents, spec.lam, model)
        agent = spec.agents[ordering.perm[j - 1]]
        return cls(agent.relative_target, agent.endowment, spec.lam, model, drift_fn)

    def grid(self, n: int) -> np.ndarray:
        T = self.model.horizon
        t = np.union1d(np.linspace(0.0, T, n + 1), np.asarray(self.breakpoints, dtype=float))
        return t[np.concatenate([[True], np.diff(t) > 1e-12])]


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    w = np.zeros(t.size)
    h = np.diff(t)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _denoise_data(problem: AgentProblem, t: np.ndarray):
    kap = problem.model.kappa_at(t)
    v = trapezoid_weights(t) * kap
    c = problem.model.gamma_at(t) * problem.target + np.asarray(problem.drift_fn(t), dtype=float) / kap
    return v, c


def discrete_objective(problem: AgentProblem, strategy: DiscreteStrategy) -> float:
    """Trapezoid value of the deterministic objective (constants dropped)."""
    t, th = strategy.times, strategy.positions
    m = problem.model
    w = trapezoid_weights(t)
    mu = np.asarray(problem.drift_fn(t), dtype=float)
    miss = m.gamma_at(t) * problem.target - (th - strategy.initial)
    return float(np.sum(w * mu * th) - problem.lam * strategy.total_variation - 0.5 * np.sum(w * m.kappa_at(t) * miss**2))


def kkt_residual(v: np.ndarray, c: np.ndarray, x: np.ndarray, lam: float) -> float:
    """Worst violation of the dual conditions for the denoising problem."""
    z = np.cumsum((v * (c - x))[::-1])[::-1]
    d = np.diff(np.concatenate([[0.0], x]))
    scale = 1e-12 * (1.0 + np.max(np.abs(x)))
    moving = np.abs(d) > scale
    excess = np.maximum(np.abs(z) - lam, 0.0)
    along = np.where(moving, np.abs(z - lam * np.sign(d)), 0.0)
    return float(max(excess.max(), along.max()))


@dataclass(frozen=True)
class OracleResult:
    optimal: DiscreteStrategy
    candidate: Optional[DiscreteStrategy]
    objective: float
    gap: float
    max_deviation: float
    kkt_residual: float
    converged: bool


def deviation_oracle(problem: AgentProblem, n: int, tol: float = 1e-12) -> OracleResult:
    """Global optimum of the discretised problem and its distance to the candidate.

    ``gap`` is J(optimum) - J(candidate) and ``max_deviation`` the max-norm distance of
    the positions; both are NaN when the problem carries no candidate.
    """
    if n < 50:
        raise DomainError("the oracle needs N >= 50")
    if tol > 1e-10:
        raise DomainError("oracle tolerance must be at most 1e-10")
    t = problem.grid(n)
    v, c = _denoise_data(problem, t)
    x = _kernels.tv_denoise(v, c, problem.lam)
    residual = kkt_residual(v, c, x, problem.lam)
    converged = residual <= max(tol, 1e-9) * max(1.0, problem.lam)
    best = DiscreteStrategy(t, x + problem.initial, problem.initial)
    j_best = discrete_objective(problem, best)
    cand, gap, dev = None, float("nan"), float("nan")
    if problem.candidate_fn is not None:
        cand = DiscreteStrategy(t, np.asarray(problem.candidate_fn(t), dtype=float), problem.initial)
        gap = j_best - discrete_objective(problem, cand)
        dev = float(np.max(np.abs(cand.positions - best.positions)))
    return OracleResult(best, cand, j_best, gap, dev, residual, bool(converged))


def gap_allowance(problem: AgentProblem, n: int) -> float:
    """O(1/N) bound on the objective gap attributable to discretisation alone."""
    return problem.lam * problem.model.horizon / n


def oracle_checks(solution: EquilibriumSolution, n: int = 400) -> list:
    """One check per rank: candidate within 2/N of the oracle, gap inside the allowance."""
    out = []
    for j in range(1, solution.n_agents + 1):
        problem = AgentProblem.for_rank(solution, j)
        res = deviation_oracle(problem, n)
        ok = res.converged and -1e-12 <= res.gap <= gap_allowance(problem, n) and res.max_deviation <= 2.0 / n
        out.append(
            Check(
                f"oracle_rank_{j}",
                res.max_deviation,
                2.0 / n,
                bool(ok),
                f"gap={res.gap:.3e} kkt={res.kkt_residual:.3e}",
            )
        )
    return out
