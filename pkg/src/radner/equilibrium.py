"""Candidate equilibrium: drift, strategies, first-order-condition processes, prices.

Everything here is F_0-measurable and deterministic once the targets are fixed, so
the solution is a set of closed-form evaluators over time; nothing is simulated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, SpecError
from .ranking import AgentSpec, RankOrdering, TieBreak, build_ordering
from .trajectory import TrajectoryModel

DEFAULT_GRID = 2001
BREAKPOINT_DEDUP = 1e-12


@dataclass(frozen=True)
class MarketSpec:
    horizon: float
    lam: float
    supply: float
    agents: tuple
    dividend_mean: float = 0.0

    def __post_init__(self):
        agents = tuple(a if isinstance(a, AgentSpec) else AgentSpec(*a) for a in self.agents)
        object.__setattr__(self, "agents", agents)
        for name in ("horizon", "lam", "supply", "dividend_mean"):
            if not math.isfinite(getattr(self, name)):
                raise SpecError(f"{name} must be finite")
        if self.horizon <= 0:
            raise SpecError("horizon must be positive")
        if self.lam <= 0:
            raise SpecError("lambda must be positive")
        if len(agents) < 2:
            raise SpecError(f"at least two agents are required, got {len(agents)}")
        total = sum(a.endowment for a in agents)
        if abs(total - self.supply) > 1e-9 * (1.0 + abs(self.supply)):
            warnings.warn(
                f"endowments sum to {total!r} but supply is {self.supply!r}; markets cannot clear",
                stacklevel=2,
            )

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def relative_targets(self) -> np.ndarray:
        return np.array([a.relative_target for a in self.agents])

    def with_lambda(self, lam: float) -> "MarketSpec":
        return MarketSpec(self.horizon, lam, self.supply, self.agents, self.dividend_mean)


@dataclass(frozen=True)
class EquilibriumSolution:
    """Solved market. ``regime_*`` arrays describe mu/kappa = slope*gamma + const per regime.

    Regime ``r`` covers ``[regime_tau[r], regime_tau[r+1])`` (the last one runs to T),
    with ``regime_tau = [0, tau^(1), ..., tau^(I-1)]``.
    """

    spec: MarketSpec
    model: TrajectoryModel
    ordering: RankOrdering
    s0: float
    breakpoints: np.ndarray
    regime_tau: np.ndarray
    regime_slope: np.ndarray
    regime_const: np.ndarray
    theta0_rank: np.ndarray = field(repr=False)

    @property
    def n_agents(self) -> int:
        return self.ordering.size

    @property
    def horizon(self) -> float:
        return self.model.horizon

    def _rank(self, j: int) -> int:
        if not 1 <= j <= self.n_agents:
            raise DomainError(f"rank {j} outside 1..{self.n_agents}")
        return j - 1

    def regime_of(self, t):
        return np.searchsorted(self.regime_tau, t, side="right") - 1

    # -- drift -----------------------------------------------------------------

    def drift_over_kappa(self, t):
        t = self.model._check_time(t)
        r = self.regime_of(t)
        out = self.regime_slope[r] * self.model.gamma_at(t) + self.regime_const[r]
        return float(out) if np.ndim(out) == 0 else out

    def drift(self, t):
        t = self.model._check_time(t)
        out = self.model.kappa_at(t) * self.drift_over_kappa(t)
        return float(out) if np.ndim(out) == 0 else out

    def drift_integral(self, t):
        """int_t^T mu_u du, integrated regime by regime."""
        t = self.model._check_time(t)
        flat = np.atleast_1d(t).astype(float)
        T = self.horizon
        ends = np.append(self.regime_tau[1:], T)
        out = np.zeros(flat.shape)
        for r in range(self.regime_tau.size):
            lo = np.maximum(flat, self.regime_tau[r])
            hi = np.full(flat.shape, ends[r])
            live = lo < hi
            if not np.any(live):
                continue
            k_lo, p_lo = self.model.tails(lo[live])
            k_hi, p_hi = self.model.tails(hi[live])
            out[live] += self.regime_slope[r] * (p_lo - p_hi) + self.regime_const[r] * (k_lo - k_hi)
        return float(out[0]) if np.ndim(t) == 0 else out

    def price_skeleton(self, t):
        """Deterministic part of the price: E[D] - int_t^T mu."""
        out = self.spec.dividend_mean - self.drift_integral(t)
        return out

    # -- strategies and first-order conditions ---------------------------------------

    def strategies(self, t) -> np.ndarray:
        """theta^(j)_t for every rank (rows) and time (columns)."""
        t = np.atleast_1d(self.model._check_time(t))
        o, m = self.ordering, self.model
        return _kernels.strategy_grid(
            t, o.tau, o.a_rank, self.theta0_rank, self.regime_tau, self.regime_slope, self.regime_const, m.x, m.gamma_nodes
        )

    def strategy(self, j: int, t):
        p = self._rank(j)
        row = self.strategies(t)[p]
        return float(row[0]) if np.ndim(t) == 0 else row

    def gamma_processes(self, t) -> np.ndarray:
        t = np.atleast_1d(self.model._check_time(t))
        o, m = self.ordering, self.model
        return _kernels.gamma_grid(t, o.tau, o.A, m.x, m.kappa_nodes, m.gamma_nodes, m.k_tail, m.p_tail)

    def gamma_process(self, j: int, t):
        p = self._rank(j)
        row = self.gamma_processes(t)[p]
        return float(row[0]) if np.ndim(t) == 0 else row

    def foc_processes(self, t) -> np.ndarray:
        gam = self.gamma_processes(t)
        return foc_from_gamma(gam)

    def foc_process(self, j: int, t):
        p = self._rank(j)
        row = self.foc_processes(t)[p]
        return float(row[0]) if np.ndim(t) == 0 else row

    def agent_strategy(self, agent: int, t):
        """Strategy of an agent addressed by its 0-based input index."""
        return self.strategy(self.ordering.rank_of(agent), t)

    def evaluation_grid(self, n: int = DEFAULT_GRID) -> np.ndarray:
        return evaluation_grid(self, n)


def foc_from_gamma(gam: np.ndarray) -> np.ndarray:
    """Assemble Y^(j) from the Gamma^(j) rows (rank order)."""
    I = gam.shape[0]
    y = gam.copy()
    if I > 2:
        denom = (I - np.arange(1, I - 1))[:, None].astype(float)  # I - k for k = 1..I-2
        w = gam[: I - 2] / denom
        # suffix sums over ranks k+1..I-2
        suffix = np.cumsum(w[::-1], axis=0)[::-1]
        after = np.vstack([suffix[1:], np.zeros((1, gam.shape[1]))])
        factor = ((I - np.arange(1, I - 1) + 1) / (I - np.arange(1, I - 1)))[:, None]
        y[: I - 2] = factor * gam[: I - 2] + after
    return y


def _regimes(ordering: RankOrdering, model: TrajectoryModel):
    I = ordering.size
    tau, big_a, a_sig = ordering.tau, ordering.A, ordering.a_sigma_geq
    regime_tau = np.concatenate([[0.0], tau[: I - 1]])
    slope = np.empty(I)
    for r in range(I - 1):
        slope[r] = -a_sig[r] / (I - r)
    slope[I - 1] = -a_sig[I - 2] / 2.0
    ks = np.arange(1, I - 1)
    terms = model.gamma_at(tau[ks - 1]) * big_a[ks - 1] / (I - ks) if ks.size else np.zeros(0)
    const = np.zeros(I)
    for r in range(1, I):
        const[r] = -np.sum(terms[: min(r, I - 2)])
    return regime_tau, slope, const


def _initial_price(spec: MarketSpec, model: TrajectoryModel, ordering: RankOrdering) -> float:
    I = ordering.size
    _, p0 = model.tails(0.0)
    f0 = model.F(0.0)
    total = spec.dividend_mean + p0 * ordering.a_sigma_geq[0] / I
    for j in range(1, I - 1):
        if ordering.tau[j - 1] > 0:
            term = ordering.c[j - 1] * ordering.lam
        else:
            term = ordering.A[j - 1] * f0
        total -= term / (I - j)
    return float(total)


def solve(spec: MarketSpec, model: TrajectoryModel, tie_break: TieBreak = "lowest") -> EquilibriumSolution:
    """Build the ordering and every derived quantity of the candidate equilibrium."""
    if abs(spec.horizon - model.horizon) > 1e-12 * max(1.0, spec.horizon):
        raise SpecError(f"market horizon {spec.horizon} differs from trajectory horizon {model.horizon}")
    ordering = build_ordering(spec.agents, spec.lam, model, tie_break)
    regime_tau, slope, const = _regimes(ordering, model)
    theta0 = np.array([spec.agents[i].endowment for i in ordering.perm])
    taus = np.sort(ordering.tau[ordering.tau > 0])
    if taus.size:
        taus = taus[np.concatenate([[True], np.diff(taus) > BREAKPOINT_DEDUP])]
    s0 = _initial_price(spec, model, ordering)
    for arr in (regime_tau, slope, const, theta0, taus):
        arr.setflags(write=False)
    return EquilibriumSolution(spec, model, ordering, s0, taus, regime_tau, slope, const, theta0)


def evaluation_grid(solution: EquilibriumSolution, n: int = DEFAULT_GRID) -> np.ndarray:
    """Uniform grid on [0, T] with every breakpoint inserted exactly."""
    if n < 2:
        raise DomainError("grid needs at least two points")
    T = solution.horizon
    grid = np.union1d(np.linspace(0.0, T, n), solution.breakpoints)
    keep = np.concatenate([[True], np.diff(grid) > BREAKPOINT_DEDUP])
    grid = grid[keep]
    # a breakpoint wins over a uniform node it collapsed onto
    for b in solution.breakpoints:
        grid[np.argmin(np.abs(grid - b))] = b
    return grid


def drift(solution: EquilibriumSolution, t):
    return solution.drift(t)


def strategy(solution: EquilibriumSolution, j: int, t):
    return solution.strategy(j, t)


def gamma_process(solution: EquilibriumSolution, j: int, t):
    return solution.gamma_process(j, t)


def foc_process(solution: EquilibriumSolution, j: int, t):
    return solution.foc_process(j, t)


def initial_price(solution: EquilibriumSolution) -> float:
    return solution.s0


def drift_integral(solution: EquilibriumSolution, t):
    return solution.drift_integral(t)
