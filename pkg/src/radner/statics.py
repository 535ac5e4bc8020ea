"""Comparative statics in the transaction cost lambda."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumSolution, MarketSpec, solve
from .errors import ConsistencyError, DomainError, UnsupportedOperation
from .ranking import build_ordering, fast_rank
from .trajectory import TrajectoryModel

KINK_TOL = 1e-8


@dataclass(frozen=True)
class SweepResult:
    """Solutions over a lambda grid; per-rank arrays are indexed ``[lambda, rank-1]``."""

    spec: MarketSpec
    model: TrajectoryModel
    lambdas: np.ndarray
    s0: np.ndarray
    tau: np.ndarray
    c: np.ndarray
    perm: tuple
    active_counts: np.ndarray

    @property
    def active(self) -> np.ndarray:
        return self.tau > 0


def lambda_sweep(spec: MarketSpec, model: TrajectoryModel, lambdas) -> SweepResult:
    lams = np.asarray(lambdas, dtype=float)
    if lams.ndim != 1 or lams.size == 0:
        raise DomainError("lambda grid must be a non-empty 1-D sequence")
    if np.any(~np.isfinite(lams)) or np.any(lams <= 0):
        raise DomainError("every lambda must be positive and finite")
    if np.any(np.diff(lams) <= 0):
        raise DomainError("lambda grid must be strictly increasing")
    perm = fast_rank(spec.agents)
    n = spec.n_agents
    s0 = np.empty(lams.size)
    tau = np.empty((lams.size, n))
    c = np.empty((lams.size, n))
    for q, lam in enumerate(lams):
        sol = solve(spec.with_lambda(float(lam)), model)
        if sol.ordering.perm != perm:
            raise ConsistencyError(f"rank permutation changed at lambda={lam!r}")
        s0[q] = sol.s0
        tau[q] = sol.ordering.tau
        c[q] = sol.ordering.c
    counts = np.sum(tau > 0, axis=1)
    for arr in (lams, s0, tau, c, counts):
        arr.setflags(write=False)
    return SweepResult(spec, model, lams, s0, tau, c, perm, counts)


def _rank_active(spec: MarketSpec, model: TrajectoryModel, lam: float, p: int) -> bool:
    return bool(build_ordering(spec.agents, lam, model).tau[p] > 0)


def kink_points(sweep: SweepResult, tol: float = KINK_TOL) -> list:
    """lambda values where the set of trading ranks changes, refined by bisection.

    Each rank is active (tau > 0) exactly for lambda below its own threshold, so every
    rank that switches inside a grid cell is bisected separately.
    """
    if sweep.lambdas.size < 3:
        raise DomainError("kink detection needs at least three lambda values")
    act = sweep.active
    kinks = []
    for q in range(sweep.lambdas.size - 1):
        changed = np.nonzero(act[q] != act[q + 1])[0]
        for p in changed:
            lo, hi = float(sweep.lambdas[q]), float(sweep.lambdas[q + 1])
            state_lo = bool(act[q, p])
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if _rank_active(sweep.spec, sweep.model, mid, p) == state_lo:
                    lo = mid
                else:
                    hi = mid
            kinks.append(0.5 * (lo + hi))
    kinks.sort()
    merged = []
    for k in kinks:
        if not merged or k - merged[-1] > tol:
            merged.append(k)
    return merged


@dataclass(frozen=True)
class SlopeEntry:
    """Regime ``regime`` spans [tau^(regime), tau^(regime+1)), with tau^(0) = 0."""

    regime: int
    start: float
    end: float
    slope: float


def slope_table(solution: EquilibriumSolution) -> list:
    """d(mu/kappa)/dt on each of the I drift regimes, empty regimes included."""
    m = solution.model
    if not m.gamma_differentiable:
        raise UnsupportedOperation("slopes need a differentiable gamma (TWAP or a single-line table)")
    ends = np.append(solution.regime_tau[1:], solution.horizon)
    out = []
    for r in range(solution.regime_tau.size):
        start, end = float(solution.regime_tau[r]), float(ends[r])
        rep = 0.5 * (start + end)
        out.append(SlopeEntry(r, start, end, float(solution.regime_slope[r] * m.gamma_prime(rep))))
    return out
