"""Backward-induction construction of the rank-based ordering and stop-trade times.

Conventions used throughout the package:

* agents are addressed by their 0-based position in the input list;
* ranks are 1-based, rank ``j`` being the ``j``-th agent to stop trading, so the last
  two ranks ``I-1`` and ``I`` form the base pair. Arrays indexed by rank store rank
  ``j`` at position ``j-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ConsistencyError, DomainError, SpecError
from .trajectory import TrajectoryModel

TieBreak = Literal["lowest", "highest"]

#: tolerance of every argmax; members within it form a tie class
TIE_TOL = 1e-10
#: slack (in units of the horizon) tolerated before an eta is declared past its cap
CAP_SLACK = 1e-9


@dataclass(frozen=True)
class AgentSpec:
    target: float
    endowment: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.target) and math.isfinite(self.endowment)):
            raise SpecError("agent target and endowment must be finite")

    @property
    def relative_target(self) -> float:
        return self.target - self.endowment


@dataclass(frozen=True)
class RankOrdering:
    """Result of the backward induction.

    ``perm[j-1]`` is the agent holding rank ``j``. ``c`` is NaN wherever the
    stop-trade time is zero, since the constant is only defined for active ranks.
    """

    perm: tuple
    a_rank: np.ndarray
    A: np.ndarray
    a_sigma_geq: np.ndarray
    tau: np.ndarray
    c: np.ndarray
    lam: float

    @property
    def size(self) -> int:
        return len(self.perm)

    def rank_of(self, agent: int) -> int:
        return self.perm.index(agent) + 1

    def tail_sum(self, j: int, model: TrajectoryModel) -> float:
        """sum_{k=j+1}^{I-2} A^(k) F(tau^(k)) / (I-k), evaluated through F."""
        I = self.size
        ks = np.arange(j + 1, I - 1)
        if ks.size == 0:
            return 0.0
        return float(np.sum(self.A[ks - 1] * model.F(self.tau[ks - 1]) / (I - ks)))


def _relative_targets(agents) -> np.ndarray:
    a = np.array([ag.relative_target if isinstance(ag, AgentSpec) else float(ag) for ag in agents], dtype=float)
    if a.size < 2:
        raise SpecError(f"at least two agents are required, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise SpecError("relative targets must be finite")
    return a


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not math.isfinite(lam) or lam <= 0:
        raise SpecError(f"transaction cost lambda must be positive, got {lam!r}")
    return lam


def _sign(x: float) -> float:
    return float(np.sign(x))


def _threshold(lam: float, coef: float) -> float:
    """lam / coef, saturating to inf for subnormal coefficients."""
    with np.errstate(over="ignore"):
        return float(np.float64(lam) / np.float64(coef))


def _score(b: float, sigma: float) -> float:
    """Selection score of a candidate with coefficient ``b`` (lambda-free ranking rule)."""
    return max(b, 0.0) / (1.0 - sigma) + max(-b, 0.0) / (1.0 + sigma)


def _pick(candidates: Sequence, etas: np.ndarray, scores: np.ndarray, tie_break: TieBreak):
    etas = np.asarray(etas, dtype=float)
    scores = np.asarray(scores, dtype=float)
    emax = etas.max()
    tie = etas >= emax - TIE_TOL * (1.0 + abs(emax))
    smax = scores[tie].max()
    # scores carry the units of the targets, so their tolerance is purely relative
    tie &= scores >= smax - TIE_TOL * abs(smax)
    members = [cand for cand, keep in zip(candidates, tie) if keep]
    return min(members) if tie_break == "lowest" else max(members)


# ---------------------------------------------------------------------------
# base case: ranks I-1 and I
# ---------------------------------------------------------------------------


def eta_base(a_i: float, a_l: float, lam: float, model: TrajectoryModel) -> float:
    """inf{t : |(a_i - a_l)/2| F(t) <= lam}."""
    lam = _check_lambda(lam)
    half = abs(a_i - a_l) / 2.0
    if half == 0.0:
        return 0.0
    return model.invert_F(_threshold(lam, half))


def _select_base(a: np.ndarray, lam, model, tie_break: TieBreak):
    I = a.size
    pairs = [(i, l) for i in range(I) for l in range(i + 1, I)]
    gaps = np.array([abs(a[i] - a[l]) / 2.0 for i, l in pairs])
    if model is None:
        etas = np.zeros(len(pairs))
    else:
        # eta is nondecreasing in the gap, so only distinct gaps need an inversion
        uniq, inv = np.unique(gaps, return_inverse=True)
        etas = np.array([0.0 if g == 0 else model.invert_F(_threshold(lam, g)) for g in uniq])[inv]
    best = _pick(pairs, etas, gaps, tie_break)
    return best[0], best[1], float(etas[pairs.index(best)])


def base_case(agents, lam: float, model: TrajectoryModel, tie_break: TieBreak = "lowest"):
    """Choose the base pair; returns ``(i_star, l_star, tau)`` with 0-based agent indices.

    Among pairs maximising eta the pair with the largest target gap wins, then the
    lexicographically smallest (or largest) pair. The gap key keeps the extreme pair
    even when every eta is zero, which the ordering of stop-trade times relies on.
    """
    a = _relative_targets(agents)
    lam = _check_lambda(lam)
    return _select_base(a, lam, model, tie_break)


# ---------------------------------------------------------------------------
# induction step
# ---------------------------------------------------------------------------


def eta_step(
    a_i: float,
    j: int,
    a_sigma_tail: float,
    tail_const: float,
    lam: float,
    model: TrajectoryModel,
    t_cap: float,
    n_agents: int,
) -> float:
    """Stop-trade candidate of an agent with relative target ``a_i`` at rank ``j``.

    ``a_sigma_tail`` is the sum of relative targets of ranks above ``j`` and
    ``tail_const`` the (constant on [0, t_cap]) contribution of ranks j+1..I-2.
    """
    lam = _check_lambda(lam)
    if abs(tail_const) >= lam:
        raise ConsistencyError(f"tail constant {tail_const!r} is not inside (-lambda, lambda)")
    b = a_i - a_sigma_tail / (n_agents - j)
    if b == 0.0:
        return 0.0
    f0 = model.F(0.0)
    if b > 0:
        eta = model.invert_F((lam - tail_const) / b) if b * f0 + tail_const > lam else 0.0
    else:
        eta = model.invert_F((lam + tail_const) / (-b)) if b * f0 + tail_const < -lam else 0.0
    if eta > t_cap:
        if eta > t_cap + CAP_SLACK * model.horizon:
            raise ConsistencyError(f"eta={eta!r} exceeds the next stop-trade time {t_cap!r}")
        eta = t_cap
    return eta


def eta_full_expression(a_i: float, j: int, ordering: RankOrdering, model: TrajectoryModel, t):
    """The expression bounded by lambda in the definition of eta, with F(t v tau^(k)) kept.

    Only ranks ``j+1 .. I`` of ``ordering`` are read.
    """
    I = ordering.size
    if not 1 <= j <= I - 2:
        raise DomainError(f"rank {j} has no induction step for I={I}")
    t = np.asarray(t, dtype=float)
    b = a_i - ordering.a_sigma_geq[j] / (I - j)
    out = b * model.F(t)
    for k in range(j + 1, I - 1):
        out = out + ordering.A[k - 1] / (I - k) * model.F(np.maximum(t, ordering.tau[k - 1]))
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def _construct(a: np.ndarray, lam, model, tie_break: TieBreak):
    """Shared driver; ``model=None`` runs the lambda-free ranking only."""
    I = a.size
    perm = [0] * I
    a_rank = np.zeros(I)
    big_a = np.zeros(I)
    a_sig = np.zeros(I)
    tau = np.zeros(I)
    c_asif = np.zeros(I)
    c = np.full(I, np.nan)

    i_star, l_star, t_base = _select_base(a, lam, model, tie_break)
    perm[I - 2], perm[I - 1] = i_star, l_star
    a_rank[I - 2], a_rank[I - 1] = a[i_star], a[l_star]
    a_sig[I - 1] = a[l_star]
    a_sig[I - 2] = a[i_star] + a[l_star]
    big_a[I - 2] = a[i_star] - a_sig[I - 2] / 2.0
    big_a[I - 1] = -big_a[I - 2]
    tau[I - 2] = tau[I - 1] = t_base
    c_asif[I - 2] = _sign(big_a[I - 2])
    c_asif[I - 1] = -c_asif[I - 2]
    if t_base > 0:
        c[I - 2], c[I - 1] = c_asif[I - 2], c_asif[I - 1]
    f0 = model.F(0.0) if model is not None else None

    remaining = [i for i in range(I) if i not in (i_star, l_star)]
    for j in range(I - 2, 0, -1):
        p = j - 1
        n_after = I - j
        a_sig_next = a_sig[p + 1]
        ks = range(j + 1, I - 1)
        sigma = sum(c_asif[k - 1] / (I - k) for k in ks)
        bs = [a[i] - a_sig_next / n_after for i in remaining]
        scores = [_score(b, sigma) for b in bs]
        if model is None:
            etas = np.zeros(len(remaining))
        else:
            tail = sum((c[k - 1] * lam if tau[k - 1] > 0 else big_a[k - 1] * f0) / (I - k) for k in ks)
            t_cap = tau[p + 1]
            etas = np.array(
                [0.0 if t_cap == 0 else eta_step(a[i], j, a_sig_next, tail, lam, model, t_cap, I) for i in remaining]
            )
        choice = _pick(remaining, etas, scores, tie_break)
        eta_choice = float(etas[remaining.index(choice)])
        remaining.remove(choice)
        perm[p] = choice
        a_rank[p] = a[choice]
        a_sig[p] = a[choice] + a_sig_next
        big_a[p] = a[choice] - a_sig[p] / (I - j + 1)
        c_asif[p] = n_after / (n_after + 1.0) * (_sign(big_a[p]) - sigma)
        tau[p] = eta_choice
        if eta_choice > 0:
            c[p] = c_asif[p]
    return perm, a_rank, big_a, a_sig, tau, c


def build_ordering(agents, lam: float, model: TrajectoryModel, tie_break: TieBreak = "lowest") -> RankOrdering:
    """Run the backward induction for all ranks.

    Each argmax compares eta first, then the lambda-free selection score, then the
    agent index (``tie_break`` picks the lowest or highest index in a tie class).
    """
    a = _relative_targets(agents)
    lam = _check_lambda(lam)
    perm, a_rank, big_a, a_sig, tau, c = _construct(a, lam, model, tie_break)
    for arr in (a_rank, big_a, a_sig, tau, c):
        arr.setflags(write=False)
    return RankOrdering(tuple(perm), a_rank, big_a, a_sig, tau, c, lam)


def fast_rank(a_values, tie_break: TieBreak = "lowest") -> tuple:
    """Rank permutation from the relative targets alone (no lambda, kappa or gamma)."""
    a = _relative_targets(a_values)
    perm, *_ = _construct(a, None, None, tie_break)
    return tuple(perm)
