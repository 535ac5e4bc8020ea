"""Penalty intensity, target trajectory, and the integral kernel built from them.

All integrals reduce to two tail integrals of the merged piecewise-linear
representation of ``kappa`` and ``gamma``::

    K(t) = int_t^T kappa(u) du,      P(t) = int_t^T kappa(u) gamma(u) du,

so that ``G(t0, s) = P(t0) - gamma(s) K(t0)`` and ``F(t) = G(t, t)``. On every cell
of the merged sample grid the integrands are polynomials of degree at most two, so
composite Simpson on that grid is exact up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import _kernels
from .errors import DomainError, SpecError

#: absolute slack accepted on time arguments before raising a domain error
TIME_SLACK = 1e-12


@dataclass(frozen=True)
class ConstantKappa:
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value <= 0:
            raise SpecError(f"kappa must be finite and strictly positive, got {self.value!r}")


@dataclass(frozen=True)
class TabulatedKappa:
    """Strictly positive samples of kappa on a uniform grid over [0, T]."""

    values: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise SpecError("a kappa table needs at least two samples")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise SpecError("kappa samples must be finite and strictly positive")
        object.__setattr__(self, "values", tuple(float(v) for v in vals))


@dataclass(frozen=True)
class Twap:
    """The TWAP trajectory gamma(t) = t / T."""


@dataclass(frozen=True)
class TabulatedGamma:
    """Samples of gamma on a uniform grid over [0, T]; gamma(0)=0, gamma(T)=1, strictly increasing."""

    values: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise SpecError("a gamma table needs at least two samples")
        if not np.all(np.isfinite(vals)):
            raise SpecError("gamma samples must be finite")
        if abs(vals[0]) > 1e-12 or abs(vals[-1] - 1.0) > 1e-12:
            raise SpecError("gamma samples must start at 0 and end at 1")
        if np.any(np.diff(vals) <= 0):
            raise SpecError("gamma samples must be strictly increasing")
        vals[0], vals[-1] = 0.0, 1.0
        object.__setattr__(self, "values", tuple(float(v) for v in vals))


KappaModel = Union[ConstantKappa, TabulatedKappa]
GammaModel = Union[Twap, TabulatedGamma]


def _nodes(model, horizon: float) -> np.ndarray:
    if isinstance(model, (ConstantKappa, Twap)):
        return np.array([0.0, horizon])
    return np.linspace(0.0, horizon, len(model.values))


@dataclass(frozen=True)
class TrajectoryModel:
    """kappa and gamma on [0, horizon] together with the precomputed tail integrals.

    ``f_grid`` holds F on ``f_grid_size`` uniform points; it only brackets the root
    in :meth:`invert_F`, the bisection itself runs on the exact evaluator.
    """

    horizon: float
    kappa: KappaModel
    gamma: GammaModel
    f_grid_size: int = 4097
    x: np.ndarray = field(init=False, repr=False, compare=False)
    kappa_nodes: np.ndarray = field(init=False, repr=False, compare=False)
    gamma_nodes: np.ndarray = field(init=False, repr=False, compare=False)
    k_tail: np.ndarray = field(init=False, repr=False, compare=False)
    p_tail: np.ndarray = field(init=False, repr=False, compare=False)
    f_times: np.ndarray = field(init=False, repr=False, compare=False)
    f_grid: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        T = float(self.horizon)
        if not np.isfinite(T) or T <= 0:
            raise SpecError(f"horizon must be positive, got {self.horizon!r}")
        if not isinstance(self.kappa, (ConstantKappa, TabulatedKappa)):
            raise SpecError(f"unsupported kappa model {self.kappa!r}")
        if not isinstance(self.gamma, (Twap, TabulatedGamma)):
            raise SpecError(f"unsupported gamma model {self.gamma!r}")
        if self.f_grid_size < 2:
            raise SpecError("f_grid_size must be at least 2")
        object.__setattr__(self, "horizon", T)

        xk, xg = _nodes(self.kappa, T), _nodes(self.gamma, T)
        x = np.union1d(xk, xg)
        # drop near-duplicates produced by the two uniform grids
        keep = np.concatenate([[True], np.diff(x) > 1e-13 * T])
        x = x[keep]
        x[-1] = T
        if isinstance(self.kappa, ConstantKappa):
            kap = np.full(x.size, self.kappa.value)
        else:
            kap = np.interp(x, xk, np.asarray(self.kappa.values))
        gam = x / T if isinstance(self.gamma, Twap) else np.interp(x, xg, np.asarray(self.gamma.values))

        h = np.diff(x)
        km, gm = 0.5 * (kap[:-1] + kap[1:]), 0.5 * (gam[:-1] + gam[1:])
        cell_k = h / 6.0 * (kap[:-1] + 4.0 * km + kap[1:])
        cell_p = h / 6.0 * (kap[:-1] * gam[:-1] + 4.0 * km * gm + kap[1:] * gam[1:])
        k_tail = np.concatenate([np.cumsum(cell_k[::-1])[::-1], [0.0]])
        p_tail = np.concatenate([np.cumsum(cell_p[::-1])[::-1], [0.0]])

        for name, val in (("x", x), ("kappa_nodes", kap), ("gamma_nodes", gam), ("k_tail", k_tail), ("p_tail", p_tail)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

        f_times = np.linspace(0.0, T, self.f_grid_size)
        f_vals = self.F(f_times)
        f_vals[-1] = 0.0
        for name, val in (("f_times", f_times), ("f_grid", f_vals)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    # -- basic evaluators -------------------------------------------------

    @property
    def closed_form(self) -> bool:
        """True for constant kappa with TWAP gamma, where every integral has a closed form."""
        return isinstance(self.kappa, ConstantKappa) and isinstance(self.gamma, Twap)

    @property
    def gamma_differentiable(self) -> bool:
        # a piecewise-linear table is differentiable only when it is a single line
        if isinstance(self.gamma, Twap):
            return True
        return bool(np.allclose(np.diff(self.gamma.values), 1.0 / (len(self.gamma.values) - 1), rtol=0, atol=1e-12))

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        T = self.horizon
        if np.any(~np.isfinite(t)) or np.any(t < -TIME_SLACK) or np.any(t > T + TIME_SLACK * max(1.0, T)):
            raise DomainError(f"time outside [0, {T}]")
        return np.clip(t, 0.0, T)

    def kappa_at(self, t):
        t = self._check_time(t)
        return np.interp(t, self.x, self.kappa_nodes)

    def gamma_at(self, t):
        t = self._check_time(t)
        return np.interp(t, self.x, self.gamma_nodes)

    def gamma_prime(self, t):
        """Derivative of gamma; defined only when :attr:`gamma_differentiable`."""
        t = self._check_time(t)
        return np.full_like(t, 1.0 / self.horizon)

    def tails(self, t):
        """Return ``(K(t), P(t))`` for scalar or array ``t``."""
        t = self._check_time(t)
        flat = np.atleast_1d(t).ravel()
        k, p = _kernels.tail_integrals(self.x, self.kappa_nodes, self.gamma_nodes, self.k_tail, self.p_tail, flat)
        if np.ndim(t) == 0:
            return float(k[0]), float(p[0])
        return k.reshape(t.shape), p.reshape(t.shape)

    # -- kernel, F, inverse ---------------------------------------------------

    def G(self, t0, s):
        t0 = self._check_time(t0)
        s = self._check_time(s)
        if self.closed_form:
            T, kap = self.horizon, self.kappa.value
            out = kap * (T - t0) * (T + t0 - 2.0 * s) / (2.0 * T)
        else:
            k, p = self.tails(t0)
            out = p - self.gamma_at(s) * k
        return float(out) if np.ndim(out) == 0 else out

    def F(self, t):
        t = self._check_time(t)
        if self.closed_form:
            T, kap = self.horizon, self.kappa.value
            out = kap * (T - t) ** 2 / (2.0 * T)
        else:
            k, p = self.tails(t)
            out = p - self.gamma_at(t) * k
            out = np.where(t >= self.horizon, 0.0, out)
        return float(out) if np.ndim(out) == 0 else out

    def invert_F(self, y: float, tol: float = 1e-12) -> float:
        """Smallest t in [0, T] with F(t) <= y; ``y = inf`` (a vanishing coefficient) gives 0."""
        y = float(y)
        if np.isnan(y) or y < 0:
            raise DomainError(f"invert_F needs y >= 0, got {y!r}")
        T = self.horizon
        if y == 0.0:
            return T
        if self.F(0.0) <= y:
            return 0.0
        if self.closed_form:
            t = T - np.sqrt(2.0 * T * y / self.kappa.value)
            return float(min(max(t, 0.0), T))
        # f_grid is strictly decreasing: bracket [f_times[k], f_times[k+1]] with F(lo) > y >= F(hi)
        k = int(np.searchsorted(-self.f_grid, -y, side="left")) - 1
        k = min(max(k, 0), self.f_times.size - 2)
        lo, hi = float(self.f_times[k]), float(self.f_times[k + 1])
        if self.F(lo) <= y:
            lo = 0.0
        if self.F(hi) > y:
            hi = T
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self.F(mid) <= y:
                hi = mid
            else:
                lo = mid
        return hi


def kernel_G(model: TrajectoryModel, t0, s):
    """G(t0, s) = int_{t0}^T kappa(u) (gamma(u) - gamma(s)) du."""
    return model.G(t0, s)


def capital_F(model: TrajectoryModel, t):
    return model.F(t)


def invert_F(model: TrajectoryModel, y: float) -> float:
    return model.invert_F(y)


def constant_twap(kappa: float = 0.1, horizon: float = 1.0, **kwargs) -> TrajectoryModel:
    """Shorthand for the constant-intensity TWAP model."""
    return TrajectoryModel(horizon, ConstantKappa(kappa), Twap(), **kwargs)
