"""Hot numerical kernels.

Every kernel exists twice: a loop implementation compiled with ``numba.njit`` and a
vectorised numpy implementation (or, for the inherently sequential total-variation
solver, the same loop run by the interpreter). The active variant is chosen once at
import time:

* ``RADNER_JIT=0`` (also ``false``/``no``/``off``) forces the numpy path;
* otherwise numba is used when it can be imported.

Both variants are always reachable through :data:`NUMBA_KERNELS` and
:data:`NUMPY_KERNELS` so tests and the benchmark can compare them directly.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def _jit_requested() -> bool:
    flag = os.environ.get("RADNER_JIT", "1").strip().lower()
    return flag not in {"0", "false", "no", "off"}


USE_NUMBA = HAVE_NUMBA and _jit_requested()


# ---------------------------------------------------------------------------
# tail integrals K(t) = int_t^T kappa, P(t) = int_t^T kappa*gamma
# ---------------------------------------------------------------------------


def _tail_integrals_loop(x, kap, gam, k_tail, p_tail, t):
    n = x.size
    m = t.size
    k_out = np.empty(m)
    p_out = np.empty(m)
    for q in range(m):
        s = t[q]
        lo = 0
        hi = n - 1
        # largest i with x[i] <= s, restricted to a valid cell index
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if x[mid] <= s:
                lo = mid
            else:
                hi = mid
        i = lo
        xe = x[i + 1]
        w = (s - x[i]) / (xe - x[i])
        ks = kap[i] + w * (kap[i + 1] - kap[i])
        gs = gam[i] + w * (gam[i + 1] - gam[i])
        km = 0.5 * (ks + kap[i + 1])
        gm = 0.5 * (gs + gam[i + 1])
        h = (xe - s) / 6.0
        k_out[q] = k_tail[i + 1] + h * (ks + 4.0 * km + kap[i + 1])
        p_out[q] = p_tail[i + 1] + h * (ks * gs + 4.0 * km * gm + kap[i + 1] * gam[i + 1])
    return k_out, p_out


def _tail_integrals_numpy(x, kap, gam, k_tail, p_tail, t):
    i = np.clip(np.searchsorted(x, t, side="right") - 1, 0, x.size - 2)
    xe = x[i + 1]
    w = (t - x[i]) / (xe - x[i])
    ks = kap[i] + w * (kap[i + 1] - kap[i])
    gs = gam[i] + w * (gam[i + 1] - gam[i])
    km = 0.5 * (ks + kap[i + 1])
    gm = 0.5 * (gs + gam[i + 1])
    h = (xe - t) / 6.0
    k_out = k_tail[i + 1] + h * (ks + 4.0 * km + kap[i + 1])
    p_out = p_tail[i + 1] + h * (ks * gs + 4.0 * km * gm + kap[i + 1] * gam[i + 1])
    return k_out, p_out


# ---------------------------------------------------------------------------
# strategies theta^(j)_t on a grid, shape (I, G)
# ---------------------------------------------------------------------------


def _strategy_grid_loop(t, tau, a, theta0, regime_tau, slope, const, x, gam):
    n_rank = tau.size
    m = t.size
    nr = regime_tau.size
    nx = x.size
    out = np.empty((n_rank, m))
    for p in range(n_rank):
        for q in range(m):
            s = t[q] if t[q] < tau[p] else tau[p]
            # regime: largest r with regime_tau[r] <= s
            lo = 0
            hi = nr
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if regime_tau[mid] <= s:
                    lo = mid
                else:
                    hi = mid
            r = lo
            # linear interpolation of gamma at s
            c0 = 0
            c1 = nx - 1
            while c1 - c0 > 1:
                mid = (c0 + c1) // 2
                if x[mid] <= s:
                    c0 = mid
                else:
                    c1 = mid
            w = (s - x[c0]) / (x[c0 + 1] - x[c0])
            gs = gam[c0] + w * (gam[c0 + 1] - gam[c0])
            out[p, q] = theta0[p] + slope[r] * gs + const[r] + gs * a[p]
    return out


def _strategy_grid_numpy(t, tau, a, theta0, regime_tau, slope, const, x, gam):
    s = np.minimum(t[None, :], tau[:, None])
    r = np.searchsorted(regime_tau, s, side="right") - 1
    gs = np.interp(s, x, gam)
    return theta0[:, None] + slope[r] * gs + const[r] + gs * a[:, None]


# ---------------------------------------------------------------------------
# Gamma^(j)_t = A^(j) * int_{t v tau_j}^T kappa(u) (gamma(u) - gamma(tau_j)) du, shape (I, G)
# ---------------------------------------------------------------------------


def _gamma_grid_numpy(t, tau, big_a, x, kap, gam, k_tail, p_tail):
    u = np.maximum(t[None, :], tau[:, None])
    k_u, p_u = _tail_integrals_numpy(x, kap, gam, k_tail, p_tail, u.ravel())
    g_tau = np.interp(tau, x, gam)
    return big_a[:, None] * (p_u.reshape(u.shape) - g_tau[:, None] * k_u.reshape(u.shape))


# ---------------------------------------------------------------------------
# weighted 1-D total-variation denoising with an anchored start
#
#   minimise  0.5 * sum_k v_k (x_k - c_k)^2 + lam * (|x_0| + sum_k |x_k - x_{k-1}|)
#
# Exact dynamic programme over messages whose derivatives are piecewise linear,
# stored as a deque of knots (position, slope jump, offset jump).
# ---------------------------------------------------------------------------


def _tv_denoise_loop(v, c, lam):
    n = v.size
    cap = 4 * n + 8
    pos = np.empty(cap)
    da = np.empty(cap)
    db = np.empty(cap)
    head = 2 * n + 4
    tail = head
    # derivative of lam*|x| (the fixed pre-trade position is 0)
    pos[tail] = 0.0
    da[tail] = 0.0
    db[tail] = 2.0 * lam
    tail += 1
    a0 = 0.0
    b0 = -lam
    ar = 0.0
    br = lam
    lo_pt = np.empty(n)
    hi_pt = np.empty(n)
    x = np.empty(n)
    for k in range(n):
        a0 += v[k]
        b0 -= v[k] * c[k]
        ar += v[k]
        br -= v[k] * c[k]
        level = -lam if k < n - 1 else 0.0
        # left scan: smallest point where the derivative reaches `level`
        while True:
            if head == tail:
                x_lo = (level - b0) / a0
                break
            p = pos[head]
            if a0 * p + b0 >= level:
                x_lo = (level - b0) / a0
                break
            a0 += da[head]
            b0 += db[head]
            head += 1
            if a0 * p + b0 >= level:
                x_lo = p
                break
        if k == n - 1:
            x[k] = x_lo
            break
        head -= 1
        pos[head] = x_lo
        da[head] = a0
        db[head] = b0 + lam
        a0 = 0.0
        b0 = -lam
        # right scan: largest point where the derivative reaches +lam
        while True:
            if head == tail:
                x_hi = (lam - br) / ar
                break
            p = pos[tail - 1]
            if ar * p + br <= lam:
                x_hi = (lam - br) / ar
                break
            ar -= da[tail - 1]
            br -= db[tail - 1]
            tail -= 1
            if ar * p + br <= lam:
                x_hi = p
                break
        pos[tail] = x_hi
        da[tail] = -ar
        db[tail] = lam - br
        tail += 1
        ar = 0.0
        br = lam
        lo_pt[k] = x_lo
        hi_pt[k] = x_hi
    for k in range(n - 2, -1, -1):
        xk = x[k + 1]
        if xk < lo_pt[k]:
            xk = lo_pt[k]
        elif xk > hi_pt[k]:
            xk = hi_pt[k]
        x[k] = xk
    return x


def _tv_denoise_python(v, c, lam):
    return _tv_denoise_loop(np.asarray(v, dtype=float), np.asarray(c, dtype=float), float(lam))


if HAVE_NUMBA:
    _tail_integrals_jit = njit(cache=True)(_tail_integrals_loop)
    _strategy_grid_jit = njit(cache=True)(_strategy_grid_loop)
    _tv_denoise_jit = njit(cache=True)(_tv_denoise_loop)

    # calls the compiled tail-integral kernel, so it is written against it directly
    @njit(cache=True)
    def _gamma_grid_jit(t, tau, big_a, x, kap, gam, k_tail, p_tail):
        n_rank = tau.size
        m = t.size
        out = np.empty((n_rank, m))
        u = np.empty(m)
        for p in range(n_rank):
            for q in range(m):
                u[q] = t[q] if t[q] > tau[p] else tau[p]
            k_u, p_u = _tail_integrals_jit(x, kap, gam, k_tail, p_tail, u)
            c0 = 0
            c1 = x.size - 1
            while c1 - c0 > 1:
                mid = (c0 + c1) // 2
                if x[mid] <= tau[p]:
                    c0 = mid
                else:
                    c1 = mid
            w = (tau[p] - x[c0]) / (x[c0 + 1] - x[c0])
            g_tau = gam[c0] + w * (gam[c0 + 1] - gam[c0])
            for q in range(m):
                out[p, q] = big_a[p] * (p_u[q] - g_tau * k_u[q])
        return out

    NUMBA_KERNELS = SimpleNamespace(
        tail_integrals=_tail_integrals_jit,
        strategy_grid=_strategy_grid_jit,
        gamma_grid=_gamma_grid_jit,
        tv_denoise=_tv_denoise_jit,
    )
else:  # pragma: no cover
    NUMBA_KERNELS = None

NUMPY_KERNELS = SimpleNamespace(
    tail_integrals=_tail_integrals_numpy,
    strategy_grid=_strategy_grid_numpy,
    gamma_grid=_gamma_grid_numpy,
    tv_denoise=_tv_denoise_python,
)

ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS


def tail_integrals(x, kap, gam, k_tail, p_tail, t):
    return ACTIVE.tail_integrals(x, kap, gam, k_tail, p_tail, np.ascontiguousarray(t, dtype=float))


def strategy_grid(t, tau, a, theta0, regime_tau, slope, const, x, gam):
    return ACTIVE.strategy_grid(np.ascontiguousarray(t, dtype=float), tau, a, theta0, regime_tau, slope, const, x, gam)


def gamma_grid(t, tau, big_a, x, kap, gam, k_tail, p_tail):
    return ACTIVE.gamma_grid(np.ascontiguousarray(t, dtype=float), tau, big_a, x, kap, gam, k_tail, p_tail)


def tv_denoise(v, c, lam):
    return ACTIVE.tv_denoise(np.ascontiguousarray(v, dtype=float), np.ascontiguousarray(c, dtype=float), float(lam))
