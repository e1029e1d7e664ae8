"""Evolution family of ``dU/dt = A(t) U`` for T-periodic ``A`` with periodic caching."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .errors import NotExponentiallyStable
from .fourier import FourierSeries

# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])

SNAP = 1e-9


def _as_series(period, value, shape, name):
    if isinstance(value, FourierSeries):
        series = value
    else:
        series = FourierSeries(period, np.asarray(value, dtype=float))
    if series.shape != shape:
        raise ValueError(f"{name} has shape {series.shape}, expected {shape}")
    if abs(series.period - period) > 1e-14 * period:
        raise ValueError(f"{name} has period {series.period}, expected {period}")
    return series


@dataclass(frozen=True, eq=False)
class PeriodicCoefficients:
    """T-periodic coefficients ``A(t)``, ``f(t)``, ``B(t)`` as Fourier series."""

    period: float
    A: FourierSeries
    f: FourierSeries
    B: FourierSeries

    def __post_init__(self):
        T = float(self.period)
        if not T > 0:
            raise ValueError("period must be positive")
        A = self.A if isinstance(self.A, FourierSeries) else FourierSeries(T, np.atleast_2d(self.A))
        d = A.shape[0]
        object.__setattr__(self, "period", T)
        object.__setattr__(self, "A", _as_series(T, A, (d, d), "A"))
        f = np.zeros(d) if self.f is None else self.f
        object.__setattr__(self, "f", _as_series(T, f if isinstance(f, FourierSeries)
                                                 else np.atleast_1d(f), (d,), "f"))
        B = np.eye(d) if self.B is None else self.B
        object.__setattr__(self, "B", _as_series(T, B if isinstance(B, FourierSeries)
                                                 else np.atleast_2d(B), (d, d), "B"))
        if not np.isfinite(self.B.sup_norm()):
            raise ValueError("B must be bounded")

    @classmethod
    def constant(cls, A, f=None, B=None, period=1.0):
        return cls(period, np.atleast_2d(np.asarray(A, dtype=float)), f, B)

    @property
    def dim(self):
        return self.A.shape[0]

    @property
    def sup_B(self):
        return self.B.sup_norm()


def _rk_segments(A, a, b, tol, max_steps=100_000):
    """``U(b_k, a_k)`` for each k by one batched adaptive Dormand-Prince solve.

    Time is rescaled to ``sigma in [0, 1]`` per segment so the whole batch
    shares one step sequence.
    """
    m = a.size
    d = A.shape[0]
    L = b - a
    Y = np.broadcast_to(np.eye(d), (m, d, d)).copy()
    if m == 0 or not np.any(L):
        return Y
    Lc = L[:, None, None]

    def rhs(sig, y):
        return Lc * (A(a + sig * L) @ y)

    sig, step = 0.0, 1.0
    k1 = rhs(0.0, Y)
    for _ in range(max_steps):
        if sig >= 1.0:
            return Y
        step = min(step, 1.0 - sig)
        ks = [k1]
        for i in range(1, 7):
            yi = Y + step * sum(c * k for c, k in zip(_DP_A[i], ks))
            ks.append(rhs(sig + _DP_C[i] * step, yi))
        y5 = Y + step * sum(c * k for c, k in zip(_DP_B5, ks) if c)
        y4 = Y + step * sum(c * k for c, k in zip(_DP_B4, ks) if c)
        scale = tol * (1.0 + np.maximum(np.abs(Y), np.abs(y5)))
        err = float(np.max(np.abs(y5 - y4) / scale))
        if err <= 1.0:
            sig += step
            Y = y5
            k1 = ks[6]  # first-same-as-last
        factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        step *= factor
    raise RuntimeError("ODE integration exceeded the step budget")


def _stacked_power(M, q):
    """``M[k] ** q[k]`` for stacked square matrices by binary exponentiation."""
    out = np.broadcast_to(np.eye(M.shape[-1]), M.shape).copy()
    base = M.copy()
    q = q.astype(np.int64).copy()
    while np.any(q > 0):
        odd = (q & 1).astype(bool)
        if np.any(odd):
            out[odd] = out[odd] @ base[odd]
        q >>= 1
        live = q > 0
        if np.any(live):
            base[live] = base[live] @ base[live]
    return out


class EvolutionFamily:
    """Propagator oracle ``U(t, s)`` with one-period cache.

    ``F[i, r] = U((i + r) h, i h)`` for ``h = T / n_grid`` and the monodromy
    ``U(ih + T, ih) = F[i, n_grid]`` are built once; any ``U(t, s)`` is then a
    product of a monodromy power, one cached block and at most two directly
    integrated boundary segments.
    """

    def __init__(self, coefficients: PeriodicCoefficients, ode_tol=1e-10, n_grid=256):
        if not ode_tol > 0:
            raise ValueError("ode_tol must be positive")
        self.coefficients = coefficients
        self.ode_tol = float(ode_tol)
        self.n_grid = int(n_grid)
        self.period = coefficients.period
        self.dim = coefficients.dim
        self.h = self.period / self.n_grid
        self._A = coefficients.A
        self._local_tol = self.ode_tol * min(1.0, self.h)
        n = self.n_grid
        starts = np.arange(n) * self.h
        steps = _rk_segments(self._A, starts, starts + self.h, self._local_tol)
        F = np.empty((n, n + 1, self.dim, self.dim))
        F[:, 0] = np.eye(self.dim)
        for r in range(n):
            F[:, r + 1] = steps[(np.arange(n) + r) % n] @ F[:, r]
        self._F = F
        self._F.setflags(write=False)

    @property
    def monodromy(self):
        """``U(ih + T, ih)`` for every grid index i, shape (n_grid, d, d)."""
        return self._F[:, self.n_grid]

    def propagator(self, t, s, adjoint=False):
        """``U(t, s)`` (or its transpose) for scalar times ``s <= t``."""
        if s > t:
            raise ValueError(f"propagator needs s <= t, got s={s}, t={t}")
        U = self.propagators(np.array([t], dtype=float), np.array([s], dtype=float))[0]
        return U.T if adjoint else U

    def propagators(self, t, s, adjoint=False):
        """Broadcast version of :meth:`propagator`; returns shape ``(..., d, d)``."""
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        shape = t.shape
        t = t.ravel()
        s = s.ravel()
        if np.any(s > t):
            raise ValueError("propagators need s <= t")
        out = self._batch(t, s)
        if adjoint:
            out = np.swapaxes(out, -1, -2)
        return out.reshape(shape + (self.dim, self.dim))

    def _batch(self, t, s):
        n, h, T, d = self.n_grid, self.h, self.period, self.dim
        m = t.size
        out = np.broadcast_to(np.eye(d), (m, d, d)).copy()
        live = t > s
        if not np.any(live):
            return out
        shift = np.floor(s / T) * T
        sp = s - shift
        tp = t - shift
        ps = sp / h
        pt = tp / h
        rs = np.round(ps)
        rt = np.round(pt)
        left_exact = np.abs(ps - rs) <= SNAP
        right_exact = np.abs(pt - rt) <= SNAP
        i0 = np.where(left_exact, rs, np.ceil(ps)).astype(np.int64)
        j = np.where(right_exact, rt, np.floor(pt)).astype(np.int64)
        same = live & (j < i0)
        grid = live & ~same

        if np.any(same):
            idx = np.nonzero(same)[0]
            out[idx] = _rk_segments(self._A, sp[idx], tp[idx], self._local_tol)
        if not np.any(grid):
            return out

        idx = np.nonzero(grid)[0]
        i0g, jg = i0[idx], j[idx]
        q, r = np.divmod(jg - i0g, n)
        i0m = i0g % n
        mid = self._F[i0m, r] @ _stacked_power(self._F[i0m, n], q)

        seg_a = [sp[idx], jg * h]
        seg_b = [i0g * h, tp[idx]]
        need_left = ~left_exact[idx]
        need_right = ~right_exact[idx]
        a = np.concatenate([seg_a[0][need_left], seg_a[1][need_right]])
        b = np.concatenate([seg_b[0][need_left], seg_b[1][need_right]])
        segs = _rk_segments(self._A, a, b, self._local_tol)
        n_left = int(need_left.sum())
        if n_left:
            mid[need_left] = mid[need_left] @ segs[:n_left]
        if np.any(need_right):
            mid[need_right] = segs[n_left:] @ mid[need_right]
        out[idx] = mid
        return out


def propagator(fam: EvolutionFamily, t, s, adjoint=False):
    return fam.propagator(t, s, adjoint)


class Envelope(NamedTuple):
    M_env: float
    omega: float


def stability_envelope(fam: EvolutionFamily, horizon, n_s=16, n_tau=128) -> Envelope:
    """Tightest ``M e^{-omega tau}`` (``M >= 1``) dominating sampled ``||U(s+tau, s)||``.

    Fits ``log M - omega tau >= log ||U||`` by a linear program minimizing the
    summed log-envelope over the samples, then raises ``log M`` if needed so
    every sample is dominated exactly.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    s = np.arange(n_s) * fam.period / n_s
    tau = np.arange(1, n_tau + 1) * horizon / n_tau
    S, TAU = np.meshgrid(s, tau, indexing="ij")
    U = fam.propagators(S + TAU, S)
    y = np.log(np.linalg.norm(U, ord=2, axis=(-2, -1))).ravel()
    tv = TAU.ravel()
    # variables (c, omega): minimize sum(c - omega tau) s.t. c - omega tau_j >= y_j, c >= 0
    res = linprog(c=[tv.size, -tv.sum()], A_ub=np.column_stack([-np.ones_like(tv), tv]),
                  b_ub=-y, bounds=[(0, None), (None, None)], method="highs")
    if not res.success:
        raise NotExponentiallyStable(f"envelope fit failed: {res.message}")
    c, omega = res.x
    if omega <= 1e-9:
        raise NotExponentiallyStable(
            f"fitted decay rate omega={omega:.3e} is not positive over horizon {horizon}")
    c = max(c, float(np.max(y + omega * tv)), 0.0)
    return Envelope(float(np.exp(c)), float(omega))
