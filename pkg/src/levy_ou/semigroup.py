"""Transition semigroups acting on exponential test functions.

A :class:`KFunction` is a finite sum ``sum_j Phi_j(t) exp(i <x, h_j(t)>)`` with
T-periodic ``Phi_j`` and ``h_j`` (or the real part of such a sum).  Both the
two-parameter family ``P(s,t)`` and the reduced semigroup ``P_tau`` map this
class into itself in closed form, which makes every check here a quadrature
rather than a Monte-Carlo estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fourier import FourierSeries
from .measures import IDLaw, esm_char_fn, limit_triple, truncation_periods
from .quadrature import gauss_legendre
from .solution import Scenario, char_fn, transition_exponent


def _t_array(t):
    return np.atleast_1d(np.asarray(t, dtype=float))


@dataclass(frozen=True, eq=False)
class ExpTerm:
    """``Phi(t) exp(i <x, h(t)>)`` with optional time derivatives of ``Phi`` and ``h``.

    All callables take a 1-D time array of length n and return arrays of shape
    (n,) for amplitudes and (n, d) for frequencies.
    """

    amplitude: Callable
    frequency: Callable
    d_amplitude: Optional[Callable] = None
    d_frequency: Optional[Callable] = None

    @classmethod
    def fourier(cls, amplitude: FourierSeries, frequency: FourierSeries):
        if amplitude.shape != () or len(frequency.shape) != 1:
            raise ValueError("amplitude must be scalar-valued and frequency vector-valued")
        if abs(amplitude.period - frequency.period) > 1e-14 * amplitude.period:
            raise ValueError("amplitude and frequency must share the period")
        return cls(amplitude, frequency, amplitude.derivative(), frequency.derivative())

    @classmethod
    def constant(cls, amplitude, frequency, period=1.0):
        h = np.atleast_1d(np.asarray(frequency, dtype=float))
        return cls.fourier(FourierSeries(period, complex(amplitude)), FourierSeries(period, h))

    @property
    def differentiable(self):
        return self.d_amplitude is not None and self.d_frequency is not None

    def conj(self):
        a, h, da, dh = self.amplitude, self.frequency, self.d_amplitude, self.d_frequency
        return ExpTerm(lambda t: np.conj(a(t)), lambda t: -h(t),
                       None if da is None else (lambda t: np.conj(da(t))),
                       None if dh is None else (lambda t: -dh(t)))

    def scaled(self, c):
        a, da = self.amplitude, self.d_amplitude
        return ExpTerm(lambda t: c * a(t), self.frequency,
                       None if da is None else (lambda t: c * da(t)), self.d_frequency)

    def times(self, other: "ExpTerm"):
        a1, h1, da1, dh1 = self.amplitude, self.frequency, self.d_amplitude, self.d_frequency
        a2, h2, da2, dh2 = other.amplitude, other.frequency, other.d_amplitude, other.d_frequency
        da = dh = None
        if self.differentiable and other.differentiable:
            def da(t):
                return da1(t) * a2(t) + a1(t) * da2(t)

            def dh(t):
                return dh1(t) + dh2(t)
        return ExpTerm(lambda t: a1(t) * a2(t), lambda t: h1(t) + h2(t), da, dh)

    def modulated(self, k, period):
        """``exp(2 pi i k t / T) * Phi(t)`` in place of ``Phi``."""
        a, da = self.amplitude, self.d_amplitude
        w = 2.0 * np.pi * k / period

        def amp(t):
            return np.exp(1j * w * t) * a(t)

        dam = None
        if da is not None:
            def dam(t):
                return np.exp(1j * w * t) * (da(t) + 1j * w * a(t))
        return ExpTerm(amp, self.frequency, dam, self.d_frequency)


MODES = ("re", "complex", "hermitian")


class KFunction:
    """Finite sum of :class:`ExpTerm`.

    ``mode="re"``: the function is the real part of the sum.
    ``mode="complex"``: the function is the sum itself.
    ``mode="hermitian"``: the sum is real by construction (closed under
    conjugation); evaluation discards the rounding-level imaginary part.
    """

    def __init__(self, terms, dim, mode="re"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.terms = tuple(terms)
        self.dim = int(dim)
        self.mode = mode

    @classmethod
    def exponential(cls, h, amplitude=1.0, period=1.0, mode="complex"):
        h = np.atleast_1d(np.asarray(h, dtype=float))
        return cls([ExpTerm.constant(amplitude, h, period)], h.size, mode)

    @classmethod
    def constant(cls, c, dim, period=1.0):
        return cls([ExpTerm.constant(c, np.zeros(dim), period)], dim, "re")

    @property
    def is_real(self):
        return self.mode != "complex"

    def complex_terms(self):
        """Terms whose plain sum equals this function."""
        if self.mode == "re":
            half = [t.scaled(0.5) for t in self.terms]
            return half + [t.conj() for t in half]
        return list(self.terms)

    def _parts(self, t, x):
        t = _t_array(t)
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        n = max(t.size, x.shape[0])
        return np.broadcast_to(t, (n,)), np.broadcast_to(x, (n, self.dim))

    def _finish(self, vals):
        return vals.real if self.is_real else vals

    def __call__(self, t, x):
        t, x = self._parts(t, x)
        out = np.zeros(t.shape, dtype=complex)
        for term in self.terms:
            out += term.amplitude(t) * np.exp(1j * np.einsum("nd,nd->n", x, term.frequency(t)))
        return self._finish(out)

    def gradient(self, t, x):
        t, x = self._parts(t, x)
        out = np.zeros(x.shape, dtype=complex)
        for term in self.terms:
            h = term.frequency(t)
            out += 1j * h * (term.amplitude(t) * np.exp(1j * np.einsum("nd,nd->n", x, h)))[:, None]
        return self._finish(out)

    def __add__(self, other: "KFunction"):
        if self.mode == other.mode:
            return KFunction(self.terms + other.terms, self.dim, self.mode)
        mode = "hermitian" if self.is_real and other.is_real else "complex"
        return KFunction(self.complex_terms() + other.complex_terms(), self.dim, mode)

    def scaled(self, c):
        if self.is_real and np.iscomplexobj(c) and np.imag(c) != 0:
            return KFunction([t.scaled(c) for t in self.complex_terms()], self.dim, "complex")
        return KFunction([t.scaled(c) for t in self.terms], self.dim, self.mode)

    def __mul__(self, other: "KFunction"):
        terms = [a.times(b) for a in self.complex_terms() for b in other.complex_terms()]
        mode = "hermitian" if self.is_real and other.is_real else "complex"
        return KFunction(terms, self.dim, mode)

    def conj(self):
        if self.is_real:
            return self
        return KFunction([t.conj() for t in self.terms], self.dim, "complex")

    def abs2(self):
        return self * self.conj()

    def modulated(self, k, period):
        """``exp(2 pi i k t / T) u(t, x)`` as a complex K-function."""
        return KFunction([t.modulated(k, period) for t in self.complex_terms()], self.dim, "complex")


class _PTauCache:
    """Per-time ``Psi_j(t)`` and ``k_j(t)`` for every term of ``P_tau u``."""

    def __init__(self, sc: Scenario, terms, tau):
        self.sc = sc
        self.terms = terms
        self.tau = float(tau)
        self._store = {}

    def __call__(self, t):
        t = _t_array(t)
        missing = [v for v in np.unique(t) if float(v) not in self._store]
        if missing:
            sc, tau = self.sc, self.tau
            tm = np.asarray(missing)
            UT = sc.U(tm + tau, tm, adjoint=True)
            for i, ti in enumerate(tm):
                end = np.array([ti + tau])
                H = np.array([term.frequency(end)[0] for term in self.terms])
                phi = np.array([term.amplitude(end)[0] for term in self.terms])
                psi = phi * np.exp(transition_exponent(sc, ti, ti + tau, H))
                self._store[float(ti)] = (psi, H @ UT[i].T)
        psi = np.array([self._store[float(v)][0] for v in t])
        k = np.array([self._store[float(v)][1] for v in t])
        return psi, k


def apply_P_tau(sc: Scenario, u: KFunction, tau) -> KFunction:
    """``(P_tau u)(t, x) = E u(t + tau, X(t + tau, t, x))`` as a K-function.

    Each term ``Phi e^{i<x,h>}`` maps to ``Psi e^{i<x,k>}`` with
    ``k(t) = U(t+tau,t)^T h(t+tau)`` and ``Psi(t) = Phi(t+tau)`` times the
    transition characteristic exponent.  ``tau = 0`` returns ``u``.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0:
        return u
    cache = _PTauCache(sc, u.terms, tau)

    def term(j):
        return ExpTerm(lambda t: cache(t)[0][:, j], lambda t: cache(t)[1][:, j])

    return KFunction([term(j) for j in range(len(u.terms))], u.dim, u.mode)


def two_param_apply(sc: Scenario, h, s, t, x):
    """``P(s,t) f_h (x) = E exp(i <h, X(t,s,x)>)``."""
    return char_fn(sc, s, t, x, h)


def flow_defect(sc: Scenario, r, s, t, h, x):
    """``|P(r,s) P(s,t) f_h (x) - P(r,t) f_h (x)|`` using closed forms on both routes."""
    h = np.asarray(h, dtype=float)
    if not r <= s <= t:
        raise ValueError("flow_defect needs r <= s <= t")
    # P(s,t) f_h = exp(E_{s,t}(h)) f_{U(t,s)^T h}
    k = sc.family.propagator(t, s, adjoint=True) @ h if t > s else h
    inner = transition_exponent(sc, s, t, h)
    lhs = np.exp(inner) * char_fn(sc, r, s, x, k)
    rhs = char_fn(sc, r, t, x, h)
    return float(abs(lhs - rhs))


def generator_L(sc: Scenario, u: KFunction, drift_form="L"):
    """Evaluator ``(t, x) -> (L u)(t, x)`` for a differentiable K-function.

    ``drift_form="L"`` uses ``i <A x + f, h>``; ``"G"`` uses the variant
    ``i <x + f, A^T h>``, kept only so finite differences can tell them apart.
    """
    if drift_form not in ("L", "G"):
        raise ValueError("drift_form must be 'L' or 'G'")
    for term in u.terms:
        if not term.differentiable:
            raise ValueError("generator_L needs time derivatives of every term")
    coef = sc.coefficients

    def L(t, x):
        t, x = u._parts(t, x)
        A, f, B = coef.A(t), coef.f(t), coef.B(t)
        out = np.zeros(t.shape, dtype=complex)
        for term in u.terms:
            phi, h = term.amplitude(t), term.frequency(t)
            dphi, dh = term.d_amplitude(t), term.d_frequency(t)
            Ah = np.einsum("nde,nd->ne", A, h)  # A^T h
            if drift_form == "L":
                drift = np.einsum("nd,nd->n", x, Ah) + np.einsum("nd,nd->n", f, h)
            else:
                drift = np.einsum("nd,nd->n", x + f, Ah)
            lam = sc.noise.symbol(np.einsum("nde,nd->ne", B, h))
            e = np.exp(1j * np.einsum("nd,nd->n", x, h))
            out += (dphi + 1j * phi * np.einsum("nd,nd->n", x, dh) + 1j * drift * phi + lam * phi) * e
        return u._finish(out)

    return L


def generator_fd_check(sc: Scenario, u: KFunction, taus, t_probe, x_probe, drift_form="L"):
    """``max |(P_tau u - u)/tau - L u|`` over the probes, per tau, and successive ratios."""
    taus = [float(v) for v in taus]
    if len(taus) < 2 or any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be a decreasing list of at least two values")
    t_probe = _t_array(t_probe)
    x_probe = np.asarray(x_probe, dtype=float).reshape(-1, u.dim)
    Lu = generator_L(sc, u, drift_form)(t_probe, x_probe)
    base = u(t_probe, x_probe)
    errors = []
    for tau in taus:
        q = (apply_P_tau(sc, u, tau)(t_probe, x_probe) - base) / tau
        errors.append(float(np.max(np.abs(q - Lu))))
    ratios = [a / b if b > 0 else float("nan") for a, b in zip(errors, errors[1:])]
    return {"taus": taus, "errors": errors, "ratios": ratios, "drift_form": drift_form}


class SpaceTimeMeasure:
    """``nu = nu_t (x) dt/T`` discretized by the periodic trapezoid rule in t.

    Every slice is the ID law of ``nu_t``; integrals of K-functions reduce to
    characteristic-function evaluations of those laws.
    """

    def __init__(self, sc: Scenario, times, laws):
        self.sc = sc
        self.times = np.asarray(times, dtype=float)
        self.laws = list(laws)
        self.weights = np.full(self.times.size, 1.0 / self.times.size)

    @classmethod
    def build(cls, sc: Scenario, n_time=64, tol=None):
        times = np.arange(n_time) * sc.period / n_time
        return cls(sc, times, [limit_triple(sc, t, tol) for t in times])

    def slice_integrals(self, u: KFunction):
        """``int u(t_j, x) nu_{t_j}(dx)`` for each time node."""
        out = np.zeros(self.times.size, dtype=complex)
        for j, (t, law) in enumerate(zip(self.times, self.laws)):
            tj = np.array([t])
            for term in u.terms:
                out[j] += term.amplitude(tj)[0] * law.char_fn(term.frequency(tj)[0])
        return out.real if u.is_real else out

    def integrate(self, u: KFunction):
        return self.weights @ self.slice_integrals(u)

    def l2_norm(self, u: KFunction):
        return float(np.sqrt(max(self.integrate(u.abs2()).real, 0.0)))

    def integrate_L(self, u: KFunction, drift_form="L"):
        """``int L u d nu`` using ``int x e^{i<x,h>} d nu_t = -i grad nu_t^(h)``."""
        coef = self.sc.coefficients
        total = 0.0 + 0.0j
        for t, law, w in zip(self.times, self.laws, self.weights):
            tj = np.array([t])
            A, f, B = coef.A(tj)[0], coef.f(tj)[0], coef.B(tj)[0]
            for term in u.terms:
                phi, h = term.amplitude(tj)[0], term.frequency(tj)[0]
                dphi, dh = term.d_amplitude(tj)[0], term.d_frequency(tj)[0]
                nu_h = law.char_fn(h)
                grad_psi = law.char_exponent_gradient(h)
                # E[<x, v> e^{i<x,h>}] = -i nu^(h) <grad psi(h), v>
                if drift_form == "L":
                    lin = dh + A.T @ h
                    const = 1j * (f @ h)
                else:
                    lin = dh + A.T @ h
                    const = 1j * (f @ (A.T @ h))
                val = (dphi + phi * (const + self.sc.noise.symbol(B.T @ h))) * nu_h \
                    + phi * nu_h * (grad_psi @ lin)
                total += w * val
        return total.real if u.is_real else total


def ergodic_average(sc: Scenario, h, t, x, tau_max, panel=None, n_nodes=8, tol=1e-10):
    """Running Cesàro means ``(1/tau) int_0^tau P(t, t+s) f_h(x) ds``.

    The integrand is ``E exp(i<h, X(t+s, t, x)>)``; contributions older than
    the tail horizon (where ``M e^{-omega N T}`` is below ``tol``) are dropped
    from the inner r-integral.  Returns the trajectory at panel ends and the
    space-time target ``(1/T) int_0^T nu_r^(h) dr``.
    """
    h = np.asarray(h, dtype=float)
    x = np.asarray(x, dtype=float)
    if tau_max < 10.0 / sc.omega:
        raise ValueError(f"tau_max must be at least 10/omega = {10.0 / sc.omega:.4g}")
    panel = sc.period / 2 if panel is None else panel
    n_tail = truncation_periods(sc, max(1.0, np.linalg.norm(h)) * (1.0 + sc.coefficients.B.sup_norm()), tol)
    edges = np.arange(0.0, tau_max + 1e-12, panel)
    if edges[-1] < tau_max:
        edges = np.append(edges, tau_max)
    gx, gw = gauss_legendre(n_nodes)
    running, ends = [], []
    acc = 0.0 + 0.0j
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx
        vals = np.empty(n_nodes, dtype=complex)
        for i, s in enumerate(nodes):
            end = t + s
            start = max(t, end - n_tail * sc.period)
            phase = 0.0
            if np.any(x):
                phase = 1j * (h @ (sc.family.propagator(end, t) @ x))
            vals[i] = np.exp(transition_exponent(sc, start, end, h, tol=tol) + phase)
        acc += 0.5 * (hi - lo) * (gw @ vals)
        running.append(acc / hi)
        ends.append(hi)
    grid = np.arange(64) * sc.period / 64
    target = np.mean([esm_char_fn(sc, r, h) for r in grid])
    return {"tau": np.array(ends), "average": np.array(running), "target": complex(target),
            "tail_periods": n_tail}


def weak_limit_defect(sc: Scenario, h, t, x, tol=1e-7):
    """``|P(t - N T, t) f_h(x) - nu_t^(h)|`` with ``M e^{-omega N T} < tol``."""
    n = truncation_periods(sc, sc.omega, tol)
    lhs = char_fn(sc, t - n * sc.period, t, x, h)
    return float(abs(lhs - esm_char_fn(sc, t, h))), n


def modulation_defect(sc: Scenario, u: KFunction, k, t, x):
    """``max |L(e_k u) - e_k L u - (2 pi i k / T) e_k u|`` on the probes."""
    T = sc.period
    t = _t_array(t)
    x = np.asarray(x, dtype=float).reshape(-1, u.dim)
    uc = KFunction(u.complex_terms(), u.dim, "complex")
    ek = np.exp(2j * np.pi * k * t / T)
    lhs = generator_L(sc, uc.modulated(k, T))(t, x)
    rhs = ek * generator_L(sc, uc)(t, x) + (2j * np.pi * k / T) * ek * uc(t, x)
    return float(np.max(np.abs(lhs - rhs)))
