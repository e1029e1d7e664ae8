"""Square-field operator, gradient/jump estimate constants, Poincaré and Harnack checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.stats import norm

from .errors import ConstantsUnavailable, InfiniteRho
from .fourier import FourierSeries
from .levy import AtomList, PowerLawDensity
from .measures import transition_law
from .quadrature import gauss_legendre, integrate
from .semigroup import ExpTerm, KFunction, SpaceTimeMeasure, apply_P_tau
from .solution import Scenario


# ---------------------------------------------------------------- constants

class ExponentialConstant:
    """``C(tau) = scale * exp(-rate * tau)`` with closed-form integrals."""

    def __init__(self, scale, rate):
        if not scale > 0:
            raise ValueError("constant scale must be positive")
        self.scale = float(scale)
        self.rate = float(rate)

    def __call__(self, tau):
        return self.scale * np.exp(-self.rate * np.asarray(tau, dtype=float))

    def integral(self, tau):
        if self.rate == 0:
            return self.scale * tau
        return self.scale * (-np.expm1(-self.rate * tau)) / self.rate

    def inverse_integral(self, tau):
        """``int_0^tau ds / C(s)``."""
        if self.rate == 0:
            return tau / self.scale
        return np.expm1(self.rate * tau) / (self.scale * self.rate)

    def integral_inf(self):
        return self.scale / self.rate if self.rate > 0 else float("inf")

    def to_dict(self):
        return {"form": "exponential", "scale": self.scale, "rate": self.rate}


class GridConstant:
    """A constant known only pointwise; integrals by adaptive quadrature.

    A sup over a time grid has kinks where the maximizer switches, so the
    integrals use a looser tolerance than the smooth closed forms; the safety
    factor applied on top dwarfs this error.
    """

    tol = 1e-9

    def __init__(self, fn: Callable, horizon, panel=None):
        self.fn = fn
        self.horizon = float(horizon)
        self.panel = panel
        self._memo = {}

    def __call__(self, tau):
        return self.fn(tau)

    def integral(self, tau):
        key = ("int", float(tau))
        if key not in self._memo:
            self._memo[key] = float(integrate(self.fn, 0.0, tau, tol=self.tol, max_panel=self.panel))
        return self._memo[key]

    def inverse_integral(self, tau):
        key = ("inv", float(tau))
        if key not in self._memo:
            self._memo[key] = float(integrate(lambda s: 1.0 / self.fn(s), 0.0, tau, tol=self.tol,
                                              max_panel=self.panel))
        return self._memo[key]

    def integral_inf(self):
        return self.integral(self.horizon)

    def to_dict(self):
        return {"form": "grid_estimate", "horizon": self.horizon}


class _Scaled:
    def __init__(self, base, factor):
        self.base = base
        self.factor = factor

    def __call__(self, tau):
        return self.factor * self.base(tau)

    def integral(self, tau):
        return self.factor * self.base.integral(tau)

    def inverse_integral(self, tau):
        return self.base.inverse_integral(tau) / self.factor

    def integral_inf(self):
        return self.factor * self.base.integral_inf()


@dataclass(frozen=True, eq=False)
class ConstantsSpec:
    """Constants ``C1`` (Gaussian part) and ``C2`` (jump part).

    Either may be ``None`` when its part of the noise is absent.  Estimated
    constants are inflated by ``safety_factor`` before use.
    """

    c1: Optional[object] = None
    c2: Optional[object] = None
    provenance: str = "user"
    safety_factor: float = 1.0

    @classmethod
    def exponential(cls, c1=None, c2=None, provenance="user"):
        return cls(None if c1 is None else ExponentialConstant(*c1),
                   None if c2 is None else ExponentialConstant(*c2), provenance)

    @classmethod
    def estimated(cls, sc: Scenario, safety_factor=1.01, n_t=64):
        c1, c2 = estimate_constants(sc, 1.0, n_t=n_t)
        horizon = 40.0 / sc.omega

        def make(i):
            def fn(tau):
                tau = np.asarray(tau, dtype=float)
                return _constants_batch(sc, np.ravel(tau), n_t)[i].reshape(tau.shape)
            return GridConstant(fn, horizon, panel=sc.period)

        return cls(None if c1 is None else make(0), None if c2 is None else make(1),
                   "estimated", safety_factor)

    def _parts(self, sc: Scenario):
        parts = []
        if np.any(sc.noise.covariance):
            if self.c1 is None:
                raise ConstantsUnavailable("the Gaussian part needs a C1 constant")
            parts.append(self.c1)
        if sc.noise.has_jumps:
            if self.c2 is None:
                raise ConstantsUnavailable("the jump part needs a C2 constant")
            parts.append(self.c2)
        return [_Scaled(p, self.safety_factor) for p in parts]

    def C(self, sc: Scenario, tau):
        """``max(int_0^tau C1, int_0^tau C2)`` over the parts present in the noise."""
        return max([p.integral(tau) for p in self._parts(sc)], default=0.0)

    def C_inf(self, sc: Scenario):
        return max([p.integral_inf() for p in self._parts(sc)], default=0.0)

    def c1_at(self, tau):
        if self.c1 is None:
            raise ConstantsUnavailable("no C1 constant")
        return self.safety_factor * float(self.c1(tau))

    def c2_at(self, tau):
        if self.c2 is None:
            raise ConstantsUnavailable("no C2 constant")
        return self.safety_factor * float(self.c2(tau))

    def harnack_denominator(self, tau):
        """``int_0^tau ds / C1(s)``."""
        if self.c1 is None:
            raise ConstantsUnavailable("the Harnack bound needs a C1 constant")
        return _Scaled(self.c1, self.safety_factor).inverse_integral(tau)

    def to_dict(self):
        return {"provenance": self.provenance, "safety_factor": self.safety_factor,
                "c1": None if self.c1 is None else self.c1.to_dict(),
                "c2": None if self.c2 is None else self.c2.to_dict()}


def _require_identity_B(sc: Scenario):
    B = sc.coefficients.B
    if not (B.is_constant and np.allclose(B.const, np.eye(sc.dim), rtol=0, atol=1e-14)):
        raise ConstantsUnavailable("the gradient/jump estimates are only available for B = Id")


def estimate_constants(sc: Scenario, tau, n_t=64):
    """Grid estimates of ``C1(tau)`` and ``C2(tau)`` (``None`` where the part is absent).

    ``C1 = sup_t |R^{-1/2} U(t+tau,t) R^{1/2}|^2`` and, for the power-law family,
    ``C2 = sup_t |U(t+tau,t)|^alpha`` (the pushforward-to-original density ratio).
    """
    c1, c2 = _constants_batch(sc, np.array([float(tau)]), n_t)
    return (None if c1 is None else float(c1[0])), (None if c2 is None else float(c2[0]))


def _constants_batch(sc: Scenario, taus, n_t):
    """Both grid constants for every tau at once; ``tau = 0`` gives 1."""
    _require_identity_B(sc)
    noise = sc.noise
    d = sc.dim
    ts = np.arange(n_t) * sc.period / n_t
    S = Sinv = None
    if np.any(noise.covariance):
        evals = np.linalg.eigvalsh(noise.covariance)
        if evals.min() <= 1e-12 * max(1.0, evals.max()):
            raise ConstantsUnavailable("C1 cannot be estimated for singular R; supply it")
        S = noise.sqrt_cov
        Sinv = np.linalg.inv(S)
    jumps = noise.jumps
    if isinstance(jumps, AtomList) and not jumps.is_empty:
        raise ConstantsUnavailable("C2 cannot be estimated for atom measures; supply it")
    power = isinstance(jumps, PowerLawDensity)
    tt, ss = np.meshgrid(taus, ts, indexing="ij")
    U = sc.U((ss + tt).ravel(), ss.ravel()).reshape(len(taus), n_t, d, d)
    c1 = None
    if S is not None:
        c1 = np.max(np.linalg.norm(Sinv @ U @ S, ord=2, axis=(-2, -1)) ** 2, axis=1)
    c2 = None
    if power:
        u = np.abs(U[..., 0, 0])
        if np.any(u > 1.0):
            raise ConstantsUnavailable("pushforward leaves the support of the power law; C2 is infinite")
        c2 = np.max(u ** jumps.alpha, axis=1)
    return c1, c2


def rho(x, y, R, tol=1e-10):
    """``inf{|z| : sqrt(R) z = x - y}`` (``inf`` when x - y is outside the range)."""
    diff = np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    evals, evecs = np.linalg.eigh(0.5 * (R + R.T))
    root = (evecs * np.sqrt(np.maximum(evals, 0.0))) @ evecs.T
    z = np.linalg.pinv(root, rcond=1e-12) @ diff
    if np.linalg.norm(root @ z - diff) > tol * max(1.0, np.linalg.norm(diff)):
        return float("inf")
    return float(np.linalg.norm(z))


# ------------------------------------------------------------- square field

def _power_law_jump_energy(pl: PowerLawDensity, f, slope):
    """``int [f(y) - f(0)]^2 m(y) dy`` over both half lines; ``slope`` is ``f'(0)``."""
    c, a, r = pl.scale, pl.alpha, pl.r_max
    f0 = f(0.0)
    total = 0.0
    for sgn in (1.0, -1.0):
        def g(y, sgn=sgn):
            if y == 0.0:
                return slope ** 2
            return ((f(sgn * y) - f0) / y) ** 2
        val, _ = quad(g, 0.0, r, weight="alg", wvar=(1.0 - a, 0.0), limit=400,
                      epsabs=1e-13, epsrel=1e-12)
        total += val
    return c * total


def gamma(sc: Scenario, u: KFunction, parts=("gauss", "jump")):
    """Pointwise ``Gamma(u,u)(t,x)`` for a real K-function.

    Gradient term from the closed-form gradient; jump term by the atom sum or
    by one-dimensional quadrature against the power-law density.
    """
    if not u.is_real:
        raise ValueError("gamma needs a real-valued K-function")
    noise = sc.noise
    coef = sc.coefficients

    def G(t, x):
        t, x = u._parts(t, x)
        out = np.zeros(t.shape)
        if "gauss" in parts and np.any(noise.covariance):
            g = u.gradient(t, x)
            B = coef.B(t)
            BRB = B @ noise.covariance @ np.swapaxes(B, -1, -2)
            out += np.einsum("nd,nde,ne->n", g, BRB, g)
        jumps = noise.jumps
        if "jump" in parts and isinstance(jumps, AtomList) and not jumps.is_empty:
            base = u(t, x)
            B = coef.B(t)
            for loc, w in zip(jumps.locations, jumps.intensities):
                out += w * (u(t, x + B @ loc) - base) ** 2
        elif "jump" in parts and isinstance(jumps, PowerLawDensity):
            B = coef.B(t)[:, 0, 0]
            slope = u.gradient(t, x)[:, 0] * B
            for i in range(t.size):
                ti, xi, bi = t[i:i + 1], x[i, 0], B[i]
                out[i] += _power_law_jump_energy(
                    jumps, lambda y: float(u(ti, np.array([[xi + bi * y]]))[0]), slope[i])
        return out

    return G


def gamma_kfunction(sc: Scenario, u: KFunction, parts=("gauss", "jump")) -> KFunction:
    """``Gamma(u,u)`` as a K-function (closed form per pair of exponential terms).

    For terms ``u_a``, ``u_b`` with frequencies ``h_a``, ``h_b`` the pair
    contributes ``u_a u_b [-<B^T h_a, R B^T h_b> + J(B^T(h_a+h_b)) - J(B^T h_a) - J(B^T h_b)]``
    where ``J`` is the jump part of the symbol.
    """
    if not u.is_real:
        raise ValueError("gamma_kfunction needs a real-valued K-function")
    noise = sc.noise
    Bf = sc.coefficients.B
    terms = u.complex_terms()
    out = []
    use_gauss = "gauss" in parts
    use_jump = "jump" in parts and noise.has_jumps
    for a in terms:
        for b in terms:
            def amp(t, a=a, b=b):
                t = np.atleast_1d(t)
                B = Bf(t)
                va = np.einsum("nde,nd->ne", B, a.frequency(t))
                vb = np.einsum("nde,nd->ne", B, b.frequency(t))
                c = np.zeros(t.shape, dtype=complex)
                if use_gauss:
                    c -= np.einsum("nd,de,ne->n", va, noise.covariance, vb)
                if use_jump:
                    c += noise.jump_exponent(va + vb) - noise.jump_exponent(va) - noise.jump_exponent(vb)
                return a.amplitude(t) * b.amplitude(t) * c

            out.append(ExpTerm(amp, lambda t, a=a, b=b: a.frequency(t) + b.frequency(t)))
    return KFunction(out, u.dim, "hermitian")


# ---------------------------------------------------- non-K expectations

def _kinks_1d(fn, lo, hi, spacing=0.01):
    grid = np.linspace(lo, hi, int(np.ceil((hi - lo) / spacing)) + 1)
    vals = fn(grid)
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        roots.append(brentq(lambda y: float(fn(np.array([y]))[0]), grid[i], grid[i + 1], xtol=1e-14))
    return np.array(roots)


def _density_1d(law, y):
    """Density of a 1-D ID law with a nondegenerate Gaussian part."""
    Q = float(law.cov[0, 0])
    m = float(law.mean[0])
    if law.jumps is None:
        return norm.pdf(y, loc=m, scale=np.sqrt(Q))
    xi_max = np.sqrt(2.0 * 40.0 / Q)
    span = float(np.max(np.abs(y - m)))
    n_panels = int(np.ceil(xi_max * (span + 1.0) / np.pi)) + 4
    x, w = gauss_legendre(16)
    edges = np.linspace(0.0, xi_max, n_panels + 1)
    half = 0.5 * np.diff(edges)
    xi = (0.5 * (edges[1:] + edges[:-1])[:, None] + half[:, None] * x).ravel()
    wx = (half[:, None] * w).ravel()
    # centre the phase at the mean so the oscillation rate is |y - m|
    phi = np.exp(law.char_exponent(xi[:, None]) - 1j * xi * m)
    return (np.cos(np.outer(y - m, xi)) @ (wx * phi.real)
            + np.sin(np.outer(y - m, xi)) @ (wx * phi.imag)) / np.pi


def transition_expectation(sc: Scenario, g, t, tau, x, kink_fn=None):
    """``E g(X(t+tau, t, x))`` for a non-K integrand ``g`` of points (n, d).

    d = 1: quadrature against the transition density (closed-form Gaussian, or
    Fourier inversion of the ID characteristic function when jumps are
    present), with panels split at sign changes of ``kink_fn``.
    d > 1: Gauss-Hermite tensor rule, Gaussian transition laws only.
    Returns ``(value, normalization)``; the latter should be 1.
    """
    law = transition_law(sc, t, t + tau, x)
    d = sc.dim
    Q = law.cov
    if d == 1:
        if Q[0, 0] <= 1e-14:
            raise NotImplementedError("transition law without Gaussian part has no smooth density")
        var = Q[0, 0] + (0.0 if law.jumps is None else law.jumps.second_moment())
        m = float(law.mean[0])
        half = 12.0 * np.sqrt(var) + (0.0 if law.jumps is None else 1.0)
        lo, hi = m - half, m + half
        cuts = _kinks_1d(kink_fn, lo, hi) if kink_fn is not None else np.array([])
        edges = np.unique(np.concatenate([np.linspace(lo, hi, int(np.ceil(2 * half / 0.25)) + 1), cuts]))
        xg, wg = gauss_legendre(16)
        hw = 0.5 * np.diff(edges)
        y = (0.5 * (edges[1:] + edges[:-1])[:, None] + hw[:, None] * xg).ravel()
        wy = (hw[:, None] * wg).ravel()
        p = _density_1d(law, y)
        return float(wy @ (p * g(y[:, None]))), float(wy @ p)
    if law.jumps is not None:
        raise NotImplementedError("non-K expectations with jumps are only implemented for d = 1")
    n = {2: 48, 3: 20}.get(d, 10)
    z, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / np.sqrt(2.0 * np.pi)
    Z = np.stack(np.meshgrid(*([z] * d), indexing="ij"), -1).reshape(-1, d)
    W = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), -1).reshape(-1, d), axis=1)
    evals, evecs = np.linalg.eigh(Q)
    root = evecs * np.sqrt(np.maximum(evals, 0.0))
    pts = law.mean + Z @ root.T
    return float(W @ g(pts)), float(W.sum())


# -------------------------------------------------------------- the checks

def _probes(u, t_probe, x_probe):
    return u._parts(t_probe, x_probe)


def gradient_estimate_check(sc: Scenario, u: KFunction, tau, t_probe, x_probe,
                            constants: ConstantsSpec = None, use_R=True):
    """Slack of ``sqrt(<D P u, R D P u>) <= sqrt(C1) P_tau |sqrt(R) D u|``.

    With ``use_R=False`` the variant ``|D P u| <= |U(t+tau,t)| P_tau |D u|`` is checked.
    """
    _require_identity_B(sc)
    t_probe, x_probe = _probes(u, t_probe, x_probe)
    R = sc.noise.covariance
    S = sc.noise.sqrt_cov if use_R else np.eye(sc.dim)
    Pu = apply_P_tau(sc, u, tau)
    grads = Pu.gradient(t_probe, x_probe)
    slacks, rows = [], []
    for i, (ti, xi) in enumerate(zip(t_probe, x_probe)):
        g = grads[i]
        if use_R:
            lhs = float(np.sqrt(max(g @ R @ g, 0.0)))
            factor = np.sqrt(constants.c1_at(tau)) if np.any(R) else 0.0
        else:
            lhs = float(np.linalg.norm(g))
            factor = float(np.linalg.norm(sc.family.propagator(ti + tau, ti), 2))
        if factor == 0.0 and lhs == 0.0:
            slacks.append(0.0)
            rows.append({"t": float(ti), "x": xi.tolist(), "lhs": 0.0, "rhs": 0.0})
            continue
        end = np.array([ti + tau])

        def integrand(pts, end=end):
            return np.linalg.norm(u.gradient(end, pts) @ S.T, axis=1)

        def kink(y, end=end):
            return (u.gradient(end, y[:, None]) @ S.T)[:, 0]

        val, mass = transition_expectation(sc, integrand, ti, tau, xi,
                                           kink_fn=kink if sc.dim == 1 else None)
        rhs = factor * val
        slacks.append(rhs - lhs)
        rows.append({"t": float(ti), "x": xi.tolist(), "lhs": lhs, "rhs": rhs, "mass": mass})
    return {"tau": float(tau), "min_slack": float(min(slacks)), "probes": rows,
            "variant": "R" if use_R else "identity"}


def jump_estimate_check(sc: Scenario, u: KFunction, tau, t_probe, x_probe, constants: ConstantsSpec):
    """Slack of ``int [P u(x+y) - P u(x)]^2 M(dy) <= C2 P_tau (int [u(.+y) - u]^2 M(dy))``."""
    _require_identity_B(sc)
    t_probe, x_probe = _probes(u, t_probe, x_probe)
    lhs = gamma(sc, apply_P_tau(sc, u, tau), parts=("jump",))(t_probe, x_probe)
    rhs = constants.c2_at(tau) * apply_P_tau(sc, gamma_kfunction(sc, u, parts=("jump",)), tau)(t_probe, x_probe)
    slack = rhs - lhs
    return {"tau": float(tau), "min_slack": float(slack.min()), "lhs": lhs.tolist(), "rhs": rhs.tolist()}


def estimate_propagation_check(sc: Scenario, u: KFunction, tau, t_probe, x_probe,
                               constants: ConstantsSpec):
    """Slack of ``Gamma(P u, P u) <= max(C1, C2)(tau) P_tau Gamma(u, u)``."""
    _require_identity_B(sc)
    t_probe, x_probe = _probes(u, t_probe, x_probe)
    vals = []
    if np.any(sc.noise.covariance):
        vals.append(constants.c1_at(tau))
    if sc.noise.has_jumps:
        vals.append(constants.c2_at(tau))
    c = max(vals, default=0.0)
    lhs = gamma(sc, apply_P_tau(sc, u, tau))(t_probe, x_probe)
    rhs = c * apply_P_tau(sc, gamma_kfunction(sc, u), tau)(t_probe, x_probe)
    return {"tau": float(tau), "constant": c, "min_slack": float((rhs - lhs).min())}


def poincare_check(sc: Scenario, u: KFunction, tau, t_probe, x_probe, constants: ConstantsSpec,
                   space_time: Optional[SpaceTimeMeasure] = None):
    """Pointwise slack ``C(tau) P Gamma - (P u^2 - (P u)^2)``; optionally the integrated form."""
    _require_identity_B(sc)
    t_probe, x_probe = _probes(u, t_probe, x_probe)
    C = constants.C(sc, tau)
    Pu = apply_P_tau(sc, u, tau)(t_probe, x_probe)
    Pu2 = apply_P_tau(sc, u * u, tau)(t_probe, x_probe)
    PG = apply_P_tau(sc, gamma_kfunction(sc, u), tau)(t_probe, x_probe)
    variance = Pu2 - Pu ** 2
    slack = C * PG - variance
    report = {"tau": float(tau), "C_tau": float(C), "min_slack": float(slack.min()),
              "variance": variance.tolist(), "bound": (C * PG).tolist(),
              "constants": constants.to_dict()}
    if space_time is not None:
        report["integrated"] = poincare_integrated(sc, u, constants, space_time)
    return report


def poincare_integrated(sc: Scenario, u: KFunction, constants: ConstantsSpec, space_time: SpaceTimeMeasure):
    """``int (u - u_bar_t)^2 d nu <= C(inf) int Gamma d nu`` with ``u_bar_t = int u d nu_t``."""
    c_inf = constants.C_inf(sc)
    ubar = space_time.slice_integrals(u)
    var = space_time.integrate(u * u) - space_time.weights @ (ubar ** 2)
    energy = space_time.integrate(gamma_kfunction(sc, u))
    return {"C_inf": float(c_inf), "variance": float(var), "energy": float(energy),
            "slack": float(c_inf * energy - var)}


def harnack_factor(sc: Scenario, tau, x, y, constants: ConstantsSpec):
    r = rho(x, y, sc.noise.covariance)
    if not np.isfinite(r):
        raise InfiniteRho("x - y is outside the range of sqrt(R); the bound is vacuous")
    if r == 0.0:
        return 1.0, r
    return float(np.exp(r ** 2 / constants.harnack_denominator(tau))), r


def harnack_check(sc: Scenario, u: KFunction, tau, t, x, y, constants: ConstantsSpec):
    """Slack ``P u^2 (t,x) exp[rho^2 / int_0^tau 1/C1] - |P u(t,y)|^2`` for positive ``u``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    factor, r = harnack_factor(sc, tau, x, y, constants)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    Pu2 = float(apply_P_tau(sc, u * u, tau)(t, x)[0])
    Pu = float(apply_P_tau(sc, u, tau)(t, y)[0])
    return {"tau": float(tau), "rho": r, "factor": factor, "bound": Pu2 * factor,
            "value": Pu ** 2, "slack": Pu2 * factor - Pu ** 2}


def random_real_kfunction(rng, dim, period=1.0, n_terms=2, n_harmonics=1, scale=1.0):
    """Random real K-function with Fourier amplitudes and frequencies."""
    terms = []
    for _ in range(n_terms):
        amp = FourierSeries(period, complex(rng.normal(), rng.normal()),
                            cos=[complex(*rng.normal(size=2)) * 0.5 for _ in range(n_harmonics)],
                            sin=[complex(*rng.normal(size=2)) * 0.5 for _ in range(n_harmonics)])
        freq = FourierSeries(period, scale * rng.normal(size=dim),
                             cos=[0.3 * scale * rng.normal(size=dim) for _ in range(n_harmonics)],
                             sin=[0.3 * scale * rng.normal(size=dim) for _ in range(n_harmonics)])
        terms.append(ExpTerm.fourier(amp, freq))
    return KFunction(terms, dim, "re")


def positive_kfunction(v: KFunction, eps=1e-3, period=1.0):
    """``v^2 + eps``: a strictly positive element of the K-algebra."""
    return v * v + KFunction.constant(eps, v.dim, period)
