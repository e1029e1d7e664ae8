"""Evolution systems of measures ``nu_t`` as infinitely divisible laws."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq

from .levy import PowerLawDensity, validate_measure
from .quadrature import gauss_legendre
from .solution import Scenario, mean_forcing, simulate_paths, transition_exponent

PANELS_PER_PERIOD = 4
PUSHFORWARD_NODES = 64
BREAKPOINT_SAMPLES = 32  # per panel, for locating |U B x| = 1 crossings


@dataclass(frozen=True, eq=False)
class AtomCloud:
    """Weighted atoms ``sum_j weights[j] delta(locations[j])``."""

    locations: np.ndarray
    weights: np.ndarray

    def exponent(self, h):
        phase = h @ self.locations.T
        inside = np.linalg.norm(self.locations, axis=1) <= 1.0
        return (np.expm1(1j * phase) - 1j * phase * inside) @ self.weights

    def exponent_gradient(self, h):
        phase = h @ self.locations.T
        inside = np.linalg.norm(self.locations, axis=1) <= 1.0
        return (1j * (np.exp(1j * phase) - inside) * self.weights) @ self.locations

    def mass_outside(self, radius):
        return float(self.weights[np.linalg.norm(self.locations, axis=1) > radius].sum())

    def small_jump_integral(self):
        n2 = np.sum(self.locations ** 2, axis=1)
        return float(self.weights @ np.minimum(1.0, n2))

    def second_moment(self):
        return float(self.weights @ np.sum(self.locations ** 2, axis=1))

    def to_dict(self):
        return {"kind": "atom_cloud", "locations": self.locations.tolist(),
                "weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class ScaledPowerLaw:
    """``sum_j weights[j] * (M o (x -> scales[j] x)^{-1})`` for a symmetric power law ``M``."""

    base: PowerLawDensity
    scales: np.ndarray
    weights: np.ndarray

    def exponent(self, h):
        # symmetric measure: the compensator integrates to zero for every scale
        v = h[..., 0][..., None] * self.scales
        return (self.base.exponent(v) @ self.weights).astype(complex)

    def exponent_gradient(self, h):
        v = h[..., 0][..., None] * self.scales
        return ((self.base.exponent_derivative(v) * self.scales) @ self.weights)[..., None].astype(complex)

    def mass_outside(self, radius):
        u = np.abs(self.scales)
        return float(sum(w * self.base.mass_above(radius / s) for w, s in zip(self.weights, u) if s > 0))

    def small_jump_integral(self):
        total = 0.0
        c, a, r = self.base.scale, self.base.alpha, self.base.r_max
        for w, s in zip(self.weights, np.abs(self.scales)):
            if s == 0:
                continue
            # pushforward of c|x|^{-1-a} on (0, r] under x -> s x is c s^a |y|^{-1-a} on (0, s r]
            total += w * validate_measure(PowerLawDensity(c * s ** a, a, s * r)).small_jump_integral
        return float(total)

    def second_moment(self):
        c, a, r = self.base.scale, self.base.alpha, self.base.r_max
        return float(self.weights @ self.scales ** 2) * 2.0 * c * r ** (2.0 - a) / (2.0 - a)

    def to_dict(self):
        return {"kind": "scaled_power_law", "scale": self.base.scale, "alpha": self.base.alpha,
                "r_max": self.base.r_max, "scales": self.scales.tolist(),
                "weights": self.weights.tolist()}


JumpPart = Union[AtomCloud, ScaledPowerLaw, None]


@dataclass(eq=False)
class IDLaw:
    """Infinitely divisible law with characteristic exponent
    ``i<h,mean> - <h,cov h>/2 + int [e^{i<h,y>} - 1 - i<h,y> 1{|y|<=1}] jumps(dy)``."""

    mean: np.ndarray
    cov: np.ndarray
    jumps: JumpPart = None
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.mean.shape[0]

    def char_exponent(self, h):
        h = np.asarray(h, dtype=float)
        out = 1j * (h @ self.mean) - 0.5 * np.einsum("...i,ij,...j->...", h, self.cov, h)
        if self.jumps is not None:
            out = out + self.jumps.exponent(h)
        return out

    def char_fn(self, h):
        return np.exp(self.char_exponent(h))

    def char_exponent_gradient(self, h):
        h = np.asarray(h, dtype=float)
        out = 1j * self.mean - h @ self.cov
        if self.jumps is not None:
            out = out + self.jumps.exponent_gradient(h)
        return out

    def jump_mass_outside(self, radius=1.0):
        return 0.0 if self.jumps is None else self.jumps.mass_outside(radius)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist(),
                "jumps": None if self.jumps is None else self.jumps.to_dict(),
                "metadata": self.metadata}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def truncation_periods(sc: Scenario, scale, tol, max_periods=10_000):
    """Smallest ``N >= 1`` with ``M e^{-omega N T} scale / omega < tol``."""
    M, w, T = sc.M_env, sc.omega, sc.period
    if scale <= 0:
        return 1
    n = np.log(M * scale / (w * tol)) / (w * T)
    return int(min(max_periods, max(1, np.ceil(n))))


def symbol_growth_constant(noise, radius, n_radii=65):
    """Numerical ``max |grad lambda(v)|`` over the ball ``|v| <= radius``."""
    d = noise.dim
    if radius <= 0:
        return float(np.linalg.norm(noise.symbol_gradient(np.zeros(d))))
    rng = np.random.default_rng(12345)
    dirs = np.concatenate([np.eye(d), -np.eye(d), rng.standard_normal((0 if d == 1 else 32, d))])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.linspace(0.0, radius, n_radii)
    v = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    g = noise.symbol_gradient(v)
    return 1.1 * float(np.max(np.linalg.norm(g, axis=-1))) + 1e-12


def _tail_scale_law(sc: Scenario):
    noise = sc.noise
    sB = sc.coefficients.B.sup_norm()
    sf = sc.coefficients.f.sup_norm()
    rep = noise.report
    cov_norm = float(np.linalg.norm(noise.covariance, 2))
    return sf + sB * (np.linalg.norm(noise.drift) + rep.large_jump_moment + rep.small_jump_integral) \
        + sB ** 2 * sc.M_env * (cov_norm + rep.small_jump_integral)


def _panel_edges(s, t, period):
    n = max(1, int(np.ceil((t - s) / period * PANELS_PER_PERIOD - 1e-9)))
    edges = t - (period / PANELS_PER_PERIOD) * np.arange(n + 1)
    edges[-1] = max(edges[-1], s)
    return np.unique(np.maximum(edges, s))


def _norm_crossings(sc: Scenario, t, x, edges):
    """Times r in (edges[0], edges[-1]) where ``|U(t,r) B(r) x| = 1``."""
    B = sc.coefficients.B
    fam = sc.family
    grid = np.concatenate([np.linspace(lo, hi, BREAKPOINT_SAMPLES, endpoint=False)
                           for lo, hi in zip(edges[:-1], edges[1:])] + [edges[-1:]])
    vals = np.linalg.norm(np.einsum("nde,ne->nd", sc.U(t, grid), B(grid) @ x), axis=1) - 1.0

    def g(r):
        return float(np.linalg.norm(fam.propagator(t, r) @ (B(r) @ x))) - 1.0

    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        roots.append(brentq(g, grid[i], grid[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    return np.array(roots)


def _gl_on(edges):
    x, w = gauss_legendre(PUSHFORWARD_NODES)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _build_law(sc: Scenario, s, t, x=None, metadata=None) -> IDLaw:
    """ID triple of ``int_s^t U(t,r) B(r) dL_r + int_s^t U(t,r) f(r) dr (+ U(t,s) x)``."""
    d = sc.dim
    noise = sc.noise
    Bf = sc.coefficients.B
    edges = _panel_edges(s, t, sc.period)
    r, w = _gl_on(edges)
    G = sc.U(t, r) @ Bf(r)

    mean = G @ noise.drift
    mean = w @ mean
    mean = mean + mean_forcing(sc, s, t)
    if x is not None:
        mean = mean + sc.family.propagator(t, s) @ np.asarray(x, dtype=float)
    cov = np.einsum("n,nij,jk,nlk->il", w, G, noise.covariance, G)
    cov = 0.5 * (cov + cov.T)

    jumps = noise.jumps
    jump_part: JumpPart = None
    if isinstance(jumps, PowerLawDensity):
        jump_part = ScaledPowerLaw(jumps, G[:, 0, 0].copy(), w.copy())
    elif not jumps.is_empty:
        locs, wts = [], []
        for xk, mk in zip(jumps.locations, jumps.intensities):
            cuts = _norm_crossings(sc, t, xk, edges)
            rk, wk = _gl_on(np.unique(np.concatenate([edges, cuts])))
            yk = np.einsum("nde,ne->nd", sc.U(t, rk), Bf(rk) @ xk)
            inside_src = np.linalg.norm(xk) <= 1.0
            inside_img = np.linalg.norm(yk, axis=1) <= 1.0
            # compensator mismatch between |x| <= 1 and |U B x| <= 1
            mean = mean + mk * ((wk * (inside_img - float(inside_src))) @ yk)
            locs.append(yk)
            wts.append(mk * wk)
        jump_part = AtomCloud(np.concatenate(locs), np.concatenate(wts))
    meta = {"s": float(s), "t": float(t)}
    meta.update(metadata or {})
    return IDLaw(np.asarray(mean, dtype=float), cov, jump_part, meta)


def transition_law(sc: Scenario, s, t, x) -> IDLaw:
    """Law of ``X(t, s, x)`` as an ID triple."""
    if not s < t:
        raise ValueError("transition_law needs s < t")
    return _build_law(sc, s, t, x=x)


def limit_triple(sc: Scenario, t, tol=None) -> IDLaw:
    """Triple ``[b(t,-inf), Q(t,-inf), M_{t,-inf}]`` of ``nu_t``, truncated at ``t - N T``."""
    tol = sc.tail_tol if tol is None else tol
    n = truncation_periods(sc, _tail_scale_law(sc), tol)
    bound = sc.M_env * np.exp(-sc.omega * n * sc.period) * _tail_scale_law(sc) / sc.omega
    return _build_law(sc, t - n * sc.period, t,
                      metadata={"periods": n, "tail_bound": float(bound), "tol": float(tol)})


def esm_periods(sc: Scenario, h_norm, tol=None):
    tol = sc.tail_tol if tol is None else tol
    sB = sc.coefficients.B.sup_norm()
    c_lam = symbol_growth_constant(sc.noise, sB * sc.M_env * h_norm)
    scale = h_norm * (c_lam * sB + sc.coefficients.f.sup_norm())
    return truncation_periods(sc, scale, tol)


def esm_exponent(sc: Scenario, t, h, tol=None):
    """``log nu_t^(h)`` by the truncated integrals over ``[t - N T, t]``."""
    h = np.asarray(h, dtype=float)
    n = esm_periods(sc, float(np.max(np.linalg.norm(np.atleast_2d(h), axis=1))), tol)
    return transition_exponent(sc, t - n * sc.period, t, h)


def esm_char_fn(sc: Scenario, t, h, tol=None):
    """Fourier transform ``nu_t^(h)`` of the evolution system of measures."""
    return np.exp(esm_exponent(sc, t, h, tol))


def check_invariance(sc: Scenario, s, t, probes):
    """Compare ``int P(s,t) e^{i<h,.>} d nu_s`` with ``nu_t^(h)`` for each probe h."""
    if not s < t:
        raise ValueError("check_invariance needs s < t")
    H = np.atleast_2d(np.asarray(probes, dtype=float))
    UT = sc.family.propagator(t, s, adjoint=True)
    lhs = np.exp(esm_exponent(sc, s, H @ UT.T) + transition_exponent(sc, s, t, H))
    rhs = esm_char_fn(sc, t, H)
    diff = np.abs(lhs - rhs)
    return {"s": float(s), "t": float(t), "probes": H.tolist(),
            "defects": diff.tolist(), "max_defect": float(diff.max(initial=0.0))}


def uniqueness_iteration(sc: Scenario, s, h, tol=1e-10, max_iter=10_000):
    """Iterate ``phi <- phi(U*(s+T,s) .) * E_s`` from ``phi = 1`` and return ``phi(h)``.

    After k steps ``phi_k(h) = prod_{j<k} E_s(U*^j h)`` with
    ``E_s(h) = exp(transition exponent over one period)``.  Iterates until
    ``|U*^k h|`` makes the remaining factors negligible.
    """
    h = np.asarray(h, dtype=float)
    T = sc.period
    Ustar = sc.family.propagator(s + T, s, adjoint=True)
    norm = np.linalg.norm(Ustar, 2)
    k_min = int(np.ceil(np.log(tol) / np.log(norm))) if norm < 1 else 1
    hs = [h]
    while len(hs) < max_iter:
        nxt = Ustar @ hs[-1]
        hs.append(nxt)
        if len(hs) >= k_min and np.linalg.norm(nxt) <= tol * max(1.0, np.linalg.norm(h)):
            break
    H = np.array(hs[:-1])
    logs = transition_exponent(sc, s, s + T, H)
    partial = np.exp(np.cumsum(logs))
    return {"value": complex(partial[-1]), "iterations": int(H.shape[0]),
            "history": partial.tolist(), "contraction": float(norm)}


def burn_periods(sc: Scenario, tol=1e-6):
    return truncation_periods(sc, sc.omega, tol)


def sample_nu(sc: Scenario, t, n, burn=None, dt=None, seed=None, workers=1):
    """Samples of ``X(t, t - burn T, 0)``, approximately distributed as ``nu_t``."""
    burn = burn_periods(sc) if burn is None else int(burn)
    dt = sc.period / 128 if dt is None else dt
    ens = simulate_paths(sc, t - burn * sc.period, t, np.zeros(sc.dim), dt, n,
                         workers=workers, seed=seed, stream=1)
    return ens.terminal


def log_along_ray(fn, h, n_steps=256):
    """Continuous logarithm of ``fn(s h)`` at ``s = 1`` by phase unwrapping from ``s = 0``."""
    h = np.asarray(h, dtype=float)
    s = np.linspace(0.0, 1.0, n_steps + 1)
    vals = np.asarray(fn(s[:, None] * h[None, :]))
    phase = np.unwrap(np.angle(vals))
    return np.log(np.abs(vals[-1])) + 1j * phase[-1]
