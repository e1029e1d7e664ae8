"""Lévy triples: measure validation, symbol, symbol gradient, increments.

Two jump-measure families are built in (our choice, the theory itself fixes
none): finite atom lists in R^d, and the symmetric truncated power law
``m(x) = c |x|^(-1-alpha)`` on ``0 < |x| <= r_max`` in one dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import InvalidLevyMeasure
from .quadrature import gauss_jacobi_left, gauss_legendre

SYM_TOL = 1e-12
JUMP_CUTOFF = 1e-4


@dataclass(frozen=True, eq=False)
class AtomList:
    """Finite jump measure ``sum_k intensities[k] * delta(locations[k])``."""

    locations: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.locations, dtype=float))
        w = np.atleast_1d(np.asarray(self.intensities, dtype=float))
        if loc.size == 0:
            loc = loc.reshape(0, loc.shape[-1] if loc.ndim == 2 else 0)
        if loc.shape[0] != w.shape[0]:
            raise ValueError("locations and intensities must have the same length")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "intensities", w)

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def dim(self):
        return self.locations.shape[1]

    @property
    def is_empty(self):
        return self.intensities.size == 0

    @property
    def total_mass(self):
        return float(self.intensities.sum())


@dataclass(frozen=True, eq=False)
class PowerLawDensity:
    """Symmetric density ``scale * |x|^(-1-alpha)`` on ``0 < |x| <= r_max`` (d = 1)."""

    scale: float
    alpha: float
    r_max: float
    quadrature_nodes: int = 24

    def __post_init__(self):
        if not (self.scale > 0 and self.r_max > 0 and self.alpha > 0):
            raise ValueError("power law needs scale > 0, alpha > 0, r_max > 0")
        if int(self.quadrature_nodes) < 4:
            raise ValueError("quadrature_nodes must be at least 4")

    dim = 1
    is_empty = False

    def _integrals(self, z):
        """``I_cos(z) = int_0^1 (cos zs - 1) s^(-1-a) ds`` and ``I_sin(z) = int_0^1 sin(zs) s^(-a) ds``.

        One panel per half-oscillation; the first panel absorbs the algebraic
        singularity into a Gauss-Jacobi weight ``s^(1-a)``.
        """
        z = np.asarray(z, dtype=float)
        flat = z.ravel()
        i_cos = np.zeros_like(flat)
        i_sin = np.zeros_like(flat)
        a = self.alpha
        n = int(self.quadrature_nodes)
        sj, wj = gauss_jacobi_left(n, 1.0 - a)
        xg, wg = gauss_legendre(n)
        panels = np.maximum(1, np.ceil(flat / np.pi)).astype(int)
        for p in np.unique(panels):
            idx = np.nonzero(panels == p)[0]
            zz = flat[idx][:, None]
            y = zz * sj[None, :] / p
            # (cos y - 1)/y^2 = -sinc(y/2)^2 / 2 ; sin(y)/y = sinc(y)
            g_cos = -0.5 * np.sinc(y / (2 * np.pi)) ** 2
            g_sin = np.sinc(y / np.pi)
            scale = (zz[:, 0] / p)
            i_cos[idx] = p ** a * scale ** 2 * (g_cos @ wj)
            i_sin[idx] = p ** (a - 1.0) * scale * (g_sin @ wj)
            if p > 1:
                lo = np.arange(1, p) / p
                s = (lo[:, None] + 0.5 / p * (1.0 + xg[None, :])).ravel()
                ws = np.tile(0.5 / p * wg, p - 1)
                zs = zz * s[None, :]
                i_cos[idx] += (-2.0 * np.sin(0.5 * zs) ** 2 * s ** (-1.0 - a)) @ ws
                i_sin[idx] += (np.sin(zs) * s ** (-a)) @ ws
        return i_cos.reshape(z.shape), i_sin.reshape(z.shape)

    def exponent(self, v):
        """Jump part of the symbol at scalar frequencies ``v`` (real, even in v)."""
        v = np.asarray(v, dtype=float)
        i_cos, _ = self._integrals(np.abs(v) * self.r_max)
        return 2.0 * self.scale * self.r_max ** (-self.alpha) * i_cos

    def exponent_derivative(self, v):
        v = np.asarray(v, dtype=float)
        _, i_sin = self._integrals(np.abs(v) * self.r_max)
        return -2.0 * self.scale * np.sign(v) * self.r_max ** (1.0 - self.alpha) * i_sin

    def mass_above(self, eps):
        """Total intensity of jumps with ``eps <= |x| <= r_max``."""
        if eps >= self.r_max:
            return 0.0
        a = self.alpha
        return 2.0 * self.scale * (eps ** -a - self.r_max ** -a) / a


JumpMeasureSpec = Union[AtomList, PowerLawDensity]


@dataclass(frozen=True)
class ValidationReport:
    accepted: bool
    small_jump_integral: float   # int min(1, |x|^2) M(dx)
    large_jump_moment: float     # int_{|x|>1} |x| M(dx)
    reason: str = ""


def validate_measure(spec: JumpMeasureSpec) -> ValidationReport:
    """Check the Lévy-measure and first-moment integrability conditions."""
    if isinstance(spec, AtomList):
        if spec.is_empty:
            return ValidationReport(True, 0.0, 0.0)
        w = spec.intensities
        norms = np.linalg.norm(spec.locations, axis=1)
        small = float(np.sum(w * np.minimum(1.0, norms ** 2)))
        large = float(np.sum(w * norms * (norms > 1.0)))
        if not np.all(np.isfinite(spec.locations)) or not np.all(np.isfinite(w)):
            return ValidationReport(False, small, large, "non-finite atom data")
        if np.any(w <= 0):
            return ValidationReport(False, small, large, "nonpositive atom intensity")
        if np.any(norms == 0):
            return ValidationReport(False, small, large, "a Lévy measure cannot charge the origin")
        return ValidationReport(True, small, large)

    if isinstance(spec, PowerLawDensity):
        c, a, r = spec.scale, spec.alpha, spec.r_max
        inner = min(1.0, r)
        if a >= 2.0:
            return ValidationReport(
                False, float("inf"), _power_law_large_moment(c, a, r),
                f"small-jump integral int_0^{inner:g} x^(1-alpha) dx diverges for alpha={a:g} >= 2")
        small = 2.0 * c * inner ** (2.0 - a) / (2.0 - a)
        if r > 1.0:
            small += 2.0 * c * (1.0 - r ** -a) / a
        return ValidationReport(True, float(small), _power_law_large_moment(c, a, r))

    raise TypeError(f"unknown jump measure specification {type(spec).__name__}")


def _power_law_large_moment(c, a, r):
    if r <= 1.0:
        return 0.0
    if a == 1.0:
        return float(2.0 * c * np.log(r))
    return float(2.0 * c * (r ** (1.0 - a) - 1.0) / (1.0 - a))


@dataclass(frozen=True, eq=False)
class LevyTriple:
    """Drift ``b``, Gaussian covariance ``R`` and jump measure ``M``."""

    drift: np.ndarray
    covariance: np.ndarray
    jumps: JumpMeasureSpec = None
    report: ValidationReport = field(init=False, repr=False)

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.drift, dtype=float))
        d = b.shape[0]
        R = np.asarray(self.covariance, dtype=float).reshape(d, d)
        R = 0.5 * (R + R.T)
        evals, evecs = np.linalg.eigh(R)
        if evals.min(initial=0.0) < -SYM_TOL:
            raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {evals.min():.3e})")
        if evals.min(initial=0.0) < 0:
            R = (evecs * np.maximum(evals, 0.0)) @ evecs.T
        jumps = AtomList.empty(d) if self.jumps is None else self.jumps
        if jumps.dim != d:
            raise ValueError(f"jump measure lives in R^{jumps.dim}, drift in R^{d}")
        report = validate_measure(jumps)
        if not report.accepted:
            raise InvalidLevyMeasure(report.reason)
        object.__setattr__(self, "drift", b)
        object.__setattr__(self, "covariance", R)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "report", report)

    @classmethod
    def gaussian(cls, covariance, drift=None):
        R = np.atleast_2d(np.asarray(covariance, dtype=float))
        b = np.zeros(R.shape[0]) if drift is None else drift
        return cls(b, R)

    @property
    def dim(self):
        return self.drift.shape[0]

    @property
    def has_jumps(self):
        return not self.jumps.is_empty

    @property
    def is_zero(self):
        return not self.has_jumps and not np.any(self.drift) and not np.any(self.covariance)

    @cached_property
    def sqrt_cov(self):
        evals, evecs = np.linalg.eigh(self.covariance)
        return (evecs * np.sqrt(np.maximum(evals, 0.0))) @ evecs.T

    @cached_property
    def _small_atom_compensator(self):
        j = self.jumps
        if not isinstance(j, AtomList) or j.is_empty:
            return np.zeros(self.dim)
        inside = np.linalg.norm(j.locations, axis=1) <= 1.0
        return (j.intensities[inside, None] * j.locations[inside]).sum(axis=0)

    @cached_property
    def mean_rate(self):
        """``b + int_{|x|>1} x M(dx)``: the mean of an increment per unit time."""
        j = self.jumps
        if isinstance(j, AtomList) and not j.is_empty:
            outside = np.linalg.norm(j.locations, axis=1) > 1.0
            return self.drift + (j.intensities[outside, None] * j.locations[outside]).sum(axis=0)
        return self.drift.copy()

    def jump_exponent(self, u):
        """``int [exp(i<u,x>) - 1 - i<u,x> 1{|x|<=1}] M(dx)`` for ``u`` of shape (..., d)."""
        u = np.asarray(u, dtype=float)
        j = self.jumps
        if isinstance(j, PowerLawDensity):
            return j.exponent(u[..., 0]).astype(complex)
        if j.is_empty:
            return np.zeros(u.shape[:-1], dtype=complex)
        phase = u @ j.locations.T
        inside = np.linalg.norm(j.locations, axis=1) <= 1.0
        terms = np.expm1(1j * phase) - 1j * phase * inside
        return terms @ j.intensities

    def jump_exponent_gradient(self, u):
        u = np.asarray(u, dtype=float)
        j = self.jumps
        if isinstance(j, PowerLawDensity):
            return j.exponent_derivative(u[..., 0])[..., None].astype(complex)
        if j.is_empty:
            return np.zeros(u.shape, dtype=complex)
        phase = u @ j.locations.T
        inside = np.linalg.norm(j.locations, axis=1) <= 1.0
        coef = 1j * (np.exp(1j * phase) - inside) * j.intensities
        return coef @ j.locations

    def symbol(self, u):
        """Lévy symbol ``lambda(u)``; ``u`` has shape (d,) or (..., d)."""
        u = np.asarray(u, dtype=float)
        quad = np.einsum("...i,ij,...j->...", u, self.covariance, u)
        return 1j * (u @ self.drift) - 0.5 * quad + self.jump_exponent(u)

    def symbol_gradient(self, u):
        u = np.asarray(u, dtype=float)
        return 1j * self.drift - u @ self.covariance + self.jump_exponent_gradient(u)

    def to_dict(self):
        j = self.jumps
        if isinstance(j, PowerLawDensity):
            jumps = {"kind": "power_law", "scale": j.scale, "alpha": j.alpha,
                     "r_max": j.r_max, "quadrature_nodes": j.quadrature_nodes}
        elif j.is_empty:
            jumps = {"kind": "none"}
        else:
            jumps = {"kind": "atoms", "locations": j.locations.tolist(),
                     "intensities": j.intensities.tolist()}
        return {"drift": self.drift.tolist(), "covariance": self.covariance.tolist(),
                "jumps": jumps}


def levy_symbol(triple: LevyTriple, u) -> complex:
    return triple.symbol(u)


def levy_symbol_gradient(triple: LevyTriple, u):
    return triple.symbol_gradient(u)


def sample_increments(triple: LevyTriple, dt, rng, size=(), epsilon=JUMP_CUTOFF):
    """Draw increments ``L_{t+dt} - L_t`` with shape ``size + (d,)``.

    Lévy-Itô construction: drift, Gaussian part, compound Poisson jumps with
    the small-jump compensator subtracted.  For the power-law family, jumps
    with ``|x| < epsilon`` are dropped; by symmetry their mean is zero.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    size = (size,) if np.isscalar(size) else tuple(size)
    d = triple.dim
    out = np.broadcast_to(dt * triple.drift, size + (d,)).copy()
    if np.any(triple.covariance):
        xi = rng.standard_normal(size + (d,))
        out += np.sqrt(dt) * xi @ triple.sqrt_cov.T
    j = triple.jumps
    if isinstance(j, AtomList) and not j.is_empty:
        counts = rng.poisson(dt * j.intensities, size=size + (j.intensities.size,))
        out += counts @ j.locations
        out -= dt * triple._small_atom_compensator
    elif isinstance(j, PowerLawDensity):
        lo = min(epsilon, j.r_max)
        rate = j.mass_above(lo)
        if rate > 0:
            counts = rng.poisson(rate * dt, size=size)
            total = int(counts.sum())
            u = rng.random(total)
            a = j.alpha
            mags = (lo ** -a - u * (lo ** -a - j.r_max ** -a)) ** (-1.0 / a)
            signs = np.where(rng.random(total) < 0.5, -1.0, 1.0)
            cell = np.repeat(np.arange(counts.size), counts.ravel())
            sums = np.bincount(cell, weights=signs * mags, minlength=counts.size)
            out[..., 0] += sums.reshape(counts.shape)
    return out


def sample_increment(triple: LevyTriple, dt, rng):
    return sample_increments(triple, dt, rng, size=())
