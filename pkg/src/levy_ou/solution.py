"""Mild solutions: scenario, closed-form characteristic function, path simulation."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .evolution import EvolutionFamily, PeriodicCoefficients, stability_envelope
from .levy import LevyTriple, sample_increments
from .quadrature import integrate, panel_nodes

CHUNK_PATHS = 4096


class Scenario:
    """An equation ``dX = (A X + f) dt + B dL`` together with numerical tolerances.

    Builds the evolution family and its stability envelope on construction, so
    an unstable ``A`` fails here with ``NotExponentiallyStable``.
    """

    def __init__(self, coefficients: PeriodicCoefficients, noise: LevyTriple,
                 master_seed=0, ode_tol=1e-10, quad_tol=1e-12, tail_tol=1e-10,
                 n_grid=256, envelope_periods=10):
        if noise.dim != coefficients.dim:
            raise ValueError(f"noise lives in R^{noise.dim}, coefficients in R^{coefficients.dim}")
        for name, val in (("ode_tol", ode_tol), ("quad_tol", quad_tol), ("tail_tol", tail_tol)):
            if not val > 0:
                raise ValueError(f"{name} must be positive")
        self.coefficients = coefficients
        self.noise = noise
        self.master_seed = int(master_seed)
        self.ode_tol = float(ode_tol)
        self.quad_tol = float(quad_tol)
        self.tail_tol = float(tail_tol)
        self.family = EvolutionFamily(coefficients, ode_tol=ode_tol, n_grid=n_grid)
        self.envelope = stability_envelope(self.family, envelope_periods * coefficients.period)

    @property
    def dim(self):
        return self.coefficients.dim

    @property
    def period(self):
        return self.coefficients.period

    @property
    def M_env(self):
        return self.envelope.M_env

    @property
    def omega(self):
        return self.envelope.omega

    @cached_property
    def has_forcing(self):
        return not self.coefficients.f.is_zero

    def U(self, t, s, adjoint=False):
        return self.family.propagators(t, s, adjoint)

    def max_panel(self):
        return self.period / 4


def _exponent_integrand(sc: Scenario, t, h):
    """Integrand ``r -> [lambda(B(r)^T U(t,r)^T h_j)]_j ++ U(t,r) f(r)``."""
    B = sc.coefficients.B
    f = sc.coefficients.f

    def func(r):
        Ut = sc.U(t, r)
        v = np.einsum("md,nde,nek->nmk", h, Ut, B(r))
        lam = sc.noise.symbol(v)
        if sc.has_forcing:
            drift = np.einsum("nde,ne->nd", Ut, f(r))
            return np.concatenate([lam, drift.astype(complex)], axis=1)
        return lam

    return func


def transition_exponent(sc: Scenario, s, t, h, x=None, tol=None):
    """``log E exp(i<h, X(t,s,x)>)``: drift phase plus integrated symbol.

    ``h`` may be one vector (d,) or a stack (m, d); the result has shape ()
    or (m,).
    """
    h = np.asarray(h, dtype=float)
    single = h.ndim == 1
    H = np.atleast_2d(h)
    if s > t:
        raise ValueError("transition_exponent needs s <= t")
    m = H.shape[0]
    out = np.zeros(m, dtype=complex)
    if t > s:
        tol = sc.quad_tol if tol is None else tol
        vals = integrate(_exponent_integrand(sc, t, H), s, t, tol=tol, max_panel=sc.max_panel())
        out += vals[:m]
        if sc.has_forcing:
            out += 1j * (H @ vals[m:].real)
    if x is not None:
        shift = sc.family.propagator(t, s) @ np.asarray(x, dtype=float) if t > s else np.asarray(x, dtype=float)
        out += 1j * (H @ shift)
    return out[0] if single else out


def mean_forcing(sc: Scenario, s, t, tol=None):
    """``int_s^t U(t,r) f(r) dr``."""
    if not sc.has_forcing or t == s:
        return np.zeros(sc.dim)
    f = sc.coefficients.f
    tol = sc.quad_tol if tol is None else tol
    return integrate(lambda r: np.einsum("nde,ne->nd", sc.U(t, r), f(r)), s, t,
                     tol=tol, max_panel=sc.max_panel())


def char_fn(sc: Scenario, s, t, x, h):
    """``E exp(i<h, X(t,s,x)>)`` in closed form."""
    return np.exp(transition_exponent(sc, s, t, h, x=x))


@dataclass
class PathEnsemble:
    s: float
    t: float
    x: np.ndarray
    dt: float
    terminal: np.ndarray
    seed: int
    workers: int
    times: Optional[np.ndarray] = None
    paths: Optional[np.ndarray] = None
    increments: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.terminal.shape[0]

    def mean(self):
        return self.terminal.mean(axis=0)

    def cov(self):
        return np.atleast_2d(np.cov(self.terminal, rowvar=False))

    def empirical_char_fn(self, h):
        """Empirical ``E exp(i<h, X>)`` for h (d,) or (m, d), with its standard error."""
        h = np.asarray(h, dtype=float)
        vals = np.exp(1j * (self.terminal @ np.atleast_2d(h).T))
        est = vals.mean(axis=0)
        se = np.sqrt(np.maximum(1.0 - np.abs(est) ** 2, 0.0) / self.n_paths)
        if h.ndim == 1:
            return est[0], se[0]
        return est, se

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i}" for i in range(self.terminal.shape[1])])
            for row in self.terminal:
                w.writerow([repr(float(v)) for v in row])

    def summary(self):
        return {
            "s": self.s, "t": self.t, "x": np.asarray(self.x).tolist(), "dt": self.dt,
            "n_paths": self.n_paths, "seed": self.seed, "workers": self.workers,
            "mean": self.mean().tolist(), "cov": self.cov().tolist(), **self.meta,
        }

    def summary_json(self):
        return json.dumps(self.summary(), sort_keys=True, indent=2)


def _time_grid(s, t, dt):
    n = int(np.ceil((t - s) / dt - 1e-9))
    r = s + dt * np.arange(n + 1)
    r[-1] = t
    return r


def _step_drifts(sc: Scenario, grid):
    """``int_{r_k}^{r_{k+1}} U(r_{k+1}, r) f(r) dr`` for every step, shape (N, d)."""
    N = grid.size - 1
    if not sc.has_forcing:
        return np.zeros((N, sc.dim))
    n_nodes = 16
    nodes, weights = panel_nodes(grid, n_nodes)
    ends = np.repeat(grid[1:], n_nodes)
    vals = np.einsum("nde,ne->nd", sc.U(ends, nodes), sc.coefficients.f(nodes))
    return (weights[:, None] * vals).reshape(N, n_nodes, sc.dim).sum(axis=1)


def simulate_paths(sc: Scenario, s, t, x, dt, n_paths, workers=1, keep_paths=False,
                   seed=None, stream=0):
    """Monte-Carlo ensemble of the mild solution ``X(t, s, x)``.

    Terminal values use ``U(t,s)x + int_s^t U(t,r) f(r) dr + sum_i U(t,r_i) B(r_i) dL_i``
    with left endpoints ``r_i``; the deterministic integral is done by
    quadrature.  With ``keep_paths`` the grid values are produced by the exact
    one-step recursion ``X_{k+1} = U_k (X_k + B(r_k) dL_k) + drift_k``, which
    telescopes to the same terminal sum.  Paths are split into ``workers``
    contiguous blocks, each driven by its own stream derived from ``seed``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not s < t:
        raise ValueError("simulate_paths needs s < t")
    if dt > (t - s) / 4 * (1 + 1e-12):
        raise ValueError("dt must be at most (t - s) / 4")
    seed = sc.master_seed if seed is None else int(seed)
    workers = max(1, int(workers))
    x = np.asarray(x, dtype=float).reshape(sc.dim)
    grid = _time_grid(s, t, dt)
    steps = np.diff(grid)
    left = grid[:-1]
    B_left = sc.coefficients.B(left)
    G = sc.U(t, left) @ B_left
    base = sc.family.propagator(t, s) @ x + mean_forcing(sc, s, t)
    if keep_paths:
        U_step = sc.U(grid[1:], left)
        drift_step = _step_drifts(sc, grid)

    bounds = np.linspace(0, n_paths, workers + 1).astype(int)

    def run(w):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream, w)))
        lo, hi = bounds[w], bounds[w + 1]
        term = np.empty((hi - lo, sc.dim))
        paths = np.empty((hi - lo, grid.size, sc.dim)) if keep_paths else None
        incs = np.empty((hi - lo, steps.size, sc.dim)) if keep_paths else None
        for a in range(lo, hi, CHUNK_PATHS):
            b = min(hi, a + CHUNK_PATHS)
            dL = _draw(sc.noise, steps, rng, b - a)
            term[a - lo:b - lo] = base + np.einsum("nde,pne->pd", G, dL)
            if keep_paths:
                incs[a - lo:b - lo] = dL
                X = np.broadcast_to(x, (b - a, sc.dim)).copy()
                paths[a - lo:b - lo, 0] = X
                for k in range(steps.size):
                    X = (X + dL[:, k] @ B_left[k].T) @ U_step[k].T + drift_step[k]
                    paths[a - lo:b - lo, k + 1] = X
        return term, paths, incs

    if workers == 1:
        results = [run(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(workers)))
    terminal = np.concatenate([r[0] for r in results])
    ens = PathEnsemble(float(s), float(t), x, float(dt), terminal, seed, workers)
    if keep_paths:
        ens.times = grid
        ens.paths = np.concatenate([r[1] for r in results])
        ens.increments = np.concatenate([r[2] for r in results])
    return ens


def _draw(noise: LevyTriple, steps, rng, n):
    """Increments for ``n`` paths over ``steps``, shape (n, len(steps), d)."""
    if np.allclose(steps, steps[0], rtol=0, atol=1e-15 * max(1.0, steps[0])):
        return sample_increments(noise, float(steps[0]), rng, size=(n, steps.size))
    out = sample_increments(noise, float(steps[0]), rng, size=(n, steps.size - 1))
    last = sample_increments(noise, float(steps[-1]), rng, size=(n, 1))
    return np.concatenate([out, last], axis=1)


def weak_residual(sc: Scenario, ensemble: PathEnsemble, y):
    """Left-Riemann residual of the weak formulation, one value per path.

    ``<X_t,y> - <x,y> - sum <X_{r_i}, A(r_i)^T y> dr_i - sum <f(r_i), y> dr_i
    - sum <B(r_i)^T y, dL_i>``, with the stored increments reused.
    """
    if ensemble.paths is None:
        raise ValueError("weak_residual needs an ensemble simulated with keep_paths=True")
    y = np.asarray(y, dtype=float)
    r = ensemble.times[:-1]
    dr = np.diff(ensemble.times)
    X = ensemble.paths
    Aty = np.einsum("nde,d->ne", sc.coefficients.A(r), y)
    Bty = np.einsum("nde,d->ne", sc.coefficients.B(r), y)
    fy = sc.coefficients.f(r) @ y
    res = X[:, -1] @ y - X[:, 0] @ y
    res -= np.einsum("pne,ne,n->p", X[:, :-1], Aty, dr)
    res -= fy @ dr
    res -= np.einsum("pne,ne->p", ensemble.increments, Bty)
    return res
