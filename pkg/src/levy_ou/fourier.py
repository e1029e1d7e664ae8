"""Finite real Fourier series used for every T-periodic coefficient."""

from __future__ import annotations

import numpy as np


class FourierSeries:
    """Array-valued trigonometric polynomial with period ``period``.

    ``value(t) = const + sum_k [cos_k * cos(2 pi k t / T) + sin_k * sin(2 pi k t / T)]``
    for k = 1..K.  ``const`` fixes the value shape (scalar, vector or matrix);
    ``cos`` and ``sin`` are sequences of arrays with that same shape.  Complex
    coefficients are allowed (needed for modulations like ``exp(2 pi i k t/T)``).
    """

    def __init__(self, period, const, cos=(), sin=()):
        self.period = float(period)
        if not self.period > 0:
            raise ValueError("period must be positive")
        const = np.asarray(const)
        dtype = np.result_type(const, *[np.asarray(c) for c in cos],
                               *[np.asarray(s) for s in sin], float)
        self.const = np.array(const, dtype=dtype)
        n_harm = max(len(cos), len(sin))
        shape = self.const.shape
        self._cos = np.zeros((n_harm,) + shape, dtype=dtype)
        self._sin = np.zeros((n_harm,) + shape, dtype=dtype)
        for k, c in enumerate(cos):
            self._cos[k] = np.broadcast_to(np.asarray(c, dtype=dtype), shape)
        for k, s in enumerate(sin):
            self._sin[k] = np.broadcast_to(np.asarray(s, dtype=dtype), shape)

    @classmethod
    def constant(cls, period, value):
        return cls(period, value)

    @property
    def shape(self):
        return self.const.shape

    @property
    def n_harmonics(self):
        return self._cos.shape[0]

    @property
    def cos(self):
        return self._cos.copy()

    @property
    def sin(self):
        return self._sin.copy()

    @property
    def is_constant(self):
        return not (np.any(self._cos) or np.any(self._sin))

    @property
    def is_zero(self):
        return self.is_constant and not np.any(self.const)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.broadcast_to(self.const, t.shape + self.shape).copy()
        if self.n_harmonics:
            k = np.arange(1, self.n_harmonics + 1)
            phase = 2.0 * np.pi * np.outer(t, k) / self.period
            out = out + np.tensordot(np.cos(phase), self._cos, axes=(1, 0))
            out = out + np.tensordot(np.sin(phase), self._sin, axes=(1, 0))
        return out[0] if scalar else out

    def derivative(self):
        k = np.arange(1, self.n_harmonics + 1).reshape((-1,) + (1,) * len(self.shape))
        omega = 2.0 * np.pi * k / self.period
        # d/dt [a cos + b sin] = omega (b cos - a sin)
        return FourierSeries(self.period, np.zeros_like(self.const),
                             cos=list(omega * self._sin), sin=list(-omega * self._cos))

    def sup_norm(self, n_grid=256, op_norm=True):
        """Grid supremum of the (operator, for matrices) norm over one period."""
        ts = np.arange(n_grid) * self.period / n_grid
        vals = self(ts)
        if vals.ndim == 1:
            return float(np.max(np.abs(vals)))
        if vals.ndim == 2:
            return float(np.max(np.linalg.norm(vals, axis=1)))
        ord_ = 2 if op_norm else "fro"
        return float(np.max(np.linalg.norm(vals, ord=ord_, axis=(-2, -1))))

    def to_dict(self):
        return {"period": self.period, "const": self.const.tolist(),
                "cos": self._cos.tolist(), "sin": self._sin.tolist()}

    def __repr__(self):
        return (f"FourierSeries(period={self.period}, shape={self.shape}, "
                f"harmonics={self.n_harmonics})")
