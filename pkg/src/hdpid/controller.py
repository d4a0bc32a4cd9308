"""Velocity-form matrix-gain PID law ``u' = K_i e + K_p e' + K_d e''``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class GainSet:
    """Proportional, integral and derivative gain matrices, each ``m x n``."""

    K_p: np.ndarray
    K_i: np.ndarray
    K_d: np.ndarray

    def __post_init__(self):
        mats = [np.atleast_2d(np.asarray(M, dtype=float)) for M in (self.K_p, self.K_i, self.K_d)]
        if not (mats[0].shape == mats[1].shape == mats[2].shape):
            raise ValueError("K_p, K_i and K_d must share one shape")
        for M in mats:
            if not np.all(np.isfinite(M)):
                raise ValueError("gain matrices must be finite")
        for name, M in zip(("K_p", "K_i", "K_d"), mats):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @classmethod
    def zeros(cls, m: int, n: int) -> "GainSet":
        z = np.zeros((m, n))
        return cls(z, z, z)

    @classmethod
    def from_stacked(cls, K, K_d=None) -> "GainSet":
        """Split ``K = (K_p, K_i)`` of shape ``m x 2n``."""
        K = np.asarray(K, dtype=float)
        n = K.shape[1] // 2
        K_d = np.zeros((K.shape[0], n)) if K_d is None else K_d
        return cls(K[:, :n], K[:, n:], K_d)

    @property
    def shape(self) -> tuple[int, int]:
        return self.K_p.shape

    @property
    def K(self) -> np.ndarray:
        return np.hstack([self.K_p, self.K_i])

    @property
    def has_derivative(self) -> bool:
        return bool(np.any(self.K_d != 0.0))

    def __eq__(self, other):
        if not isinstance(other, GainSet):
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for a, b in zip((self.K_p, self.K_i, self.K_d), (other.K_p, other.K_i, other.K_d))
        )


def control_rate(gains: GainSet, e, de, dde) -> np.ndarray:
    """Unclamped input rate ``K_i e + K_p e' + K_d e''``."""
    e, de, dde = (np.asarray(v, dtype=float) for v in (e, de, dde))
    n = gains.shape[1]
    if not (e.shape == de.shape == dde.shape == (n,)):
        raise ValueError(f"error vectors must have length {n}")
    return gains.K_i @ e + gains.K_p @ de + gains.K_d @ dde


def clamp_rate(rate, rate_box) -> np.ndarray:
    lo, hi = rate_box
    return np.minimum(np.maximum(np.asarray(rate, dtype=float), lo), hi)


def project_input(u, input_box) -> np.ndarray:
    lo, hi = input_box
    return np.minimum(np.maximum(np.asarray(u, dtype=float), lo), hi)


def apply_compensation(gains: GainSet, dK_p, dK_i) -> GainSet:
    """Return ``(K_p + dK_p, K_i + dK_i, K_d)``."""
    dK_p = np.asarray(dK_p, dtype=float)
    dK_i = np.asarray(dK_i, dtype=float)
    if dK_p.shape != gains.shape or dK_i.shape != gains.shape:
        raise ValueError(f"compensation must have shape {gains.shape}")
    return GainSet(gains.K_p + dK_p, gains.K_i + dK_i, gains.K_d)


class SecondDerivativeEstimator:
    """Backward difference of ``e'`` followed by a single-pole low-pass.

    Only needed when ``K_d`` is nonzero.  The first call returns zero.
    """

    def __init__(self, dt: float, pole: float = 20.0):
        self.dt = dt
        self.pole = pole
        self._prev = None
        self._state = None

    def update(self, de: np.ndarray) -> np.ndarray:
        de = np.asarray(de, dtype=float)
        if self._prev is None:
            self._prev = de.copy()
            self._state = np.zeros_like(de)
            return self._state.copy()
        raw = (de - self._prev) / self.dt
        self._prev = de.copy()
        if self.pole > 0:
            a = self.dt * self.pole / (1.0 + self.dt * self.pole)
            self._state = self._state + a * (raw - self._state)
        else:
            self._state = raw
        return self._state.copy()
