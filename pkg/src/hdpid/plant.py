"""Plant models ``x' = f(x, u) + d`` and the bounded disturbance source."""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field

import numpy as np


class NearSingularInput(ValueError):
    """Input too close to a point where the model or its Jacobian degenerates."""


class PlantModel(abc.ABC):
    """Nonlinear MIMO plant with analytic Jacobians and actuator limits.

    Subclasses provide ``n``, ``m``, the nominal vector field and its two
    Jacobians.  ``input_box`` and ``rate_box`` are ``(lower, upper)`` pairs of
    length-``m`` arrays; ``L_ddot`` bounds ``||d'||_2`` for certificates.
    """

    n: int
    m: int
    input_box: tuple[np.ndarray, np.ndarray]
    rate_box: tuple[np.ndarray, np.ndarray]
    L_ddot: float

    @abc.abstractmethod
    def f(self, x, u) -> np.ndarray: ...

    @abc.abstractmethod
    def jac_x(self, x, u) -> np.ndarray: ...

    @abc.abstractmethod
    def jac_u(self, x, u) -> np.ndarray: ...

    def check_input(self, u) -> None:
        """Raise NearSingularInput if ``u`` is outside the model's domain."""


def _box(lo, hi):
    return (np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))


@dataclass(frozen=True)
class AircraftPlant(PlantModel):
    """Fixed-wing kinematics in azimuth and climb angle at constant speed.

    State ``x = (chi, gamma)`` in rad, input ``u = (phi, n_z)`` (roll angle in
    rad, load factor)::

        chi'   = g tan(phi) / V
        gamma' = g (n_z cos(phi) - cos(gamma)) / V

    Inputs with ``|phi| >= pi/2 - guard`` are rejected.
    """

    g: float = 9.81
    V: float = 25.0
    guard: float = 1e-3
    phi_limit: float = 1.4
    nz_limits: tuple[float, float] = (-3.0, 9.0)
    phi_rate_limit: float = 3.5
    nz_rate_limit: float = 15.0
    L_ddot: float = 0.0
    n: int = field(default=2, init=False)
    m: int = field(default=2, init=False)

    def __post_init__(self):
        if self.V <= 0:
            raise ValueError("airspeed V must be positive")
        if not 0 < self.phi_limit < math.pi / 2 - self.guard:
            raise ValueError("roll limit must lie inside (0, pi/2 - guard)")

    @property
    def input_box(self):
        return _box([-self.phi_limit, self.nz_limits[0]], [self.phi_limit, self.nz_limits[1]])

    @property
    def rate_box(self):
        return _box(
            [-self.phi_rate_limit, -self.nz_rate_limit], [self.phi_rate_limit, self.nz_rate_limit]
        )

    def check_input(self, u) -> None:
        phi = float(u[0])
        if not abs(phi) < math.pi / 2 - self.guard:
            raise NearSingularInput(f"roll angle {phi:.6g} rad is too close to +-pi/2")

    def f(self, x, u) -> np.ndarray:
        self.check_input(u)
        gamma = float(x[1])
        phi, nz = float(u[0]), float(u[1])
        k = self.g / self.V
        return np.array([k * math.tan(phi), k * (nz * math.cos(phi) - math.cos(gamma))])

    def jac_x(self, x, u) -> np.ndarray:
        self.check_input(u)
        return np.array([[0.0, 0.0], [0.0, self.g * math.sin(float(x[1])) / self.V]])

    def jac_u(self, x, u) -> np.ndarray:
        self.check_input(u)
        phi, nz = float(u[0]), float(u[1])
        k = self.g / self.V
        c = math.cos(phi)
        return np.array([[k / (c * c), 0.0], [-k * nz * math.sin(phi), k * c]])


@dataclass(frozen=True)
class DisturbanceSampler:
    """Sample-and-hold uniform noise on ``[-L_d/2, L_d/2]`` per component.

    Values are a pure function of ``(seed, hold index)``: hold index ``k``
    reads Philox counter blocks ``k * B .. k * B + B - 1`` (four 64-bit words
    each, ``B = ceil(n / 4)``) so any sample can be regenerated on its own.
    """

    L_d: np.ndarray
    seed: int = 0
    hold_interval: float = 1e-3

    def __post_init__(self):
        L = np.atleast_1d(np.asarray(self.L_d, dtype=float))
        if np.any(L < 0) or not np.all(np.isfinite(L)):
            raise ValueError("disturbance amplitudes must be finite and non-negative")
        if self.hold_interval <= 0:
            raise ValueError("hold interval must be positive")
        object.__setattr__(self, "L_d", L)

    @property
    def n(self) -> int:
        return self.L_d.size

    def _blocks(self) -> int:
        return -(-self.n // 4)

    def _from_words(self, words: np.ndarray, count: int) -> np.ndarray:
        unit = (words >> np.uint64(11)).astype(float) * 2.0**-53
        unit = unit.reshape(count, 4 * self._blocks())[:, : self.n]
        return self.L_d * (unit - 0.5)

    def at_index(self, k: int) -> np.ndarray:
        if k < 0:
            raise ValueError("hold index must be non-negative")
        B = self._blocks()
        bg = np.random.Philox(key=self.seed, counter=k * B)
        return self._from_words(bg.random_raw(4 * B), 1)[0]

    def batch(self, count: int, start: int = 0) -> np.ndarray:
        """Samples for hold indices ``start .. start + count - 1``, shape ``(count, n)``."""
        B = self._blocks()
        bg = np.random.Philox(key=self.seed, counter=start * B)
        return self._from_words(bg.random_raw(4 * B * count), count)

    def index_of(self, t: float) -> int:
        # tolerance absorbs k * dt / dt rounding below an integer
        return int(math.floor(t / self.hold_interval + 1e-9))

    def sample(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("time must be non-negative")
        return self.at_index(self.index_of(t))


def sample_disturbance(sampler: DisturbanceSampler, t: float) -> np.ndarray:
    return sampler.sample(t)
