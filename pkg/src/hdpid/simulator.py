"""Fixed-step closed-loop simulation and trajectory export."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from hdpid import lmi, tuner
from hdpid.controller import (
    GainSet,
    SecondDerivativeEstimator,
    apply_compensation,
    clamp_rate,
    control_rate,
    project_input,
)
from hdpid.plant import DisturbanceSampler, NearSingularInput, PlantModel

AIRCRAFT_COLUMNS = (
    "t", "chi", "gamma", "e_chi", "e_gamma", "de_chi", "de_gamma",
    "phi", "nz", "d_chi", "d_gamma", "lyap_norm",
)


class SimulationError(RuntimeError):
    """Base for failures inside a run; carries the step index and a state snapshot."""

    def __init__(self, message: str, step: int, state: Optional[np.ndarray] = None):
        super().__init__(f"{message} (step {step})")
        self.step = step
        self.state = None if state is None else np.array(state, copy=True)


class IntegrationBlowup(SimulationError):
    pass


class SingularInputError(SimulationError):
    pass


class SingularIKdError(SimulationError):
    pass


def rk4_step(fn: Callable, state, t: float, dt: float, step: int = 0) -> np.ndarray:
    """One classical Runge-Kutta step of ``state' = fn(t, state)``."""
    y = np.asarray(state, dtype=float)
    k1 = fn(t, y)
    k2 = fn(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = fn(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = fn(t + dt, y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationBlowup("non-finite state", step, y)
    return out


@dataclass(frozen=True)
class Schedule:
    """When to recompute the compensation.

    ``kind`` is ``"none"`` (fixed gains), ``"once"`` (at t = 0), ``"every"``
    (every ``value`` steps) or ``"threshold"`` (whenever the augmented error
    has moved more than ``value`` away from where it was last compensated).
    """

    kind: str = "once"
    value: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        text = text.strip()
        if text in ("none", "once"):
            return cls(text)
        kind, _, arg = text.partition(":")
        if kind == "every":
            n = int(arg)
            if n < 1:
                raise ValueError("every:N needs N >= 1")
            return cls("every", n)
        if kind == "threshold":
            x = float(arg)
            if not x > 0:
                raise ValueError("threshold:X needs X > 0")
            return cls("threshold", x)
        raise ValueError(f"unknown schedule {text!r}")

    def __str__(self):
        if self.kind in ("none", "once"):
            return self.kind
        return f"{self.kind}:{self.value:g}" if self.kind == "threshold" else f"every:{int(self.value)}"


@dataclass(frozen=True)
class SimConfig:
    x0: np.ndarray
    u0: np.ndarray
    x_ref: np.ndarray
    u_ref: np.ndarray
    T: float = 20.0
    dt: float = 1e-3
    seed: int = 0
    L_d: Sequence[float] = (0.5, 0.5)
    schedule: Schedule = Schedule("none")
    eps_P: float = 1.0
    eps_Q: float = 1.0
    gain_bound: Optional[float] = tuner.DEFAULT_GAIN_BOUND
    solver: lmi.SolverOptions = lmi.SolverOptions()
    dde_pole: float = 20.0
    hold_interval: Optional[float] = None

    def __post_init__(self):
        for name in ("x0", "u0", "x_ref", "u_ref"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("T and dt must be positive")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("T must be an integer multiple of dt")
        if self.hold_interval is not None and not self.hold_interval > 0:
            raise ValueError("hold interval must be positive")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class Trajectory:
    """Per-step records on a uniform grid ``t = k dt``.

    Arrays have one row per record; ``du`` is the input rate actually applied
    over the step starting at that record (zero on the last row).
    """

    t: np.ndarray
    x: np.ndarray
    e: np.ndarray
    de: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d: np.ndarray
    lyap_norm: np.ndarray
    compensations: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    def channel(self, name: str) -> np.ndarray:
        """Aircraft channel by CSV column name, e.g. ``"e_chi"``."""
        i = AIRCRAFT_COLUMNS.index(name)
        return self.table()[:, i]

    def table(self) -> np.ndarray:
        return np.column_stack(
            [self.t, self.x, self.e, self.de, self.u, self.d, self.lyap_norm]
        )

    def to_csv(self, path=None, columns: Sequence[str] = AIRCRAFT_COLUMNS) -> str:
        table = self.table()
        if table.shape[1] != len(columns):
            raise ValueError("column names do not match the trajectory layout")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in table:
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def run_closed_loop(plant: PlantModel, gains: GainSet, config: SimConfig) -> Trajectory:
    """Integrate plant, velocity-form PID and disturbance jointly in ``(x, u)``.

    At each step the disturbance is held, ``e' = x_r' - (f(x, u) + d)`` is
    measured, the rate law is evaluated and clamped, ``(x, u)`` is advanced by
    one RK4 step with the rate held, and ``u`` is projected onto its box.
    The reference is constant, so ``x_r' = 0``.
    """
    n, m = plant.n, plant.m
    dt, N = config.dt, config.steps
    hold = dt if config.hold_interval is None else config.hold_interval
    sampler = DisturbanceSampler(np.broadcast_to(config.L_d, (n,)), config.seed, hold)
    hold_idx = [sampler.index_of(k * dt) for k in range(N + 1)]
    dist = sampler.batch(hold_idx[-1] + 1)[hold_idx]
    rate_box, input_box = plant.rate_box, plant.input_box
    base = gains
    active = gains
    dde_est = SecondDerivativeEstimator(dt, config.dde_pole) if gains.has_derivative else None
    sqrt_eps = math.sqrt(config.eps_P)

    blocks_0 = None
    if config.schedule.kind != "none":
        blocks_0 = tuner.velocity_blocks(plant, config.x_ref, config.u_ref, base.K_d)
    last_comp = None
    compensations = []

    t_arr = dt * np.arange(N + 1)
    xs = np.empty((N + 1, n))
    es = np.empty((N + 1, n))
    des = np.empty((N + 1, n))
    us = np.empty((N + 1, m))
    dus = np.zeros((N + 1, m))
    lyap = np.empty(N + 1)

    x = config.x0.copy()
    u = project_input(config.u0, input_box)
    z = np.r_[x, u]
    for k in range(N + 1):
        x, u = z[:n], z[n:]
        d = dist[k]
        try:
            xdot = plant.f(x, u) + d
        except NearSingularInput as exc:
            raise SingularInputError(str(exc), k, z) from None
        e = config.x_ref - x
        de = -xdot
        xs[k], es[k], des[k], us[k] = x, e, de, u
        lyap[k] = sqrt_eps * math.sqrt(float(e @ e + de @ de))
        if k == N:
            break

        e_aug = np.r_[de, e]
        kind = config.schedule.kind
        due = (
            (kind == "once" and k == 0)
            or (kind == "every" and k % int(config.schedule.value) == 0)
            or (kind == "threshold" and (last_comp is None or np.linalg.norm(e_aug - last_comp) > config.schedule.value))
        )
        if due:
            try:
                blocks_e = tuner.velocity_blocks(plant, x, u, base.K_d)
            except tuner.SingularIKd as exc:
                raise SingularIKdError(str(exc), k, z) from None
            dKp, dKi, lam, _ = tuner.compensate(
                blocks_e, blocks_0, base.K, config.eps_P, config.eps_Q,
                config.gain_bound, config.solver,
            )
            active = apply_compensation(base, dKp, dKi)
            last_comp = e_aug
            compensations.append((float(t_arr[k]), dKp, dKi, lam))

        dde = dde_est.update(de) if dde_est is not None else np.zeros(n)
        rate = clamp_rate(control_rate(active, e, de, dde), rate_box)
        dus[k] = rate

        def rhs(_t, s, d=d, rate=rate):
            try:
                return np.concatenate((plant.f(s[:n], s[n:]) + d, rate))
            except NearSingularInput as exc:
                raise SingularInputError(str(exc), k, s) from None

        z = rk4_step(rhs, z, t_arr[k], dt, k)
        z[n:] = project_input(z[n:], input_box)

    return Trajectory(t_arr, xs, es, des, us, dus, dist, lyap, compensations)


@dataclass
class ErrorTrajectory:
    t: np.ndarray
    e: np.ndarray
    d: np.ndarray
    lyap_norm: np.ndarray


def run_ltv_surrogate(J_fn, d_fn, e0, P, t_span, dt: float) -> ErrorTrajectory:
    """Integrate ``e' = J(t) e + d(t)`` with ``d`` held over each step.

    ``J_fn(t)`` returns the (possibly time-varying) system matrix and
    ``d_fn(k, t)`` the disturbance for step ``k``.  ``lyap_norm`` records
    ``sqrt(e' P e)``.
    """
    t0, t1 = t_span
    N = int(round((t1 - t0) / dt))
    P = np.asarray(P, dtype=float)
    e = np.asarray(e0, dtype=float).copy()
    ts = t0 + dt * np.arange(N + 1)
    es = np.empty((N + 1, e.size))
    ds = np.zeros((N + 1, e.size))
    for k in range(N + 1):
        es[k] = e
        if k == N:
            break
        d = np.asarray(d_fn(k, ts[k]), dtype=float)
        ds[k] = d
        e = rk4_step(lambda t, s, d=d: J_fn(t) @ s + d, e, ts[k], dt, k)
    lyap = np.sqrt(np.einsum("ki,ij,kj->k", es, P, es))
    return ErrorTrajectory(ts, es, ds, lyap)
