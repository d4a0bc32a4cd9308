"""Run configuration read from an INI-style ``key = value`` file.

Keys mirror the hyperparameter table of the fixed-wing experiment (``T``,
``g``, ``V``, ``gamma``, ``chi``, ``phi``, ``n_z``, ``gamma_c``, ``chi_c``,
``phi_c``, ``n_zc``, ``L_d_chi``, ``L_d_gamma``, ``K_d``).  Scalars may be
written as arithmetic in ``pi`` (``pi/4``); matrices as rows separated by
``;`` and entries by ``,`` (``1, 0; 0, 1``), with ``0`` meaning the zero
matrix.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from hdpid import lmi
from hdpid.plant import AircraftPlant
from hdpid.simulator import Schedule, SimConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, dict[str, str]] = {
    "plant": {
        "g": "9.81",
        "V": "25",
        "phi_max": "1.4",
        "n_z_min": "-3",
        "n_z_max": "9",
        "phi_rate_max": "3.5",
        "n_z_rate_max": "15",
        "L_ddot": "0",
    },
    "initial": {"gamma": "pi/4", "chi": "pi/3", "phi": "pi/3", "n_z": "1"},
    "reference": {"gamma_c": "0", "chi_c": "0", "phi_c": "0", "n_zc": "0"},
    "disturbance": {"L_d_chi": "0.5", "L_d_gamma": "0.5", "hold_interval": ""},
    "controller": {"K_d": "0", "K_p": "", "K_i": "", "dK_p": "", "dK_i": "", "dde_pole": "20"},
    "certificate": {"eps_P": "1", "eps_Q": "1", "ref_accel": "0"},
    "solver": {
        "gain_bound": "50",
        "rho": "1e-4",
        "mu": "10",
        "gap_tol": "1e-6",
        "newton_tol": "1e-8",
        "max_newton": "200",
        "strict_margin": "1e-6",
    },
    "simulation": {"T": "20", "dt": "0.001", "seed": "0", "schedule": "once"},
    "output": {"dir": "out"},
}

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def parse_scalar(text: str) -> float:
    """Evaluate a number or a small arithmetic expression in ``pi``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"cannot parse {text!r} as a number")

    try:
        value = ev(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse {text!r} as a number") from exc
    if not math.isfinite(value):
        raise ConfigError(f"{text!r} is not finite")
    return value


def parse_matrix(text: str, shape: tuple[int, int]) -> np.ndarray:
    text = text.strip()
    if text in ("0", "O"):
        return np.zeros(shape)
    rows = [r for r in text.split(";")]
    M = np.array([[parse_scalar(v) for v in r.split(",")] for r in rows], dtype=float)
    if M.shape != shape:
        raise ConfigError(f"matrix {text!r} has shape {M.shape}, expected {shape}")
    return M


def format_matrix(M) -> str:
    return "; ".join(", ".join(repr(float(v)) for v in row) for row in np.atleast_2d(M))


@dataclass
class RunConfig:
    plant: AircraftPlant
    x0: np.ndarray
    u0: np.ndarray
    x_ref: np.ndarray
    u_ref: np.ndarray
    L_d: tuple[float, float]
    hold_interval: Optional[float]
    K_d: np.ndarray
    K_p: Optional[np.ndarray]
    K_i: Optional[np.ndarray]
    dK_p: Optional[np.ndarray]
    dK_i: Optional[np.ndarray]
    dde_pole: float
    eps_P: float
    eps_Q: float
    ref_accel: float
    gain_bound: Optional[float]
    solver: lmi.SolverOptions
    T: float
    dt: float
    seed: int
    schedule: Schedule
    out_dir: Path
    raw: dict = field(default_factory=dict, repr=False)

    def sim_config(self, seed: Optional[int] = None, schedule: Optional[Schedule] = None) -> SimConfig:
        return SimConfig(
            x0=self.x0,
            u0=self.u0,
            x_ref=self.x_ref,
            u_ref=self.u_ref,
            T=self.T,
            dt=self.dt,
            seed=self.seed if seed is None else seed,
            L_d=self.L_d,
            schedule=self.schedule if schedule is None else schedule,
            eps_P=self.eps_P,
            eps_Q=self.eps_Q,
            gain_bound=self.gain_bound,
            solver=self.solver,
            dde_pole=self.dde_pole,
            hold_interval=self.hold_interval,
        )

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def load_config(path=None, text: Optional[str] = None) -> RunConfig:
    """Read and validate a configuration; missing keys take the table defaults."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc

    raw = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    for sec in cp.sections():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown section [{sec}]")
        for key, value in cp.items(sec):
            if key not in DEFAULTS[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            raw[sec][key] = value
    try:
        return _build(raw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _opt_matrix(text: str, shape) -> Optional[np.ndarray]:
    return parse_matrix(text, shape) if text.strip() else None


def _build(raw: dict) -> RunConfig:
    num = lambda sec, key: parse_scalar(raw[sec][key])  # noqa: E731
    plant = AircraftPlant(
        g=num("plant", "g"),
        V=num("plant", "V"),
        phi_limit=num("plant", "phi_max"),
        nz_limits=(num("plant", "n_z_min"), num("plant", "n_z_max")),
        phi_rate_limit=num("plant", "phi_rate_max"),
        nz_rate_limit=num("plant", "n_z_rate_max"),
        L_ddot=num("plant", "L_ddot"),
    )
    if not plant.nz_limits[0] < plant.nz_limits[1]:
        raise ConfigError("n_z_min must be below n_z_max")
    if plant.phi_rate_limit <= 0 or plant.nz_rate_limit <= 0:
        raise ConfigError("rate limits must be positive")

    x0 = np.array([num("initial", "chi"), num("initial", "gamma")])
    u0 = np.array([num("initial", "phi"), num("initial", "n_z")])
    x_ref = np.array([num("reference", "chi_c"), num("reference", "gamma_c")])
    u_ref = np.array([num("reference", "phi_c"), num("reference", "n_zc")])
    lo, hi = plant.input_box
    if np.any(u0 < lo) or np.any(u0 > hi):
        raise ConfigError(f"initial input {u0.tolist()} is outside the input box")
    if np.any(u_ref < lo) or np.any(u_ref > hi):
        raise ConfigError(f"reference input {u_ref.tolist()} is outside the input box")

    L_d = (num("disturbance", "L_d_chi"), num("disturbance", "L_d_gamma"))
    if min(L_d) < 0:
        raise ConfigError("disturbance bounds must be non-negative")
    hold = raw["disturbance"]["hold_interval"].strip()
    hold_interval = parse_scalar(hold) if hold else None

    shape = (plant.m, plant.n)
    ctl = raw["controller"]
    K_d = parse_matrix(ctl["K_d"], shape)
    K_p, K_i = _opt_matrix(ctl["K_p"], shape), _opt_matrix(ctl["K_i"], shape)
    dK_p, dK_i = _opt_matrix(ctl["dK_p"], shape), _opt_matrix(ctl["dK_i"], shape)
    if (K_p is None) != (K_i is None):
        raise ConfigError("K_p and K_i must be given together")
    if (dK_p is None) != (dK_i is None):
        raise ConfigError("dK_p and dK_i must be given together")
    if dK_p is not None and K_p is None:
        raise ConfigError("a fixed compensation needs fixed K_p and K_i")

    cert = {k: num("certificate", k) for k in ("eps_P", "eps_Q", "ref_accel")}
    if cert["eps_P"] <= 0 or cert["eps_Q"] <= 0:
        raise ConfigError("eps_P and eps_Q must be positive")

    sv = raw["solver"]
    gb = sv["gain_bound"].strip().lower()
    gain_bound = None if gb in ("none", "inf", "") else parse_scalar(gb)
    if gain_bound is not None and gain_bound <= 0:
        raise ConfigError("gain_bound must be positive")
    solver = lmi.SolverOptions(
        mu=num("solver", "mu"),
        gap_tol=num("solver", "gap_tol"),
        newton_tol=num("solver", "newton_tol"),
        max_newton=int(num("solver", "max_newton")),
        rho=num("solver", "rho"),
        strict_margin=num("solver", "strict_margin"),
    )
    if solver.mu <= 1 or solver.gap_tol <= 0 or solver.max_newton < 1 or solver.rho < 0:
        raise ConfigError("invalid solver options")

    seed = num("simulation", "seed")
    if seed != int(seed) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    try:
        schedule = Schedule.parse(raw["simulation"]["schedule"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig(
        plant=plant,
        x0=x0,
        u0=u0,
        x_ref=x_ref,
        u_ref=u_ref,
        L_d=L_d,
        hold_interval=hold_interval,
        K_d=K_d,
        K_p=K_p,
        K_i=K_i,
        dK_p=dK_p,
        dK_i=dK_i,
        dde_pole=parse_scalar(ctl["dde_pole"]),
        eps_P=cert["eps_P"],
        eps_Q=cert["eps_Q"],
        ref_accel=cert["ref_accel"],
        gain_bound=gain_bound,
        solver=solver,
        T=num("simulation", "T"),
        dt=num("simulation", "dt"),
        seed=int(seed),
        schedule=schedule,
        out_dir=Path(raw["output"]["dir"]),
        raw=raw,
    )
    cfg.sim_config()  # validates T, dt and hold interval
    return cfg


def default_config_text() -> str:
    lines = []
    for sec, keys in DEFAULTS.items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in keys.items())
        lines.append("")
    return "\n".join(lines)
