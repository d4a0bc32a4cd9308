"""Gain synthesis by eigenvalue problems and robustness certificates.

With ``I(K_d) = I + (df/du) K_d`` the augmented error ``(e', e)`` obeys
``d/dt (e', e) = (L1 + L2 K)(e', e) + d~`` where::

    L1 = [[I(K_d)^-1 df/dx, O],     L2 = [[-I(K_d)^-1 df/du],
          [I,               O]]           [O               ]]

and ``K = (K_p, K_i)``.  Stage one picks ``K`` from the blocks at the
reference point, stage two picks a compensation ``dK`` from the blocks at
the current operating point.  Every decision vector stores the gain matrix
row-major followed by the scalar ``lambda``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from hdpid import lmi
from hdpid.controller import GainSet
from hdpid.numerics import lambda_max, lambda_min, spectral_norm, sym
from hdpid.plant import PlantModel

MAX_IKD_CONDITION = 1e8
DEFAULT_GAIN_BOUND = 50.0


class SingularIKd(np.linalg.LinAlgError):
    """``I + (df/du) K_d`` is singular or too badly conditioned to invert."""


@dataclass(frozen=True, eq=False)
class VelocityBlocks:
    IKd_inv: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    x: np.ndarray
    u: np.ndarray

    @property
    def n(self) -> int:
        return self.IKd_inv.shape[0]

    @property
    def m(self) -> int:
        return self.L2.shape[1]

    def closed_loop(self, K) -> np.ndarray:
        """``L1 + L2 K``, the augmented error matrix for stacked gains ``K``."""
        return self.L1 + self.L2 @ np.asarray(K, dtype=float)


@dataclass(frozen=True)
class CertificateParams:
    eps_P: float = 1.0
    eps_Q: float = 1.0
    tau: float = 1.0
    L_dtilde: float = 0.0

    def __post_init__(self):
        if not (self.eps_P > 0 and self.eps_Q > 0 and self.tau > 0):
            raise ValueError("eps_P, eps_Q and tau must be positive")


@dataclass
class TuningResult:
    K: np.ndarray
    lambda_star: float
    solver_status: lmi.Status
    spectral_abscissa_at_origin: float
    solution: Optional[lmi.LmiSolution] = None


def velocity_blocks(plant: PlantModel, x, u, K_d=None) -> VelocityBlocks:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n, m = plant.n, plant.m
    Jx = plant.jac_x(x, u)
    Ju = plant.jac_u(x, u)
    K_d = np.zeros((m, n)) if K_d is None else np.asarray(K_d, dtype=float)
    IKd = np.eye(n) + Ju @ K_d
    cond = np.linalg.cond(IKd)
    if not np.isfinite(cond) or cond > MAX_IKD_CONDITION:
        raise SingularIKd(f"I + (df/du) K_d has condition number {cond:.3g}")
    IKd_inv = np.linalg.inv(IKd)
    L1 = np.zeros((2 * n, 2 * n))
    L1[:n, :n] = IKd_inv @ Jx
    L1[n:, :n] = np.eye(n)
    L2 = np.zeros((2 * n, m))
    L2[:n, :] = -IKd_inv @ Ju
    return VelocityBlocks(IKd_inv, L1, L2, x, u)


def _gain_basis(L2: np.ndarray, n2: int) -> np.ndarray:
    """``sym(L2 E_ab)`` for every unit matrix ``E_ab`` of shape ``m x 2n``, row-major."""
    m = L2.shape[1]
    out = np.empty((m * n2, n2, n2))
    for a in range(m):
        for b in range(n2):
            M = np.zeros((n2, n2))
            M[:, b] = L2[:, a]
            out[a * n2 + b] = sym(M)
    return out


def _gain_bounds(count: int, bound: Optional[float]):
    if bound is None or not math.isfinite(bound):
        return [None] * count
    return [(-bound, bound)] * count


def pack_gains(P_part, I_part) -> np.ndarray:
    """Row-major vector of the stacked matrix ``(P_part, I_part)``."""
    return np.hstack([np.asarray(P_part, float), np.asarray(I_part, float)]).ravel()


def extract_gains(y, m: int, n: int):
    """Split a decision vector into its proportional and integral parts.

    ``y`` is either an LmiSolution or the raw vector; a trailing ``lambda``
    entry is ignored.
    """
    if isinstance(y, lmi.LmiSolution):
        y = y.y_star
    y = np.asarray(y, dtype=float)
    if y.size not in (2 * m * n, 2 * m * n + 1):
        raise ValueError(f"expected {2 * m * n} gain entries (+ lambda), got {y.size}")
    K = y[: 2 * m * n].reshape(m, 2 * n)
    return K[:, :n].copy(), K[:, n:].copy()


def assemble_evp1(blocks: VelocityBlocks, gain_bound: Optional[float] = DEFAULT_GAIN_BOUND) -> lmi.LmiProblem:
    """min lambda  s.t.  L1 + L1' + L2 K + K' L2' <= lambda I."""
    n2 = 2 * blocks.n
    basis = _gain_basis(blocks.L2, n2)
    G = np.concatenate([basis, -np.eye(n2)[None]], axis=0)
    c = np.zeros(G.shape[0])
    c[-1] = 1.0
    bounds = _gain_bounds(basis.shape[0], gain_bound) + [None]
    return lmi.LmiProblem(c=c, G0=sym(blocks.L1), G=G, bounds=bounds)


def assemble_evp1_hinf(
    blocks: VelocityBlocks,
    eps_P: float,
    gain_bound: Optional[float] = DEFAULT_GAIN_BOUND,
    strict_margin: float = 1e-6,
) -> lmi.LmiProblem:
    """Bounded-real form of stage one.

    min lambda  s.t. ::

        [[L_K, O,         I/eps_P   ],
         [O,   -lambda I, O         ],     <  0
         [I/eps_P, O,     -lambda I ]]

    with the strict inequality realized as ``<= -strict_margin I``.
    """
    if eps_P <= 0:
        raise ValueError("eps_P must be positive")
    n2 = 2 * blocks.n
    N = 3 * n2
    basis = _gain_basis(blocks.L2, n2)
    p = basis.shape[0] + 1
    G = np.zeros((p, N, N))
    G[:-1, :n2, :n2] = basis
    G[-1, n2:, n2:] = -np.eye(2 * n2)
    G0 = np.zeros((N, N))
    G0[:n2, :n2] = sym(blocks.L1)
    G0[:n2, 2 * n2 :] = np.eye(n2) / eps_P
    G0[2 * n2 :, :n2] = np.eye(n2) / eps_P
    G0 += strict_margin * np.eye(N)
    c = np.zeros(p)
    c[-1] = 1.0
    bounds = _gain_bounds(p - 1, gain_bound) + [None]
    return lmi.LmiProblem(c=c, G0=G0, G=G, bounds=bounds)


def assemble_evp2(
    blocks_e: VelocityBlocks,
    blocks_0: VelocityBlocks,
    K,
    eps_P: float = 1.0,
    eps_Q: float = 1.0,
    gain_bound: Optional[float] = DEFAULT_GAIN_BOUND,
) -> lmi.LmiProblem:
    """Stage-two problem in ``(dK, lambda)``.

    min lambda  s.t. ::

        eps_P [sym(L2(e) dK) + sym(dL2 K) + sym(dL1)] - eps_Q I <= lambda I

    where ``dL1 = L1(e) - L1(0)`` and ``dL2 = L2(e) - L2(0)``.
    """
    K = np.asarray(K, dtype=float)
    n2 = 2 * blocks_e.n
    if K.shape != (blocks_e.m, n2) or blocks_0.L1.shape != blocks_e.L1.shape:
        raise ValueError("gain or block dimensions do not match")
    dL1 = blocks_e.L1 - blocks_0.L1
    dL2 = blocks_e.L2 - blocks_0.L2
    G0 = eps_P * (sym(dL2 @ K) + sym(dL1)) - eps_Q * np.eye(n2)
    basis = eps_P * _gain_basis(blocks_e.L2, n2)
    G = np.concatenate([basis, -np.eye(n2)[None]], axis=0)
    c = np.zeros(G.shape[0])
    c[-1] = 1.0
    bounds = _gain_bounds(basis.shape[0], gain_bound) + [None]
    return lmi.LmiProblem(c=c, G0=G0, G=G, bounds=bounds)


def disturbance_bound(blocks: VelocityBlocks, L_ddot: float, ref_accel: float = 0.0) -> float:
    """Upper bound ``||I(K_d)^-1||_2 (L_ddot + ref_accel)`` on the augmented disturbance."""
    return spectral_norm(blocks.IKd_inv) * (L_ddot + ref_accel)


def eta_bound(L_dtilde: float, eps_P: float, tau: float) -> float:
    """Radius ``2 L eps_P^(3/2) / tau`` of the invariant set in ``sqrt(e' P e)``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if eps_P <= 0:
        raise ValueError("eps_P must be positive")
    return 2.0 * L_dtilde * eps_P**1.5 / tau


def eta_general(L_d: float, P, tau: float) -> float:
    """Invariant-set radius ``2 L lambda_max(P)^2 / (tau sqrt(lambda_min(P)))`` for a general P."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return 2.0 * L_d * lambda_max(P) ** 2 / (tau * math.sqrt(lambda_min(P)))


def thm3_matrix(blocks_e, blocks_0, K, dK, eps_P, eps_Q, tau) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    dK = np.asarray(dK, dtype=float)
    dL1 = blocks_e.L1 - blocks_0.L1
    dL2 = blocks_e.L2 - blocks_0.L2
    n2 = dL1.shape[0]
    return sym(blocks_e.L2 @ dK) + sym(dL2 @ K) + sym(dL1) + (tau - eps_Q) / eps_P * np.eye(n2)


def check_thm3_condition(blocks_e, blocks_0, K, dK, eps_P, eps_Q, tau) -> tuple[bool, float]:
    """Robust-stability test for the compensated gains.

    Returns ``(holds, margin)`` where ``margin`` is the largest eigenvalue of
    ``sym(L2(e) dK) + sym(dL2 K) + sym(dL1) + (tau - eps_Q)/eps_P I``; the
    condition holds when the margin is not positive.
    """
    margin = lambda_max(thm3_matrix(blocks_e, blocks_0, K, dK, eps_P, eps_Q, tau))
    return margin <= 0.0, margin


def origin_margin(blocks_0: VelocityBlocks, K, ratio: float) -> float:
    """``lambda_max(L_K(0) + ratio I)``; nonpositive means exponential decay at ``ratio``."""
    J = blocks_0.closed_loop(K)
    return lambda_max(sym(J) + ratio * np.eye(J.shape[0]))


def hurwitz_check(J) -> float:
    """Spectral abscissa ``max Re(eig(J))`` of a general real square matrix."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1] or not np.all(np.isfinite(J)):
        raise ValueError("expected a finite square matrix")
    w = np.linalg.eigvals(J)
    if not np.all(np.isfinite(w)):
        raise np.linalg.LinAlgError("eigenvalue iteration failed")
    return float(np.max(w.real))


def lemma3_bound(V0: float, alpha: float, beta: float, t: float) -> float:
    """``beta/alpha + (sqrt(V0) - beta/alpha) exp(-alpha t / 2)``, a bound on ``sqrt(V(t))``
    whenever ``V' + alpha V - beta sqrt(V) <= 0``."""
    r = beta / alpha
    return r + (math.sqrt(V0) - r) * math.exp(-0.5 * alpha * t)


def tune(
    blocks_0: VelocityBlocks,
    gain_bound: Optional[float] = DEFAULT_GAIN_BOUND,
    opts: lmi.SolverOptions = lmi.SolverOptions(),
    hinf_eps_P: Optional[float] = None,
) -> TuningResult:
    """Solve stage one and certify the origin by the spectral abscissa.

    With ``hinf_eps_P`` set the bounded-real form is solved instead of the
    plain eigenvalue problem.
    """
    if hinf_eps_P is None:
        prob = assemble_evp1(blocks_0, gain_bound)
    else:
        prob = assemble_evp1_hinf(blocks_0, hinf_eps_P, gain_bound, opts.strict_margin)
    sol = lmi.solve(prob, opts)
    m, n = blocks_0.m, blocks_0.n
    if sol.status == lmi.Status.INFEASIBLE:
        return TuningResult(np.full((m, 2 * n), np.nan), math.nan, sol.status, math.nan, sol)
    K = sol.y_star[:-1].reshape(m, 2 * n)
    abscissa = hurwitz_check(blocks_0.closed_loop(K))
    return TuningResult(K, float(sol.y_star[-1]), sol.status, abscissa, sol)


def compensate(
    blocks_e: VelocityBlocks,
    blocks_0: VelocityBlocks,
    K,
    eps_P: float = 1.0,
    eps_Q: float = 1.0,
    gain_bound: Optional[float] = DEFAULT_GAIN_BOUND,
    opts: lmi.SolverOptions = lmi.SolverOptions(),
):
    """Solve stage two; returns ``(dK_p, dK_i, lambda_star, solution)``."""
    prob = assemble_evp2(blocks_e, blocks_0, K, eps_P, eps_Q, gain_bound)
    sol = lmi.solve(prob, opts)
    if sol.status == lmi.Status.INFEASIBLE:
        raise lmi.LmiInfeasible("compensation problem is infeasible", sol.max_eig_at_solution)
    dK_p, dK_i = extract_gains(sol, blocks_e.m, blocks_e.n)
    return dK_p, dK_i, float(sol.y_star[-1]), sol


def gains_from_tuning(result: TuningResult, K_d=None) -> GainSet:
    return GainSet.from_stacked(result.K, K_d)
