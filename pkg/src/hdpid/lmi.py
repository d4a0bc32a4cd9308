"""Linear objective minimization under one affine matrix inequality.

Problems have the form::

    minimize    c @ y
    subject to  G(y) = G0 + sum_i y[i] * G[i]  <=  0      (negative semidefinite)
                lo[i] <= y[i] <= hi[i]                    (optional per variable)

and are solved by a log-det barrier path-following method: the barrier
``-log det(-G(y))`` plus log barriers for the box keeps the iterates strictly
feasible, an outer loop scales the objective weight ``t`` by ``mu`` and an
inner damped Newton loop re-centres after each scaling.  A phase-I problem
``min s  s.t.  G(y) <= s I`` provides the strictly feasible start.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from hdpid.numerics import as_symmetric, lambda_max

Bounds = Optional[Sequence[Optional[tuple[float, float]]]]


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"


class LmiInfeasible(Exception):
    """Phase I could not find a strictly feasible point."""

    def __init__(self, message: str, phase1_value: float):
        super().__init__(message)
        self.phase1_value = phase1_value


class NotStrictlyFeasible(ValueError):
    """The barrier was evaluated outside the interior of the feasible set."""


@dataclass(frozen=True)
class SolverOptions:
    mu: float = 10.0
    t0: float = 1.0
    gap_tol: float = 1e-6
    newton_tol: float = 1e-8
    max_newton: int = 200
    rho: float = 1e-4
    strict_margin: float = 1e-6
    feasibility_tol: float = 1e-7
    alpha: float = 0.01
    beta: float = 0.5


@dataclass(frozen=True, eq=False)
class LmiProblem:
    """One affine symmetric matrix inequality and a linear objective.

    ``G`` holds the coefficient blocks stacked along the first axis, shape
    ``(p, N, N)``.  ``bounds`` is either None or a length-``p`` sequence whose
    entries are ``(lo, hi)`` pairs or None for a free variable.
    """

    c: np.ndarray
    G0: np.ndarray
    G: np.ndarray
    bounds: Bounds = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        G0 = as_symmetric(self.G0)
        N = G0.shape[0]
        G = np.asarray(self.G, dtype=float)
        if c.size == 0:
            c = np.zeros(0)
            G = np.zeros((0, N, N)) if G.size == 0 else G
        if G.shape != (c.size, N, N):
            raise ValueError(f"coefficient blocks must have shape {(c.size, N, N)}, got {G.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("objective has non-finite entries")
        G = np.stack([as_symmetric(Gi) for Gi in G]) if c.size else G
        if self.bounds is None:
            bounds = (None,) * c.size
        else:
            bounds = tuple(None if b is None else (float(b[0]), float(b[1])) for b in self.bounds)
            if len(bounds) != c.size:
                raise ValueError("bounds must have one entry per variable")
            for b in bounds:
                if b is not None and not b[0] < b[1]:
                    raise ValueError(f"empty variable box {b}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "G0", G0)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "bounds", bounds)

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def dim(self) -> int:
        return self.G0.shape[0]

    def affine(self, y) -> np.ndarray:
        """Evaluate ``G(y)``."""
        y = np.asarray(y, dtype=float)
        if self.num_vars == 0:
            return self.G0.copy()
        return self.G0 + np.tensordot(y, self.G, axes=1)

    def box_sides(self):
        """Finite box sides as ``(lo_idx, lo, hi_idx, hi)`` index/value arrays."""
        lo_idx = [i for i, b in enumerate(self.bounds) if b is not None and math.isfinite(b[0])]
        hi_idx = [i for i, b in enumerate(self.bounds) if b is not None and math.isfinite(b[1])]
        return (
            np.array(lo_idx, dtype=int),
            np.array([self.bounds[i][0] for i in lo_idx], dtype=float),
            np.array(hi_idx, dtype=int),
            np.array([self.bounds[i][1] for i in hi_idx], dtype=float),
        )


@dataclass
class LmiSolution:
    y_star: np.ndarray
    objective_value: float
    max_eig_at_solution: float
    iterations: int
    status: Status
    objective_history: list[float] = field(default_factory=list)


class _Barrier:
    """Barrier pieces of a problem, with the box handled as scalar logs."""

    def __init__(self, prob: LmiProblem):
        self.prob = prob
        self.lo_idx, self.lo, self.hi_idx, self.hi = prob.box_sides()
        self.param = prob.dim + self.lo_idx.size + self.hi_idx.size

    def slack_chol(self, y):
        S = -self.prob.affine(y)
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return None
        if np.any(self.hi - y[self.hi_idx] <= 0.0) or np.any(y[self.lo_idx] - self.lo <= 0.0):
            return None
        return L

    def value(self, y, L=None) -> float:
        if L is None:
            L = self.slack_chol(y)
            if L is None:
                return math.inf
        v = -2.0 * float(np.sum(np.log(np.diag(L))))
        v -= float(np.sum(np.log(self.hi - y[self.hi_idx])))
        v -= float(np.sum(np.log(y[self.lo_idx] - self.lo)))
        return v

    def derivatives(self, y, L):
        p = self.prob.num_vars
        Linv = np.linalg.inv(L)
        Sinv = Linv.T @ Linv
        W = np.einsum("ab,ibc->iac", Sinv, self.prob.G) if p else np.zeros((0,) + Sinv.shape)
        grad = np.einsum("iaa->i", W)
        hess = np.einsum("iab,jba->ij", W, W)
        shi = self.hi - y[self.hi_idx]
        slo = y[self.lo_idx] - self.lo
        np.add.at(grad, self.hi_idx, 1.0 / shi)
        np.add.at(grad, self.lo_idx, -1.0 / slo)
        np.add.at(hess, (self.hi_idx, self.hi_idx), 1.0 / shi**2)
        np.add.at(hess, (self.lo_idx, self.lo_idx), 1.0 / slo**2)
        return grad, hess


def barrier_value_grad(prob: LmiProblem, y) -> tuple[float, np.ndarray]:
    """Barrier value ``-log det(-G(y))`` and its gradient ``tr((-G(y))^-1 G_i)``.

    Box bounds, when present, contribute their log-barrier terms as well.
    """
    y = np.asarray(y, dtype=float).reshape(prob.num_vars)
    bar = _Barrier(prob)
    L = bar.slack_chol(y)
    if L is None:
        raise NotStrictlyFeasible("point is not strictly inside the feasible set")
    grad, _ = bar.derivatives(y, L)
    return bar.value(y, L), grad


def _solve_newton(H, g):
    try:
        L = np.linalg.cholesky(H)
        return -np.linalg.solve(L.T, np.linalg.solve(L, g))
    except np.linalg.LinAlgError:
        return -np.linalg.lstsq(H, g, rcond=None)[0]


def _path_follow(
    prob: LmiProblem,
    y0: np.ndarray,
    opts: SolverOptions,
    stop: Optional[Callable[[np.ndarray], bool]] = None,
    rho: Optional[float] = None,
):
    bar = _Barrier(prob)
    rho = opts.rho if rho is None else rho
    c = prob.c
    y = np.array(y0, dtype=float)
    if bar.slack_chol(y) is None:
        raise NotStrictlyFeasible("starting point is not strictly feasible")
    t = opts.t0
    steps = 0
    history: list[float] = []

    def merit(z, L=None):
        return t * float(c @ z) + bar.value(z, L) + rho * float(z @ z)

    while True:
        while True:
            L = bar.slack_chol(y)
            f = merit(y, L)
            g_bar, H_bar = bar.derivatives(y, L)
            g = t * c + g_bar + 2.0 * rho * y
            H = H_bar + 2.0 * rho * np.eye(y.size)
            dy = _solve_newton(H, g)
            slope = float(g @ dy)
            # below 1e-13 |f| the predicted decrease is lost to rounding in f
            if -slope / 2.0 <= max(opts.newton_tol, 1e-13 * abs(f)) or y.size == 0:
                break
            s = 1.0
            while s > 1e-14:
                cand = y + s * dy
                Lc = bar.slack_chol(cand)
                if Lc is not None and merit(cand, Lc) <= f + opts.alpha * s * slope:
                    break
                s *= opts.beta
            else:
                # no further decrease representable in floating point
                break
            y = cand
            steps += 1
            if stop is not None and stop(y):
                return y, steps, history, "stopped"
            if steps >= opts.max_newton:
                history.append(float(c @ y))
                return y, steps, history, Status.MAX_ITERATIONS
        history.append(float(c @ y))
        if bar.param / t <= opts.gap_tol:
            return y, steps, history, Status.OPTIMAL
        t *= opts.mu


def _start_point(prob: LmiProblem) -> np.ndarray:
    y = np.zeros(prob.num_vars)
    for i, b in enumerate(prob.bounds):
        if b is not None:
            y[i] = 0.5 * (b[0] + b[1])
    return y


def phase1_feasible_point(prob: LmiProblem, opts: SolverOptions = SolverOptions()) -> np.ndarray:
    """Find ``y`` with ``lambda_max(G(y)) <= -strict_margin`` inside the box.

    Solves ``min s  s.t.  G(y) <= s I`` (with the box rows shifted by ``s`` as
    well) and stops as soon as ``s`` drops below the margin.  Raises
    LmiInfeasible when the phase-I optimum stays above ``-strict_margin``.
    """
    margin = opts.strict_margin
    p, N = prob.num_vars, prob.dim
    y0 = _start_point(prob)
    if p == 0:
        top = lambda_max(prob.G0)
        if top > -margin:
            raise LmiInfeasible(f"constant block has lambda_max = {top:.3g}", top)
        return y0

    lo_idx, lo, hi_idx, hi = prob.box_sides()
    # Box rows become diagonal entries so that one shift s covers everything.
    M = N + hi_idx.size + lo_idx.size
    G0 = np.zeros((M, M))
    G0[:N, :N] = prob.G0
    G = np.zeros((p + 1, M, M))
    G[:p, :N, :N] = prob.G
    row = N
    for i, h in zip(hi_idx, hi):
        G0[row, row] = -h
        G[i, row, row] = 1.0
        row += 1
    for i, l in zip(lo_idx, lo):
        G0[row, row] = l
        G[i, row, row] = -1.0
        row += 1
    G[p] = -np.eye(M)
    # s >= -1 keeps phase I bounded when the original problem is unbounded.
    aux = LmiProblem(
        c=np.r_[np.zeros(p), 1.0],
        G0=G0,
        G=G,
        bounds=[None] * p + [(-1.0, math.inf)],
    )
    s0 = lambda_max(G0 + np.tensordot(y0, G[:p], axes=1)) + 1.0
    z0 = np.r_[y0, max(s0, 0.0) + 1.0]

    def good(z):
        return z[-1] < -2.0 * margin

    z, _, _, status = _path_follow(aux, z0, opts, stop=good)
    if status == "stopped" or good(z):
        y = z[:p]
        if lambda_max(prob.affine(y)) <= -margin:
            return y
    raise LmiInfeasible(f"phase-I optimum s* = {z[-1]:.3g} is not below -{margin:g}", float(z[-1]))


def solve(prob: LmiProblem, opts: SolverOptions = SolverOptions()) -> LmiSolution:
    """Minimize ``c @ y`` subject to ``G(y) <= 0`` and the variable box.

    Returns a solution with status Infeasible (and NaN ``y_star``) when no
    strictly feasible point exists; MaxIterations carries the last iterate.
    """
    try:
        y0 = phase1_feasible_point(prob, opts)
    except LmiInfeasible as exc:
        nan = np.full(prob.num_vars, np.nan)
        return LmiSolution(nan, math.nan, exc.phase1_value, 0, Status.INFEASIBLE)
    if prob.num_vars == 0:
        return LmiSolution(y0, 0.0, lambda_max(prob.G0), 0, Status.OPTIMAL)
    y, steps, history, status = _path_follow(prob, y0, opts)
    top = lambda_max(prob.affine(y))
    if status == Status.OPTIMAL and top > opts.feasibility_tol:
        status = Status.MAX_ITERATIONS
    return LmiSolution(
        y_star=y,
        objective_value=float(prob.c @ y),
        max_eig_at_solution=top,
        iterations=steps,
        status=status,
        objective_history=history,
    )
