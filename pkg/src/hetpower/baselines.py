"""Association rules and iterative reference methods.

MCG and RSP are one-shot association heuristics.  The gradient-descent (GD)
and difference-of-concave (DC) references optimize powers for a fixed
association and fixed bandwidth split: GD linearizes the whole rate around
the incumbent and solves a trust-region LP; DC keeps the concave total-power
term exact, linearizes only the interference term, and solves each convex
subproblem with the barrier core.  Both need a feasible starting power
vector, unlike the geometric-program route.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .barrier import BarrierOptions, DenseJacProgram, minimize_barrier
from .model import Assignment, Scenario, sinr_matrix

__all__ = [
    "associate_mcg",
    "associate_rsp",
    "equal_share_x",
    "demand_share_x",
    "find_feasible_power",
    "BaselineReport",
    "solve_gd",
    "solve_dc",
]

_LN2 = float(np.log(2.0))


def associate_mcg(s: Scenario) -> Assignment:
    """Max channel gain: serve each user from its best-gain BS (ties to the
    smaller index)."""
    return Assignment(np.argmax(s.gains, axis=1), s.n_bs)


def associate_rsp(s: Scenario, p: np.ndarray) -> Assignment:
    """Received signal power: argmax_j g_ij * p_j (ties to the smaller index)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("powers must be positive")
    return Assignment(np.argmax(s.gains * p[None, :], axis=1), s.n_bs)


def equal_share_x(s: Scenario, a: Assignment, cap: float = 1.0) -> np.ndarray:
    """Equal bandwidth split cap / n_j among the users of each BS."""
    x = np.zeros((s.n_users, s.n_bs))
    counts = np.bincount(a.bs_of, minlength=s.n_bs)
    served = counts[a.bs_of]
    x[np.arange(s.n_users), a.bs_of] = cap / served
    return x


def demand_share_x(s: Scenario, a: Assignment) -> np.ndarray:
    """Bandwidth proportional to each user's demand share of total demand."""
    x = np.zeros((s.n_users, s.n_bs))
    total = float(np.sum(s.demand_bps))
    if total > 0:
        x[np.arange(s.n_users), a.bs_of] = s.demand_bps / total
    return x


def _true_rates(s: Scenario, a: Assignment, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    idx = np.arange(s.n_users)
    gam = sinr_matrix(s, p)[idx, a.bs_of]
    return x[idx, a.bs_of] * s.bandwidth_hz[a.bs_of] * np.log2(1.0 + gam)


def _feasible(s, a, x, p, rel=1e-12) -> bool:
    if np.any(p <= 0) or np.any(p > s.p_max_rb_w * (1 + rel)):
        return False
    rates = _true_rates(s, a, x, p)
    return bool(np.all(rates >= s.demand_bps * (1 - rel)))


def find_feasible_power(
    s: Scenario,
    a: Assignment,
    x: np.ndarray,
    shrink: float = 0.8,
    max_steps: int = 60,
) -> np.ndarray:
    """Feasible start by scaling the power caps: try p = c * p_max from c = 1
    downward, keep the smallest feasible c.  Raises when even c = 1 fails."""
    if not _feasible(s, a, x, s.p_max_rb_w * (1.0 - 1e-9)):
        raise ValueError("no feasible start: demands unreachable even at the caps")
    c = 1.0 - 1e-9
    best = c
    for _ in range(max_steps):
        c *= shrink
        if _feasible(s, a, x, s.p_max_rb_w * c):
            best = c
        else:
            break
    return s.p_max_rb_w * best


@dataclass
class BaselineReport:
    status: str              # converged | max_iter | stalled
    objective_w: float
    iterations: int
    wall_time_s: float


def _rate_gradients(s: Scenario, a: Assignment, x: np.ndarray, p: np.ndarray):
    """True rates and their gradients w.r.t. p at the current point."""
    n = s.n_users
    idx = np.arange(n)
    j = a.bs_of
    received = s.gains * p[None, :]
    total = received.sum(axis=1)
    den = s.noise_w + total - received[idx, j]
    S = received[idx, j] / den
    xb = x[idx, j] * s.bandwidth_hz[j]
    rates = xb * np.log2(1.0 + S)
    # dS/dp_j = g_ij / den; dS/dp_k = -S g_ik / den (k != j)
    dS = -S[:, None] * s.gains / den[:, None]
    dS[idx, j] = s.gains[idx, j] / den
    grad = (xb / ((1.0 + S) * _LN2))[:, None] * dS
    return rates, grad


def solve_gd(
    s: Scenario,
    a: Assignment,
    x: np.ndarray,
    step: float,
    p0: np.ndarray,
    obj_tol: float = 1e-8,
    max_iter: int = 1000,
    power_floor_w: float = 1e-12,
):
    """Successive linearization with an infinity-norm trust region.

    Each iteration linearizes every user's rate around the incumbent power
    vector and solves the resulting LP inside the trust box; candidates are
    accepted only if they satisfy the true rate constraints (the box shrinks
    until they do).  Stops when the objective change drops below obj_tol.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    p = np.asarray(p0, dtype=float).copy()
    if not _feasible(s, a, x, p, rel=1e-9):
        raise ValueError("p0 is not feasible for the true constraints")
    t0 = time.perf_counter()
    active = s.demand_bps > 0
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        rates, grad = _rate_gradients(s, a, x, p)
        radius = step
        accepted = None
        for _ in range(30):
            lb = np.maximum(power_floor_w, p - radius)
            ub = np.minimum(s.p_max_rb_w, p + radius)
            A_ub = -grad[active]
            b_ub = -(s.demand_bps[active] - rates[active] + grad[active] @ p)
            res = linprog(
                c=np.ones(s.n_bs),
                A_ub=A_ub,
                b_ub=b_ub,
                bounds=list(zip(lb, ub)),
                method="highs",
            )
            if not res.success:
                raise RuntimeError(f"trust-region LP failed: {res.message}")
            cand = res.x
            if _feasible(s, a, x, cand, rel=1e-9):
                accepted = cand
                break
            radius *= 0.5
        if accepted is None:
            status = "stalled"
            break
        change = abs(np.sum(accepted) - np.sum(p))
        p = accepted
        if change < obj_tol:
            status = "converged"
            break
    rep = BaselineReport(
        status=status,
        objective_w=float(np.sum(p)),
        iterations=it,
        wall_time_s=time.perf_counter() - t0,
    )
    return p, rep


class _DcSubproblem(DenseJacProgram):
    """Convex subproblem: total-power log kept exact, interference linearized."""

    def __init__(self, s: Scenario, a: Assignment, x: np.ndarray, p_ref: np.ndarray,
                 lb: np.ndarray, ub: np.ndarray):
        n = s.n_users
        idx = np.arange(n)
        j = a.bs_of
        self.dim = s.n_bs
        self.active = np.where(s.demand_bps > 0)[0]
        self.g_rows = s.gains[self.active]                      # (na, N)
        gi = s.gains.copy()
        gi[idx, j] = 0.0                                        # interference gains
        self.gi_rows = gi[self.active]
        den_ref = s.noise_w + self.gi_rows @ p_ref
        # h(p) ~= h(p_ref) + grad h(p_ref) . (p - p_ref), h = log2(noise + interference)
        self.h_grad = self.gi_rows / (den_ref[:, None] * _LN2)
        self.h_ref = np.log2(den_ref) - self.h_grad @ p_ref
        xb = x[idx, j] * s.bandwidth_hz[j]
        self.target = s.demand_bps[self.active] / xb[self.active]
        self.noise = s.noise_w
        self.lb = lb
        self.ub = ub

    @property
    def n_constraints(self):
        return len(self.active) + 2 * self.dim

    def objective(self, w):
        return float(np.sum(w))

    def objective_grad(self, w):
        return np.ones(self.dim)

    def objective_hess(self, w):
        return None

    def constraint_values(self, w):
        tot = self.noise + self.g_rows @ w
        rate_rows = self.target + self.h_ref + self.h_grad @ w - np.log2(tot)
        return np.concatenate([rate_rows, w - self.ub, self.lb - w])

    def constraint_jacobian(self, w):
        tot = self.noise + self.g_rows @ w
        J_rate = self.h_grad - self.g_rows / (tot[:, None] * _LN2)
        eye = np.eye(self.dim)
        return np.vstack([J_rate, eye, -eye])

    def constraint_hess_weighted(self, w, coef):
        tot = self.noise + self.g_rows @ w
        c = coef[: len(self.active)] / (tot**2 * _LN2)
        return (self.g_rows.T * c) @ self.g_rows


def solve_dc(
    s: Scenario,
    a: Assignment,
    x: np.ndarray,
    step: float,
    p0: np.ndarray,
    obj_tol: float = 1e-8,
    max_iter: int = 1000,
    power_floor_w: float = 1e-12,
):
    """Difference-of-concave iterations on the power vector.

    The rate splits into log2(noise + total received) minus
    log2(noise + interference); the subtracted term is linearized around the
    incumbent, which overestimates it, so every subproblem point satisfies
    the true constraints.  Subproblems are solved with the barrier core.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    p = np.asarray(p0, dtype=float).copy()
    if not _feasible(s, a, x, p, rel=1e-9):
        raise ValueError("p0 is not feasible for the true constraints")
    if np.any(p >= s.p_max_rb_w):
        raise ValueError("p0 must be strictly below the power caps")
    t0 = time.perf_counter()
    status = "max_iter"
    it = 0
    bar = BarrierOptions(tol_gap=min(1e-10, obj_tol * 1e-2), mu0=1.0, mu_factor=0.1)
    for it in range(1, max_iter + 1):
        lb = np.maximum(power_floor_w, p - step)
        ub = np.minimum(s.p_max_rb_w, p + step)
        sub = _DcSubproblem(s, a, x, p, lb, ub)
        # the rate rows vanish at the reference point, so p itself is interior
        # up to roundoff; nudge the powers up a hair if the margin is zero
        start = p.copy()
        if np.max(sub.constraint_values(start)) >= -1e-13:
            start = np.minimum(p * (1 + 1e-6), ub - 1e-3 * (ub - lb))
            if np.max(sub.constraint_values(start)) >= 0.0:
                status = "stalled"
                break
        res = minimize_barrier(sub, start, bar)
        if res.status not in ("optimal", "early"):
            status = "stalled"
            break
        cand = res.w
        if not _feasible(s, a, x, cand, rel=1e-9):
            status = "stalled"  # defensive; DC candidates are true-feasible
            break
        change = abs(np.sum(cand) - np.sum(p))
        p = cand
        if change < obj_tol:
            status = "converged"
            break
    rep = BaselineReport(
        status=status,
        objective_w=float(np.sum(p)),
        iterations=it,
        wall_time_s=time.perf_counter() - t0,
    )
    return p, rep
