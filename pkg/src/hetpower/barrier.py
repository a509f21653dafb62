"""Dense log-barrier interior-point core.

Solves min f0(w) s.t. g_k(w) <= 0, A w = b for smooth convex f0 and g_k.
Problems plug in through :class:`Program`; the same machinery drives the
log-domain geometric program, its phase-I feasibility variant, and the
convexified power subproblems of the DC baseline.  A solver invocation owns
its buffers; programs may cache per-point work (single-threaded use).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "Program",
    "DenseJacProgram",
    "BarrierOptions",
    "BarrierResult",
    "minimize_barrier",
    "phase1_lift",
]


class Program:
    """Problem callbacks consumed by the barrier loop.

    ``constraint_values`` must be cheap (it runs once per line-search trial);
    ``barrier_gh`` runs once per Newton step and returns the gradient and
    Hessian of the log-barrier phi(w) = -sum_k log(-g_k(w)) given the slack
    reciprocals 1/(-g_k).
    """

    dim: int
    eq_matrix: Optional[np.ndarray] = None  # (p, dim)
    eq_rhs: Optional[np.ndarray] = None     # (p,)

    @property
    def n_constraints(self) -> int:
        raise NotImplementedError

    def objective(self, w: np.ndarray) -> float:
        raise NotImplementedError

    def objective_grad(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def objective_hess(self, w: np.ndarray) -> Optional[np.ndarray]:
        """Objective Hessian, or None when it is zero."""
        raise NotImplementedError

    def constraint_values(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def barrier_gh(self, w: np.ndarray, inv_s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(grad phi, Hess phi): sum inv_s_k grad g_k and
        sum inv_s_k^2 grad g_k grad g_k^T + sum inv_s_k Hess g_k."""
        raise NotImplementedError

    def jac_weighted_sum(self, w: np.ndarray, c: np.ndarray) -> np.ndarray:
        """J(w)^T c, needed by the phase-I lift."""
        raise NotImplementedError


class DenseJacProgram(Program):
    """Convenience base: derive barrier terms from a dense Jacobian.

    Suitable for small problems; subclasses implement constraint_jacobian
    and constraint_hess_weighted.
    """

    def constraint_jacobian(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def constraint_hess_weighted(self, w: np.ndarray, coef: np.ndarray) -> Optional[np.ndarray]:
        raise NotImplementedError

    def barrier_gh(self, w, inv_s):
        J = self.constraint_jacobian(w)
        g = J.T @ inv_s
        H = (J.T * inv_s**2) @ J
        Hg = self.constraint_hess_weighted(w, inv_s)
        if Hg is not None:
            H = H + Hg
        return g, H

    def jac_weighted_sum(self, w, c):
        return self.constraint_jacobian(w).T @ c


@dataclass
class BarrierOptions:
    tol_gap: float = 1e-8          # certified duality gap at exit
    mu0: float = 1.0               # initial barrier multiplier
    mu_factor: float = 0.1         # per-stage reduction
    newton_tol: float = 1e-10      # final-stage stop on lambda^2 / 2
    # Earlier stages must stay close to the central path or the last stages
    # become numerically unsolvable, so their tolerance is only mildly looser.
    newton_tol_coarse: float = 1e-9
    max_newton_per_stage: int = 80
    max_stages: int = 60
    armijo_slope: float = 0.01
    backtrack: float = 0.5
    max_backtracks: int = 60
    hess_regularization: float = 1e-10
    # Optional early exit once the objective drops below a threshold (phase-I).
    stop_below: Optional[float] = None


@dataclass
class BarrierResult:
    w: np.ndarray
    status: str                    # optimal | max_iter | numerical | early
    objective: float
    gap: float                     # m * mu + final decrement (certified when optimal)
    newton_iterations: int
    stages: int


def _merit(prog: Program, w: np.ndarray, mu: float) -> float:
    """Barrier merit f0 + mu * phi; +inf outside the strict interior."""
    vals = prog.constraint_values(w)
    with np.errstate(invalid="ignore", divide="ignore"):
        log_slack = float(np.sum(np.log(-vals)))
    if not np.isfinite(log_slack):
        return np.inf
    return prog.objective(w) - mu * log_slack


def _newton_step(H, grad, A, reg) -> Optional[np.ndarray]:
    """Jacobi-scaled Newton solve; the scaling tames the huge dynamic range
    barrier Hessians develop near the end of the path."""
    d = len(grad)
    dia = np.abs(np.diag(H))
    scale = 1.0 / np.sqrt(np.maximum(dia, 1e-300))
    scale = np.where(np.isfinite(scale), scale, 1.0)
    Hs = H * scale[:, None] * scale[None, :]
    gs = grad * scale
    for attempt in range(2):
        Hc = Hs if attempt == 0 else Hs + reg * np.eye(d)
        try:
            if A is None:
                return np.linalg.solve(Hc, -gs) * scale
            As = A * scale[None, :]
            p = A.shape[0]
            kkt = np.zeros((d + p, d + p))
            kkt[:d, :d] = Hc
            kkt[:d, d:] = As.T
            kkt[d:, :d] = As
            rhs = np.concatenate([-gs, np.zeros(p)])
            return np.linalg.solve(kkt, rhs)[:d] * scale
        except np.linalg.LinAlgError:
            continue
    return None


def minimize_barrier(prog: Program, w0: np.ndarray, opts: BarrierOptions) -> BarrierResult:
    """Run the barrier method from a strictly feasible w0."""
    w = np.array(w0, dtype=float)
    vals = prog.constraint_values(w)
    if np.any(vals >= 0.0) or not np.all(np.isfinite(vals)):
        raise ValueError("starting point is not strictly feasible")
    A = prog.eq_matrix
    if A is not None and prog.eq_rhs is not None:
        if np.max(np.abs(A @ w - prog.eq_rhs), initial=0.0) > 1e-9:
            raise ValueError("starting point violates equality constraints")

    m = prog.n_constraints
    mu = opts.mu0
    total_newton = 0
    stages = 0
    # the certificate at exit is m * mu + final decrement; split the budget
    final_mu_target = 0.5 * opts.tol_gap
    final_newton_tol = min(opts.newton_tol, 0.125 * opts.tol_gap)

    while True:
        stages += 1
        if stages > opts.max_stages:
            return BarrierResult(w, "max_iter", prog.objective(w), m * mu, total_newton, stages)
        final_stage = m * mu <= final_mu_target
        stage_tol = final_newton_tol if final_stage else opts.newton_tol_coarse
        cur_merit = None
        centered = False
        decrement = np.inf

        for _ in range(opts.max_newton_per_stage):
            vals = prog.constraint_values(w)
            inv_s = 1.0 / (-vals)
            g_phi, H_phi = prog.barrier_gh(w, inv_s)
            grad = prog.objective_grad(w) + mu * g_phi
            H_phi *= mu
            H = H_phi
            H0 = prog.objective_hess(w)
            if H0 is not None:
                H += H0

            dw = _newton_step(H, grad, A, opts.hess_regularization)
            if dw is None:
                return BarrierResult(w, "numerical", prog.objective(w), m * mu, total_newton, stages)
            decrement = -float(grad @ dw)
            if not np.isfinite(decrement) or decrement < 0:
                dw = _newton_step(H + opts.hess_regularization * np.eye(len(w)), grad, A,
                                  opts.hess_regularization)
                decrement = -float(grad @ dw) if dw is not None else np.nan
                if dw is None or not np.isfinite(decrement) or decrement < 0:
                    return BarrierResult(
                        w, "numerical", prog.objective(w), m * mu, total_newton, stages
                    )

            if 0.5 * decrement <= stage_tol:
                centered = True
                break

            if cur_merit is None:
                cur_merit = _merit(prog, w, mu)
            alpha = 1.0
            ok = False
            for _ in range(opts.max_backtracks):
                trial = _merit(prog, w + alpha * dw, mu)
                if trial <= cur_merit - opts.armijo_slope * alpha * decrement:
                    ok = True
                    break
                alpha *= opts.backtrack
            if not ok:
                break  # stuck at numerical resolution; iterate is still interior
            w = w + alpha * dw
            cur_merit = trial
            total_newton += 1

            if opts.stop_below is not None and prog.objective(w) < opts.stop_below:
                return BarrierResult(w, "early", prog.objective(w), m * mu, total_newton, stages)

        if final_stage:
            status = "optimal" if centered else "numerical"
            gap = m * mu + (decrement if np.isfinite(decrement) else 0.0)
            return BarrierResult(w, status, prog.objective(w), gap, total_newton, stages)
        mu *= opts.mu_factor


class _Phase1Program(Program):
    """Lift (w, s): minimize s subject to relaxed g_k(w) <= s, others strict."""

    def __init__(self, inner: Program, relax_mask: np.ndarray):
        self.inner = inner
        self.relax_mask = np.asarray(relax_mask, dtype=bool)
        self.dim = inner.dim + 1
        if inner.eq_matrix is not None:
            self.eq_matrix = np.hstack(
                [inner.eq_matrix, np.zeros((inner.eq_matrix.shape[0], 1))]
            )
            self.eq_rhs = inner.eq_rhs

    @property
    def n_constraints(self) -> int:
        return self.inner.n_constraints

    def objective(self, w):
        return float(w[-1])

    def objective_grad(self, w):
        g = np.zeros(self.dim)
        g[-1] = 1.0
        return g

    def objective_hess(self, w):
        return None

    def constraint_values(self, w):
        vals = self.inner.constraint_values(w[:-1]).copy()
        vals[self.relax_mask] -= w[-1]
        return vals

    def barrier_gh(self, w, inv_s):
        gi, Hi = self.inner.barrier_gh(w[:-1], inv_s)
        mask = self.relax_mask
        g = np.empty(self.dim)
        g[:-1] = gi
        g[-1] = -float(np.sum(inv_s[mask]))
        H = np.zeros((self.dim, self.dim))
        H[:-1, :-1] = Hi
        cross = -self.inner.jac_weighted_sum(w[:-1], inv_s**2 * mask)
        H[:-1, -1] = cross
        H[-1, :-1] = cross
        H[-1, -1] = float(np.sum(inv_s[mask] ** 2))
        return g, H

    def jac_weighted_sum(self, w, c):
        out = np.empty(self.dim)
        out[:-1] = self.inner.jac_weighted_sum(w[:-1], c)
        out[-1] = -float(np.sum(c[self.relax_mask]))
        return out


def phase1_lift(inner: Program, relax_mask: np.ndarray) -> _Phase1Program:
    """Wrap a program for phase-I: relaxed rows get the slack variable."""
    return _Phase1Program(inner, relax_mask)
