"""Log-domain geometric program for fixed or relaxed association.

Variables are q = log p (per-BS RB power) and u = log x (bandwidth
fractions).  Each user/BS/piece triple contributes one convex log-sum-exp
constraint; association indicators enter linearly through the big-M term and
are either fixed (given assignment), or box variables in [0, 1] coupled by a
per-user budget (branch-and-bound relaxations).  Minimizing sum_j exp(q_j)
under these constraints is a convex program solved with the barrier core.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .barrier import BarrierOptions, BarrierResult, Program, minimize_barrier, phase1_lift
from .model import Allocation, Assignment, Scenario
from .ppf import PpfApprox, min_sinr_for_target

__all__ = [
    "GpProblem",
    "SolveReport",
    "SolverOptions",
    "Phase1Result",
    "solve_gp",
    "phase1",
    "lse_throughput",
    "lse_throughput_derivatives",
    "throughput_rhs",
]


def throughput_rhs(s: Scenario, ppf: PpfApprox) -> np.ndarray:
    """Right-hand sides log(B_j a_l / t_i) / b_l, shape (n, N, m).

    Users with zero demand get +inf rows: their throughput constraints are
    vacuous and are dropped from the program.
    """
    t = s.demand_bps
    with np.errstate(divide="ignore"):
        ratio = np.log(s.bandwidth_hz[None, :, None] * ppf.a[None, None, :]) - np.log(
            t[:, None, None]
        )
    return ratio / ppf.b[None, None, :]


def lse_throughput(s: Scenario, ppf: PpfApprox, q, u_ij: float, i: int, j: int, ell: int) -> float:
    """Log-sum-exp constraint left-hand side for user i, BS j, piece ell.

    log((noise/g_ij) e^{-q_j - u_ij/b} + sum_{k!=j} (g_ik/g_ij) e^{q_k - q_j - u_ij/b});
    computed with a max shift so extreme arguments stay finite.
    """
    q = np.asarray(q, dtype=float)
    exponents, _ = _lse_terms(s, q, u_ij, i, j, ppf.b[ell])
    mx = np.max(exponents)
    return float(mx + np.log(np.sum(np.exp(exponents - mx))))


def lse_throughput_derivatives(
    s: Scenario, ppf: PpfApprox, q, u_ij: float, i: int, j: int, ell: int
):
    """Gradient and Hessian of lse_throughput w.r.t. (q_1..q_N, u_ij).

    The gradient is the softmax-weighted average of the affine forms'
    coefficient rows; the Hessian is their weighted covariance, hence PSD.
    """
    q = np.asarray(q, dtype=float)
    N = s.n_bs
    exponents, coeffs = _lse_terms(s, q, u_ij, i, j, ppf.b[ell])
    mx = np.max(exponents)
    wts = np.exp(exponents - mx)
    wts /= wts.sum()
    grad = coeffs.T @ wts
    mean = grad
    H = (coeffs.T * wts) @ coeffs - np.outer(mean, mean)
    assert grad.shape == (N + 1,)
    return grad, H


def _lse_terms(s: Scenario, q, u_ij, i, j, b):
    """Exponents and coefficient rows of the N affine forms in (q, u_ij)."""
    N = s.n_bs
    g = s.gains
    rows = []
    coeffs = np.zeros((N, N + 1))
    exps = np.zeros(N)
    # noise term
    exps[0] = np.log(s.noise_w / g[i, j]) - q[j] - u_ij / b
    coeffs[0, j] = -1.0
    coeffs[0, N] = -1.0 / b
    r = 1
    for k in range(N):
        if k == j:
            continue
        exps[r] = np.log(g[i, k] / g[i, j]) + q[k] - q[j] - u_ij / b
        coeffs[r, k] = 1.0
        coeffs[r, j] = -1.0
        coeffs[r, N] = -1.0 / b
        r += 1
    return exps, coeffs


@dataclass
class SolverOptions:
    tol_gap: float = 1e-8        # absolute duality gap target (W)
    tol_feas: float = 1e-8       # residual tolerance on reported solutions
    mu0: float = 1.0
    mu_factor: float = 0.1
    newton_tol: float = 1e-10
    max_newton_per_stage: int = 80
    max_stages: int = 60
    power_floor_w: float = 1e-12   # keeps log powers bounded below
    fraction_floor: float = 1e-12  # same role for bandwidth fractions
    phase1_margin: float = 1e-3    # early phase-I exit once this deep inside
    phase1_tol: float = 1e-9
    analytic_start: bool = True
    # When the analytic start succeeds it already sits near the optimum, so
    # the initial barrier weight is shrunk to an estimated gap instead of
    # walking the full schedule down from mu0.
    adaptive_mu0: bool = True

    def barrier(self, **overrides) -> BarrierOptions:
        kw = dict(
            tol_gap=self.tol_gap,
            mu0=self.mu0,
            mu_factor=self.mu_factor,
            newton_tol=self.newton_tol,
            max_newton_per_stage=self.max_newton_per_stage,
            max_stages=self.max_stages,
        )
        kw.update(overrides)
        return BarrierOptions(**kw)


@dataclass
class SolveReport:
    status: str                  # optimal | infeasible | max_iter | numerical | budget
    objective_w: float
    duality_gap_w: float
    newton_iterations: int
    barrier_stages: int
    wall_time_s: float
    feas_residual: float = np.nan
    nodes: int = 0
    bound_w: float = np.nan


@dataclass
class Phase1Result:
    feasible: bool
    s_star: float
    gap: float
    w: Optional[np.ndarray]      # lifted-problem point without the slack coord
    newton_iterations: int = 0


Domain = Union[int, Sequence[int]]


@dataclass(frozen=True)
class GpProblem:
    """Problem data: scenario, approximation, association state, options.

    zbar_lo == zbar_hi marks a fixed indicator; a strict box makes it a
    variable of the relaxation.  u_fixed holds frozen log fractions (NaN =
    free); the fixed-x baselines freeze the full matrix.
    """

    scenario: Scenario
    ppf: PpfApprox
    zbar_lo: np.ndarray          # (n, N)
    zbar_hi: np.ndarray          # (n, N)
    big_m: float = 1e6
    delta2: float = 0.0          # bandwidth budget becomes 1 - delta2
    u_fixed: Optional[np.ndarray] = None
    assignment: Optional[Assignment] = None  # set when zbar encodes a fixed assignment

    def __post_init__(self):
        s = self.scenario
        zlo = np.asarray(self.zbar_lo, dtype=float)
        zhi = np.asarray(self.zbar_hi, dtype=float)
        if zlo.shape != (s.n_users, s.n_bs) or zhi.shape != zlo.shape:
            raise ValueError("zbar bounds must be (n_users, n_bs)")
        if np.any(zlo < 0) or np.any(zhi > 1) or np.any(zlo > zhi):
            raise ValueError("zbar bounds must satisfy 0 <= lo <= hi <= 1")
        object.__setattr__(self, "zbar_lo", zlo)
        object.__setattr__(self, "zbar_hi", zhi)
        if not (0 <= self.delta2 < 1):
            raise ValueError("delta2 must lie in [0, 1)")
        rhs = throughput_rhs(s, self.ppf)
        finite = rhs[np.isfinite(rhs)]
        if finite.size and self.big_m <= np.max(np.abs(finite)):
            raise ValueError(
                "big_m too small: must exceed the largest |rhs| "
                f"({np.max(np.abs(finite)):.3g}) so deactivated constraints stay inactive"
            )
        if self.u_fixed is not None:
            uf = np.asarray(self.u_fixed, dtype=float)
            if uf.shape != (s.n_users, s.n_bs):
                raise ValueError("u_fixed must be (n_users, n_bs)")
            object.__setattr__(self, "u_fixed", uf)

    # -- constructors ------------------------------------------------------

    @classmethod
    def for_assignment(
        cls,
        scenario: Scenario,
        ppf: PpfApprox,
        assignment: Assignment,
        big_m: float = 1e6,
        delta2: float = 0.0,
        fraction_floor: float = 1e-12,
    ) -> "GpProblem":
        """Fixed association: indicators pinned, non-serving fractions frozen
        at the solver floor (they are reported as exact zeros)."""
        n, N = scenario.n_users, scenario.n_bs
        zbar = np.ones((n, N))
        zbar[np.arange(n), assignment.bs_of] = 0.0
        u_fixed = np.full((n, N), np.nan)
        mask = np.ones((n, N), dtype=bool)
        mask[np.arange(n), assignment.bs_of] = False
        u_fixed[mask] = np.log(fraction_floor)
        return cls(
            scenario=scenario,
            ppf=ppf,
            zbar_lo=zbar,
            zbar_hi=zbar,
            big_m=big_m,
            delta2=delta2,
            u_fixed=u_fixed,
            assignment=assignment,
        )

    @classmethod
    def with_fixed_fractions(
        cls,
        scenario: Scenario,
        ppf: PpfApprox,
        assignment: Assignment,
        x: np.ndarray,
        big_m: float = 1e6,
        delta2: float = 0.0,
        fraction_floor: float = 1e-12,
    ) -> "GpProblem":
        """Fixed association and fixed fractions: only powers remain free."""
        n, N = scenario.n_users, scenario.n_bs
        zbar = np.ones((n, N))
        zbar[np.arange(n), assignment.bs_of] = 0.0
        u_fixed = np.log(np.maximum(np.asarray(x, dtype=float), fraction_floor))
        return cls(
            scenario=scenario,
            ppf=ppf,
            zbar_lo=zbar,
            zbar_hi=zbar,
            big_m=big_m,
            delta2=delta2,
            u_fixed=u_fixed,
            assignment=assignment,
        )

    @classmethod
    def relaxed(
        cls,
        scenario: Scenario,
        ppf: PpfApprox,
        domains: Sequence[Domain],
        big_m: float = 1e6,
        delta2: float = 0.0,
        fraction_floor: float = 1e-12,
    ) -> "GpProblem":
        """Branch-and-bound node: decided users are pinned, undecided users
        get box-relaxed indicators over their candidate sets."""
        n, N = scenario.n_users, scenario.n_bs
        if len(domains) != n:
            raise ValueError("one domain per user required")
        zlo = np.ones((n, N))
        zhi = np.ones((n, N))
        u_fixed = np.full((n, N), np.nan)
        for i, dom in enumerate(domains):
            if np.isscalar(dom):
                j = int(dom)
                zlo[i, j] = zhi[i, j] = 0.0
                mask = np.ones(N, dtype=bool)
                mask[j] = False
                u_fixed[i, mask] = np.log(fraction_floor)
            else:
                cand = sorted(int(j) for j in dom)
                if len(cand) == 0:
                    raise ValueError(f"empty candidate set for user {i}")
                if len(cand) == 1:
                    j = cand[0]
                    zlo[i, j] = zhi[i, j] = 0.0
                    mask = np.ones(N, dtype=bool)
                    mask[j] = False
                    u_fixed[i, mask] = np.log(fraction_floor)
                else:
                    for j in cand:
                        zlo[i, j] = 0.0
                    # non-candidate indicators stay fixed at 1; their
                    # fractions are frozen at the floor
                    mask = np.ones(N, dtype=bool)
                    mask[cand] = False
                    u_fixed[i, mask] = np.log(fraction_floor)
        return cls(
            scenario=scenario,
            ppf=ppf,
            zbar_lo=zlo,
            zbar_hi=zhi,
            big_m=big_m,
            delta2=delta2,
            u_fixed=u_fixed,
        )


class _GpProgram(Program):
    """Structured barrier program for a GpProblem.

    Variable layout: [q (N)] + [free u coords] + [free zbar coords].
    Constraint row order: affine boxes, per-BS bandwidth, throughput triples
    (pair-major, piece-minor).
    """

    def __init__(self, prob: GpProblem, opts: SolverOptions):
        s = prob.scenario
        n, N = s.n_users, s.n_bs
        m = prob.ppf.m
        self.prob = prob
        self.opts = opts
        self.n_bs = N
        self.n_users = n
        self.g = s.gains
        self.noise = s.noise_w
        self.inv_b = 1.0 / prob.ppf.b
        self.big_m = prob.big_m

        self.q_cap = np.log(s.p_max_rb_w)
        self.q_floor = np.full(N, np.log(opts.power_floor_w))
        self.u_cap = 0.0
        self.u_floor = np.log(opts.fraction_floor)

        u_fixed = prob.u_fixed if prob.u_fixed is not None else np.full((n, N), np.nan)
        self.u_free_mask = np.isnan(u_fixed)
        self.z_free_mask = prob.zbar_lo < prob.zbar_hi

        # variable indices
        self.dim = N
        self.u_index = np.full((n, N), -1, dtype=int)
        free_u = np.argwhere(self.u_free_mask)
        for r, (i, j) in enumerate(free_u):
            self.u_index[i, j] = N + r
        self.dim += len(free_u)
        self.z_index = np.full((n, N), -1, dtype=int)
        free_z = np.argwhere(self.z_free_mask)
        z0 = self.dim
        for r, (i, j) in enumerate(free_z):
            self.z_index[i, j] = z0 + r
        self.dim += len(free_z)
        self._free_u = free_u
        self._free_z = free_z

        self.u_base = np.where(self.u_free_mask, 0.0, u_fixed)
        self.z_base = np.where(self.z_free_mask, 0.0, prob.zbar_lo)

        # per-user indicator budget sum_j zbar_ij = N - 1 over free coords
        eq_rows = []
        eq_rhs = []
        for i in range(n):
            cols = self.z_index[i][self.z_index[i] >= 0]
            if len(cols) > 0:
                row = np.zeros(self.dim)
                row[cols] = 1.0
                eq_rows.append(row)
                eq_rhs.append((N - 1.0) - np.sum(self.z_base[i][self.z_index[i] < 0]))
        if eq_rows:
            self.eq_matrix = np.vstack(eq_rows)
            self.eq_rhs = np.asarray(eq_rhs)
        else:
            self.eq_matrix = None
            self.eq_rhs = None

        self._build_affine_rows()
        self._build_bandwidth_rows()
        self._build_throughput_rows()

        self.n_rows = self.n_affine + self.n_bw + self.n_thr
        self._cache_key = None
        self._cache = None

    # -- construction ------------------------------------------------------

    def _build_affine_rows(self):
        # every variable carries exactly one upper and one lower bound, so
        # the affine block is just (w - ub, lb - w)
        ub = np.empty(self.dim)
        lb = np.empty(self.dim)
        N = self.n_bs
        ub[:N] = self.q_cap
        lb[:N] = self.q_floor
        for i, j in self._free_u:
            c = self.u_index[i, j]
            ub[c] = self.u_cap
            lb[c] = self.u_floor
        for i, j in self._free_z:
            c = self.z_index[i, j]
            ub[c] = self.prob.zbar_hi[i, j]
            lb[c] = self.prob.zbar_lo[i, j]
        self.box_ub = ub
        self.box_lb = lb
        self.n_affine = 2 * self.dim

    def _build_bandwidth_rows(self):
        # one row per BS with at least one free fraction; columns whose
        # fractions are all frozen reduce to constants checked up front
        budget = 1.0 - self.prob.delta2
        self.bw_bs = []
        self.infeasible_reason = None
        frozen_e = np.where(self.u_free_mask, 0.0, np.exp(self.u_base))
        self.bw_const = frozen_e.sum(axis=0) - budget
        for j in range(self.n_bs):
            if np.any(self.u_free_mask[:, j]):
                self.bw_bs.append(j)
            elif self.bw_const[j] >= 0.0:
                self.infeasible_reason = (
                    f"fixed fractions exceed the bandwidth budget on BS {j}"
                )
        self.bw_bs = np.asarray(self.bw_bs, dtype=int)
        self.n_bw = len(self.bw_bs)
        # per-row free-fraction positions, precomputed for the Hessian blocks
        self.bw_rows = [np.where(self.u_free_mask[:, j])[0] for j in self.bw_bs]
        self.bw_cols = [self.u_index[rows, j] for rows, j in zip(self.bw_rows, self.bw_bs)]
        self.bw_ix = [np.ix_(cols, cols) for cols in self.bw_cols]

    def _build_throughput_rows(self):
        s = self.prob.scenario
        n, N = self.n_users, self.n_bs
        rhs_all = throughput_rhs(s, self.prob.ppf)
        pi, pj = [], []
        drop_bound_ok = 0
        # worst-case LHS given the variable boxes, used to drop rows whose
        # indicator is pinned at 1 (provably inactive under big-M)
        recv_cap = self.g @ s.p_max_rb_w
        for i in range(n):
            if s.demand_bps[i] <= 0.0:
                continue
            for j in range(N):
                fixed_z = not self.z_free_mask[i, j]
                if fixed_z and self.prob.zbar_lo[i, j] >= 1.0:
                    i_max = np.log(
                        (self.noise + recv_cap[i] - self.g[i, j] * s.p_max_rb_w[j])
                        / self.g[i, j]
                    )
                    if self.u_free_mask[i, j]:
                        u_min = self.u_floor
                    else:
                        u_min = self.u_base[i, j]
                    worst = (
                        i_max
                        - self.q_floor[j]
                        - u_min * self.inv_b
                        - self.big_m
                        - rhs_all[i, j]
                    )
                    if np.max(worst) <= -1.0:
                        drop_bound_ok += 1
                        continue
                pi.append(i)
                pj.append(j)
        self.pair_i = np.asarray(pi, dtype=int)
        self.pair_j = np.asarray(pj, dtype=int)
        P = len(pi)
        self.n_pairs = P
        self.pair_rhs = rhs_all[self.pair_i, self.pair_j, :] if P else np.zeros((0, self.prob.ppf.m))
        self.pair_ucol = self.u_index[self.pair_i, self.pair_j] if P else np.zeros(0, dtype=int)
        self.pair_zcol = self.z_index[self.pair_i, self.pair_j] if P else np.zeros(0, dtype=int)
        self.pair_g = self.g[self.pair_i, self.pair_j] if P else np.zeros(0)
        self.pair_log_g = np.log(self.pair_g) if P else np.zeros(0)
        self.n_thr = P * self.prob.ppf.m

    @property
    def n_constraints(self) -> int:
        return self.n_rows

    # -- evaluation --------------------------------------------------------

    def split(self, w):
        q = w[: self.n_bs]
        u_full = self.u_base.copy()
        if len(self._free_u):
            u_full[self._free_u[:, 0], self._free_u[:, 1]] = w[
                self.u_index[self._free_u[:, 0], self._free_u[:, 1]]
            ]
        z_full = self.z_base.copy()
        if len(self._free_z):
            z_full[self._free_z[:, 0], self._free_z[:, 1]] = w[
                self.z_index[self._free_z[:, 0], self._free_z[:, 1]]
            ]
        return q, u_full, z_full

    def _point(self, w):
        key = w.tobytes()
        if self._cache_key == key:
            return self._cache
        q, u_full, z_full = self.split(w)
        E = np.exp(q)
        Eu = np.exp(u_full)
        if self.n_pairs:
            recv = self.g @ E
            den = self.noise + recv[self.pair_i] - self.pair_g * E[self.pair_j]
            lse = np.log(den) - self.pair_log_g
        else:
            den = np.zeros(0)
            lse = np.zeros(0)
        cache = dict(q=q, u=u_full, z=z_full, E=E, Eu=Eu, den=den, lse=lse)
        self._cache_key = key
        self._cache = cache
        return cache

    def constraint_values(self, w):
        c = self._point(w)
        vals = np.empty(self.n_rows)
        d = self.dim
        vals[:d] = w - self.box_ub
        vals[d : 2 * d] = self.box_lb - w
        if self.n_bw:
            vals[self.n_affine : self.n_affine + self.n_bw] = (
                c["Eu"][:, self.bw_bs].sum(axis=0) + self.bw_const[self.bw_bs]
            )
        if self.n_pairs:
            u_p = c["u"][self.pair_i, self.pair_j]
            z_p = c["z"][self.pair_i, self.pair_j]
            base = c["lse"] - c["q"][self.pair_j] - self.big_m * z_p
            thr = (
                base[:, None]
                - u_p[:, None] * self.inv_b[None, :]
                - self.pair_rhs
            )
            vals[self.n_affine + self.n_bw :] = thr.ravel()
        return vals

    def _pair_softmax(self, c):
        """Interference softmax weights W[p, k] = g_ik E_k / den_p, W[p, j_p] = 0."""
        W = self.g[self.pair_i] * c["E"][None, :] / c["den"][:, None]
        W[np.arange(self.n_pairs), self.pair_j] = 0.0
        return W

    def _weighted_grad(self, w, cvec):
        """J(w)^T cvec over all rows."""
        c = self._point(w)
        d = self.dim
        g = cvec[:d] - cvec[d : 2 * d]
        if self.n_bw:
            cb = cvec[self.n_affine : self.n_affine + self.n_bw]
            for r, j in enumerate(self.bw_bs):
                g[self.bw_cols[r]] += cb[r] * c["Eu"][self.bw_rows[r], j]
        if self.n_pairs:
            ct = cvec[self.n_affine + self.n_bw :].reshape(self.n_pairs, -1)
            c1 = ct.sum(axis=1)
            c1b = ct @ self.inv_b
            W = self._pair_softmax(c)
            g[: self.n_bs] += W.T @ c1
            np.add.at(g, self.pair_j, -c1)
            fu = self.pair_ucol >= 0
            g[self.pair_ucol[fu]] -= c1b[fu]  # pair u columns are unique
            fz = self.pair_zcol >= 0
            g[self.pair_zcol[fz]] -= self.big_m * c1[fz]
        return g

    def jac_weighted_sum(self, w, cvec):
        return self._weighted_grad(w, cvec)

    def barrier_gh(self, w, inv_s):
        c = self._point(w)
        N = self.n_bs
        d = self.dim
        g = self._weighted_grad(w, inv_s)
        H = np.zeros((d, d))
        didx = np.arange(d)
        H[didx, didx] = inv_s[:d] ** 2 + inv_s[d : 2 * d] ** 2

        if self.n_bw:
            ib = inv_s[self.n_affine : self.n_affine + self.n_bw]
            for r, j in enumerate(self.bw_bs):
                v = c["Eu"][self.bw_rows[r], j]
                cols = self.bw_cols[r]
                H[self.bw_ix[r]] += (ib[r] ** 2) * np.outer(v, v)
                H[cols, cols] += ib[r] * v

        if self.n_pairs:
            it = inv_s[self.n_affine + self.n_bw :].reshape(self.n_pairs, -1)
            o = it**2
            O0 = o.sum(axis=1)
            O1 = o @ self.inv_b
            O2 = o @ self.inv_b**2
            c1 = it.sum(axis=1)

            W = self._pair_softmax(c)
            Y = W.copy()
            Y[np.arange(self.n_pairs), self.pair_j] -= 1.0

            Hqq = (Y * O0[:, None]).T @ Y
            Hqq -= (W * c1[:, None]).T @ W
            Hqq[np.arange(N), np.arange(N)] += W.T @ c1
            H[:N, :N] += Hqq

            # pair u/z columns are unique, so plain fancy indexing is safe
            fu = self.pair_ucol >= 0
            if np.any(fu):
                cols = self.pair_ucol[fu]
                block = Y[fu].T * (-O1[fu])
                H[:N, cols] += block
                H[cols, :N] += block.T
                H[cols, cols] += O2[fu]
            fz = self.pair_zcol >= 0
            if np.any(fz):
                cols = self.pair_zcol[fz]
                block = Y[fz].T * (-self.big_m * O0[fz])
                H[:N, cols] += block
                H[cols, :N] += block.T
                H[cols, cols] += self.big_m**2 * O0[fz]
            both = fu & fz
            if np.any(both):
                cu = self.pair_ucol[both]
                cz = self.pair_zcol[both]
                v = self.big_m * O1[both]
                H[cu, cz] += v
                H[cz, cu] += v
        return g, H

    # -- objective ---------------------------------------------------------

    def objective(self, w):
        return float(np.sum(np.exp(w[: self.n_bs])))

    def objective_grad(self, w):
        g = np.zeros(self.dim)
        g[: self.n_bs] = np.exp(w[: self.n_bs])
        return g

    def objective_hess(self, w):
        # cached buffer: only the q diagonal is ever written
        buf = getattr(self, "_h0_buf", None)
        if buf is None or buf.shape[0] != self.dim:
            buf = np.zeros((self.dim, self.dim))
            self._h0_buf = buf
        idx = np.arange(self.n_bs)
        buf[idx, idx] = np.exp(w[: self.n_bs])
        return buf

    def objective_lower_bound(self) -> float:
        """Interference-free power bound: every kept throughput row needs at
        least this much power even with all bandwidth and zero interference."""
        if self.n_pairs == 0:
            return self.n_bs * np.exp(self.q_floor[0])
        best_rhs = np.min(self.pair_rhs, axis=1)
        zslack = np.where(
            self.pair_zcol >= 0,
            self.big_m * self.prob.zbar_hi[self.pair_i, self.pair_j],
            self.big_m * self.z_base[self.pair_i, self.pair_j],
        )
        q_lb = np.log(self.noise) - self.pair_log_g - best_rhs - zslack
        per_bs = self.q_floor.copy()
        np.maximum.at(per_bs, self.pair_j, q_lb)
        per_bs = np.minimum(per_bs, self.q_cap)
        return float(np.sum(np.exp(per_bs)))

    # -- starting points ---------------------------------------------------

    def center_point(self) -> np.ndarray:
        """Strictly inside every box and the bandwidth budget; throughput
        rows may be violated (phase-I fixes that)."""
        w = np.zeros(self.dim)
        w[: self.n_bs] = 0.5 * (self.q_floor + self.q_cap)
        budget = 1.0 - self.prob.delta2
        counts = self.u_free_mask.sum(axis=0)
        for i, j in self._free_u:
            share = 0.5 * budget / max(counts[j], 1)
            w[self.u_index[i, j]] = np.clip(
                np.log(share), self.u_floor + 1e-6, self.u_cap - 1e-6
            )
        for i in range(self.n_users):
            cols = self.z_index[i][self.z_index[i] >= 0]
            if len(cols) == 0:
                continue
            # uniform point satisfying the budget row exactly
            total = (self.n_bs - 1.0) - np.sum(self.z_base[i][self.z_index[i] < 0])
            w[cols] = total / len(cols)
        return w

    def analytic_point(self) -> Optional[np.ndarray]:
        """Power-control fixed point at a heuristic bandwidth split.

        Iterates the required-power map upward from near-zero power; the map
        is a standard interference function, so from below it climbs to the
        minimal fixed point when one exists.  Returns a strictly feasible
        point or None (caps crossed, no convergence, or margin too thin).
        """
        w = self.center_point()
        if self.n_pairs == 0:
            vals = self.constraint_values(w)
            return w if np.max(vals, initial=-1.0) < -1e-9 else None

        _, u_full, z_full = self.split(w)
        u_p = u_full[self.pair_i, self.pair_j]
        z_p = z_full[self.pair_i, self.pair_j]
        # effective per-pair bound on lse - q_j
        T = np.min(
            self.pair_rhs + u_p[:, None] * self.inv_b[None, :], axis=1
        ) + self.big_m * z_p
        margin = 1e-3
        q = self.q_floor + 1.0
        converged = False
        for _ in range(200):
            E = np.exp(q)
            recv = self.g @ E
            den = self.noise + recv[self.pair_i] - self.pair_g * E[self.pair_j]
            needed = np.log(den) - self.pair_log_g - T
            q_new = self.q_floor + 1.0
            np.maximum.at(q_new, self.pair_j, needed + margin)
            if np.any(q_new > self.q_cap - 0.5 * margin):
                return None
            if np.max(np.abs(q_new - q)) < 1e-10:
                q = q_new
                converged = True
                break
            q = q_new
        if not converged:
            return None
        w[: self.n_bs] = q
        vals = self.constraint_values(w)
        if np.max(vals, initial=-1.0) < -1e-9:
            return w
        return None


def _nonlinear_mask(prog: _GpProgram) -> np.ndarray:
    mask = np.zeros(prog.n_rows, dtype=bool)
    mask[prog.n_affine :] = True
    return mask


def _run_phase1(prog: _GpProgram, opts: SolverOptions) -> Phase1Result:
    if prog.infeasible_reason is not None:
        return Phase1Result(feasible=False, s_star=np.inf, gap=0.0, w=None)
    w0 = prog.center_point()
    mask = _nonlinear_mask(prog)
    if not np.any(mask):
        vals = prog.constraint_values(w0)
        return Phase1Result(
            feasible=bool(np.max(vals, initial=-1.0) < 0.0),
            s_star=float(np.max(vals, initial=-1.0)),
            gap=0.0,
            w=w0,
        )
    lifted = phase1_lift(prog, mask)
    vals0 = prog.constraint_values(w0)
    s0 = max(float(np.max(vals0[mask])), 0.0) + 1.0
    start = np.concatenate([w0, [s0]])
    bar = BarrierOptions(
        tol_gap=opts.phase1_tol,
        mu0=opts.mu0,
        mu_factor=opts.mu_factor,
        newton_tol=opts.newton_tol,
        max_newton_per_stage=opts.max_newton_per_stage,
        max_stages=opts.max_stages,
        stop_below=-opts.phase1_margin,
    )
    res = minimize_barrier(lifted, start, bar)
    s_star = res.objective
    feasible = s_star < 0.0
    return Phase1Result(
        feasible=feasible,
        s_star=float(s_star),
        gap=res.gap,
        w=res.w[:-1] if feasible else None,
        newton_iterations=res.newton_iterations,
    )


def full_residual(prob: GpProblem, q: np.ndarray, u_full: np.ndarray, z_full: np.ndarray) -> float:
    """Worst constraint value over the complete row set (dropped rows included)."""
    s = prob.scenario
    worst = -np.inf
    worst = max(worst, float(np.max(q - np.log(s.p_max_rb_w))))
    worst = max(worst, float(np.max(u_full, initial=-np.inf)))
    ex = np.exp(u_full)
    worst = max(worst, float(np.max(ex.sum(axis=0) - (1.0 - prob.delta2))))
    rhs = throughput_rhs(s, prob.ppf)
    E = np.exp(q)
    recv = s.gains @ E
    den = s.noise_w + recv[:, None] - s.gains * E[None, :]
    lse = np.log(den) - np.log(s.gains)
    with np.errstate(invalid="ignore"):
        lhs = (
            (lse - q[None, :] - prob.big_m * z_full)[:, :, None]
            - u_full[:, :, None] / prob.ppf.b[None, None, :]
            - rhs
        )
    finite = lhs[np.isfinite(rhs)]
    if finite.size:
        worst = max(worst, float(np.max(finite)))
    return worst


def _solve_internal(prob: GpProblem, opts: SolverOptions):
    """Full pipeline; returns (report, q, u_full, z_full) with arrays None on failure."""
    t0 = time.perf_counter()
    prog = _GpProgram(prob, opts)
    newton_total = 0

    if prog.infeasible_reason is not None:
        rep = SolveReport(
            status="infeasible",
            objective_w=np.nan,
            duality_gap_w=np.nan,
            newton_iterations=0,
            barrier_stages=0,
            wall_time_s=time.perf_counter() - t0,
        )
        return rep, None, None, None, prog

    w0 = prog.analytic_point() if opts.analytic_start else None
    warm = w0 is not None
    if w0 is None:
        p1 = _run_phase1(prog, opts)
        newton_total += p1.newton_iterations
        if not p1.feasible:
            rep = SolveReport(
                status="infeasible",
                objective_w=np.nan,
                duality_gap_w=np.nan,
                newton_iterations=newton_total,
                barrier_stages=0,
                wall_time_s=time.perf_counter() - t0,
            )
            return rep, None, None, None, prog
        w0 = p1.w

    mu0 = opts.mu0
    if warm and opts.adaptive_mu0:
        # valid overestimate of the duality gap at the warm start
        est_gap = max(
            prog.objective(w0) - prog.objective_lower_bound(), 10.0 * opts.tol_gap
        )
        mu0 = min(opts.mu0, est_gap / prog.n_constraints)
    res = minimize_barrier(prog, w0, opts.barrier(mu0=mu0))
    newton_total += res.newton_iterations
    q, u_full, z_full = prog.split(res.w)
    residual = full_residual(prob, q, u_full, z_full)
    status = res.status
    if status == "optimal" and not (residual <= opts.tol_feas and res.gap <= opts.tol_gap):
        status = "numerical"
    rep = SolveReport(
        status=status,
        objective_w=res.objective,
        duality_gap_w=res.gap,
        newton_iterations=newton_total,
        barrier_stages=res.stages,
        wall_time_s=time.perf_counter() - t0,
        feas_residual=residual,
    )
    return rep, q, u_full, z_full, prog


def _allocation_from(prob: GpProblem, q, u_full) -> Allocation:
    x = np.exp(u_full)
    if prob.assignment is not None:
        mask = np.ones_like(x, dtype=bool)
        mask[np.arange(prob.scenario.n_users), prob.assignment.bs_of] = False
        x = np.where(mask, 0.0, x)
    return Allocation(x=x, p=np.exp(q), u=u_full, q=q)


def solve_gp(prob: GpProblem, opts: Optional[SolverOptions] = None):
    """Solve the convex program; returns (Allocation, SolveReport).

    status "optimal" certifies: residuals within tol_feas, duality gap within
    tol_gap.  Infeasibility is certified through phase-I.
    """
    opts = opts or SolverOptions()
    rep, q, u_full, z_full, _ = _solve_internal(prob, opts)
    if q is None:
        empty = Allocation(
            x=np.zeros((prob.scenario.n_users, prob.scenario.n_bs)),
            p=np.zeros(prob.scenario.n_bs),
        )
        return empty, rep
    return _allocation_from(prob, q, u_full), rep


def solve_relaxation(prob: GpProblem, opts: Optional[SolverOptions] = None):
    """Like solve_gp but also returns the relaxed indicator matrix."""
    opts = opts or SolverOptions()
    rep, q, u_full, z_full, _ = _solve_internal(prob, opts)
    if q is None:
        return None, None, rep
    return _allocation_from(prob, q, u_full), z_full, rep


def phase1(prob: GpProblem, opts: Optional[SolverOptions] = None) -> Phase1Result:
    """Feasibility phase: minimize the common slack added to every nonlinear
    constraint; s* < 0 certifies a strictly feasible interior point."""
    opts = opts or SolverOptions()
    prog = _GpProgram(prob, opts)
    return _run_phase1(prog, opts)
