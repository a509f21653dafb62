"""Integer resource-block assignment from continuous bandwidth fractions.

The continuous solve runs on inflated demands (1 + delta1) t and a reduced
bandwidth budget 1 - delta2; each user's fractional RB count is then floored
when the floored rate still covers the original demand and ceiled otherwise.
The slack bought by (delta1, delta2) is what makes the per-BS RB budget hold
after ceiling.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Allocation, Assignment, Scenario, sinr_matrix
from .ppf import PpfApprox
from .gpsolve import GpProblem, SolveReport, SolverOptions, solve_gp
from .migp import MigpOptions, solve_migp

__all__ = ["RbPlan", "RbCapacityError", "rb_assign"]


@dataclass(frozen=True)
class RbPlan:
    """Integer RBs per user plus per-BS totals at the solved powers."""

    rho: np.ndarray            # (n,) integer RB counts
    serving: np.ndarray        # (n,) serving BS per user
    rb_per_bs: np.ndarray      # (N,) sum of rho per BS
    power_per_rb_w: np.ndarray  # (N,)
    total_power_w: np.ndarray   # (N,) power_per_rb * rb_per_bs

    def to_dict(self) -> dict:
        return {
            "rho": self.rho.tolist(),
            "serving": self.serving.tolist(),
            "rb_per_bs": self.rb_per_bs.tolist(),
            "power_per_rb_w": self.power_per_rb_w.tolist(),
            "total_power_w": self.total_power_w.tolist(),
        }


class RbCapacityError(RuntimeError):
    """Integer totals exceed a BS budget; retry with larger delta1/delta2."""


def rb_assign(
    s: Scenario,
    delta1: float = 0.05,
    delta2: float = 0.16,
    *,
    ppf: PpfApprox,
    assignment: Optional[Assignment] = None,
    migp_opts: Optional[MigpOptions] = None,
    solver: Optional[SolverOptions] = None,
    auto_escalate: bool = False,
    max_escalations: int = 5,
    escalation_factor: float = 1.5,
):
    """Solve with safety margins and convert fractions to integer RB counts.

    Returns (RbPlan, Assignment, Allocation, SolveReport).  When
    ``assignment`` is given the continuous solve keeps it fixed; otherwise
    the full joint problem is solved.  On RB budget overflow either raises
    :class:`RbCapacityError` or, with auto_escalate, retries with both
    margins scaled up (at most ``max_escalations`` times).
    """
    if delta1 < 0:
        raise ValueError("delta1 must be >= 0")
    if not (0 <= delta2 < 1):
        raise ValueError("delta2 must lie in [0, 1)")
    solver = solver or SolverOptions()

    d1, d2 = delta1, delta2
    last_err: Optional[RbCapacityError] = None
    for attempt in range(max_escalations + 1):
        try:
            return _rb_assign_once(
                s, d1, d2, ppf=ppf, assignment=assignment,
                migp_opts=migp_opts, solver=solver,
            )
        except RbCapacityError as err:
            last_err = err
            if not auto_escalate or attempt == max_escalations:
                raise
            d1 = d1 * escalation_factor if d1 > 0 else 0.01
            d2 = min(d2 * escalation_factor if d2 > 0 else 0.01, 0.95)
    raise last_err  # pragma: no cover


def _rb_assign_once(s, delta1, delta2, *, ppf, assignment, migp_opts, solver):
    inflated = dataclasses.replace(s, demand_bps=s.demand_bps * (1.0 + delta1))

    if assignment is not None:
        prob = GpProblem.for_assignment(
            inflated, ppf, assignment, delta2=delta2,
            fraction_floor=solver.fraction_floor,
            big_m=(migp_opts.big_m if migp_opts else 1e6),
        )
        alloc, rep = solve_gp(prob, solver)
        chosen = assignment
    else:
        mo = migp_opts or MigpOptions()
        mo = dataclasses.replace(mo, delta2=delta2, solver=solver)
        chosen, alloc, rep = solve_migp(inflated, ppf, mo)

    if rep.status not in ("optimal", "budget"):
        return None, chosen, alloc, rep

    n = s.n_users
    idx = np.arange(n)
    serving = np.argmax(alloc.x, axis=1)
    frac_rb = alloc.x[idx, serving] * s.rb_count[serving]  # x * B / B0
    gam = sinr_matrix(s, alloc.p)[idx, serving]
    b0 = s.rb_bandwidth_hz[serving]
    se = np.log2(1.0 + gam)

    floored = np.floor(frac_rb)
    keep_floor = floored * b0 * se >= s.demand_bps
    rho = np.where(keep_floor, floored, np.ceil(frac_rb)).astype(int)

    rb_per_bs = np.bincount(serving, weights=rho, minlength=s.n_bs).astype(int)
    over = rb_per_bs > s.rb_count.astype(int)
    if np.any(over):
        bad = int(np.argwhere(over)[0])
        raise RbCapacityError(
            f"BS {bad} needs {rb_per_bs[bad]} RBs but only "
            f"{int(s.rb_count[bad])} exist; increase delta1 ({delta1}) and/or "
            f"delta2 ({delta2})"
        )

    plan = RbPlan(
        rho=rho,
        serving=serving,
        rb_per_bs=rb_per_bs,
        power_per_rb_w=np.asarray(alloc.p),
        total_power_w=np.asarray(alloc.p) * rb_per_bs,
    )
    return plan, chosen, alloc, rep
