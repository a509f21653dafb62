"""Branch-and-bound over user association for the mixed-integer program.

Association indicators are relaxed to [0, 1] boxes (big-M keeps the
relaxation convex); branching is N-way on the most fractional user.  Exact
mode explores until the tree is closed, which on enumerable instances
matches exhaustive enumeration of assignments.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import Allocation, Assignment, Scenario
from .ppf import PpfApprox
from .gpsolve import (
    GpProblem,
    SolveReport,
    SolverOptions,
    solve_gp,
    solve_relaxation,
    throughput_rhs,
)

__all__ = [
    "BigMConstraints",
    "BnbNode",
    "MigpOptions",
    "bigm_transform",
    "solve_migp",
    "enumerate_oracle",
]

_REL_TIE = 1e-9  # relative window treated as an objective tie


@dataclass(frozen=True)
class BigMConstraints:
    """Per-(user, BS, piece) right-hand sides plus indicator state.

    The throughput restriction reads lhs <= rhs[i, j, l] + big_m * zbar[i, j];
    a pinned zbar of 1 adds big_m to the bound, deactivating the row.
    """

    rhs: np.ndarray       # (n, N, m); +inf rows for zero demand
    zbar_lo: np.ndarray   # (n, N)
    zbar_hi: np.ndarray   # (n, N)
    big_m: float

    def bound(self, zbar: np.ndarray) -> np.ndarray:
        """Effective bound rhs + big_m * zbar for given indicator values."""
        return self.rhs + self.big_m * np.asarray(zbar, dtype=float)[:, :, None]


def bigm_transform(
    s: Scenario,
    ppf: PpfApprox,
    z,
    big_m: float = 1e6,
) -> BigMConstraints:
    """Build the indicator-relaxed constraint data for an assignment or box.

    ``z`` is an :class:`Assignment` (pins zbar to its complement) or a
    (lo, hi) pair of (n, N) arrays.  Rejects big_m values that are not
    safely larger than every finite |rhs|.
    """
    rhs = throughput_rhs(s, ppf)
    finite = rhs[np.isfinite(rhs)]
    if finite.size and big_m <= np.max(np.abs(finite)):
        raise ValueError(
            f"big_m={big_m:g} too small: largest |rhs| is {np.max(np.abs(finite)):.3g}"
        )
    if isinstance(z, Assignment):
        zbar = 1.0 - z.onehot()
        lo = hi = zbar
    else:
        lo, hi = (np.asarray(a, dtype=float) for a in z)
        if lo.shape != (s.n_users, s.n_bs) or hi.shape != lo.shape:
            raise ValueError("zbar bounds must be (n_users, n_bs)")
        if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
            raise ValueError("need 0 <= lo <= hi <= 1")
        fixed = lo == hi
        row_fixed_sum = np.where(fixed, lo, 0.0).sum(axis=1)
        free_counts = (~fixed).sum(axis=1)
        # each row must be able to reach sum N - 1
        reachable_lo = row_fixed_sum
        reachable_hi = row_fixed_sum + free_counts
        if np.any(reachable_hi < s.n_bs - 1) or np.any(reachable_lo > s.n_bs - 1):
            raise ValueError("indicator boxes cannot satisfy the per-user budget")
    return BigMConstraints(rhs=rhs, zbar_lo=np.asarray(lo), zbar_hi=np.asarray(hi), big_m=big_m)


@dataclass(order=True)
class _HeapItem:
    bound: float
    index: int
    node: "BnbNode" = field(compare=False)


@dataclass
class BnbNode:
    """Search node: per-user domain (decided BS or candidate set) plus the
    best known lower bound inherited from the parent relaxation."""

    domains: list            # per user: int or tuple of candidate BS indices
    bound: float
    depth: int

    def decided(self) -> bool:
        return all(np.isscalar(d) for d in self.domains)

    def assignment(self, n_bs: int) -> Assignment:
        return Assignment(np.asarray([int(d) for d in self.domains]), n_bs)


@dataclass
class MigpOptions:
    node_budget: int = 2000
    exact: bool = True             # explore until the tree is closed
    top_k: Optional[int] = None    # restrict candidates to k best gains
    big_m: float = 1e6
    delta2: float = 0.0
    seed_incumbent: bool = True    # start from the max-gain association
    solver: SolverOptions = field(default_factory=SolverOptions)
    integrality_tol: float = 1e-6


def _candidates(s: Scenario, top_k: Optional[int]) -> list[tuple[int, ...]]:
    n, N = s.n_users, s.n_bs
    out = []
    for i in range(n):
        if top_k is None or top_k >= N:
            out.append(tuple(range(N)))
        else:
            order = np.argsort(-s.gains[i], kind="stable")[:top_k]
            out.append(tuple(sorted(int(j) for j in order)))
    return out


def _solve_leaf(s, ppf, assignment, o: MigpOptions):
    prob = GpProblem.for_assignment(
        s, ppf, assignment, big_m=o.big_m, delta2=o.delta2,
        fraction_floor=o.solver.fraction_floor,
    )
    return solve_gp(prob, o.solver)


def _better(obj, inc_obj, assignment, inc_assignment) -> bool:
    """Strict improvement, with a lexicographic tie-break inside the window."""
    if inc_obj is None:
        return True
    scale = max(abs(inc_obj), 1e-300)
    if obj < inc_obj - _REL_TIE * scale:
        return True
    if obj <= inc_obj + _REL_TIE * scale and inc_assignment is not None:
        return tuple(assignment.bs_of) < tuple(inc_assignment.bs_of)
    return False


def solve_migp(
    s: Scenario,
    ppf: PpfApprox,
    opts: Optional[MigpOptions] = None,
):
    """Joint association/bandwidth/power optimization.

    Returns (Assignment, Allocation, SolveReport).  Status is "optimal" when
    the tree closed, "budget" when the node budget ran out (best incumbent is
    returned), "infeasible" when no assignment admits a feasible program.
    """
    o = opts or MigpOptions()
    t0 = time.perf_counter()
    n, N = s.n_users, s.n_bs
    cand = _candidates(s, o.top_k)

    inc_obj = None
    inc_assignment = None
    inc_alloc = None
    inc_rep = None
    newton_total = 0
    stages_total = 0

    def consider(assignment: Assignment):
        nonlocal inc_obj, inc_assignment, inc_alloc, inc_rep, newton_total, stages_total
        alloc, rep = _solve_leaf(s, ppf, assignment, o)
        newton_total += rep.newton_iterations
        stages_total += rep.barrier_stages
        if rep.status == "optimal" and _better(rep.objective_w, inc_obj, assignment, inc_assignment):
            inc_obj = rep.objective_w
            inc_assignment = assignment
            inc_alloc = alloc
            inc_rep = rep
        return rep

    if o.seed_incumbent:
        mcg = np.asarray(
            [c[int(np.argmax(s.gains[i, list(c)]))] for i, c in enumerate(cand)]
        )
        consider(Assignment(mcg, N))

    root = BnbNode(domains=[c if len(c) > 1 else c[0] for c in cand], bound=-np.inf, depth=0)
    heap: list[_HeapItem] = []
    counter = 0
    heapq.heappush(heap, _HeapItem(root.bound, counter, root))
    nodes = 0
    exhausted = False

    while heap:
        if nodes >= o.node_budget:
            exhausted = True
            break
        item = heapq.heappop(heap)
        node = item.node
        if inc_obj is not None and node.bound >= inc_obj - _REL_TIE * abs(inc_obj):
            continue  # cannot improve on the incumbent
        nodes += 1

        if node.decided():
            consider(node.assignment(N))
            continue

        prob = GpProblem.relaxed(
            s, ppf, node.domains, big_m=o.big_m, delta2=o.delta2,
            fraction_floor=o.solver.fraction_floor,
        )
        alloc, zbar, rep = solve_relaxation(prob, o.solver)
        newton_total += rep.newton_iterations
        stages_total += rep.barrier_stages
        if rep.status == "infeasible":
            continue
        if rep.status not in ("optimal",):
            # unresolved relaxation: keep the parent bound and branch blindly
            zbar = None
            bound = node.bound
        else:
            bound = max(node.bound, rep.objective_w - rep.duality_gap_w - 1e-12)
            if inc_obj is not None and bound >= inc_obj - _REL_TIE * abs(inc_obj):
                continue

        # integral relaxation closes the node
        if zbar is not None:
            frac = np.minimum(zbar, 1.0 - zbar)
            undecided = [i for i, d in enumerate(node.domains) if not np.isscalar(d)]
            scores = {i: float(np.max(frac[i, list(node.domains[i])])) for i in undecided}
            if all(v <= o.integrality_tol for v in scores.values()):
                chosen = []
                for i, d in enumerate(node.domains):
                    if np.isscalar(d):
                        chosen.append(int(d))
                    else:
                        cols = list(d)
                        chosen.append(int(cols[int(np.argmin(zbar[i, cols]))]))
                consider(Assignment(np.asarray(chosen), N))
                continue
            branch_user = max(undecided, key=lambda i: (scores[i], -i))
        else:
            undecided = [i for i, d in enumerate(node.domains) if not np.isscalar(d)]
            branch_user = undecided[0]

        # children ordered by descending gain (ties to the smaller index)
        cands = list(node.domains[branch_user])
        order = sorted(cands, key=lambda j: (-s.gains[branch_user, j], j))
        for j in order:
            child_domains = list(node.domains)
            child_domains[branch_user] = int(j)
            counter += 1
            child = BnbNode(domains=child_domains, bound=bound, depth=node.depth + 1)
            heapq.heappush(heap, _HeapItem(child.bound, counter, child))

    open_bounds = [it.bound for it in heap]
    final_bound = min(open_bounds) if open_bounds else (inc_obj if inc_obj is not None else np.nan)

    wall = time.perf_counter() - t0
    if inc_obj is None:
        status = "budget" if exhausted else "infeasible"
        rep = SolveReport(
            status=status,
            objective_w=np.nan,
            duality_gap_w=np.nan,
            newton_iterations=newton_total,
            barrier_stages=stages_total,
            wall_time_s=wall,
            nodes=nodes,
            bound_w=final_bound,
        )
        empty = Allocation(x=np.zeros((n, N)), p=np.zeros(N))
        return Assignment(np.zeros(n, dtype=int), N), empty, rep

    status = "budget" if exhausted else "optimal"
    rep = SolveReport(
        status=status,
        objective_w=inc_obj,
        duality_gap_w=inc_rep.duality_gap_w,
        newton_iterations=newton_total,
        barrier_stages=stages_total,
        wall_time_s=wall,
        feas_residual=inc_rep.feas_residual,
        nodes=nodes,
        bound_w=final_bound,
    )
    return inc_assignment, inc_alloc, rep


def enumerate_oracle(
    s: Scenario,
    ppf: PpfApprox,
    opts: Optional[MigpOptions] = None,
    guard: int = 100_000,
):
    """Ground truth by exhaustive enumeration of assignments.

    Solves the fixed-association program for every assignment (lexicographic
    order; ties keep the earlier assignment) and returns
    (Assignment, objective).  Guarded against combinatorial blowup.
    """
    o = opts or MigpOptions()
    n, N = s.n_users, s.n_bs
    total = N**n
    if total > guard:
        raise ValueError(f"N^n = {total} exceeds the enumeration guard {guard}")

    best_obj = None
    best_assignment = None
    bs = np.zeros(n, dtype=int)
    while True:
        assignment = Assignment(bs.copy(), N)
        _, rep = _solve_leaf(s, ppf, assignment, o)
        if rep.status == "optimal":
            if best_obj is None or rep.objective_w < best_obj - _REL_TIE * abs(best_obj):
                best_obj = rep.objective_w
                best_assignment = assignment
        # lexicographic increment
        k = n - 1
        while k >= 0:
            bs[k] += 1
            if bs[k] < N:
                break
            bs[k] = 0
            k -= 1
        if k < 0:
            break
    if best_obj is None:
        raise ValueError("no feasible assignment")
    return best_assignment, best_obj
