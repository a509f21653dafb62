"""Physical downlink model: SINR, Shannon rate, and feasibility checking.

A network instance is a :class:`Scenario`; candidate operating points are an
:class:`Assignment` (one serving base station per user) plus an
:class:`Allocation` (bandwidth fractions and per-resource-block powers).
All functions here are pure and operate on immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "Scenario",
    "Assignment",
    "Allocation",
    "FeasibilityReport",
    "sinr",
    "rate",
    "check_feasible",
    "sinr_upper_bound",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Scenario:
    """Immutable network instance.

    gains[i, j] is the linear power gain from base station j to user i.
    ``noise_w`` is the noise power integrated over one resource block, so
    that SINR is a per-RB quantity consistent with per-RB powers.
    """

    gains: np.ndarray          # (n, N) linear power ratios
    bandwidth_hz: np.ndarray   # (N,) total bandwidth per BS
    rb_count: np.ndarray       # (N,) integer resource blocks per BS
    p_max_rb_w: np.ndarray     # (N,) max transmit power per RB
    noise_w: float             # per-RB noise power
    demand_bps: np.ndarray     # (n,) minimum throughput per user
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = _readonly(np.atleast_2d(self.gains))
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "bandwidth_hz", _readonly(self.bandwidth_hz))
        object.__setattr__(self, "rb_count", _readonly(self.rb_count))
        object.__setattr__(self, "p_max_rb_w", _readonly(self.p_max_rb_w))
        object.__setattr__(self, "demand_bps", _readonly(self.demand_bps))
        n, nbs = g.shape
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("gains must be finite and strictly positive")
        if self.noise_w <= 0:
            raise ValueError("noise_w must be positive")
        for name in ("bandwidth_hz", "rb_count", "p_max_rb_w", "demand_bps"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        if self.bandwidth_hz.shape != (nbs,):
            raise ValueError("bandwidth_hz shape mismatch")
        if self.rb_count.shape != (nbs,):
            raise ValueError("rb_count shape mismatch")
        if self.p_max_rb_w.shape != (nbs,):
            raise ValueError("p_max_rb_w shape mismatch")
        if self.demand_bps.shape != (n,):
            raise ValueError("demand_bps shape mismatch")
        if np.any(self.bandwidth_hz <= 0):
            raise ValueError("bandwidth_hz must be positive")
        if np.any(self.p_max_rb_w <= 0):
            raise ValueError("p_max_rb_w must be positive")
        if np.any(self.demand_bps < 0):
            raise ValueError("demand_bps must be nonnegative")
        if np.any(self.rb_count < 1) or np.any(self.rb_count != np.round(self.rb_count)):
            raise ValueError("rb_count must be integers >= 1")

    @property
    def n_users(self) -> int:
        return self.gains.shape[0]

    @property
    def n_bs(self) -> int:
        return self.gains.shape[1]

    @property
    def rb_bandwidth_hz(self) -> np.ndarray:
        """Per-RB bandwidth, bandwidth_hz / rb_count."""
        return self.bandwidth_hz / self.rb_count


@dataclass(frozen=True)
class Assignment:
    """Serving base station index for each user (exactly one per user)."""

    bs_of: np.ndarray  # (n,) ints in [0, N)
    n_bs: int

    def __post_init__(self):
        bs = np.asarray(self.bs_of, dtype=int)
        bs.setflags(write=False)
        object.__setattr__(self, "bs_of", bs)
        if bs.ndim != 1:
            raise ValueError("bs_of must be 1-d")
        if np.any(bs < 0) or np.any(bs >= self.n_bs):
            raise ValueError("bs_of entries must lie in [0, n_bs)")

    def onehot(self) -> np.ndarray:
        """Association matrix z with z[i, bs_of[i]] = 1."""
        z = np.zeros((len(self.bs_of), self.n_bs))
        z[np.arange(len(self.bs_of)), self.bs_of] = 1.0
        return z


@dataclass(frozen=True)
class Allocation:
    """Bandwidth fractions x[i, j] and per-RB powers p[j].

    ``u`` and ``q`` optionally carry the log-domain image (log x, log p)
    produced by the solver; entries of ``u`` where x == 0 are -inf.
    """

    x: np.ndarray          # (n, N) fractions in [0, 1]
    p: np.ndarray          # (N,) powers in W
    u: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_2d(self.x)))
        object.__setattr__(self, "p", _readonly(self.p))
        if self.u is not None:
            object.__setattr__(self, "u", _readonly(self.u))
        if self.q is not None:
            object.__setattr__(self, "q", _readonly(self.q))


def sinr(s: Scenario, p: np.ndarray, i: int, j: int) -> float:
    """Signal-to-interference-plus-noise ratio of user i served by BS j.

    p[j] * g[i,j] / (noise + sum_{k != j} p[k] * g[i,k]); the denominator is
    bounded below by the noise power, so the value is always finite.
    """
    p = np.asarray(p, dtype=float)
    num = p[j] * s.gains[i, j]
    interference = float(np.dot(p, s.gains[i])) - p[j] * s.gains[i, j]
    return num / (s.noise_w + interference)


def sinr_matrix(s: Scenario, p: np.ndarray) -> np.ndarray:
    """SINR for every (user, BS) pair at powers p; shape (n, N)."""
    p = np.asarray(p, dtype=float)
    received = s.gains * p[None, :]
    total = received.sum(axis=1, keepdims=True)
    return received / (s.noise_w + total - received)


def rate(s: Scenario, x: float, p: np.ndarray, i: int, j: int) -> float:
    """Shannon rate x * B_j * log2(1 + SINR_ij) in bit/s. Zero iff x == 0."""
    if x == 0.0:
        return 0.0
    return x * s.bandwidth_hz[j] * np.log2(1.0 + sinr(s, p, i, j))


def sinr_upper_bound(s: Scenario) -> float:
    """Largest SINR any user can see under the power caps.

    max_ij p_max[j] * g[i,j] / noise; a valid bound for any power vector
    within the caps, useful for sizing the rate approximation interval.
    """
    return float(np.max(s.p_max_rb_w[None, :] * s.gains) / s.noise_w)


@dataclass(frozen=True)
class FeasibilityReport:
    """Worst violation per constraint family; all are >= 0, 0 means clean.

    rate_violation and power_violation are relative; bandwidth_violation and
    x_violation are absolute (fractions are already dimensionless).
    """

    ok: bool
    association_violation: float
    bandwidth_violation: float
    rate_violation: float
    power_violation: float
    x_violation: float


def check_feasible(
    s: Scenario,
    a: Assignment,
    al: Allocation,
    tol: float = 1e-9,
) -> FeasibilityReport:
    """Check an (assignment, allocation) pair against the original constraints.

    Families checked: x inside [0, 1] and zero off the serving BS, per-BS
    fraction budget, per-user throughput demand, and power caps. ``tol`` is
    a relative slack applied to each family.
    """
    if a.n_bs != s.n_bs or len(a.bs_of) != s.n_users:
        raise ValueError("assignment dimensions do not match scenario")
    if al.x.shape != (s.n_users, s.n_bs) or al.p.shape != (s.n_bs,):
        raise ValueError("allocation dimensions do not match scenario")

    x, p = al.x, al.p
    idx = np.arange(s.n_users)

    serving = np.zeros_like(x, dtype=bool)
    serving[idx, a.bs_of] = True
    association_violation = float(np.max(np.abs(x[~serving]), initial=0.0))

    x_violation = float(max(np.max(-x, initial=0.0), np.max(x - 1.0, initial=0.0)))
    bandwidth_violation = float(np.max(x.sum(axis=0) - 1.0, initial=0.0))

    gam = sinr_matrix(s, p)[idx, a.bs_of]
    rates = x[idx, a.bs_of] * s.bandwidth_hz[a.bs_of] * np.log2(1.0 + gam)
    with np.errstate(divide="ignore", invalid="ignore"):
        shortfall = np.where(s.demand_bps > 0, 1.0 - rates / np.maximum(s.demand_bps, 1e-300), 0.0)
    rate_violation = float(np.max(shortfall, initial=0.0))

    power_violation = float(np.max(p / s.p_max_rb_w - 1.0, initial=0.0))
    if np.any(p < 0):
        power_violation = max(power_violation, float(np.max(-p)))

    ok = (
        association_violation <= tol
        and x_violation <= tol
        and bandwidth_violation <= tol
        and rate_violation <= tol
        and power_violation <= tol
    )
    return FeasibilityReport(
        ok=bool(ok),
        association_violation=association_violation,
        bandwidth_violation=bandwidth_violation,
        rate_violation=max(rate_violation, 0.0),
        power_violation=max(power_violation, 0.0),
        x_violation=x_violation,
    )
