"""Piecewise power-function lower approximation of log2(1 + gamma).

The spectral-efficiency curve is under-approximated on [0, gamma_max] by m
pieces of the form a * gamma**b with a > 0 and 0 < b <= 1.  Pieces 2..m are
fit in closed form so that each interpolates log2(1 + gamma) at both of its
interval endpoints; the first piece must be linear (b = 1) because a curved
power function would overestimate the curve near the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PpfApprox",
    "fit_piece",
    "build_ppf",
    "derive_knots",
    "eval_envelope",
    "nested_knot_sets",
    "min_sinr_for_target",
]

_INTERP_RTOL = 1e-10     # interpolation residual budget in double precision
_CONTACT_RTOL = 1e-2     # knot-vs-curve consistency for recovered knots


def _log2p1(gamma):
    return np.log2(1.0 + np.asarray(gamma, dtype=float))


def fit_piece(gamma_lo: float, gamma_hi: float) -> tuple[float, float]:
    """Closed-form (a, b) with a*gamma**b interpolating log2(1+gamma) at both ends.

    Requires 0 < gamma_lo < gamma_hi; the interpolation system has no
    solution when the left endpoint is 0 (the first piece is handled
    separately and must be linear).
    """
    if not (gamma_lo > 0.0):
        raise ValueError("gamma_lo must be strictly positive")
    if not (gamma_hi > gamma_lo):
        raise ValueError("gamma_hi must exceed gamma_lo")
    llo = np.log(_log2p1(gamma_lo))
    lhi = np.log(_log2p1(gamma_hi))
    b = (lhi - llo) / (np.log(gamma_hi) - np.log(gamma_lo))
    a = np.exp(lhi - b * np.log(gamma_hi))
    return float(a), float(b)


@dataclass(frozen=True)
class PpfApprox:
    """Knot sequence 0 = k_0 < k_1 < ... < k_m = gamma_max plus (a, b) per piece."""

    knots: np.ndarray  # (m+1,)
    a: np.ndarray      # (m,)
    b: np.ndarray      # (m,)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        for arr in (knots, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        m = len(a)
        if m < 1 or len(b) != m or len(knots) != m + 1:
            raise ValueError("inconsistent piece count")
        if knots[0] != 0.0:
            raise ValueError("first knot must be 0")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(a <= 0) or np.any(b <= 0) or np.any(b > 1):
            raise ValueError("coefficients must satisfy a > 0, 0 < b <= 1")
        if b[0] != 1.0:
            raise ValueError("first piece must be linear (b = 1)")
        # interpolation residuals at the knots
        vals_hi = a * knots[1:] ** b
        ref_hi = _log2p1(knots[1:])
        if np.any(np.abs(vals_hi - ref_hi) > _INTERP_RTOL * np.maximum(ref_hi, 1e-300)):
            raise ValueError("piece does not interpolate at its right knot")
        if m > 1:
            vals_lo = a[1:] * knots[1:-1] ** b[1:]
            ref_lo = _log2p1(knots[1:-1])
            if np.any(np.abs(vals_lo - ref_lo) > _INTERP_RTOL * np.maximum(ref_lo, 1e-300)):
                raise ValueError("piece does not interpolate at its left knot")

    @property
    def m(self) -> int:
        return len(self.a)

    @property
    def gamma_max(self) -> float:
        return float(self.knots[-1])

    def piece_values(self, gamma) -> np.ndarray:
        """Every piece evaluated at gamma; shape (m,) + shape(gamma)."""
        g = np.asarray(gamma, dtype=float)
        return self.a.reshape((-1,) + (1,) * g.ndim) * g[None, ...] ** self.b.reshape(
            (-1,) + (1,) * g.ndim
        )

    def to_dict(self) -> dict:
        return {
            "knots": self.knots.tolist(),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PpfApprox":
        return cls(
            knots=np.asarray(d["knots"], dtype=float),
            a=np.asarray(d["a"], dtype=float),
            b=np.asarray(d["b"], dtype=float),
        )


def build_ppf(gamma_max: float, m: int = 5, knot_rule="geometric") -> PpfApprox:
    """Build an m-piece approximation on [0, gamma_max].

    knot_rule is "geometric" (interior knots log-spaced with ratio 10 ending
    at gamma_max / 10, concentrating resolution where the curve bends),
    "uniform" (equal-length subintervals), or an explicit knot list starting
    at 0 and ending at gamma_max.
    """
    if m < 2:
        raise ValueError("need at least 2 pieces")
    if gamma_max <= 0:
        raise ValueError("gamma_max must be positive")
    if isinstance(knot_rule, str):
        if knot_rule == "geometric":
            interior = np.geomspace(gamma_max / 10.0 ** (m - 1), gamma_max / 10.0, m - 1)
        elif knot_rule == "uniform":
            interior = np.linspace(0.0, gamma_max, m + 1)[1:-1]
        else:
            raise ValueError(f"unknown knot rule {knot_rule!r}")
        knots = np.concatenate([[0.0], interior, [gamma_max]])
    else:
        knots = np.asarray(knot_rule, dtype=float)
        if len(knots) != m + 1:
            raise ValueError("explicit knot list must have m + 1 entries")
        if knots[0] != 0.0 or knots[-1] != gamma_max:
            raise ValueError("explicit knots must start at 0 and end at gamma_max")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("explicit knots must be strictly increasing")

    a = np.empty(m)
    b = np.empty(m)
    b[0] = 1.0
    a[0] = _log2p1(knots[1]) / knots[1]
    for ell in range(1, m):
        a[ell], b[ell] = fit_piece(knots[ell], knots[ell + 1])
    return PpfApprox(knots=knots, a=a, b=b)


def derive_knots(coeff) -> np.ndarray:
    """Recover interior knots from a list of (a, b) pairs.

    Adjacent power functions a1*g**b1 and a2*g**b2 with b1 > b2 cross at
    exactly one positive gamma, (a2/a1)**(1/(b1-b2)); for pieces fit on a
    common knot sequence that crossing is the shared knot.  Each recovered
    knot is verified to lie on the log2(1+gamma) curve to 1e-2 relative.
    """
    coeff = [(float(a), float(b)) for a, b in coeff]
    if len(coeff) < 2:
        raise ValueError("need at least two pieces")
    for a, b in coeff:
        if a <= 0 or not (0 < b <= 1):
            raise ValueError("coefficients must satisfy a > 0, 0 < b <= 1")
    bs = [b for _, b in coeff]
    if any(b1 <= b2 for b1, b2 in zip(bs, bs[1:])):
        raise ValueError("pieces must be ordered by strictly decreasing b")
    knots = []
    for (a1, b1), (a2, b2) in zip(coeff, coeff[1:]):
        g = (a2 / a1) ** (1.0 / (b1 - b2))
        ref = float(_log2p1(g))
        val = a1 * g ** b1
        if abs(val - ref) > _CONTACT_RTOL * ref:
            raise ValueError(
                f"crossing {g:.6g} is not a contact point with log2(1+gamma) "
                f"(relative gap {abs(val - ref) / ref:.2e})"
            )
        knots.append(g)
    knots = np.asarray(knots)
    if np.any(np.diff(knots) <= 0):
        raise ValueError("recovered knots are not increasing")
    return knots


def eval_envelope(ppf: PpfApprox, gamma):
    """Evaluate the approximation at gamma using the piece containing it.

    On [0, gamma_max] this equals the pointwise minimum over all pieces and
    never exceeds log2(1 + gamma).  Values beyond gamma_max are rejected:
    there the approximation stops being a lower bound.
    """
    g = np.asarray(gamma, dtype=float)
    scalar = g.ndim == 0
    g = np.atleast_1d(g)
    if np.any(g < 0):
        raise ValueError("gamma must be nonnegative")
    if np.any(g > ppf.gamma_max * (1 + 1e-12)):
        raise ValueError("gamma beyond gamma_max: approximation not valid there")
    idx = np.clip(np.searchsorted(ppf.knots, g, side="right") - 1, 0, ppf.m - 1)
    out = ppf.a[idx] * g ** ppf.b[idx]
    return float(out[0]) if scalar else out


def min_sinr_for_target(ppf: PpfApprox, target: float) -> float:
    """Smallest gamma whose envelope value reaches ``target`` (bits/s/Hz).

    Satisfying every piece simultaneously requires
    gamma >= max_l (target / a_l)**(1 / b_l); raises when the target exceeds
    the envelope value at gamma_max.
    """
    if target <= 0:
        return 0.0
    if target > eval_envelope(ppf, ppf.gamma_max) * (1 + 1e-12):
        raise ValueError("target spectral efficiency not reachable below gamma_max")
    with np.errstate(over="ignore"):
        req = (target / ppf.a) ** (1.0 / ppf.b)
    return float(np.max(req))


def nested_knot_sets(gamma_max: float, ms) -> dict[int, np.ndarray]:
    """Knot sequences for each m in ``ms`` such that smaller sets are nested.

    The largest m gets the geometric rule; each smaller set keeps an evenly
    spread subset of the next larger set's interior knots.  Nesting makes the
    envelope pointwise non-decreasing in m, so objective values in an m sweep
    are comparable.
    """
    ms = sorted(set(int(m) for m in ms))
    if ms[0] < 2:
        raise ValueError("need at least 2 pieces")
    largest = ms[-1]
    interior = np.geomspace(gamma_max / 10.0 ** (largest - 1), gamma_max / 10.0, largest - 1)
    out = {largest: np.concatenate([[0.0], interior, [gamma_max]])}
    current = interior
    for m in reversed(ms[:-1]):
        take = m - 1
        pick = np.unique(np.round(np.linspace(0, len(current) - 1, take)).astype(int))
        current = current[pick]
        out[m] = np.concatenate([[0.0], current, [gamma_max]])
    return out
