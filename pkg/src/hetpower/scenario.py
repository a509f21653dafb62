"""Synthetic scenario generation and persistence.

Channel gains come from a parametric path-loss model (distance power law
with optional log-normal shadowing) rather than measured data; the path-loss
constants are generator inputs, not calibrated values.  Generation is fully
determined by the seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .model import Scenario

__all__ = ["GeneratorParams", "generate", "save", "load", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1

# Session demands are clipped to this range (bit/s).
DEMAND_MIN_BPS = 1.35e3
DEMAND_MAX_BPS = 1.872e7


@dataclass(frozen=True)
class GeneratorParams:
    """Geometry, propagation, and traffic knobs for synthetic instances."""

    n_users: int = 40
    n_macro: int = 1
    n_micro: int = 4
    area_radius_m: float = 500.0
    macro_ring_frac: float = 0.4      # macro placement radius / area radius
    ref_gain: float = 4.65e-5         # path gain at the reference distance
    ref_distance_m: float = 1.0       # users closer than this are clamped
    path_loss_exp: float = 3.5
    shadowing_sigma_db: float = 0.0
    demand_median_bps: float = 2e5
    demand_sigma_log: float = 1.2
    demand_min_bps: float = DEMAND_MIN_BPS
    demand_max_bps: float = DEMAND_MAX_BPS
    bandwidth_hz: float = 1e8
    rb_count: int = 500
    noise_dbm_per_hz: float = -174.0
    macro_power_w: float = 40.0       # total BS power; per-RB cap is /rb_count
    macro_micro_power_ratio: float = 10.0

    def __post_init__(self):
        if self.n_users < 1 or self.n_macro + self.n_micro < 1:
            raise ValueError("need at least one user and one BS")
        for name in ("area_radius_m", "ref_gain", "ref_distance_m", "bandwidth_hz",
                     "macro_power_w", "demand_median_bps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def generate(params: GeneratorParams, seed: int) -> Scenario:
    """Draw a scenario: BS ring/uniform placement, uniform users, power-law
    gains, log-normal demands clipped to the configured range."""
    rng = np.random.default_rng(seed)
    R = params.area_radius_m
    n_bs = params.n_macro + params.n_micro

    bs_xy = np.zeros((n_bs, 2))
    if params.n_macro == 1:
        bs_xy[0] = (0.0, 0.0)
    else:
        ang = 2 * np.pi * np.arange(params.n_macro) / max(params.n_macro, 1)
        bs_xy[: params.n_macro, 0] = params.macro_ring_frac * R * np.cos(ang)
        bs_xy[: params.n_macro, 1] = params.macro_ring_frac * R * np.sin(ang)
    if params.n_micro:
        r = R * np.sqrt(rng.uniform(size=params.n_micro))
        th = rng.uniform(0, 2 * np.pi, size=params.n_micro)
        bs_xy[params.n_macro :, 0] = r * np.cos(th)
        bs_xy[params.n_macro :, 1] = r * np.sin(th)

    r = R * np.sqrt(rng.uniform(size=params.n_users))
    th = rng.uniform(0, 2 * np.pi, size=params.n_users)
    user_xy = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)

    d = np.linalg.norm(user_xy[:, None, :] - bs_xy[None, :, :], axis=2)
    d = np.maximum(d, params.ref_distance_m)  # co-located users are clamped
    gains = params.ref_gain * (d / params.ref_distance_m) ** (-params.path_loss_exp)
    if params.shadowing_sigma_db > 0:
        shadow_db = rng.normal(0.0, params.shadowing_sigma_db, size=gains.shape)
        gains = gains * 10.0 ** (shadow_db / 10.0)

    demands = rng.lognormal(
        mean=np.log(params.demand_median_bps),
        sigma=params.demand_sigma_log,
        size=params.n_users,
    )
    demands = np.clip(demands, params.demand_min_bps, params.demand_max_bps)

    rb = float(params.rb_count)
    b0 = params.bandwidth_hz / rb
    noise_w = 10.0 ** (params.noise_dbm_per_hz / 10.0) * 1e-3 * b0

    p_total = np.full(n_bs, params.macro_power_w / params.macro_micro_power_ratio)
    p_total[: params.n_macro] = params.macro_power_w

    return Scenario(
        gains=gains,
        bandwidth_hz=np.full(n_bs, params.bandwidth_hz),
        rb_count=np.full(n_bs, rb),
        p_max_rb_w=p_total / rb,
        noise_w=noise_w,
        demand_bps=demands,
        metadata={
            "seed": int(seed),
            "generator": asdict(params),
            "bs_xy": bs_xy.tolist(),
            "user_xy": user_xy.tolist(),
        },
    )


def save(scenario: Scenario, path: Union[str, Path]) -> None:
    """Write the scenario as JSON (gains row-major, linear scale)."""
    doc = {
        "version": SCHEMA_VERSION,
        "n": scenario.n_users,
        "N": scenario.n_bs,
        "gains": scenario.gains.ravel().tolist(),
        "bandwidth_hz": scenario.bandwidth_hz.tolist(),
        "rb_count": scenario.rb_count.tolist(),
        "p_max_rb_w": scenario.p_max_rb_w.tolist(),
        "noise_w": float(scenario.noise_w),
        "demand_bps": scenario.demand_bps.tolist(),
        "metadata": scenario.metadata,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


class ScenarioFormatError(ValueError):
    pass


def _require(doc: dict, key: str):
    if key not in doc:
        raise ScenarioFormatError(f"missing field: {key}")
    return doc[key]


def load(path: Union[str, Path]) -> Scenario:
    """Read and validate a scenario file; rejects malformed fields with the
    offending path in the message."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f"not valid JSON: {e}") from e
    version = _require(doc, "version")
    if version != SCHEMA_VERSION:
        raise ScenarioFormatError(
            f"version: expected {SCHEMA_VERSION}, got {version!r}"
        )
    n = int(_require(doc, "n"))
    n_bs = int(_require(doc, "N"))
    gains = np.asarray(_require(doc, "gains"), dtype=float)
    if gains.shape != (n * n_bs,):
        raise ScenarioFormatError(
            f"gains: expected {n * n_bs} row-major entries, got {gains.shape}"
        )
    gains = gains.reshape(n, n_bs)
    bad = np.argwhere(~(np.isfinite(gains) & (gains > 0)))
    if len(bad):
        i, j = bad[0]
        raise ScenarioFormatError(f"gains[{i * n_bs + j}]: must be finite and > 0")

    def vec(key, length):
        arr = np.asarray(_require(doc, key), dtype=float)
        if arr.shape != (length,):
            raise ScenarioFormatError(f"{key}: expected length {length}")
        if not np.all(np.isfinite(arr)):
            k = int(np.argwhere(~np.isfinite(arr))[0])
            raise ScenarioFormatError(f"{key}[{k}]: must be finite")
        return arr

    bandwidth = vec("bandwidth_hz", n_bs)
    rb = vec("rb_count", n_bs)
    pmax = vec("p_max_rb_w", n_bs)
    demand = vec("demand_bps", n)
    noise = float(_require(doc, "noise_w"))
    if noise <= 0 or not np.isfinite(noise):
        raise ScenarioFormatError("noise_w: must be finite and > 0")
    if np.any(demand < 0):
        k = int(np.argwhere(demand < 0)[0])
        raise ScenarioFormatError(f"demand_bps[{k}]: must be >= 0")
    try:
        return Scenario(
            gains=gains,
            bandwidth_hz=bandwidth,
            rb_count=rb,
            p_max_rb_w=pmax,
            noise_w=noise,
            demand_bps=demand,
            metadata=doc.get("metadata", {}),
        )
    except ValueError as e:
        raise ScenarioFormatError(str(e)) from e
