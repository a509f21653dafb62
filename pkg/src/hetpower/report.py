"""Render sweep figures from bench CSV output.

Figures land next to the delimited output: total power versus user count per
method, and the power/runtime trade-off versus the approximation piece
count.  Rendering is optional plumbing around the CSV contract.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["read_bench_csv", "render_figures"]


def read_bench_csv(path: Union[str, Path]) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def _ok_rows(rows):
    return [r for r in rows if r.get("status") in ("optimal", "budget") and r.get("objective_w")]


def render_figures(csv_path: Union[str, Path], outdir: Union[str, Path]) -> list[Path]:
    """Write PNG figures for a bench CSV; returns the created paths."""
    rows = _ok_rows(read_bench_csv(csv_path))
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []

    methods = sorted({r["method"] for r in rows})
    users = sorted({int(r["n"]) for r in rows})
    ms = sorted({int(r["m"]) for r in rows})

    if len(users) > 1 or len(methods) > 1:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for method in methods:
            pts = {}
            for r in rows:
                if r["method"] != method:
                    continue
                pts.setdefault(int(r["n"]), []).append(float(r["objective_w"]))
            xs = sorted(pts)
            ys = [sum(pts[x]) / len(pts[x]) for x in xs]
            ax.plot(xs, ys, marker="o", label=method)
        ax.set_xlabel("users")
        ax.set_ylabel("total transmit power (W)")
        ax.set_yscale("log")
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = outdir / "power_vs_users.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        created.append(path)

    if len(ms) > 1:
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0))
        for method in methods:
            obj = {}
            wall = {}
            for r in rows:
                if r["method"] != method:
                    continue
                obj.setdefault(int(r["m"]), []).append(float(r["objective_w"]))
                if r.get("wall_ms"):
                    wall.setdefault(int(r["m"]), []).append(float(r["wall_ms"]))
            xs = sorted(obj)
            axes[0].plot(xs, [sum(obj[x]) / len(obj[x]) for x in xs], marker="o", label=method)
            if wall:
                xs = sorted(wall)
                axes[1].plot(xs, [sum(wall[x]) / len(wall[x]) for x in xs], marker="s", label=method)
        axes[0].set_xlabel("approximation pieces m")
        axes[0].set_ylabel("total transmit power (W)")
        axes[1].set_xlabel("approximation pieces m")
        axes[1].set_ylabel("wall time (ms)")
        for ax in axes:
            ax.grid(True, alpha=0.3)
            ax.legend()
        fig.tight_layout()
        path = outdir / "m_tradeoff.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        created.append(path)

    return created
