"""SVG line charts rendered from run CSVs (no display needed)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_ear(ear_csv: str | Path, out_svg: str | Path, title: str = "") -> Path:
    """Mean awareness ratio over UAS observers plus the backend trace."""
    times: dict[float, list[float]] = defaultdict(list)
    backend: list[tuple[float, float]] = []
    with open(ear_csv, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            t, observer, _known, _active, ear = line.rstrip("\n").split(",")
            if not ear:
                continue
            if observer == "backend":
                backend.append((float(t), float(ear)))
            else:
                times[float(t)].append(float(ear))
    fig, ax = plt.subplots(figsize=(7, 4))
    if times:
        ts = sorted(times)
        ax.plot(ts, [100.0 * sum(times[t]) / len(times[t]) for t in ts],
                label="UAS (mean)", lw=1.2)
    if backend:
        ax.plot([t for t, _ in backend], [100.0 * v for _, v in backend],
                label="Backend", lw=1.2)
    ax.set_xlabel("Simulation time [s]")
    ax.set_ylabel("Environment awareness ratio [%]")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    out = Path(out_svg)
    fig.savefig(out, format="svg", bbox_inches="tight")
    plt.close(fig)
    return out


def plot_sweep(sweep_csv: str | Path, out_svg: str | Path) -> Path:
    """Three stacked panels: awareness, channel load, and message count."""
    rows: list[dict[str, float]] = []
    with open(sweep_csv, encoding="utf-8") as fh:
        header = next(fh).rstrip("\n").split(",")
        for line in fh:
            vals = line.rstrip("\n").split(",")
            rows.append({k: float(v) if v else float("nan")
                         for k, v in zip(header, vals)})
    rows.sort(key=lambda r: r["ground_stations"])
    gs = [r["ground_stations"] for r in rows]
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    axes[0].plot(gs, [100 * r["ear_uas_avg"] for r in rows], label="UAS", lw=1.2)
    axes[0].plot(gs, [100 * r["ear_backend_avg"] for r in rows], label="Backend", lw=1.2)
    axes[0].set_ylabel("Avg EAR [%]")
    axes[0].legend()
    axes[1].plot(gs, [100 * r["cbr_avg"] for r in rows], lw=1.2)
    axes[1].set_ylabel("Avg rx channel load [%]")
    axes[2].plot(gs, [r["messages_gs_avg"] for r in rows], label="GS", lw=1.2)
    axes[2].plot(gs, [r["messages_uas_avg"] for r in rows], label="UAS", lw=1.2)
    axes[2].plot(gs, [r["messages_total"] for r in rows], label="Total", lw=1.2)
    axes[2].set_ylabel("Avg message count")
    axes[2].set_xlabel("Ground stations [#]")
    axes[2].legend()
    for ax in axes:
        ax.grid(alpha=0.3)
    out = Path(out_svg)
    fig.savefig(out, format="svg", bbox_inches="tight")
    plt.close(fig)
    return out
