"""Delimited report files and companion figures for the CLI.

CSV layouts are part of the tool's contract and never change shape:

* intervals.csv: interval,ticks,baseline_quality,tuned_quality,improvement_pp,sweep_quality
* improvement_cdf.csv: improvement_pp,cdf
* trace.csv: step,state,action,reward,q_value,quality,flag

The sweep_quality cell is empty when no sweep was requested.  Figures are
rendered with the Agg backend so report generation works headless.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

from .harness import AbReport
from .rl import EpisodeResult

INTERVAL_HEADER = [
    "interval",
    "ticks",
    "baseline_quality",
    "tuned_quality",
    "improvement_pp",
    "sweep_quality",
]
CDF_HEADER = ["improvement_pp", "cdf"]
TRACE_HEADER = ["step", "state", "action", "reward", "q_value", "quality", "flag"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def write_interval_report(path: str | Path, report: AbReport) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(INTERVAL_HEADER)
        for row in report.rows:
            writer.writerow(
                [
                    row.interval,
                    row.ticks,
                    f"{row.baseline_quality:.6f}",
                    f"{row.tuned_quality:.6f}",
                    f"{row.improvement_pp:.4f}",
                    "" if row.sweep_quality is None else f"{row.sweep_quality:.6f}",
                ]
            )
    return path


def improvement_cdf(improvements: Sequence[float]) -> list[tuple[float, float]]:
    """The empirical CDF of per-interval improvements: (value, P[X <= value])."""
    if not improvements:
        raise ValueError("no improvements to summarize")
    ordered = sorted(float(v) for v in improvements)
    n = len(ordered)
    return [(v, (i + 1) / n) for i, v in enumerate(ordered)]


def write_improvement_cdf(path: str | Path, improvements: Sequence[float]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CDF_HEADER)
        for value, prob in improvement_cdf(improvements):
            writer.writerow([f"{value:.4f}", f"{prob:.6f}"])
    return path


def write_trace(path: str | Path, trace: EpisodeResult) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for step in trace.steps:
            writer.writerow(
                [
                    step.step,
                    "|".join(str(v) for v in step.state),
                    step.action,
                    f"{step.reward:.6f}",
                    f"{step.q_value:.6f}",
                    "" if step.quality is None else f"{step.quality:.6f}",
                    step.flag,
                ]
            )
    return path


def fig_improvement_cdf(path: str | Path, improvements: Sequence[float]) -> Path:
    plt = _pyplot()
    points = improvement_cdf(improvements)
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.step(xs, ys, where="post")
    ax.axvline(0.0, color="gray", linewidth=0.8, linestyle="--")
    ax.set_xlabel("per-interval improvement (pp)")
    ax.set_ylabel("CDF")
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def fig_interval_quality(path: str | Path, report: AbReport) -> Path:
    plt = _pyplot()
    intervals = [row.interval for row in report.rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(intervals, [row.baseline_quality for row in report.rows], marker="o", label="baseline")
    ax.plot(intervals, [row.tuned_quality for row in report.rows], marker="o", label="tuned")
    sweeps = [row.sweep_quality for row in report.rows]
    if all(s is not None for s in sweeps):
        ax.plot(intervals, sweeps, marker=".", linestyle=":", label="sweep optimum")
    ax.set_xlabel("interval")
    ax.set_ylabel("estimated quality")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def fig_trace_quality(path: str | Path, trace: EpisodeResult) -> Path:
    plt = _pyplot()
    steps = [s.step for s in trace.steps if s.quality is not None]
    quality = [s.quality for s in trace.steps if s.quality is not None]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, quality, linewidth=0.9)
    ax.set_xlabel("step")
    ax.set_ylabel("estimated quality")
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def fig_feature_curves(
    path: str | Path, intervals: Sequence[int], curves: Mapping[str, Sequence[float]]
) -> Path:
    """Per-feature day profile (declared or measured) over interval indices."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, values in curves.items():
        ax.plot(list(intervals), list(values), marker=".", label=name)
    ax.axhline(1.0, color="gray", linewidth=0.8, linestyle="--")
    ax.set_xlabel("interval")
    ax.set_ylabel("ratio vs reference")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def fig_calibration_map(
    path: str | Path,
    results: Mapping[str, Sequence[tuple[float, float]]],
) -> Path:
    """Recovered knob maps: one (virtual value, camera value) line per knob."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, pairs in results.items():
        xs = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
        ax.plot(xs, ys, marker=".", label=name)
    lo = min(min(p[0] for p in pairs) for pairs in results.values())
    hi = max(max(p[0] for p in pairs) for pairs in results.values())
    ax.plot([lo, hi], [lo, hi], color="gray", linewidth=0.8, linestyle="--")
    ax.set_xlabel("virtual knob value")
    ax.set_ylabel("recovered camera value")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def render_ab_outputs(out_dir: str | Path, report: AbReport) -> dict[str, Path]:
    """Write the full ab-eval bundle: three CSVs and three figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "intervals": write_interval_report(out / "intervals.csv", report),
        "improvement_cdf": write_improvement_cdf(
            out / "improvement_cdf.csv", report.improvements
        ),
        "trace": write_trace(out / "trace.csv", report.trace),
        "improvement_cdf_fig": fig_improvement_cdf(
            out / "improvement_cdf.png", report.improvements
        ),
        "interval_quality_fig": fig_interval_quality(
            out / "interval_quality.png", report
        ),
        "trace_quality_fig": fig_trace_quality(out / "trace_quality.png", report.trace),
    }
    return paths
