"""Dual-virtual-camera A/B evaluation.

Both branches replay the same simulated day: frames from a reference
interval re-rendered to every scheduled interval through the virtual
camera.  The baseline branch keeps default knobs; the tuned branch runs the
SARSA agent.  Improvement is the difference in mean estimated quality over
the final lap of the day, overall and per interval.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .deteval import (
    Detector,
    SyntheticDetector,
    config_grid,
    find_best_config,
    peaked_response,
)
from .estimator import LABEL_MAX, OracleEstimator, QualityEstimator, detection_label
from .imaging import ImageBuffer, KnobConfig, apply_config
from .rl import AgentConfig, EpisodeResult, QTable, TunablePipeline, run_episode
from .scene import GeneratedScene
from .vcam import DeltaTable, FrameCorpus, VcTable, render_to_time

log = logging.getLogger(__name__)


class DayCycleEnv:
    """A TunablePipeline replaying a precomputed (interval, frame) stream.

    The stream wraps around, so an episode may run for multiple laps.  Every
    produced frame has the current knob config applied and its interval
    recorded in produced_intervals for later attribution.
    """

    def __init__(self, stream: Sequence[tuple[int, ImageBuffer]]):
        if not stream:
            raise ValueError("day stream is empty")
        self._stream = list(stream)
        self._pos = 0
        self._config = KnobConfig()
        self.produced_intervals: list[int] = []

    def __len__(self) -> int:
        return len(self._stream)

    def knob_config(self) -> KnobConfig:
        return self._config

    def set_knob_config(self, config: KnobConfig) -> None:
        self._config = config

    def produce_frame(self) -> ImageBuffer:
        interval, frame = self._stream[self._pos % len(self._stream)]
        self._pos += 1
        self.produced_intervals.append(interval)
        out = apply_config(frame, self._config)
        return out.with_meta(interval=interval)


def day_stream(
    corpus: FrameCorpus,
    vc: VcTable,
    dt: DeltaTable,
    reference_interval: int,
    schedule: Sequence[int] | None = None,
    ticks_per_interval: int | None = None,
) -> list[tuple[int, ImageBuffer]]:
    """Build the simulated day: reference frames re-rendered per interval.

    Frames keep their source frame_id metadata, so ground truth keyed by the
    reference frames applies to the whole stream (knob transforms never move
    geometry).
    """
    base_frames = corpus.load_frames(reference_interval)
    if not base_frames:
        raise ValueError(f"reference interval {reference_interval} has no readable frames")
    if schedule is None:
        schedule = vc.intervals()
    if ticks_per_interval is None:
        ticks_per_interval = len(base_frames)
    stream: list[tuple[int, ImageBuffer]] = []
    for interval in schedule:
        for k in range(ticks_per_interval):
            base = base_frames[k % len(base_frames)]
            if interval == reference_interval:
                frame = base
            else:
                frame = render_to_time(base, reference_interval, interval, vc, dt)
                frame = frame.with_meta(**base.meta)
            stream.append((interval, frame))
    return stream


def brightest_interval(vc: VcTable) -> int:
    """The profile's brightest interval: the natural reference anchor."""
    return max(
        vc.intervals(), key=lambda i: float(np.mean([t.brightness for t in vc.tiles(i)]))
    )


@dataclass(frozen=True)
class IntervalRow:
    interval: int
    ticks: int
    baseline_quality: float
    tuned_quality: float
    improvement_pp: float
    sweep_quality: float | None = None


@dataclass
class AbReport:
    rows: list[IntervalRow]
    baseline_mean: float
    tuned_mean: float
    improvement_pp: float
    trace: EpisodeResult = field(default_factory=EpisodeResult)
    aa_mode: bool = False

    @property
    def improvements(self) -> list[float]:
        return [row.improvement_pp for row in self.rows]


def _window_means(
    result: EpisodeResult, intervals: Sequence[int], window: int
) -> tuple[dict[int, float], float]:
    steps = result.steps[-window:]
    tags = list(intervals)[-window:]
    per_interval: dict[int, list[float]] = {}
    alls: list[float] = []
    for step, interval in zip(steps, tags):
        if step.quality is None:
            continue
        per_interval.setdefault(interval, []).append(step.quality)
        alls.append(step.quality)
    if not alls:
        raise ValueError("no usable quality estimates in the evaluation window")
    means = {i: float(np.mean(v)) for i, v in per_interval.items()}
    return means, float(np.mean(alls))


def ab_evaluate(
    corpus: FrameCorpus,
    vc: VcTable,
    dt: DeltaTable,
    estimator: QualityEstimator,
    agent: AgentConfig,
    reference_interval: int | None = None,
    schedule: Sequence[int] | None = None,
    ticks_per_interval: int | None = None,
    laps: int = 3,
    aa: bool = False,
    sweep_detector: Detector | None = None,
    sweep_grids: Mapping[str, Sequence[float]] | None = None,
    sweep_truth: Mapping[str, Sequence] | None = None,
) -> AbReport:
    """Run the baseline and tuned branches over the same simulated day.

    aa=True forces the tuned branch to no-op as well (the A/A control); the
    report's improvement is then exactly zero.  When a sweep detector and
    grids are given, each interval row also carries the exhaustive-sweep
    optimum quality as an upper bound.
    """
    if laps < 1:
        raise ValueError("need at least one lap")
    if reference_interval is None:
        reference_interval = brightest_interval(vc)
    stream = day_stream(corpus, vc, dt, reference_interval, schedule, ticks_per_interval)
    lap = len(stream)
    steps = laps * lap

    def run(noop: bool) -> tuple[EpisodeResult, DayCycleEnv]:
        env = DayCycleEnv(stream)
        cfg = replace(agent, noop_only=True) if noop else agent
        result = run_episode(
            env, estimator, QTable(), cfg, steps, warmup_frames=min(lap, 150)
        )
        return result, env

    baseline, baseline_env = run(noop=True)
    tuned, tuned_env = run(noop=aa)

    base_means, base_all = _window_means(
        baseline, baseline_env.produced_intervals, lap
    )
    tuned_means, tuned_all = _window_means(tuned, tuned_env.produced_intervals, lap)

    ticks = ticks_per_interval or lap // len(set(i for i, _ in stream))
    rows: list[IntervalRow] = []
    for interval in sorted(base_means):
        b, t = base_means[interval], tuned_means[interval]
        sweep_quality = None
        if sweep_detector is not None and sweep_grids is not None and sweep_truth is not None:
            frame = next(f for i, f in stream if i == interval)
            frame_id = frame.meta.get("frame_id")
            truth = sweep_truth.get(frame_id, []) if frame_id else []
            _, best = find_best_config(
                frame.with_meta(interval=interval), truth, sweep_detector,
                config_grid(sweep_grids),
            )
            sweep_quality = detection_label(best.map, best.mean_tp_iou) / LABEL_MAX
        rows.append(
            IntervalRow(interval, ticks, b, t, (t - b) * 100.0, sweep_quality)
        )

    report = AbReport(
        rows=rows,
        baseline_mean=base_all,
        tuned_mean=tuned_all,
        improvement_pp=(tuned_all - base_all) * 100.0,
        trace=tuned,
        aa_mode=aa,
    )
    log.info(
        "ab_evaluate: baseline %.3f tuned %.3f improvement %.2fpp%s",
        base_all,
        tuned_all,
        report.improvement_pp,
        " (A/A)" if aa else "",
    )
    return report


def planted_detector(
    scene: GeneratedScene, width: float | Sequence[float] = 0.5
) -> SyntheticDetector:
    """The planted-optimum detector for a generated scene: detection quality
    peaks when the frame looks like the scene's neutral reference.

    width is scalar or per-knob; a tight brightness width with loose others
    models a detector dominated by exposure, the usual day-cycle failure.
    """
    return SyntheticDetector(
        scene.truth, scene.reference, peaked_response(KnobConfig(), width)
    )


def oracle_for_scene(
    scene: GeneratedScene, width: float | Sequence[float] = 0.5
) -> OracleEstimator:
    """Detector-backed quality oracle wired to a generated scene."""
    detector = planted_detector(scene, width)
    return OracleEstimator(detector, scene.truth)
