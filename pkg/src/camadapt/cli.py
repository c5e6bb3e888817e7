"""Command line entry points: ``camadapt <subcommand> --out DIR [...]``.

Subcommands
-----------
gen-scene   render a synthetic day scene (frames, scene.json, gt.jsonl)
calibrate   recover knob maps from a synthetic camera, emit map + report
vc-build    profile a frame corpus into VC and delta tables
vc-render   re-render one frame from time --t1 to time --t2
sweep       exhaustive config search on one frame, ranked CSV
tune        run one SARSA episode over a simulated day, emit Q-table + trace
ab-eval     baseline-vs-tuned day evaluation, CSV/JSON report + figures

Common flags: ``--out DIR`` (required, created if missing), ``--config FILE``,
``--seed N`` (overrides the ``seed`` config key).  Configuration is a flat
``key=value`` file; blank lines and ``#`` comments are ignored and unknown
keys are rejected.  Each command's accepted keys are listed in its handler
docstring below.

Exit codes: 0 success, 2 configuration error (bad flag, bad key or value,
missing input directory), 3 data error (unreadable or incomplete inputs).
Logs go to stderr; every data product is a file under ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import report
from .calibration import (
    DEFAULT_GRID_STEP,
    CameraError,
    KnobMap,
    SyntheticCamera,
    calibrate,
    concave_map,
    convex_map,
    knob_grid,
    linear_map,
)
from .deteval import config_grid, sweep_configs
from .estimator import (
    EstimatorUnavailable,
    ExternalEstimator,
    ProxyEstimator,
    QualityEstimator,
)
from .harness import (
    DayCycleEnv,
    ab_evaluate,
    brightest_interval,
    day_stream,
    oracle_for_scene,
    planted_detector,
)
from .imaging import KNOB_NAMES, KNOB_RANGES, write_image
from .rl import AgentConfig, QTable, run_episode
from .scene import (
    PATTERNS,
    GeneratedScene,
    SceneSpec,
    build_base_image,
    generate_scene,
    hourly_scene_spec,
    load_scene,
    tiny_scene_spec,
)
from .vcam import (
    DEFAULT_DELTA_STEP,
    DeltaTable,
    FrameCorpus,
    VcTable,
    build_delta_table,
    build_vc_table,
    choose_render_config,
    default_delta_grids,
    interval_of,
    render_to_time,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

VC_FILE = "vc.json"
DELTA_FILE = "delta.json"

SWEEP_HEADER = [
    "rank",
    "brightness",
    "contrast",
    "color_saturation",
    "sharpness",
    "map",
    "mean_tp_iou",
]
CALIBRATION_HEADER = ["param", "camera_value", "factor", "ssim", "low_confidence"]

GRID_PRESETS: dict[str, dict[str, tuple[float, ...]]] = {
    "coarse": {name: (0.8, 1.0, 1.2) for name in KNOB_NAMES},
    "fine": {
        "brightness": tuple(knob_grid("brightness", 0.1)),
        "contrast": (0.7, 0.85, 1.0, 1.15, 1.3),
        "color_saturation": (0.8, 1.0, 1.2),
        "sharpness": (0.8, 1.0, 1.2),
    },
}

MAP_FAMILIES = {"linear": linear_map, "convex": convex_map, "concave": concave_map}


class ConfigError(ValueError):
    """Bad configuration: unknown key, unparsable value, missing input dir."""


# ---------------------------------------------------------------------------
# Config file handling.
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict[str, str]:
    """Parse the flat key=value format; duplicates and junk lines are errors."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"config line {lineno}: expected key=value, got {raw!r}")
        if key in values:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


COMMON_KEYS = frozenset({"seed"})
AGENT_KEYS = frozenset({"agent.alpha", "agent.gamma", "agent.epsilon"})
ESTIMATOR_KEYS = frozenset(
    {"estimator", "estimator.host", "estimator.port", "estimator.width"}
)
DELTA_KEYS = frozenset({"delta.step"} | {f"delta.grid.{name}" for name in KNOB_NAMES})
COMMAND_KEYS: dict[str, frozenset[str]] = {
    "gen-scene": COMMON_KEYS
    | {
        "scene.preset",
        "scene.width",
        "scene.height",
        "scene.frames_per_interval",
        "scene.noise",
        "scene.n_objects",
        "scene.pattern",
    },
    "calibrate": COMMON_KEYS | {"camera.map", "calibrate.step"},
    "vc-build": COMMON_KEYS | DELTA_KEYS | {"corpus"},
    "vc-render": COMMON_KEYS | DELTA_KEYS | {"corpus", "tables", "frame.index"},
    "sweep": COMMON_KEYS | {"scene", "sweep.interval", "sweep.width"},
    "tune": COMMON_KEYS
    | AGENT_KEYS
    | ESTIMATOR_KEYS
    | DELTA_KEYS
    | {
        "scene",
        "tables",
        "tune.steps",
        "tune.ticks_per_interval",
        "tune.reference_interval",
    },
    "ab-eval": COMMON_KEYS
    | AGENT_KEYS
    | ESTIMATOR_KEYS
    | DELTA_KEYS
    | {
        "scene",
        "tables",
        "ab.laps",
        "ab.ticks_per_interval",
        "ab.reference_interval",
        "ab.sweep",
        "ab.aa",
    },
}


class RunConfig:
    """Validated view of the config file for one subcommand."""

    def __init__(self, values: Mapping[str, str], command: str):
        allowed = COMMAND_KEYS[command]
        unknown = sorted(set(values) - allowed)
        if unknown:
            raise ConfigError(
                f"unknown config keys for {command}: {', '.join(unknown)}"
            )
        self._values = dict(values)

    def __contains__(self, key: str) -> bool:
        return key in self._values

    def get(self, key: str, default: str | None = None) -> str | None:
        return self._values.get(key, default)

    def get_int(self, key: str, default: int | None) -> int | None:
        if key not in self._values:
            return default
        try:
            return int(self._values[key])
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {self._values[key]!r}")

    def get_float(self, key: str, default: float) -> float:
        if key not in self._values:
            return default
        try:
            return float(self._values[key])
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {self._values[key]!r}")

    def get_bool(self, key: str, default: bool) -> bool:
        if key not in self._values:
            return default
        value = self._values[key].lower()
        if value in ("true", "1", "yes", "on"):
            return True
        if value in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {self._values[key]!r}")

    def get_choice(self, key: str, choices: Sequence[str], default: str) -> str:
        value = self._values.get(key, default)
        if value not in choices:
            raise ConfigError(
                f"{key}: expected one of {', '.join(choices)}, got {value!r}"
            )
        return value

    def get_widths(self, key: str, default: float) -> float | tuple[float, ...]:
        """A response width: one number, or four comma-separated numbers."""
        if key not in self._values:
            return default
        parts = [p.strip() for p in self._values[key].split(",")]
        try:
            numbers = tuple(float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"{key}: expected numbers, got {self._values[key]!r}")
        if len(numbers) == 1:
            return numbers[0]
        if len(numbers) != len(KNOB_NAMES):
            raise ConfigError(f"{key}: expected 1 or {len(KNOB_NAMES)} numbers")
        return numbers


# ---------------------------------------------------------------------------
# Shared pieces.
# ---------------------------------------------------------------------------


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args: argparse.Namespace, cfg: RunConfig) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.get_int("seed", 0)


def _existing_dir(value: str | None, key: str) -> Path:
    if not value:
        raise ConfigError(f"{key}: required config key is missing")
    path = Path(value)
    if not path.is_dir():
        raise ConfigError(f"{key}: directory not found: {path}")
    return path


def _scene(cfg: RunConfig) -> GeneratedScene:
    return load_scene(_existing_dir(cfg.get("scene"), "scene"))


def _interval(value: str, key: str) -> int:
    try:
        return interval_of(value if ":" in value else int(value))
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _delta_grids(cfg: RunConfig) -> dict[str, list[float]]:
    """Factor grids for the delta sweep: every knob range sampled at
    ``delta.step``, with ``delta.grid.<knob>`` overriding single knobs as
    comma-separated factor lists.  Day rendering lives or dies on brightness
    granularity, so a dense brightness grid with sparse other knobs is both
    cheaper and better than a uniformly fine step."""
    step = cfg.get_float("delta.step", DEFAULT_DELTA_STEP)
    if step <= 0:
        raise ConfigError(f"delta.step: must be positive, got {step}")
    grids = default_delta_grids(step)
    for knob in KNOB_NAMES:
        key = f"delta.grid.{knob}"
        raw = cfg.get(key)
        if raw is None:
            continue
        try:
            values = sorted({float(p) for p in raw.split(",") if p.strip()})
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}")
        if not values:
            raise ConfigError(f"{key}: expected at least one factor")
        lo, hi = KNOB_RANGES[knob]
        for value in values:
            if not lo <= value <= hi:
                raise ConfigError(f"{key}: {value} outside the legal range [{lo}, {hi}]")
        grids[knob] = values
    return grids


def _tables(cfg: RunConfig, corpus: FrameCorpus, seed: int) -> tuple[VcTable, DeltaTable]:
    """Load prebuilt tables from the ``tables`` dir, or profile the corpus."""
    tables = cfg.get("tables")
    if tables:
        tdir = _existing_dir(tables, "tables")
        return VcTable.load(tdir / VC_FILE), DeltaTable.load(tdir / DELTA_FILE)
    grids = _delta_grids(cfg)
    if not corpus.intervals():
        raise ValueError(f"corpus has no frames: {corpus.root}")
    vc = build_vc_table(corpus)
    dt = build_delta_table(corpus, grids, seed=seed)
    return vc, dt


def _estimator(cfg: RunConfig, scene: GeneratedScene) -> QualityEstimator:
    kind = cfg.get_choice("estimator", ("oracle", "proxy", "external"), "oracle")
    if kind == "oracle":
        return oracle_for_scene(scene, width=cfg.get_widths("estimator.width", 0.5))
    if kind == "proxy":
        return ProxyEstimator(scene.reference)
    port = cfg.get_int("estimator.port", 0)
    if port <= 0:
        raise ConfigError("estimator.port: required for the external estimator")
    return ExternalEstimator(host=cfg.get("estimator.host", "127.0.0.1"), port=port)


def _agent(cfg: RunConfig, seed: int) -> AgentConfig:
    try:
        return AgentConfig(
            alpha=cfg.get_float("agent.alpha", 0.5),
            gamma=cfg.get_float("agent.gamma", 0.9),
            epsilon=cfg.get_float("agent.epsilon", 1.0),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"bad agent config: {exc}") from exc


def _time_slug(text: str) -> str:
    return text.replace(":", "")


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------


def _cmd_gen_scene(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Keys: scene.preset (tiny|hourly), scene.width, scene.height,
    scene.frames_per_interval, scene.noise, scene.n_objects, scene.pattern."""
    seed = _seed(args, cfg)
    preset = cfg.get_choice("scene.preset", ("tiny", "hourly"), "tiny")
    spec = tiny_scene_spec(seed) if preset == "tiny" else hourly_scene_spec(seed=seed)

    overrides: dict[str, object] = {}
    for key, field in (
        ("scene.width", "width"),
        ("scene.height", "height"),
        ("scene.frames_per_interval", "frames_per_interval"),
        ("scene.noise", "noise"),
        ("scene.n_objects", "n_objects"),
    ):
        if key in cfg:
            overrides[field] = cfg.get_int(key, 0)
    if "scene.pattern" in cfg:
        overrides["pattern"] = cfg.get_choice("scene.pattern", PATTERNS, spec.pattern)
    try:
        spec = dataclasses.replace(spec, **overrides)
    except ValueError as exc:
        raise ConfigError(f"invalid scene override: {exc}") from exc

    out = _out_dir(args)
    generate_scene(spec, out)
    report.fig_feature_curves(out / "day_profile.png", spec.intervals, spec.effective_curves())
    log.info(
        "gen-scene: %d intervals x %d frames (%dx%d %s) -> %s",
        len(spec.intervals),
        spec.frames_per_interval,
        spec.width,
        spec.height,
        spec.pattern,
        out,
    )
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Keys: camera.map (linear|convex|concave), calibrate.step."""
    seed = _seed(args, cfg)
    family_name = cfg.get_choice("camera.map", tuple(MAP_FAMILIES), "linear")
    step = cfg.get_float("calibrate.step", DEFAULT_GRID_STEP)
    if step <= 0:
        raise ConfigError(f"calibrate.step: must be positive, got {step}")

    base, _ = build_base_image(SceneSpec(width=128, height=96, seed=seed))
    family = MAP_FAMILIES[family_name]
    cam = SyntheticCamera(
        base, {name: family(*KNOB_RANGES[name]) for name in KNOB_NAMES}
    )
    merged = KnobMap()
    for name in KNOB_NAMES:
        merged = merged.merge(calibrate(cam, name, grid=knob_grid(name, step)))

    out = _out_dir(args)
    merged.save(out / "knob_map.json")
    with open(out / "calibration.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CALIBRATION_HEADER)
        for name in merged.params():
            for row in merged.entries[name]:
                writer.writerow(
                    [
                        name,
                        row.camera_value,
                        f"{row.factor:.6f}",
                        f"{row.ssim:.6f}",
                        str(row.low_confidence).lower(),
                    ]
                )
    report.fig_calibration_map(
        out / "calibration.png",
        {
            name: [
                (cam.hidden_maps[name](row.camera_value), row.factor)
                for row in merged.entries[name]
            ]
            for name in merged.params()
        },
    )
    low = merged.low_confidence_params()
    log.info(
        "calibrate: %s maps for %d params%s -> %s",
        family_name,
        len(merged.params()),
        f" (low confidence: {', '.join(low)})" if low else "",
        out,
    )
    return EXIT_OK


def _cmd_vc_build(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Keys: corpus (frame directory), delta.step, delta.grid.<knob>."""
    seed = _seed(args, cfg)
    corpus = FrameCorpus(_existing_dir(cfg.get("corpus"), "corpus"))
    grids = _delta_grids(cfg)
    if not corpus.intervals():
        raise ValueError(f"corpus has no frames: {corpus.root}")

    vc = build_vc_table(corpus)
    dt = build_delta_table(corpus, grids, seed=seed)
    out = _out_dir(args)
    vc.save(out / VC_FILE)
    dt.save(out / DELTA_FILE)
    log.info(
        "vc-build: %d intervals, %d delta configs -> %s",
        len(vc.intervals()),
        dt.n_configs,
        out,
    )
    return EXIT_OK


def _cmd_vc_render(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Keys: corpus, tables (optional prebuilt dir), delta.step,
    delta.grid.<knob>, frame.index."""
    seed = _seed(args, cfg)
    src = _interval(args.t1, "--t1")
    dst = _interval(args.t2, "--t2")
    corpus = FrameCorpus(_existing_dir(cfg.get("corpus"), "corpus"))
    vc, dt = _tables(cfg, corpus, seed)

    frames = corpus.load_frames(src)
    if not frames:
        raise ValueError(f"no readable frames for interval {src}")
    index = cfg.get_int("frame.index", 0)
    if not 0 <= index < len(frames):
        raise ValueError(
            f"frame.index {index} out of range: interval {src} has {len(frames)} frames"
        )
    frame = frames[index]
    rendered = render_to_time(frame, src, dst, vc, dt)
    diag = choose_render_config(frame, dst, vc, dt)

    out = _out_dir(args)
    slug = f"{_time_slug(args.t1)}_to_{_time_slug(args.t2)}"
    write_image(out / "source.png", frame)
    write_image(out / f"rendered_{slug}.png", rendered)
    obj = {
        "t1": args.t1,
        "t2": args.t2,
        "source_interval": src,
        "target_interval": dst,
        "frame_id": frame.meta.get("frame_id"),
        "config": dict(zip(KNOB_NAMES, diag.config.as_tuple())),
    }
    (out / "render.json").write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    log.info("vc-render: interval %d -> %d, config %s", src, dst, diag.config.as_tuple())
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Keys: scene (generated scene dir), sweep.interval, sweep.width."""
    scene = _scene(cfg)
    corpus = scene.corpus
    interval_key = cfg.get("sweep.interval")
    if interval_key is not None:
        interval = _interval(interval_key, "sweep.interval")
    else:
        intervals = corpus.intervals()
        if not intervals:
            raise ValueError("corpus has no frames")
        interval = intervals[0]

    frames = corpus.load_frames(interval)
    if not frames:
        raise ValueError(f"no readable frames for interval {interval}")
    frame = frames[0]
    frame_id = frame.meta["frame_id"]
    truth = scene.truth[frame_id]
    detector = planted_detector(scene, width=cfg.get_widths("sweep.width", 0.5))
    ranked = sweep_configs(frame, truth, detector, config_grid(GRID_PRESETS[args.grid]))

    out = _out_dir(args)
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for rank, (config, result) in enumerate(ranked, start=1):
            b, c, s, sh = config.as_tuple()
            writer.writerow(
                [
                    rank,
                    f"{b:.4f}",
                    f"{c:.4f}",
                    f"{s:.4f}",
                    f"{sh:.4f}",
                    f"{result.map:.6f}",
                    f"{result.mean_tp_iou:.6f}",
                ]
            )
    best_config, best = ranked[0]
    log.info(
        "sweep: %d configs on interval %d, best %s (mAP %.3f) -> %s",
        len(ranked),
        interval,
        best_config.as_tuple(),
        best.map,
        out,
    )
    return EXIT_OK


def _cmd_tune(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Keys: scene, tables, delta.step, delta.grid.<knob>, agent.alpha,
    agent.gamma, agent.epsilon, tune.steps, tune.ticks_per_interval,
    tune.reference_interval, estimator(, .host, .port, .width)."""
    seed = _seed(args, cfg)
    scene = _scene(cfg)
    corpus = scene.corpus
    vc, dt = _tables(cfg, corpus, seed)
    estimator = _estimator(cfg, scene)
    agent = _agent(cfg, seed)

    ref_key = cfg.get("tune.reference_interval")
    reference = (
        _interval(ref_key, "tune.reference_interval")
        if ref_key is not None
        else brightest_interval(vc)
    )
    stream = day_stream(
        corpus, vc, dt, reference,
        ticks_per_interval=cfg.get_int("tune.ticks_per_interval", None),
    )
    env = DayCycleEnv(stream)
    steps = cfg.get_int("tune.steps", 2 * len(stream))
    if steps < 1:
        raise ConfigError(f"tune.steps: must be positive, got {steps}")
    table = QTable()
    result = run_episode(env, estimator, table, agent, steps)

    out = _out_dir(args)
    table.save(out / "qtable.json")
    report.write_trace(out / "trace.csv", result)
    report.fig_trace_quality(out / "trace_quality.png", result)
    qualities = result.qualities
    summary = {
        "steps": steps,
        "reference_interval": reference,
        "mean_quality": sum(qualities) / len(qualities) if qualities else None,
        "final_quality": qualities[-1] if qualities else None,
        "final_config": dict(zip(KNOB_NAMES, result.final_config.as_tuple())),
    }
    (out / "tune_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    log.info(
        "tune: %d steps, mean quality %s -> %s",
        steps,
        f"{summary['mean_quality']:.3f}" if qualities else "n/a",
        out,
    )
    return EXIT_OK


def _cmd_ab_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    """Keys: scene, tables, delta.step, delta.grid.<knob>, agent.alpha,
    agent.gamma, agent.epsilon, ab.laps, ab.ticks_per_interval,
    ab.reference_interval, ab.sweep, ab.aa, estimator(, .host, .port, .width)."""
    seed = _seed(args, cfg)
    scene = _scene(cfg)
    corpus = scene.corpus
    vc, dt = _tables(cfg, corpus, seed)
    estimator = _estimator(cfg, scene)
    agent = _agent(cfg, seed)

    ref_key = cfg.get("ab.reference_interval")
    reference = (
        _interval(ref_key, "ab.reference_interval")
        if ref_key is not None
        else brightest_interval(vc)
    )
    laps = cfg.get_int("ab.laps", 3)
    if laps < 1:
        raise ConfigError(f"ab.laps: must be positive, got {laps}")

    sweep_kwargs: dict[str, object] = {}
    if cfg.get_bool("ab.sweep", False):
        sweep_kwargs = dict(
            sweep_detector=planted_detector(
                scene, width=cfg.get_widths("estimator.width", 0.5)
            ),
            sweep_grids=GRID_PRESETS["coarse"],
            sweep_truth=scene.truth,
        )

    result = ab_evaluate(
        corpus,
        vc,
        dt,
        estimator,
        agent,
        reference_interval=reference,
        ticks_per_interval=cfg.get_int("ab.ticks_per_interval", None),
        laps=laps,
        aa=cfg.get_bool("ab.aa", False),
        **sweep_kwargs,
    )

    out = _out_dir(args)
    report.render_ab_outputs(out, result)
    summary = {
        "baseline_mean": result.baseline_mean,
        "tuned_mean": result.tuned_mean,
        "improvement_pp": result.improvement_pp,
        "aa": result.aa_mode,
        "intervals": len(result.rows),
        "laps": laps,
        "reference_interval": reference,
    }
    (out / "ab_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    log.info(
        "ab-eval: baseline %.3f tuned %.3f improvement %.2fpp -> %s",
        result.baseline_mean,
        result.tuned_mean,
        result.improvement_pp,
        out,
    )
    return EXIT_OK


COMMANDS: dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "gen-scene": _cmd_gen_scene,
    "calibrate": _cmd_calibrate,
    "vc-build": _cmd_vc_build,
    "vc-render": _cmd_vc_render,
    "sweep": _cmd_sweep,
    "tune": _cmd_tune,
    "ab-eval": _cmd_ab_eval,
}


# ---------------------------------------------------------------------------
# Parser and entry point.
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--seed", type=int, default=None, help="override the seed config key"
    )
    common.add_argument("--config", default=None, help="flat key=value config file")
    common.add_argument(
        "--out", required=True, help="output directory, created if missing"
    )

    parser = argparse.ArgumentParser(
        prog="camadapt",
        description="Camera knob calibration, virtual-camera rendering and RL tuning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-scene", parents=[common], help="render a synthetic day scene")
    sub.add_parser("calibrate", parents=[common], help="recover synthetic knob maps")
    sub.add_parser("vc-build", parents=[common], help="profile VC and delta tables")
    p = sub.add_parser("vc-render", parents=[common], help="re-render a frame in time")
    p.add_argument("--t1", required=True, help="source time (HH:MM or interval index)")
    p.add_argument("--t2", required=True, help="target time (HH:MM or interval index)")
    p = sub.add_parser("sweep", parents=[common], help="exhaustive config search")
    p.add_argument(
        "--grid", choices=tuple(GRID_PRESETS), default="coarse", help="grid preset"
    )
    sub.add_parser("tune", parents=[common], help="run one SARSA tuning episode")
    sub.add_parser("ab-eval", parents=[common], help="baseline vs tuned day evaluation")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage or help; keep its code (2 on usage
        # errors, 0 on --help) so main stays callable in-process.
        if exc.code is None:
            return EXIT_OK
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG

    try:
        if args.config is not None:
            path = Path(args.config)
            if not path.is_file():
                raise ConfigError(f"--config: file not found: {path}")
            values = parse_config_text(path.read_text(encoding="utf-8"))
        else:
            values = {}
        cfg = RunConfig(values, args.command)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (CameraError, EstimatorUnavailable, OSError, ValueError, LookupError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
