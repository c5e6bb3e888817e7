"""Synthetic day-scene generation.

A scene is a static arrangement of colored shapes (with known bounding
boxes) under a day-long lighting profile: per-feature multiplicative curves
over the 15-minute intervals.  The generator renders one knob config per
interval, solved so the measured frame features track the declared profile,
then jitters each frame with small pixel noise.  Ground truth is written as
JSON lines next to the frames.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .deteval import BoundingBox, boxes_to_jsonl, boxes_from_jsonl
from .imaging import ImageBuffer, KNOB_NAMES, KNOB_RANGES, KnobConfig, apply_config, write_image
from .metrics import FEATURE_NAMES, FeatureTuple, extract_features
from .vcam import SECONDS_PER_INTERVAL, FrameCorpus, interval_of

log = logging.getLogger(__name__)

SCENE_FILE = "scene.json"
GT_FILE = "gt.jsonl"
PATTERNS = ("gradient", "checker", "shapes")

# Feature tracking contract: per interval, the mean measured FeatureTuple
# stays within this relative error of the declared profile target.
TRACKING_TOLERANCE = 0.10


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to generate a synthetic day deterministically."""

    width: int = 192
    height: int = 144
    pattern: str = "shapes"
    intervals: tuple[int, ...] = tuple(range(4, 96, 8))
    frames_per_interval: int = 20
    curves: Mapping[str, Sequence[float]] | None = None
    noise: int = 2
    seed: int = 0
    n_objects: int = 3

    def __post_init__(self) -> None:
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        if self.width < 44 or self.height < 33:
            raise ValueError("scene too small to tile meaningfully")
        if self.frames_per_interval < 1 or self.frames_per_interval > SECONDS_PER_INTERVAL:
            raise ValueError("frames_per_interval out of range")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if self.n_objects < 1:
            raise ValueError("need at least one object")
        if len(set(self.intervals)) != len(self.intervals) or list(self.intervals) != sorted(
            self.intervals
        ):
            raise ValueError("intervals must be sorted and unique")
        for i in self.intervals:
            interval_of(i)  # range check
        curves = self.effective_curves()
        for name, values in curves.items():
            if len(values) != len(self.intervals):
                raise ValueError(f"curve {name!r} length != number of intervals")
            if any(not math.isfinite(v) or v <= 0 for v in values):
                raise ValueError(f"curve {name!r} must be finite and positive")

    def effective_curves(self) -> dict[str, tuple[float, ...]]:
        if self.curves is None:
            return {name: (1.0,) * len(self.intervals) for name in FEATURE_NAMES}
        curves = {name: tuple(float(v) for v in values) for name, values in self.curves.items()}
        unknown = set(curves) - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"unknown curve features: {sorted(unknown)}")
        for name in FEATURE_NAMES:
            curves.setdefault(name, (1.0,) * len(self.intervals))
        return curves


def day_profile_curves(intervals: Sequence[int]) -> dict[str, tuple[float, ...]]:
    """A qualitative day shape: bright, crisp midday; dark, flat night.

    Values are multiplicative ratios against the scene's reference features,
    kept mild so per-interval knob solving stays inside the legal ranges.
    """
    hours = np.array([i * SECONDS_PER_INTERVAL / 3600.0 for i in intervals])
    bell = np.exp(-(((hours - 13.0) / 5.0) ** 2))
    return {
        "brightness": tuple(0.82 + 0.43 * bell),
        "contrast": tuple(0.88 + 0.27 * bell),
        "color_saturation": tuple(0.92 + 0.18 * bell),
        "sharpness": tuple(0.85 + 0.30 * bell),
    }


def tiny_scene_spec(seed: int = 0) -> SceneSpec:
    """The bundled tiny scene: 12 intervals x 20 frames with the day profile."""
    intervals = tuple(range(4, 96, 8))
    return SceneSpec(
        intervals=intervals,
        frames_per_interval=20,
        curves=day_profile_curves(intervals),
        seed=seed,
    )


def hourly_scene_spec(frames_per_interval: int = 3, seed: int = 0) -> SceneSpec:
    """A 24-interval (hourly) day used for virtual-camera error evaluation."""
    intervals = tuple(range(0, 96, 4))
    return SceneSpec(
        width=160,
        height=120,
        intervals=intervals,
        frames_per_interval=frames_per_interval,
        curves=day_profile_curves(intervals),
        seed=seed,
    )


def build_base_image(spec: SceneSpec) -> tuple[ImageBuffer, list[BoundingBox]]:
    """The reference scene at neutral lighting plus its ground-truth boxes.

    Channel values stay below ~200 so the brightest profile point does not
    clip, which would bend the feature curves.
    """
    rng = np.random.default_rng(spec.seed)
    w, h = spec.width, spec.height
    xx, yy = np.meshgrid(np.arange(w), np.arange(h))
    px = np.empty((h, w, 3), dtype=np.float64)
    if spec.pattern == "gradient":
        px[..., 0] = 40 + 120 * xx / max(w - 1, 1)
        px[..., 1] = 55 + 100 * yy / max(h - 1, 1)
        px[..., 2] = 70 + 60 * np.sin(xx / 7.0)
    elif spec.pattern == "checker":
        mask = ((xx // 8) + (yy // 8)) % 2 == 0
        px[mask] = (170, 140, 60)
        px[~mask] = (50, 70, 120)
    else:  # shapes: gradient backdrop, objects composited below
        px[..., 0] = 45 + 110 * xx / max(w - 1, 1)
        px[..., 1] = 60 + 90 * yy / max(h - 1, 1)
        px[..., 2] = 80 + 50 * np.cos(yy / 9.0)
    # Thin line texture keeps the base's edge energy well above the pixel
    # noise floor, so the sharpness curve stays solvable on noisy frames.
    lines = ((xx % 10 == 0) | (yy % 10 == 0))[..., None]
    px = np.where(lines, px + 22, px - 3)

    boxes: list[BoundingBox] = []
    palette = [(190, 60, 50), (60, 170, 80), (60, 90, 185), (180, 160, 55), (150, 70, 160)]
    for k in range(spec.n_objects):
        bw = int(rng.integers(w // 8, w // 4))
        bh = int(rng.integers(h // 8, h // 4))
        x1 = int(rng.integers(2, w - bw - 2))
        y1 = int(rng.integers(2, h - bh - 2))
        color = palette[k % len(palette)]
        region = px[y1 : y1 + bh, x1 : x1 + bw]
        if k % 2 == 0:
            region[:] = color
        else:  # filled ellipse
            cy, cx = bh / 2.0, bw / 2.0
            ey, ex = np.meshgrid(np.arange(bh) - cy, np.arange(bw) - cx, indexing="ij")
            inside = (ex / max(cx, 1)) ** 2 + (ey / max(cy, 1)) ** 2 <= 1.0
            region[inside] = color
        boxes.append(BoundingBox(x1, y1, x1 + bw, y1 + bh, class_id=k % 2))
    for box in boxes:
        assert 0 <= box.x1 < box.x2 <= w and 0 <= box.y1 < box.y2 <= h
    return ImageBuffer(np.clip(np.rint(px), 0, 255).astype(np.uint8)), boxes


def solve_interval_config(
    base: ImageBuffer,
    reference: FeatureTuple,
    target: FeatureTuple,
    jitter: np.ndarray | None = None,
    max_iter: int = 10,
    tol: float = 0.015,
) -> KnobConfig:
    """Find knob factors whose rendered features hit the target tuple.

    Each knob dominates its own feature, so a per-component multiplicative
    fixed-point iteration converges quickly; cross-knob leakage (brightness
    scales contrast and sharpness too) washes out over iterations.  When the
    emitted frames will carry pixel noise, a representative jitter field is
    added to the probe render so the solver aims at the noisy measurement
    (noise inflates the Sobel sharpness feature substantially).
    """
    ref = np.maximum(reference.as_array(), 1e-9)
    goal = target.as_array() / ref
    factors = {
        "brightness": goal[0],
        "contrast": goal[1] / goal[0],
        "color_saturation": goal[2],
        "sharpness": goal[3] / goal[1],
    }

    def clamped() -> KnobConfig:
        values = {}
        for knob in KNOB_NAMES:
            lo, hi = KNOB_RANGES[knob]
            values[knob] = min(max(factors[knob], lo), hi)
        return KnobConfig(**values)

    def probe(config: KnobConfig) -> np.ndarray:
        rendered = apply_config(base, config)
        if jitter is None:
            return extract_features(rendered).as_array()
        px = np.clip(rendered.pixels.astype(np.int16) + jitter, 0, 255).astype(np.uint8)
        return extract_features(ImageBuffer(px)).as_array()

    config = clamped()
    for _ in range(max_iter):
        rel = probe(config) / np.maximum(target.as_array(), 1e-9)
        if np.all(np.abs(rel - 1.0) < tol):
            break
        for i, knob in enumerate(KNOB_NAMES):
            factors[knob] = factors[knob] / max(rel[i], 1e-6)
        config = clamped()
    return config


@dataclass
class GeneratedScene:
    """Handle onto an on-disk generated scene."""

    out_dir: Path
    reference: FeatureTuple
    truth: dict[str, list[BoundingBox]]
    targets: dict[int, FeatureTuple]
    configs: dict[int, KnobConfig]
    spec: SceneSpec | None = None

    @property
    def corpus(self) -> FrameCorpus:
        return FrameCorpus(self.out_dir)

    @property
    def boxes(self) -> list[BoundingBox]:
        first = next(iter(self.truth.values()), [])
        return list(first)


def generate_scene(spec: SceneSpec, out_dir: str | Path) -> GeneratedScene:
    """Render the scene to out_dir: frames, gt.jsonl and scene.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base, boxes = build_base_image(spec)
    curves = spec.effective_curves()
    rng = np.random.default_rng(spec.seed + 1)

    targets: dict[int, FeatureTuple] = {}
    configs: dict[int, KnobConfig] = {}
    achieved: dict[int, FeatureTuple] = {}
    truth: dict[str, list[BoundingBox]] = {}
    tick = SECONDS_PER_INTERVAL // spec.frames_per_interval
    probe_jitter = (
        np.random.default_rng(spec.seed + 2).integers(
            -spec.noise, spec.noise + 1, size=base.pixels.shape
        )
        if spec.noise > 0
        else None
    )
    # The reference is a frame as captured (noise included), so curve 1.0
    # means "leave the scene alone" and the stored reference matches what a
    # consumer would measure off a real neutral frame.
    if probe_jitter is not None:
        ref_px = np.clip(base.pixels.astype(np.int16) + probe_jitter, 0, 255).astype(np.uint8)
        reference = extract_features(ImageBuffer(ref_px))
    else:
        reference = extract_features(base)
    for idx, interval in enumerate(spec.intervals):
        target = FeatureTuple.from_array(
            reference.as_array() * np.array([curves[name][idx] for name in FEATURE_NAMES])
        )
        config = solve_interval_config(base, reference, target, jitter=probe_jitter)
        rendered = apply_config(base, config)
        targets[interval], configs[interval] = target, config
        if probe_jitter is not None:
            probe_px = np.clip(
                rendered.pixels.astype(np.int16) + probe_jitter, 0, 255
            ).astype(np.uint8)
            achieved[interval] = extract_features(ImageBuffer(probe_px))
        else:
            achieved[interval] = extract_features(rendered)
        for k in range(spec.frames_per_interval):
            if spec.noise > 0:
                jitter = rng.integers(-spec.noise, spec.noise + 1, size=rendered.pixels.shape)
                px = np.clip(rendered.pixels.astype(np.int16) + jitter, 0, 255).astype(np.uint8)
            else:
                px = rendered.pixels
            seconds = interval * SECONDS_PER_INTERVAL + k * tick
            h, m, s = seconds // 3600, (seconds % 3600) // 60, seconds % 60
            name = f"frame_{h:02d}{m:02d}{s:02d}_{k}.png"
            write_image(out / name, ImageBuffer(px))
            truth[name[: -len(".png")]] = list(boxes)

    boxes_to_jsonl(out / GT_FILE, truth)
    payload = {
        "schema_version": 1,
        "width": spec.width,
        "height": spec.height,
        "pattern": spec.pattern,
        "intervals": list(spec.intervals),
        "frames_per_interval": spec.frames_per_interval,
        "noise": spec.noise,
        "seed": spec.seed,
        "n_objects": spec.n_objects,
        "reference_features": list(reference.as_array()),
        "targets": {str(i): list(t.as_array()) for i, t in targets.items()},
        "achieved": {str(i): list(a.as_array()) for i, a in achieved.items()},
        "configs": {str(i): list(c.as_tuple()) for i, c in configs.items()},
        "gt_file": GT_FILE,
    }
    (out / SCENE_FILE).write_text(json.dumps(payload, indent=2) + "\n")
    log.info(
        "generated scene: %d intervals x %d frames at %dx%d",
        len(spec.intervals),
        spec.frames_per_interval,
        spec.width,
        spec.height,
    )
    return GeneratedScene(out, reference, truth, targets, configs, spec)


def load_scene(scene_dir: str | Path) -> GeneratedScene:
    """Rehydrate a generated scene from its on-disk form."""
    root = Path(scene_dir)
    meta_path = root / SCENE_FILE
    if not meta_path.is_file():
        raise FileNotFoundError(f"not a scene directory (no {SCENE_FILE}): {root}")
    obj = json.loads(meta_path.read_text())
    if obj.get("schema_version") != 1:
        raise ValueError(f"unsupported scene schema: {obj.get('schema_version')!r}")
    truth = boxes_from_jsonl(root / obj["gt_file"])
    return GeneratedScene(
        out_dir=root,
        reference=FeatureTuple(*obj["reference_features"]),
        truth=truth,
        targets={int(k): FeatureTuple(*v) for k, v in obj["targets"].items()},
        configs={int(k): KnobConfig.from_tuple(v) for k, v in obj["configs"].items()},
    )
