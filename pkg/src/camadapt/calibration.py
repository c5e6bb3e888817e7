"""Camera parameter calibration against the virtual knobs.

A camera exposes opaque integer parameters in [0, 100].  Calibration sweeps
one parameter, captures a frame per setting, and grid-searches the matching
virtual knob factor by channel-mean SSIM against a frame captured at the
default setting.  The result is a KnobMap: per parameter, rows of
(camera_value, virtual_factor, best_ssim).
"""

from __future__ import annotations

import json
import logging
import math
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .imaging import (
    KNOB_NAMES,
    KNOB_RANGES,
    ImageBuffer,
    KnobConfig,
    apply_config,
    apply_knob,
    png_from_bytes,
)
from .metrics import ssim

log = logging.getLogger(__name__)

# Camera parameter sweep used when the caller does not pass one.
DEFAULT_CAMERA_SWEEP = tuple(range(0, 101, 10))

# Grid resolution for the virtual factor search.
DEFAULT_GRID_STEP = 0.05

# SSIM spread below this means the scene cannot distinguish factors.
LOW_CONFIDENCE_SPREAD = 1e-6

PARAM_MIN, PARAM_MAX = 0, 100


def _channel_ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """SSIM averaged over the three color channels.

    Luma SSIM cannot see color_saturation: the saturation blend moves every
    channel toward the pixel's own luma, which leaves luma itself unchanged,
    so frames differing only in saturation look identical to it.  Scoring
    each channel as its own grayscale plane keeps every knob observable.
    """
    total = 0.0
    for c in range(3):
        plane_a = np.repeat(a.pixels[:, :, c : c + 1], 3, axis=2)
        plane_b = np.repeat(b.pixels[:, :, c : c + 1], 3, axis=2)
        total += ssim(ImageBuffer(plane_a), ImageBuffer(plane_b))
    return total / 3.0


class CameraError(RuntimeError):
    """A camera operation (set/get/capture) failed."""


class CameraDevice(Protocol):
    def set_param(self, name: str, value: int) -> None: ...

    def get_param(self, name: str) -> int: ...

    def capture(self) -> ImageBuffer: ...


def knob_grid(param: str, step: float = DEFAULT_GRID_STEP) -> list[float]:
    """Inclusive factor grid over the knob's sweep range."""
    if param not in KNOB_RANGES:
        raise ValueError(f"unknown knob {param!r}")
    if step <= 0:
        raise ValueError("grid step must be positive")
    lo, hi = KNOB_RANGES[param]
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 10) for k in range(count)]


# ---------------------------------------------------------------------------
# Hidden response maps for the synthetic camera (value in [0, 100] -> factor).
# ---------------------------------------------------------------------------


def linear_map(lo: float, hi: float) -> Callable[[int], float]:
    return lambda v: lo + (hi - lo) * v / 100.0


def neutral_linear_map(lo: float, hi: float) -> Callable[[int], float]:
    """Piecewise linear through (0, lo), (50, 1.0), (100, hi)."""

    def fn(v: int) -> float:
        if v <= 50:
            return lo + (1.0 - lo) * v / 50.0
        return 1.0 + (hi - 1.0) * (v - 50) / 50.0

    return fn


def convex_map(lo: float, hi: float) -> Callable[[int], float]:
    return lambda v: lo + (hi - lo) * (v / 100.0) ** 2


def concave_map(lo: float, hi: float) -> Callable[[int], float]:
    return lambda v: lo + (hi - lo) * math.sqrt(v / 100.0)


HIDDEN_MAP_PRESETS = {
    "linear": linear_map,
    "neutral": neutral_linear_map,
    "convex": convex_map,
    "concave": concave_map,
}


def _check_param_value(value: int) -> int:
    if not isinstance(value, (int,)) or isinstance(value, bool):
        raise ValueError(f"camera parameter value must be an int, got {value!r}")
    if not PARAM_MIN <= value <= PARAM_MAX:
        raise ValueError(
            f"camera parameter value must be in [{PARAM_MIN}, {PARAM_MAX}], got {value}"
        )
    return value


class SyntheticCamera:
    """A camera whose parameters drive hidden monotone factor maps.

    capture() renders the base scene through the virtual knobs at the factors
    the hidden maps assign to the current parameter values.  An optional
    per-set latency models slow vendor APIs for timing experiments.
    """

    def __init__(
        self,
        base_scene: ImageBuffer,
        hidden_maps: dict[str, Callable[[int], float]] | None = None,
        defaults: dict[str, int] | None = None,
        set_latency_s: float = 0.0,
    ) -> None:
        self.base_scene = base_scene
        self.hidden_maps = {
            name: neutral_linear_map(*KNOB_RANGES[name]) for name in KNOB_NAMES
        }
        if hidden_maps:
            for name in hidden_maps:
                if name not in KNOB_NAMES:
                    raise ValueError(f"unknown camera parameter {name!r}")
            self.hidden_maps.update(hidden_maps)
        self._params = {name: 50 for name in KNOB_NAMES}
        if defaults:
            for name, value in defaults.items():
                if name not in KNOB_NAMES:
                    raise ValueError(f"unknown camera parameter {name!r}")
                self._params[name] = _check_param_value(value)
        self.set_latency_s = set_latency_s
        self.set_count = 0
        self.capture_count = 0

    def set_param(self, name: str, value: int) -> None:
        if name not in self._params:
            raise ValueError(f"unknown camera parameter {name!r}")
        self._params[name] = _check_param_value(value)
        self.set_count += 1
        if self.set_latency_s > 0:
            time.sleep(self.set_latency_s)

    def get_param(self, name: str) -> int:
        if name not in self._params:
            raise ValueError(f"unknown camera parameter {name!r}")
        return self._params[name]

    def current_config(self) -> KnobConfig:
        return KnobConfig(
            **{name: self.hidden_maps[name](self._params[name]) for name in KNOB_NAMES}
        )

    def capture(self) -> ImageBuffer:
        self.capture_count += 1
        return apply_config(self.base_scene, self.current_config())


class HttpCamera:
    """Generic HTTP camera adapter: URL templates, no vendor protocol.

    set/get templates receive {param} and (for set) {value} via str.format;
    the capture URL returns a PNG body.  Any transport or status failure is
    raised as CameraError.
    """

    def __init__(
        self,
        set_url: str,
        get_url: str,
        capture_url: str,
        set_method: str = "GET",
        timeout: float = 5.0,
    ) -> None:
        self.set_url = set_url
        self.get_url = get_url
        self.capture_url = capture_url
        self.set_method = set_method
        self.timeout = timeout

    def _request(self, url: str, method: str = "GET") -> bytes:
        req = urllib.request.Request(url, method=method)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                if resp.status != 200:
                    raise CameraError(f"{url}: HTTP {resp.status}")
                return resp.read()
        except (urllib.error.URLError, OSError) as exc:
            raise CameraError(f"{url}: {exc}") from exc

    def set_param(self, name: str, value: int) -> None:
        _check_param_value(value)
        self._request(
            self.set_url.format(param=name, value=value), method=self.set_method
        )

    def get_param(self, name: str) -> int:
        body = self._request(self.get_url.format(param=name))
        try:
            return int(body.strip())
        except ValueError as exc:
            raise CameraError(f"unparseable parameter response: {body!r}") from exc

    def capture(self) -> ImageBuffer:
        body = self._request(self.capture_url)
        try:
            return png_from_bytes(body)
        except Exception as exc:
            raise CameraError(f"capture did not return a decodable image: {exc}") from exc


# ---------------------------------------------------------------------------
# KnobMap.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnobMapEntry:
    camera_value: int
    factor: float
    ssim: float
    low_confidence: bool = False


@dataclass
class KnobMap:
    """Per camera parameter: calibrated (camera_value, factor, ssim) rows.

    The low-confidence flag is a calibration-time diagnostic; the JSON form
    keeps only the pinned triples.
    """

    entries: dict[str, list[KnobMapEntry]] = field(default_factory=dict)

    def params(self) -> list[str]:
        return sorted(self.entries)

    def merge(self, other: "KnobMap") -> "KnobMap":
        merged = dict(self.entries)
        merged.update(other.entries)
        return KnobMap(merged)

    def low_confidence_params(self) -> list[str]:
        return sorted(
            name
            for name, rows in self.entries.items()
            if any(row.low_confidence for row in rows)
        )

    def _rows(self, param: str) -> list[KnobMapEntry]:
        if param not in self.entries:
            raise KeyError(f"no calibration for parameter {param!r}")
        return self.entries[param]

    def factor_for(self, param: str, camera_value: int) -> float:
        """Factor at a camera value, linearly interpolated between rows."""
        rows = self._rows(param)
        if camera_value <= rows[0].camera_value:
            return rows[0].factor
        if camera_value >= rows[-1].camera_value:
            return rows[-1].factor
        for left, right in zip(rows, rows[1:]):
            if left.camera_value <= camera_value <= right.camera_value:
                span = right.camera_value - left.camera_value
                t = (camera_value - left.camera_value) / span
                return left.factor + t * (right.factor - left.factor)
        raise AssertionError("unreachable")

    def nearest_camera_value(self, param: str, factor: float) -> int:
        rows = self._rows(param)
        best = min(rows, key=lambda r: (abs(r.factor - factor), r.camera_value))
        return best.camera_value

    def to_json_obj(self) -> dict:
        return {
            name: [[row.camera_value, row.factor, row.ssim] for row in rows]
            for name, rows in self.entries.items()
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "KnobMap":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        entries = {}
        for name, rows in obj.items():
            if name not in KNOB_NAMES:
                raise ValueError(f"knob map references unknown parameter {name!r}")
            entries[name] = [
                KnobMapEntry(int(cv), float(factor), float(score))
                for cv, factor, score in rows
            ]
        return cls(entries)


# ---------------------------------------------------------------------------
# Calibration sweep.
# ---------------------------------------------------------------------------


def calibrate(
    cam: CameraDevice,
    param: str,
    camera_values: tuple[int, ...] = DEFAULT_CAMERA_SWEEP,
    grid: list[float] | None = None,
) -> KnobMap:
    """Sweep one camera parameter and fit virtual factors by channel-mean SSIM.

    The default frame is captured once per call, so recovered factors are
    relative to the camera's default appearance.  The swept parameter is
    restored afterward.  SSIM ties prefer the factor nearest 1.0 (the least
    distorting explanation); a flat SSIM profile marks the row low-confidence.
    """
    if param not in KNOB_NAMES:
        raise ValueError(f"unknown knob {param!r}")
    if grid is None:
        grid = knob_grid(param)
    if not grid:
        raise ValueError("factor grid must not be empty")

    original = cam.get_param(param)
    default_img = _capture(cam, param, "default")

    # The candidates depend only on the default frame; build them once.
    candidates = [(d, apply_knob(default_img, param, d)) for d in grid]

    rows = []
    try:
        for value in camera_values:
            _check_param_value(value)
            cam.set_param(param, value)
            captured = _capture(cam, param, value)
            scores = [(d, _channel_ssim(captured, virtual)) for d, virtual in candidates]
            best_score = max(score for _, score in scores)
            worst_score = min(score for _, score in scores)
            tied = [d for d, score in scores if score == best_score]
            factor = min(tied, key=lambda d: (abs(d - 1.0), d))
            low_confidence = (best_score - worst_score) < LOW_CONFIDENCE_SPREAD
            if low_confidence:
                log.warning(
                    "calibration of %s at %s is low-confidence "
                    "(SSIM spread %.2e; degenerate scene?)",
                    param,
                    value,
                    best_score - worst_score,
                )
            rows.append(KnobMapEntry(value, factor, best_score, low_confidence))
    finally:
        cam.set_param(param, original)

    rows.sort(key=lambda r: r.camera_value)
    return KnobMap({param: rows})


def _capture(cam: CameraDevice, param: str, value) -> ImageBuffer:
    try:
        return cam.capture()
    except CameraError:
        raise
    except Exception as exc:
        raise CameraError(f"capture failed while sweeping {param}={value}: {exc}") from exc


__all__ = [
    "CameraDevice",
    "CameraError",
    "DEFAULT_CAMERA_SWEEP",
    "HIDDEN_MAP_PRESETS",
    "HttpCamera",
    "KnobMap",
    "KnobMapEntry",
    "SyntheticCamera",
    "calibrate",
    "concave_map",
    "convex_map",
    "knob_grid",
    "linear_map",
    "neutral_linear_map",
]
