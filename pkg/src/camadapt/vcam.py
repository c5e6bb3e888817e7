"""Time-of-day virtual camera.

Offline, a profiling corpus of timestamped frames is reduced to two tables:
the VC table (per 15-minute interval, per tile, mean frame features) and the
delta table (per tile, how each candidate knob config scales tile features).
At runtime a frame captured at one time of day is re-rendered to look like
another by matching the needed per-tile feature ratios against the delta
table and applying the median of the twelve per-tile winning configs.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .deteval import config_grid
from .imaging import ImageBuffer, KnobConfig, apply_config, read_image
from .metrics import FeatureTuple, TILE_COLS, TILE_ROWS, extract_features, split_tiles

log = logging.getLogger(__name__)

SECONDS_PER_INTERVAL = 900
INTERVALS_PER_DAY = 24 * 3600 // SECONDS_PER_INTERVAL  # 96
TILES_PER_FRAME = TILE_COLS * TILE_ROWS  # 12
RATIO_EPS = 1e-3

FRAME_NAME_RE = re.compile(r"^frame_(\d{6})_(\d+)\.png$")

# Default per-knob factor grid for delta tables: coarse 0.25 steps keep the
# config product tractable (a calibration-fine grid would explode it).
DEFAULT_DELTA_STEP = 0.25


class MissingInterval(LookupError):
    """An interval required for rendering has no VC table entry."""


def seconds_of_day(text: str) -> int:
    """Parse "HH:MM" or "HH:MM:SS" into seconds since midnight."""
    parts = text.strip().split(":")
    if len(parts) not in (2, 3) or not all(p.isdigit() for p in parts):
        raise ValueError(f"bad time of day: {text!r} (expected HH:MM or HH:MM:SS)")
    h, m = int(parts[0]), int(parts[1])
    s = int(parts[2]) if len(parts) == 3 else 0
    if h > 23 or m > 59 or s > 59:
        raise ValueError(f"bad time of day: {text!r}")
    return h * 3600 + m * 60 + s


def interval_of(t: int | str) -> int:
    """Normalize a time of day (interval index or "HH:MM" text) to 0..95."""
    if isinstance(t, str):
        return seconds_of_day(t) // SECONDS_PER_INTERVAL
    index = int(t)
    if not 0 <= index < INTERVALS_PER_DAY:
        raise ValueError(f"interval index out of range: {t}")
    return index


@dataclass(frozen=True)
class CorpusFrame:
    path: Path
    seconds: int
    seq: int

    @property
    def interval(self) -> int:
        return self.seconds // SECONDS_PER_INTERVAL


class FrameCorpus:
    """A directory of frames named frame_<HHMMSS>_<seq>.png, grouped into
    15-minute intervals by their embedded timestamp."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"corpus directory not found: {self.root}")
        self.read_failures = 0
        by_interval: dict[int, list[CorpusFrame]] = {}
        for path in sorted(self.root.iterdir()):
            match = FRAME_NAME_RE.match(path.name)
            if not match:
                continue
            stamp = match.group(1)
            h, m, s = int(stamp[0:2]), int(stamp[2:4]), int(stamp[4:6])
            if h > 23 or m > 59 or s > 59:
                log.warning("skipping frame with bad timestamp: %s", path.name)
                continue
            frame = CorpusFrame(path, h * 3600 + m * 60 + s, int(match.group(2)))
            by_interval.setdefault(frame.interval, []).append(frame)
        self._by_interval = {
            k: sorted(v, key=lambda f: (f.seconds, f.seq)) for k, v in sorted(by_interval.items())
        }

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_interval.values())

    def intervals(self) -> list[int]:
        return list(self._by_interval)

    def frames(self, interval: int) -> list[CorpusFrame]:
        return list(self._by_interval.get(interval, []))

    def _read(self, frame: CorpusFrame) -> ImageBuffer | None:
        try:
            img = read_image(frame.path)
        except Exception as exc:
            self.read_failures += 1
            log.warning("skipping unreadable frame %s: %s", frame.path.name, exc)
            return None
        return img.with_meta(frame_id=frame.path.stem)

    def load_frames(self, interval: int) -> list[ImageBuffer]:
        """All readable frames of one interval; unreadable ones are skipped
        with a warning and counted in read_failures."""
        images = (self._read(f) for f in self.frames(interval))
        return [img for img in images if img is not None]

    def sample_frame(self, interval: int, rng: np.random.Generator) -> ImageBuffer | None:
        """One random readable frame of the interval (seeded, deterministic)."""
        frames = self.frames(interval)
        if not frames:
            return None
        start = int(rng.integers(0, len(frames)))
        for offset in range(len(frames)):
            img = self._read(frames[(start + offset) % len(frames)])
            if img is not None:
                return img
        return None


class VcTable:
    """Per interval, per tile, the mean FeatureTuple of the profiling corpus.

    Intervals absent from the corpus are explicitly marked missing: they are
    listed in the JSON form and rejected at render time.
    """

    SCHEMA_VERSION = 1

    def __init__(self, entries: Mapping[int, Sequence[FeatureTuple]]):
        self.entries: dict[int, list[FeatureTuple]] = {}
        for interval, tiles in entries.items():
            tiles = list(tiles)
            if len(tiles) != TILES_PER_FRAME:
                raise ValueError(
                    f"interval {interval}: expected {TILES_PER_FRAME} tiles, got {len(tiles)}"
                )
            self.entries[int(interval)] = tiles

    def intervals(self) -> list[int]:
        return sorted(self.entries)

    def missing_intervals(self) -> list[int]:
        return [i for i in range(INTERVALS_PER_DAY) if i not in self.entries]

    def has(self, interval: int) -> bool:
        return interval in self.entries

    def tiles(self, interval: int) -> list[FeatureTuple]:
        if interval not in self.entries:
            raise MissingInterval(f"no VC entry for interval {interval}")
        return self.entries[interval]

    def to_json_obj(self) -> dict:
        return {
            "schema_version": self.SCHEMA_VERSION,
            "intervals_per_day": INTERVALS_PER_DAY,
            "tiles_per_frame": TILES_PER_FRAME,
            "missing": self.missing_intervals(),
            "entries": {
                str(interval): [list(t.as_array()) for t in tiles]
                for interval, tiles in sorted(self.entries.items())
            },
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_obj(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> VcTable:
        obj = json.loads(Path(path).read_text())
        if obj.get("schema_version") != cls.SCHEMA_VERSION:
            raise ValueError(f"unsupported VC table schema: {obj.get('schema_version')!r}")
        entries = {
            int(interval): [FeatureTuple(*values) for values in tiles]
            for interval, tiles in obj["entries"].items()
        }
        return cls(entries)


def build_vc_table(corpus: FrameCorpus) -> VcTable:
    """Average per-tile features over every readable frame of each interval."""
    entries: dict[int, list[FeatureTuple]] = {}
    for interval in corpus.intervals():
        frames = corpus.load_frames(interval)
        if not frames:
            log.warning("interval %d has no readable frames; marked missing", interval)
            continue
        sums = np.zeros((TILES_PER_FRAME, 4), dtype=np.float64)
        for img in frames:
            for i, tile in enumerate(split_tiles(img)):
                sums[i] += extract_features(tile).as_array()
        means = sums / len(frames)
        entries[interval] = [FeatureTuple.from_array(row) for row in means]
    return VcTable(entries)


@dataclass(frozen=True)
class DeltaEntry:
    """How one knob config scales one tile's features (rendered / original)."""

    delta: tuple[float, float, float, float]
    config: KnobConfig


class DeltaTable:
    """Per tile, one DeltaEntry per candidate config."""

    SCHEMA_VERSION = 1

    def __init__(self, tiles: Sequence[Sequence[DeltaEntry]]):
        tiles = [list(entries) for entries in tiles]
        if len(tiles) != TILES_PER_FRAME:
            raise ValueError(f"expected {TILES_PER_FRAME} tile entry lists, got {len(tiles)}")
        counts = {len(entries) for entries in tiles}
        if len(counts) != 1:
            raise ValueError("tiles disagree on config count")
        for entries in tiles:
            for entry in entries:
                if any(not np.isfinite(d) or d <= 0 for d in entry.delta):
                    raise ValueError(f"non-positive delta component in {entry}")
        self.tiles = tiles

    @property
    def n_configs(self) -> int:
        return len(self.tiles[0])

    def to_json_obj(self) -> dict:
        return {
            "schema_version": self.SCHEMA_VERSION,
            "tiles_per_frame": TILES_PER_FRAME,
            "tiles": [
                [{"delta": list(e.delta), "config": list(e.config.as_tuple())} for e in entries]
                for entries in self.tiles
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_obj(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> DeltaTable:
        obj = json.loads(Path(path).read_text())
        if obj.get("schema_version") != cls.SCHEMA_VERSION:
            raise ValueError(f"unsupported delta table schema: {obj.get('schema_version')!r}")
        tiles = [
            [
                DeltaEntry(tuple(e["delta"]), KnobConfig.from_tuple(e["config"]))
                for e in entries
            ]
            for entries in obj["tiles"]
        ]
        return cls(tiles)


def default_delta_grids(step: float = DEFAULT_DELTA_STEP) -> dict[str, list[float]]:
    """Factor grids for delta generation: knob ranges sampled at `step`,
    always including 1.0 so the identity config is representable."""
    from .calibration import knob_grid
    from .imaging import KNOB_NAMES

    return {knob: sorted(set(knob_grid(knob, step)) | {1.0}) for knob in KNOB_NAMES}


def _guarded_ratio(rendered: np.ndarray, original: np.ndarray) -> np.ndarray:
    """Component ratios with both sides clamped away from zero."""
    return np.maximum(rendered, RATIO_EPS) / np.maximum(original, RATIO_EPS)


def build_delta_table(
    corpus: FrameCorpus,
    grids: Mapping[str, Sequence[float]] | None = None,
    seed: int = 0,
) -> DeltaTable:
    """Measure per-tile feature ratios for every config in the grid product.

    One random frame is sampled per interval (seeded); the stored delta is
    the per-component median across those samples.
    """
    if grids is None:
        grids = default_delta_grids()
    configs = config_grid(grids)
    rng = np.random.default_rng(seed)
    samples: list[ImageBuffer] = []
    for interval in corpus.intervals():
        img = corpus.sample_frame(interval, rng)
        if img is not None:
            samples.append(img)
    if not samples:
        raise ValueError("corpus has no readable frames to sample")

    originals = [
        np.array([extract_features(t).as_array() for t in split_tiles(img)]) for img in samples
    ]
    # ratios[config][frame] -> (12, 4)
    table: list[list[DeltaEntry]] = [[] for _ in range(TILES_PER_FRAME)]
    for config in configs:
        per_frame = np.empty((len(samples), TILES_PER_FRAME, 4), dtype=np.float64)
        for k, img in enumerate(samples):
            rendered = apply_config(img, config)
            measured = np.array(
                [extract_features(t).as_array() for t in split_tiles(rendered)]
            )
            per_frame[k] = _guarded_ratio(measured, originals[k])
        medians = np.median(per_frame, axis=0)
        for i in range(TILES_PER_FRAME):
            table[i].append(DeltaEntry(tuple(float(v) for v in medians[i]), config))
    return DeltaTable(table)


@dataclass(frozen=True)
class RenderDiagnostics:
    """Per-tile match quality for one render_to_time call."""

    tile_configs: list[KnobConfig]
    l1_distances: list[float]
    config: KnobConfig


def choose_render_config(
    frame: ImageBuffer, target_interval: int, vc: VcTable, dt: DeltaTable
) -> RenderDiagnostics:
    """Pick the median of the per-tile nearest-delta configs.

    For each tile the needed delta is vc[target] / live tile features; the
    winning entry minimizes the L1 distance, ties broken by the
    lexicographically smallest config.
    """
    targets = vc.tiles(target_interval)
    tiles = split_tiles(frame)
    chosen: list[KnobConfig] = []
    distances: list[float] = []
    for i, tile in enumerate(tiles):
        needed = _guarded_ratio(targets[i].as_array(), extract_features(tile).as_array())
        best_key: tuple | None = None
        best_config: KnobConfig | None = None
        for entry in dt.tiles[i]:
            l1 = float(np.abs(np.asarray(entry.delta) - needed).sum())
            key = (l1, entry.config.as_tuple())
            if best_key is None or key < best_key:
                best_key, best_config = key, entry.config
        assert best_config is not None and best_key is not None
        chosen.append(best_config)
        distances.append(best_key[0])
    stacked = np.array([c.as_tuple() for c in chosen])
    median = KnobConfig.from_tuple(np.median(stacked, axis=0))
    log.debug(
        "render config %s; worst tile L1 %.3f", median.as_tuple(), max(distances)
    )
    return RenderDiagnostics(chosen, distances, median)


def render_to_time(
    frame: ImageBuffer,
    t1: int | str,
    t2: int | str,
    vc: VcTable,
    dt: DeltaTable,
) -> ImageBuffer:
    """Re-render a frame captured at t1 to look like the scene at t2.

    Both intervals must be present in the VC table.  The frame is rendered
    exactly once, with the median config across tiles.
    """
    source, target = interval_of(t1), interval_of(t2)
    for interval in (source, target):
        if not vc.has(interval):
            raise MissingInterval(f"no VC entry for interval {interval}")
    diag = choose_render_config(frame, target, vc, dt)
    return apply_config(frame, diag.config)
