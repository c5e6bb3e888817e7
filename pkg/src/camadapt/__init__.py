"""Camera parameter auto-adaptation for video analytics.

Virtual knob transforms, SSIM-based camera calibration, a time-of-day
virtual camera, detection-quality estimation, and a SARSA tuner, with a CLI
harness tying them together.
"""

from .calibration import KnobMap, SyntheticCamera, calibrate, knob_grid
from .deteval import (
    BoundingBox,
    EvalResult,
    SyntheticDetector,
    config_grid,
    evaluate,
    find_best_config,
    iou,
    peaked_response,
    sweep_configs,
)
from .estimator import (
    AquaGate,
    ExternalEstimator,
    OracleEstimator,
    ProxyEstimator,
    QualityEstimate,
    QualityEstimator,
)
from .harness import AbReport, DayCycleEnv, ab_evaluate, day_stream
from .imaging import ImageBuffer, KnobConfig, KNOB_NAMES, KNOB_RANGES, apply_config, apply_knob
from .metrics import FeatureTuple, extract_features, split_tiles, ssim
from .rl import ACTIONS, NOOP, Action, AgentConfig, EpisodeResult, QTable, run_episode
from .scene import SceneSpec, generate_scene, hourly_scene_spec, load_scene, tiny_scene_spec
from .vcam import (
    DeltaTable,
    FrameCorpus,
    VcTable,
    build_delta_table,
    build_vc_table,
    interval_of,
    render_to_time,
)

__version__ = "0.1.0"

__all__ = [
    "ImageBuffer",
    "KnobConfig",
    "KNOB_NAMES",
    "KNOB_RANGES",
    "apply_config",
    "apply_knob",
    "FeatureTuple",
    "extract_features",
    "split_tiles",
    "ssim",
    "KnobMap",
    "SyntheticCamera",
    "calibrate",
    "knob_grid",
    "BoundingBox",
    "EvalResult",
    "SyntheticDetector",
    "config_grid",
    "evaluate",
    "find_best_config",
    "iou",
    "peaked_response",
    "sweep_configs",
    "AquaGate",
    "ExternalEstimator",
    "OracleEstimator",
    "ProxyEstimator",
    "QualityEstimate",
    "QualityEstimator",
    "AbReport",
    "DayCycleEnv",
    "ab_evaluate",
    "day_stream",
    "ACTIONS",
    "NOOP",
    "Action",
    "AgentConfig",
    "EpisodeResult",
    "QTable",
    "run_episode",
    "SceneSpec",
    "generate_scene",
    "hourly_scene_spec",
    "load_scene",
    "tiny_scene_spec",
    "DeltaTable",
    "FrameCorpus",
    "VcTable",
    "build_delta_table",
    "build_vc_table",
    "interval_of",
    "render_to_time",
    "__version__",
]
