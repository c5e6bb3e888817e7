"""SARSA knob tuner.

The agent walks the four virtual knobs in fixed-size steps, observes frame
quality through a pluggable estimator, and learns action values with the
on-policy SARSA update.  States combine discretized knob positions with
binned frame features; rewards are rolling differences of successive
quality estimates.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .estimator import EstimatorUnavailable, QualityEstimator
from .imaging import KNOB_NAMES, KNOB_RANGES, ImageBuffer, KnobConfig
from .metrics import FeatureTuple, extract_features

log = logging.getLogger(__name__)

FLAG_ESTIMATOR_UNAVAILABLE = "estimator_unavailable"


@dataclass(frozen=True)
class Action:
    """One agent action: nudge a knob up or down, or hold everything."""

    knob: str | None
    direction: int

    def __post_init__(self) -> None:
        if self.knob is None:
            if self.direction != 0:
                raise ValueError("the no-op action has no direction")
        elif self.knob not in KNOB_NAMES or self.direction not in (-1, 1):
            raise ValueError(f"bad action: {self.knob!r} / {self.direction}")

    @property
    def name(self) -> str:
        if self.knob is None:
            return "noop"
        return self.knob + ("+" if self.direction > 0 else "-")


NOOP = Action(None, 0)

# Canonical action order: no-op first, then +/- per knob.  Ties in argmax
# resolve to the earliest action in this tuple, so an untrained table holds.
ACTIONS: tuple[Action, ...] = (NOOP,) + tuple(
    Action(knob, direction) for knob in KNOB_NAMES for direction in (1, -1)
)

_ACTION_BY_NAME = {action.name: action for action in ACTIONS}


def action_from_name(name: str) -> Action:
    try:
        return _ACTION_BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown action name: {name!r}") from None


def revert(action: Action) -> Action:
    """The opposite nudge; the no-op reverts to itself."""
    if action.knob is None:
        return NOOP
    return Action(action.knob, -action.direction)


def knob_step(knob: str, n_steps: int = 10) -> float:
    lo, hi = KNOB_RANGES[knob]
    return (hi - lo) / n_steps


def apply_action(config: KnobConfig, action: Action, n_steps: int = 10) -> KnobConfig:
    """Nudge one knob by its step size, clamped to the legal knob range."""
    if action.knob is None:
        return config
    lo, hi = KNOB_RANGES[action.knob]
    value = config.value_of(action.knob) + action.direction * knob_step(action.knob, n_steps)
    return config.with_value(action.knob, min(max(value, lo), hi))


def knob_levels(config: KnobConfig, n_steps: int = 10) -> tuple[int, ...]:
    """Discretize each knob onto 0..n_steps levels across its range."""
    levels = []
    for knob in KNOB_NAMES:
        lo, _ = KNOB_RANGES[knob]
        raw = (config.value_of(knob) - lo) / knob_step(knob, n_steps)
        levels.append(min(max(int(round(raw)), 0), n_steps))
    return tuple(levels)


class FeatureBinner:
    """Equal-width feature bins fitted on warm-up frames.

    A feature with zero observed spread collapses into bin 0.
    """

    def __init__(self, lows: Sequence[float], highs: Sequence[float], n_bins: int = 4):
        if n_bins < 1:
            raise ValueError("need at least one bin")
        self.lows = np.asarray(lows, dtype=np.float64)
        self.highs = np.asarray(highs, dtype=np.float64)
        if self.lows.shape != (4,) or self.highs.shape != (4,):
            raise ValueError("expected one low/high per feature")
        if np.any(self.highs < self.lows):
            raise ValueError("bin range is inverted")
        self.n_bins = n_bins

    @classmethod
    def fit(cls, samples: Iterable[FeatureTuple], n_bins: int = 4) -> FeatureBinner:
        rows = np.array([s.as_array() for s in samples], dtype=np.float64)
        if rows.size == 0:
            raise ValueError("cannot fit bins on zero samples")
        return cls(rows.min(axis=0), rows.max(axis=0), n_bins)

    def encode(self, features: FeatureTuple) -> tuple[int, ...]:
        values = features.as_array()
        spans = self.highs - self.lows
        bins = []
        for value, lo, span in zip(values, self.lows, spans):
            if span <= 0.0:
                bins.append(0)
                continue
            index = int(math.floor((value - lo) / span * self.n_bins))
            bins.append(min(max(index, 0), self.n_bins - 1))
        return tuple(bins)

    def to_json_obj(self) -> dict:
        return {
            "lows": [float(v) for v in self.lows],
            "highs": [float(v) for v in self.highs],
            "n_bins": self.n_bins,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> FeatureBinner:
        return cls(obj["lows"], obj["highs"], int(obj["n_bins"]))


class StateCoder:
    """Encode (knob config, frame features) into a discrete state tuple.

    The state is 8 integers: four knob levels followed by four feature bins.
    """

    def __init__(self, binner: FeatureBinner, n_knob_steps: int = 10):
        self.binner = binner
        self.n_knob_steps = n_knob_steps

    def encode(self, config: KnobConfig, features: FeatureTuple) -> tuple[int, ...]:
        return knob_levels(config, self.n_knob_steps) + self.binner.encode(features)


StateKey = tuple[int, ...]


class QTable:
    """Sparse action-value table with a pinned JSON form."""

    SCHEMA_VERSION = 1

    def __init__(self) -> None:
        self._q: dict[StateKey, dict[str, float]] = {}

    def q(self, state: StateKey, action: Action) -> float:
        return self._q.get(state, {}).get(action.name, 0.0)

    def set(self, state: StateKey, action: Action, value: float) -> None:
        self._q.setdefault(state, {})[action.name] = float(value)

    def best_action(self, state: StateKey) -> Action:
        """Argmax over the canonical action order; ties keep the earliest."""
        best = ACTIONS[0]
        best_q = self.q(state, best)
        for action in ACTIONS[1:]:
            value = self.q(state, action)
            if value > best_q:
                best, best_q = action, value
        return best

    def max_q(self, state: StateKey) -> float:
        return self.q(state, self.best_action(state))

    @property
    def states(self) -> list[StateKey]:
        return list(self._q)

    def to_json_obj(self) -> dict:
        return {
            "schema_version": self.SCHEMA_VERSION,
            "q": {
                ",".join(str(v) for v in state): dict(actions)
                for state, actions in sorted(self._q.items())
            },
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_obj(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> QTable:
        obj = json.loads(Path(path).read_text())
        if obj.get("schema_version") != cls.SCHEMA_VERSION:
            raise ValueError(f"unsupported q-table schema: {obj.get('schema_version')!r}")
        table = cls()
        for key, actions in obj["q"].items():
            state = tuple(int(v) for v in key.split(","))
            for name, value in actions.items():
                table.set(state, action_from_name(name), value)
        return table


def q_update(
    table: QTable,
    state: StateKey,
    action: Action,
    reward: float,
    next_state: StateKey,
    next_action: Action,
    alpha: float,
    gamma: float,
) -> float:
    """One SARSA step: Q += alpha * (r + gamma * Q(s', a') - Q).  Returns the
    updated Q(s, a)."""
    if not math.isfinite(reward):
        raise ValueError(f"reward must be finite, got {reward}")
    current = table.q(state, action)
    target = reward + gamma * table.q(next_state, next_action)
    updated = current + alpha * (target - current)
    table.set(state, action, updated)
    return updated


@dataclass(frozen=True)
class AgentConfig:
    """SARSA hyperparameters.

    Beware: epsilon here is NOT the usual epsilon-greedy probability of
    exploring.  The policy draws u ~ U[0, 1) and explores when u >= epsilon,
    so epsilon is (one minus) the exploration rate: epsilon=1.0 never takes
    a random action and epsilon=0.0 always does.  This matches the tuner's
    original control loop and is kept deliberately.
    """

    alpha: float = 0.5
    gamma: float = 0.9
    epsilon: float = 1.0
    n_feature_bins: int = 4
    n_knob_steps: int = 10
    seed: int = 0
    noop_only: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.n_feature_bins < 1 or self.n_knob_steps < 1:
            raise ValueError("bins and knob steps must be positive")


def choose_action(
    table: QTable,
    state: StateKey,
    prev_action: Action,
    prev_reward: float,
    agent: AgentConfig,
    rng: np.random.Generator,
) -> Action:
    """Pick the next action from the greedy-with-momentum policy.

    Order of precedence: forced no-op (A/A runs), the inverted-epsilon
    random draw, revert after a negative reward, repeat after a reward that
    beats the best known value, otherwise argmax.
    """
    if agent.noop_only:
        return NOOP
    if rng.random() >= agent.epsilon:
        return ACTIONS[int(rng.integers(0, len(ACTIONS)))]
    if prev_reward < 0.0:
        return revert(prev_action)
    best = table.best_action(state)
    if prev_reward > table.q(state, best):
        return prev_action
    return best


class TunablePipeline(Protocol):
    """Anything the agent can drive: report knobs, accept knobs, emit frames."""

    def knob_config(self) -> KnobConfig: ...
    def set_knob_config(self, config: KnobConfig) -> None: ...
    def produce_frame(self) -> ImageBuffer: ...


class CameraEnv:
    """Drive a physical or synthetic camera through a calibrated knob map.

    Knob values are translated to the nearest mapped camera parameter value;
    knobs absent from the map stay untouched and read back as 1.0.
    """

    def __init__(self, camera, knob_map) -> None:
        self.camera = camera
        self.knob_map = knob_map
        self._params = [p for p in KNOB_NAMES if p in knob_map.params()]
        if not self._params:
            raise ValueError("knob map covers none of the virtual knobs")

    def knob_config(self) -> KnobConfig:
        factors = {
            p: self.knob_map.factor_for(p, self.camera.get_param(p)) for p in self._params
        }
        return KnobConfig(**factors)

    def set_knob_config(self, config: KnobConfig) -> None:
        for p in self._params:
            self.camera.set_param(p, self.knob_map.nearest_camera_value(p, config.value_of(p)))

    def produce_frame(self) -> ImageBuffer:
        return self.camera.capture()


@dataclass(frozen=True)
class TraceStep:
    """One row of the episode trace."""

    step: int
    state: StateKey
    action: str
    reward: float
    q_value: float
    quality: float | None
    flag: str = ""


@dataclass
class EpisodeResult:
    steps: list[TraceStep] = field(default_factory=list)
    final_config: KnobConfig = field(default_factory=KnobConfig)

    @property
    def qualities(self) -> list[float]:
        return [s.quality for s in self.steps if s.quality is not None]


def fit_state_coder(
    env: TunablePipeline, agent: AgentConfig, warmup_frames: int = 16
) -> StateCoder:
    """Fit feature bins by watching warm-up frames without touching knobs."""
    if warmup_frames < 1:
        raise ValueError("need at least one warm-up frame")
    samples = [extract_features(env.produce_frame()) for _ in range(warmup_frames)]
    return StateCoder(FeatureBinner.fit(samples, agent.n_feature_bins), agent.n_knob_steps)


def run_episode(
    env: TunablePipeline,
    estimator: QualityEstimator,
    table: QTable,
    agent: AgentConfig,
    steps: int,
    coder: StateCoder | None = None,
    warmup_frames: int = 16,
    rng: np.random.Generator | None = None,
) -> EpisodeResult:
    """Run one SARSA episode against a live pipeline.

    Rewards are differences of successive quality estimates.  When the
    estimator is unavailable the step is flagged, the reward is zero and
    the last good estimate is kept for the next difference.
    """
    if rng is None:
        rng = np.random.default_rng(agent.seed)
    if coder is None:
        coder = fit_state_coder(env, agent, warmup_frames)

    def observe() -> tuple[StateKey, float | None]:
        frame = env.produce_frame()
        features = extract_features(frame)
        try:
            quality: float | None = estimator.estimate(frame).value
        except EstimatorUnavailable as exc:
            log.warning("estimator unavailable: %s", exc)
            quality = None
        return coder.encode(env.knob_config(), features), quality

    result = EpisodeResult()
    state, quality = observe()
    prev_estimate = quality if quality is not None else 0.0
    action = choose_action(table, state, NOOP, 0.0, agent, rng)

    for step in range(steps):
        env.set_knob_config(apply_action(env.knob_config(), action, agent.n_knob_steps))
        next_state, quality = observe()
        if quality is None:
            reward, flag = 0.0, FLAG_ESTIMATOR_UNAVAILABLE
        else:
            reward, flag = quality - prev_estimate, ""
            prev_estimate = quality
        next_action = choose_action(table, next_state, action, reward, agent, rng)
        q_value = q_update(
            table, state, action, reward, next_state, next_action, agent.alpha, agent.gamma
        )
        result.steps.append(
            TraceStep(step, state, action.name, reward, q_value, quality, flag)
        )
        state, action = next_state, next_action

    result.final_config = env.knob_config()
    return result
