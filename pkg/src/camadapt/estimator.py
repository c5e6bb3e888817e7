"""Analytics quality estimation and the frame drop gate.

A quality estimator maps a frame to a scalar in [0, 1].  Three flavors are
provided: an oracle backed by a detector plus ground truth, a proxy that
scores distance from an ideal feature tuple, and a client for an external
estimator service speaking a small length-prefixed protocol.
"""

from __future__ import annotations

import logging
import socket
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .deteval import BoundingBox, Detector, MissingSceneDescriptor, evaluate
from .imaging import ImageBuffer, png_bytes
from .metrics import FeatureTuple, extract_features

log = logging.getLogger(__name__)

LABEL_MAX = 200


class EstimatorUnavailable(RuntimeError):
    """The estimator could not score the frame (transport, timeout, garbage)."""


@dataclass(frozen=True)
class QualityEstimate:
    """A quality score in [0, 1], optionally backed by an integer class label."""

    value: float
    class_label: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.value <= 1.0):
            raise ValueError(f"estimate value must be in [0, 1], got {self.value}")


class QualityEstimator(Protocol):
    def estimate(self, img: ImageBuffer) -> QualityEstimate: ...


def detection_label(map_score: float, mean_tp_iou: float) -> int:
    """Collapse detection quality into one label: round(mAP + IoU * 100).

    Inputs are validated (mAP on 0-100, IoU on 0-1); the result is clamped
    to [0, 200].  Rounding is round-half-to-even, matching the write-back
    convention used elsewhere.
    """
    if not 0.0 <= map_score <= 100.0:
        raise ValueError(f"mAP must be in [0, 100], got {map_score}")
    if not 0.0 <= mean_tp_iou <= 1.0:
        raise ValueError(f"mean TP IoU must be in [0, 1], got {mean_tp_iou}")
    label = round(map_score + mean_tp_iou * 100.0)
    return min(max(label, 0), LABEL_MAX)


class OracleEstimator:
    """Detection-quality oracle: run a detector, score against ground truth."""

    def __init__(self, detector: Detector, truth: Mapping[str, Sequence[BoundingBox]]):
        self.detector = detector
        self.truth = dict(truth)

    def estimate(self, img: ImageBuffer) -> QualityEstimate:
        frame_id = img.meta.get("frame_id")
        if frame_id is None or frame_id not in self.truth:
            raise MissingSceneDescriptor(
                f"no ground truth for frame {frame_id!r}; oracle cannot score it"
            )
        detections = self.detector.detect(img)
        result = evaluate(detections, self.truth[frame_id])
        label = detection_label(result.map, result.mean_tp_iou)
        return QualityEstimate(value=label / LABEL_MAX, class_label=label)


class ProxyEstimator:
    """Feature-distance proxy: exp(-sum_i w_i * d_i) against an ideal tuple.

    d_i is the relative distance |f_i - ideal_i| / ideal_i, except that a
    zero ideal component falls back to the absolute difference on unit
    scale.  Weights must be nonnegative and sum to 1.
    """

    def __init__(self, ideal: FeatureTuple, weights: Sequence[float] = (0.25, 0.25, 0.25, 0.25)):
        weights = tuple(float(w) for w in weights)
        if len(weights) != 4:
            raise ValueError("expected one weight per feature (4)")
        if any(w < 0 for w in weights):
            raise ValueError("weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(weights)}")
        self.ideal = ideal
        self.weights = weights

    def estimate(self, img: ImageBuffer) -> QualityEstimate:
        measured = extract_features(img).as_array()
        ideal = self.ideal.as_array()
        distances = np.where(
            ideal != 0.0,
            np.abs(measured - ideal) / np.where(ideal != 0.0, ideal, 1.0),
            np.abs(measured - ideal),
        )
        value = float(np.exp(-(np.asarray(self.weights) * distances).sum()))
        return QualityEstimate(value=value)


class ExternalEstimator:
    """Client for an external estimator over a local TCP socket.

    Wire format: request is the frame as PNG, prefixed with a 4-byte
    big-endian length; response is one text line, either ``label <int>`` or
    ``value <float>``.  Labels are normalized by max_label.  Timeouts and
    malformed responses raise EstimatorUnavailable; a frame is never
    silently scored 0.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        timeout: float = 5.0,
        max_label: int = LABEL_MAX,
    ) -> None:
        self.host = host
        self.port = port
        self.timeout = timeout
        self.max_label = max_label
        self._sock: socket.socket | None = None

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection(
                    (self.host, self.port), timeout=self.timeout
                )
            except OSError as exc:
                raise EstimatorUnavailable(f"cannot reach estimator: {exc}") from exc
        return self._sock

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def _round_trip(self, payload: bytes) -> bytes:
        sock = self._connect()
        try:
            sock.sendall(len(payload).to_bytes(4, "big") + payload)
            line = b""
            while not line.endswith(b"\n"):
                chunk = sock.recv(4096)
                if not chunk:
                    raise EstimatorUnavailable("estimator closed the connection")
                line += chunk
                if len(line) > 4096:
                    raise EstimatorUnavailable("estimator response is not a line")
            return line
        except EstimatorUnavailable:
            self.close()
            raise
        except OSError as exc:
            self.close()
            raise EstimatorUnavailable(f"estimator transport failed: {exc}") from exc

    def estimate(self, img: ImageBuffer) -> QualityEstimate:
        line = self._round_trip(png_bytes(img))
        parts = line.decode("ascii", errors="replace").strip().split()
        try:
            if len(parts) == 2 and parts[0] == "label":
                label = int(parts[1])
                if not 0 <= label <= self.max_label:
                    raise ValueError(f"label out of range: {label}")
                return QualityEstimate(value=label / self.max_label, class_label=label)
            if len(parts) == 2 and parts[0] == "value":
                return QualityEstimate(value=float(parts[1]))
        except (ValueError, OverflowError) as exc:
            raise EstimatorUnavailable(f"malformed estimator response: {line!r}") from exc
        raise EstimatorUnavailable(f"malformed estimator response: {line!r}")


class ConstantEstimator:
    """Fixed-score estimator, mostly for wiring tests and baselines."""

    def __init__(self, value: float):
        self._estimate = QualityEstimate(value=value)

    def estimate(self, img: ImageBuffer) -> QualityEstimate:
        return self._estimate


class CallableEstimator:
    """Adapter: wrap a frame -> float function as an estimator."""

    def __init__(self, fn: Callable[[ImageBuffer], float]):
        self.fn = fn

    def estimate(self, img: ImageBuffer) -> QualityEstimate:
        return QualityEstimate(value=float(self.fn(img)))


@dataclass(frozen=True)
class GateDecision:
    passed: bool
    estimate: QualityEstimate
    forced: bool = False


class AquaGate:
    """Drop frames whose estimated quality is below a threshold.

    After recovery_n consecutive drops the next frame is force-passed and
    the counter resets, so downstream analytics are never starved: at most
    recovery_n consecutive frames are ever dropped.
    """

    def __init__(
        self,
        estimator: QualityEstimator,
        drop_threshold: float,
        recovery_n: int = 5,
    ) -> None:
        if not 0.0 <= drop_threshold <= 1.0:
            raise ValueError(f"drop threshold must be in [0, 1], got {drop_threshold}")
        if recovery_n < 1:
            raise ValueError(f"recovery_n must be >= 1, got {recovery_n}")
        self.estimator = estimator
        self.drop_threshold = drop_threshold
        self.recovery_n = recovery_n
        self._consecutive_drops = 0

    def process(self, img: ImageBuffer) -> GateDecision:
        estimate = self.estimator.estimate(img)
        if estimate.value >= self.drop_threshold:
            self._consecutive_drops = 0
            return GateDecision(passed=True, estimate=estimate)
        if self._consecutive_drops >= self.recovery_n:
            self._consecutive_drops = 0
            return GateDecision(passed=True, estimate=estimate, forced=True)
        self._consecutive_drops += 1
        return GateDecision(passed=False, estimate=estimate)
