"""Tests for quality estimators and the drop gate."""

from __future__ import annotations

import socket
import socketserver
import threading
import time

import numpy as np
import pytest

from camadapt.deteval import BoundingBox, MissingSceneDescriptor, SyntheticDetector
from camadapt.estimator import (
    AquaGate,
    CallableEstimator,
    ConstantEstimator,
    EstimatorUnavailable,
    ExternalEstimator,
    OracleEstimator,
    ProxyEstimator,
    QualityEstimate,
    detection_label,
)
from camadapt.imaging import ImageBuffer, png_from_bytes
from camadapt.metrics import extract_features

from helpers import textured_image


# ---------------------------------------------------------------------------
# detection_label


def test_label_perfect():
    assert detection_label(100.0, 1.0) == 200


def test_label_zero():
    assert detection_label(0.0, 0.0) == 0


def test_label_mixed():
    assert detection_label(63.0, 0.72) == 135


def test_label_from_hand_fixture():
    # The 2-GT fixture: one TP at IoU 0.6 plus one FP gives mAP 50.
    assert detection_label(50.0, 0.6) == 110


def test_label_rounds_half_to_even():
    # 0.625 is exactly representable, so both sums hit an exact .5 tie.
    assert detection_label(50.0, 0.625) == 112
    assert detection_label(49.0, 0.625) == 112


def test_label_monotone_samples():
    rng = np.random.default_rng(5)
    for _ in range(200):
        m = float(rng.uniform(0, 100))
        i = float(rng.uniform(0, 1))
        base = detection_label(m, i)
        assert detection_label(min(m + 5, 100.0), i) >= base
        assert detection_label(m, min(i + 0.05, 1.0)) >= base


def test_label_rejects_out_of_range():
    with pytest.raises(ValueError):
        detection_label(-1.0, 0.5)
    with pytest.raises(ValueError):
        detection_label(101.0, 0.5)
    with pytest.raises(ValueError):
        detection_label(50.0, 1.5)


def test_quality_estimate_bounds():
    QualityEstimate(0.0)
    QualityEstimate(1.0)
    with pytest.raises(ValueError):
        QualityEstimate(1.0001)
    with pytest.raises(ValueError):
        QualityEstimate(-0.1)


# ---------------------------------------------------------------------------
# OracleEstimator


@pytest.fixture()
def scored_scene():
    img = textured_image(64, 48, seed=11).with_meta(frame_id="f0")
    truth = {
        "f0": [
            BoundingBox(4, 4, 20, 20),
            BoundingBox(30, 8, 50, 28),
            BoundingBox(10, 30, 26, 44),
        ]
    }
    reference = extract_features(img)
    return img, truth, reference


def test_oracle_perfect_detector(scored_scene):
    img, truth, reference = scored_scene
    detector = SyntheticDetector(truth, reference, lambda config: 1.0)
    est = OracleEstimator(detector, truth).estimate(img)
    assert est.value == 1.0
    assert est.class_label == 200


def test_oracle_blind_detector(scored_scene):
    img, truth, reference = scored_scene
    detector = SyntheticDetector(truth, reference, lambda config: 0.0)
    est = OracleEstimator(detector, truth).estimate(img)
    assert est.value == 0.0
    assert est.class_label == 0


def test_oracle_hand_fixture():
    img = textured_image(40, 40, seed=3).with_meta(frame_id="g0")
    truth = {"g0": [BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 30, 30)]}

    class FixedDetector:
        def detect(self, frame):
            return [
                BoundingBox(0, 2.5, 10, 12.5, score=0.9),
                BoundingBox(50, 50, 60, 60, score=0.8),
            ]

    est = OracleEstimator(FixedDetector(), truth).estimate(img)
    assert est.class_label == 110
    assert est.value == pytest.approx(0.55)


def test_oracle_requires_truth(scored_scene):
    img, truth, reference = scored_scene
    detector = SyntheticDetector(truth, reference, lambda config: 1.0)
    oracle = OracleEstimator(detector, truth)
    with pytest.raises(MissingSceneDescriptor):
        oracle.estimate(img.with_meta(frame_id="unknown"))
    with pytest.raises(MissingSceneDescriptor):
        oracle.estimate(textured_image(64, 48, seed=11))


# ---------------------------------------------------------------------------
# ProxyEstimator


def test_proxy_ideal_scores_one(texture):
    proxy = ProxyEstimator(extract_features(texture))
    assert proxy.estimate(texture).value == pytest.approx(1.0)


def test_proxy_decreases_with_distance(texture):
    from camadapt.imaging import apply_knob

    proxy = ProxyEstimator(extract_features(texture))
    near = proxy.estimate(apply_knob(texture, "brightness", 1.1)).value
    far = proxy.estimate(apply_knob(texture, "brightness", 1.5)).value
    assert 0.0 < far < near < 1.0


def test_proxy_zero_ideal_component_uses_absolute_distance():
    flat = ImageBuffer.uniform(16, 16, (90, 90, 90))
    ideal = extract_features(flat)
    assert ideal.contrast == 0.0
    noisy = textured_image(16, 16, seed=2)
    proxy = ProxyEstimator(ideal, weights=(0.0, 1.0, 0.0, 0.0))
    expected = float(np.exp(-abs(extract_features(noisy).contrast)))
    assert proxy.estimate(noisy).value == pytest.approx(expected, rel=1e-12)


def test_proxy_weight_validation(texture):
    ideal = extract_features(texture)
    with pytest.raises(ValueError):
        ProxyEstimator(ideal, weights=(0.5, 0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        ProxyEstimator(ideal, weights=(1.5, -0.5, 0.0, 0.0))
    with pytest.raises(ValueError):
        ProxyEstimator(ideal, weights=(1.0,))


def test_proxy_ignores_zero_weight_components(texture):
    from camadapt.imaging import apply_knob

    ideal = extract_features(texture)
    proxy = ProxyEstimator(ideal, weights=(0.0, 0.0, 1.0, 0.0))
    # Brightness-only changes leak a little into every feature, so compare
    # against the exact single-component formula instead of expecting 1.0.
    shifted = apply_knob(texture, "brightness", 1.3)
    measured = extract_features(shifted)
    expected = float(
        np.exp(-abs(measured.color_saturation - ideal.color_saturation) / ideal.color_saturation)
    )
    assert proxy.estimate(shifted).value == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# ExternalEstimator + stub server


class StubHandler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            header = self.rfile.read(4)
            if len(header) < 4:
                return
            length = int.from_bytes(header, "big")
            payload = self.rfile.read(length)
            if len(payload) < length:
                return
            self.server.payloads.append(payload)
            reply = self.server.reply
            if reply is None:
                time.sleep(2.0)
                return
            self.wfile.write(reply)
            self.wfile.flush()


class StubServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self):
        super().__init__(("127.0.0.1", 0), StubHandler)
        self.reply: bytes | None = b"value 0.5\n"
        self.payloads: list[bytes] = []


@pytest.fixture()
def stub_server():
    server = StubServer()
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


def client_for(server: StubServer, timeout: float = 2.0) -> ExternalEstimator:
    return ExternalEstimator("127.0.0.1", server.server_address[1], timeout=timeout)


def test_external_value_reply(stub_server, texture):
    stub_server.reply = b"value 0.625\n"
    client = client_for(stub_server)
    est = client.estimate(texture)
    assert est.value == pytest.approx(0.625)
    assert est.class_label is None
    client.close()


def test_external_label_reply(stub_server, texture):
    stub_server.reply = b"label 150\n"
    client = client_for(stub_server)
    est = client.estimate(texture)
    assert est.value == pytest.approx(0.75)
    assert est.class_label == 150
    client.close()


def test_external_payload_is_the_frame_as_png(stub_server, texture):
    client = client_for(stub_server)
    client.estimate(texture)
    client.close()
    assert len(stub_server.payloads) == 1
    decoded = png_from_bytes(stub_server.payloads[0])
    assert np.array_equal(decoded.pixels, texture.pixels)


def test_external_round_trip_is_fast(stub_server):
    frame = textured_image(64, 64, seed=9)
    client = client_for(stub_server)
    client.estimate(frame)  # connection warm-up
    start = time.perf_counter()
    client.estimate(frame)
    elapsed = time.perf_counter() - start
    client.close()
    assert elapsed < 0.05


@pytest.mark.parametrize(
    "reply",
    [b"garbage\n", b"label x\n", b"value\n", b"label 999\n", b"value 1.5\n", b"label -3\n"],
)
def test_external_malformed_reply_raises(stub_server, texture, reply):
    stub_server.reply = reply
    client = client_for(stub_server)
    with pytest.raises(EstimatorUnavailable):
        client.estimate(texture)
    client.close()


def test_external_timeout_raises(stub_server, texture):
    stub_server.reply = None
    client = client_for(stub_server, timeout=0.2)
    with pytest.raises(EstimatorUnavailable):
        client.estimate(texture)
    client.close()


def test_external_connection_refused(texture):
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    free_port = probe.getsockname()[1]
    probe.close()
    client = ExternalEstimator("127.0.0.1", free_port, timeout=0.5)
    with pytest.raises(EstimatorUnavailable):
        client.estimate(texture)


def test_external_recovers_after_failure(stub_server, texture):
    stub_server.reply = b"garbage\n"
    client = client_for(stub_server)
    with pytest.raises(EstimatorUnavailable):
        client.estimate(texture)
    stub_server.reply = b"value 0.25\n"
    assert client.estimate(texture).value == pytest.approx(0.25)
    client.close()


# ---------------------------------------------------------------------------
# AquaGate


def test_gate_passes_good_frames(texture):
    gate = AquaGate(ConstantEstimator(0.9), drop_threshold=0.5)
    for _ in range(10):
        decision = gate.process(texture)
        assert decision.passed and not decision.forced


def test_gate_every_sixth_frame_when_all_bad(texture):
    gate = AquaGate(ConstantEstimator(0.1), drop_threshold=0.5, recovery_n=5)
    passes = [gate.process(texture).passed for _ in range(60)]
    for i, passed in enumerate(passes):
        assert passed == ((i + 1) % 6 == 0)


def test_gate_forced_flag_only_on_recovery(texture):
    gate = AquaGate(ConstantEstimator(0.1), drop_threshold=0.5, recovery_n=2)
    first, second, third = (gate.process(texture) for _ in range(3))
    assert (first.passed, second.passed) == (False, False)
    assert third.passed and third.forced


def test_gate_pass_resets_counter():
    frames = [0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1]
    values = iter(frames)
    gate = AquaGate(
        CallableEstimator(lambda img: next(values)), drop_threshold=0.5, recovery_n=3
    )
    img = textured_image(8, 8, seed=1)
    results = [gate.process(img).passed for _ in frames]
    # Two drops, a genuine pass resets, then three more drops before recovery.
    assert results == [False, False, True, False, False, False, True]


def test_gate_never_exceeds_recovery_n_consecutive_drops():
    rng = np.random.default_rng(17)
    values = rng.uniform(0.0, 1.0, size=2000)
    it = iter(values)
    gate = AquaGate(
        CallableEstimator(lambda img: float(next(it))), drop_threshold=0.7, recovery_n=4
    )
    img = textured_image(8, 8, seed=1)
    run = longest = 0
    for _ in values:
        if gate.process(img).passed:
            run = 0
        else:
            run += 1
            longest = max(longest, run)
    assert longest <= 4


def test_gate_threshold_zero_passes_everything(texture):
    gate = AquaGate(ConstantEstimator(0.0), drop_threshold=0.0)
    assert all(gate.process(texture).passed for _ in range(20))


def test_gate_validation():
    with pytest.raises(ValueError):
        AquaGate(ConstantEstimator(0.5), drop_threshold=1.5)
    with pytest.raises(ValueError):
        AquaGate(ConstantEstimator(0.5), drop_threshold=0.5, recovery_n=0)
