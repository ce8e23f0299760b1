"""Detector implementations behind one interface.

`SyntheticDetector` is a deterministic stand-in for a pre-trained network:
its confidence is a Gaussian function of the image's mean intensity and
contrast, so detection quality peaks at a preferred operating point.
`RemoteDetector` talks to an external detector process over a line-delimited
JSON protocol (TCP or child-process stdio).
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import os
import select
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass

import numpy as np

from .boxes import BBox, Detection, GroundTruthBox
from .imaging import ImageBuffer, grayscale

DEFAULT_TIMEOUT = 30.0


class DetectorError(RuntimeError):
    """Base class for detector failures."""


class RemoteProtocolError(DetectorError):
    """The remote side violated the wire protocol."""


class RemoteDetectorError(DetectorError):
    """The remote side reported an error for a request."""


class RemoteTimeoutError(DetectorError):
    """No response arrived within the configured timeout."""


@dataclass(frozen=True)
class DetectorProfile:
    """Sensitivity model of a synthetic detector.

    Confidence peaks when the image's mean grayscale intensity equals
    `opt_brightness` and its grayscale standard deviation equals
    `opt_contrast`; the widths control how fast it falls off.
    """

    name: str
    opt_brightness: float
    brightness_width: float
    opt_contrast: float
    contrast_width: float
    base_confidence: float = 0.95
    detect_threshold: float = 0.5
    jitter_frac: float = 0.15

    def __post_init__(self):
        if self.brightness_width <= 0 or self.contrast_width <= 0:
            raise ValueError("profile widths must be positive")
        if not 0.0 < self.base_confidence <= 1.0:
            raise ValueError("base_confidence must be in (0, 1]")
        if not 0.0 < self.detect_threshold < 1.0:
            raise ValueError("detect_threshold must be in (0, 1)")
        if self.jitter_frac < 0.0:
            raise ValueError("jitter_frac must be >= 0")


def builtin_profiles() -> tuple[DetectorProfile, DetectorProfile]:
    """The two shipped profiles: a wide (tolerant) and a narrow (picky) one.

    Both prefer the same image statistics; the wide profile keeps high
    confidence over a strictly larger range of them.
    """
    wide = DetectorProfile(
        name="ssd_like",
        opt_brightness=128.0,
        brightness_width=60.0,
        opt_contrast=48.0,
        contrast_width=30.0,
    )
    narrow = DetectorProfile(
        name="yolo_like",
        opt_brightness=128.0,
        brightness_width=35.0,
        opt_contrast=48.0,
        contrast_width=18.0,
    )
    return wide, narrow


def profile_by_name(name: str) -> DetectorProfile:
    for profile in builtin_profiles():
        if profile.name == name:
            return profile
    raise KeyError(f"unknown detector profile {name!r}")


def image_stats(img: ImageBuffer) -> tuple[float, float]:
    """Mean and (population) standard deviation of the grayscale image."""
    gray = grayscale(img)
    return float(gray.mean()), float(gray.std())


def fitness(img: ImageBuffer, profile: DetectorProfile) -> float:
    """Gaussian response of the profile to the image's statistics, in (0, 1]."""
    mu, sigma = image_stats(img)
    db = (mu - profile.opt_brightness) / profile.brightness_width
    dc = (sigma - profile.opt_contrast) / profile.contrast_width
    return math.exp(-0.5 * db * db) * math.exp(-0.5 * dc * dc)


def _unit_hash(*parts) -> float:
    """Deterministic hash of the given parts mapped into [0, 1)."""
    payload = "/".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def synthetic_detect(
    img: ImageBuffer,
    gts: list[GroundTruthBox],
    profile: DetectorProfile,
    seed: int,
) -> list[Detection]:
    """Deterministic detections whose quality tracks the image's statistics.

    Each ground-truth object is reported iff its attenuated confidence
    exceeds the profile threshold; reported corners are perturbed in
    proportion to how far the image sits from the profile's optimum.
    The ground truths are the scene's pre-distortion geometry; only the
    confidences and the box jitter depend on the image itself.
    """
    g = fitness(img, profile)
    jitter = profile.jitter_frac * (1.0 - g)
    detections = []
    for j, gt in enumerate(gts):
        attenuation = 0.8 + 0.2 * _unit_hash(seed, j, "conf")
        confidence = profile.base_confidence * g * attenuation
        if confidence <= profile.detect_threshold:
            continue
        w = gt.box.x2 - gt.box.x1
        h = gt.box.y2 - gt.box.y1
        offsets = [2.0 * _unit_hash(seed, j, axis) - 1.0 for axis in ("x1", "y1", "x2", "y2")]
        box = BBox(
            x1=gt.box.x1 + jitter * w * offsets[0],
            y1=gt.box.y1 + jitter * h * offsets[1],
            x2=gt.box.x2 + jitter * w * offsets[2],
            y2=gt.box.y2 + jitter * h * offsets[3],
        )
        detections.append(Detection(box=box, label=gt.label, confidence=confidence))
    return detections


class Detector:
    """Common interface; `calls` counts every detect() issued."""

    def __init__(self):
        self._calls = 0
        self._calls_lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def detect(
        self,
        img: ImageBuffer,
        gts: list[GroundTruthBox] | None = None,
        seed: int = 0,
    ) -> list[Detection]:
        with self._calls_lock:
            self._calls += 1
        return self._detect(img, gts, seed)

    def _detect(self, img, gts, seed):
        raise NotImplementedError

    def close(self) -> None:
        pass


class SyntheticDetector(Detector):
    """Pure in-process detector driven by a `DetectorProfile`.

    Needs the scene's ground-truth geometry as context; `seed` fixes the
    per-object attenuation and jitter, so scoring the same scene under
    different images stays comparable.
    """

    def __init__(self, profile: DetectorProfile):
        super().__init__()
        self.profile = profile

    def _detect(self, img, gts, seed):
        if gts is None:
            raise DetectorError("synthetic detector needs the scene's ground truths")
        return synthetic_detect(img, gts, self.profile, seed)


class _SocketTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise DetectorError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.setblocking(False)

    def fileno(self) -> int:
        return self._sock.fileno()

    def write(self, data: bytes) -> None:
        self._sock.setblocking(True)
        try:
            self._sock.sendall(data)
        finally:
            self._sock.setblocking(False)

    def read_some(self) -> bytes:
        return self._sock.recv(65536)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class _ProcessTransport:
    def __init__(self, argv: list[str]):
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise DetectorError(f"cannot spawn {argv!r}: {exc}") from exc

    def fileno(self) -> int:
        return self._proc.stdout.fileno()

    def write(self, data: bytes) -> None:
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise DetectorError(f"detector process pipe failed: {exc}") from exc

    def read_some(self) -> bytes:
        return os.read(self._proc.stdout.fileno(), 65536)

    def close(self) -> None:
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


def _open_transport(endpoint: str, timeout: float):
    if endpoint.startswith("tcp:"):
        rest = endpoint[len("tcp:"):]
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"bad tcp endpoint {endpoint!r}, want tcp:HOST:PORT")
        return _SocketTransport(host, int(port), timeout)
    if endpoint.startswith("cmd:"):
        argv = shlex.split(endpoint[len("cmd:"):])
        if not argv:
            raise ValueError("empty command endpoint")
        return _ProcessTransport(argv)
    raise ValueError(f"unknown endpoint scheme in {endpoint!r} (want tcp: or cmd:)")


class RemoteDetector(Detector):
    """Client for an external detector over newline-delimited JSON.

    Endpoints: ``tcp:HOST:PORT`` or ``cmd:<command line>`` (the command is
    spawned and spoken to over stdin/stdout).  One request is in flight at
    a time per connection.
    """

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        super().__init__()
        self.endpoint = endpoint
        self.timeout = timeout
        self._transport = _open_transport(endpoint, timeout)
        self._buffer = b""
        self._next_id = 1
        self._io_lock = threading.Lock()

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _read_line(self, deadline: float) -> bytes:
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                line = self._buffer[:newline]
                self._buffer = self._buffer[newline + 1 :]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise RemoteTimeoutError(
                    f"no response from {self.endpoint} within {self.timeout}s"
                )
            ready, _, _ = select.select([self._transport.fileno()], [], [], remaining)
            if not ready:
                raise RemoteTimeoutError(
                    f"no response from {self.endpoint} within {self.timeout}s"
                )
            chunk = self._transport.read_some()
            if not chunk:
                raise DetectorError(f"connection to {self.endpoint} closed")
            self._buffer += chunk

    def _roundtrip(self, request: dict) -> dict:
        request_id = request["id"]
        with self._io_lock:
            self._transport.write(json.dumps(request).encode("utf-8") + b"\n")
            deadline = time.monotonic() + self.timeout
            while True:
                line = self._read_line(deadline)
                if not line.strip():
                    continue
                try:
                    response = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise RemoteProtocolError(f"response is not JSON: {line[:200]!r}") from exc
                if not isinstance(response, dict):
                    raise RemoteProtocolError(f"response is not an object: {line[:200]!r}")
                if response.get("id") == request_id:
                    return response
                # Stale response from an earlier (timed-out) request; skip it.

    def _take_id(self) -> int:
        rid = self._next_id
        self._next_id += 1
        return rid

    def ping(self) -> float:
        """Round-trip a ping; returns the latency in seconds."""
        start = time.monotonic()
        response = self._roundtrip({"id": self._take_id(), "op": "ping"})
        if response.get("ok") is not True:
            raise RemoteProtocolError(f"bad ping response: {response!r}")
        return time.monotonic() - start

    def _detect(self, img, gts, seed):
        request = {
            "id": self._take_id(),
            "op": "detect",
            "width": img.width,
            "height": img.height,
            "pixels_b64": base64.b64encode(img.tobytes()).decode("ascii"),
        }
        response = self._roundtrip(request)
        if "error" in response:
            raise RemoteDetectorError(str(response["error"]))
        raw = response.get("detections")
        if not isinstance(raw, list):
            raise RemoteProtocolError(f"missing detections list in {response!r}")
        detections = []
        for entry in raw:
            try:
                box = BBox(
                    x1=float(entry["x1"]),
                    y1=float(entry["y1"]),
                    x2=float(entry["x2"]),
                    y2=float(entry["y2"]),
                )
                detections.append(
                    Detection(
                        box=box,
                        label=str(entry["label"]),
                        confidence=float(entry["score"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise RemoteProtocolError(f"bad detection entry {entry!r}") from exc
        return detections


def make_detector(selector: str, timeout: float = DEFAULT_TIMEOUT) -> Detector:
    """Build a detector from a config selector.

    ``synthetic:ssd_like`` / ``synthetic:yolo_like`` pick a builtin profile;
    ``remote:<endpoint>`` opens a wire-protocol client.
    """
    if selector.startswith("synthetic:"):
        return SyntheticDetector(profile_by_name(selector[len("synthetic:"):]))
    if selector.startswith("remote:"):
        return RemoteDetector(selector[len("remote:"):], timeout=timeout)
    raise ValueError(f"unknown detector selector {selector!r}")
