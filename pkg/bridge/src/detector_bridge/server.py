"""Request handling and the stdio/TCP serve loops.

One JSON object per line.  Requests are handled serially and answered with
the same id; anything malformed gets an error object instead of a crash.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
import socket
import sys
from dataclasses import dataclass

log = logging.getLogger("detector_bridge")

STUB_BOX = {"x1": 10.0, "y1": 10.0, "x2": 50.0, "y2": 50.0, "label": "person", "score": 0.9}


@dataclass
class BridgeConfig:
    model: str | None = None
    threshold: float = 0.5
    device: str = "cpu"
    tcp_port: int | None = None  # None means stdio
    stub: bool = False

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        if not self.stub and not self.model:
            raise ValueError("need --stub or --model")


class StubBackend:
    """Answers every valid detect request with one fixed box.

    Lets protocol conformance run end-to-end without any model weights.
    """

    def detect(self, width, height, pixels):
        return [dict(STUB_BOX)]


def decode_image(request: dict) -> tuple[int, int, bytes]:
    try:
        width = int(request["width"])
        height = int(request["height"])
        pixels = base64.b64decode(request["pixels_b64"], validate=True)
    except (KeyError, TypeError, ValueError, binascii.Error) as exc:
        raise ValueError(f"bad detect request: {exc}") from exc
    if width < 1 or height < 1:
        raise ValueError(f"bad image dimensions {width}x{height}")
    if len(pixels) != width * height * 3:
        raise ValueError(f"payload is {len(pixels)} bytes, expected {width * height * 3}")
    return width, height, pixels


def handle_request(line: str, backend) -> dict:
    """Turn one request line into one response object; never raises."""
    try:
        request = json.loads(line)
    except json.JSONDecodeError:
        return {"id": 0, "error": "request is not valid JSON"}
    if not isinstance(request, dict):
        return {"id": 0, "error": "request is not an object"}
    request_id = request.get("id", 0)
    op = request.get("op")
    if op == "ping":
        return {"id": request_id, "ok": True}
    if op == "detect":
        try:
            width, height, pixels = decode_image(request)
            detections = backend.detect(width, height, pixels)
        except Exception as exc:  # noqa: BLE001  (contract: reply, don't crash)
            return {"id": request_id, "error": str(exc)}
        return {"id": request_id, "detections": detections}
    return {"id": request_id, "error": f"unknown op {op!r}"}


def make_backend(config: BridgeConfig):
    if config.stub:
        return StubBackend()
    from .models import TorchvisionBackend  # heavy import only when needed

    return TorchvisionBackend(config.model, config.threshold, config.device)


def serve_stream(backend, read_fh, write_fh) -> None:
    for line in read_fh:
        if not line.strip():
            continue
        response = handle_request(line, backend)
        write_fh.write(json.dumps(response) + "\n")
        write_fh.flush()


def serve_tcp(backend, port: int) -> None:
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind(("127.0.0.1", port))
    server.listen(1)
    bound = server.getsockname()[1]
    print(f"listening on {bound}", file=sys.stderr, flush=True)
    log.info("serving on tcp:127.0.0.1:%d", bound)
    while True:
        conn, peer = server.accept()
        log.info("connection from %s", peer)
        with conn, conn.makefile("r", encoding="utf-8") as rf, conn.makefile(
            "w", encoding="utf-8"
        ) as wf:
            try:
                serve_stream(backend, rf, wf)
            except (BrokenPipeError, ConnectionResetError):
                log.info("peer went away")


def serve(config: BridgeConfig) -> None:
    """Load the backend (exits non-zero on model failure) and serve forever."""
    backend = make_backend(config)
    if config.tcp_port is not None:
        serve_tcp(backend, config.tcp_port)
    else:
        serve_stream(backend, sys.stdin, sys.stdout)
