"""Detector sidecar speaking newline-delimited JSON over stdio or TCP."""

from .server import BridgeConfig, StubBackend, handle_request, serve

__version__ = "0.1.0"
