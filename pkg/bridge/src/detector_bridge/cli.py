"""Command-line entry point for the detector sidecar."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .server import BridgeConfig, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detector-bridge",
        description="Serve an object detector over newline-delimited JSON.",
    )
    parser.add_argument("--stub", action="store_true", help="fixed-box conformance mode (no model)")
    parser.add_argument("--model", help="torchvision detection model name, e.g. ssd300_vgg16")
    parser.add_argument("--threshold", type=float, default=0.5, help="confidence cutoff (0, 1)")
    parser.add_argument("--device", default="cpu", help="inference device hint")
    parser.add_argument("--tcp", type=int, metavar="PORT", help="serve on TCP instead of stdio")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("OBJECTRL_LOG", "INFO").upper(), logging.INFO),
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        config = BridgeConfig(
            model=args.model,
            threshold=args.threshold,
            device=args.device,
            tcp_port=args.tcp,
            stub=args.stub,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        serve(config)
    except KeyboardInterrupt:
        return 0
    except Exception as exc:  # noqa: BLE001  (startup failures exit non-zero)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
