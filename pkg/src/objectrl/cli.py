"""Command-line surface.

Subcommands generate datasets, apply single distortions, train the policy,
and run the evaluation protocols.  Every report path writes delimited output
(CSV/JSON) plus a rendered PNG figure next to it.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .detectors import make_detector
from .environment import DistortionEnv, EpisodeLogWriter
from .evaluation import (
    cross_policy_eval,
    emit_report,
    grid_search_eval,
    make_eval_set,
    policy_eval,
)
from .imaging import DistortionKind, apply_distortion, load_image, save_image
from .networks import load_checkpoint
from .ppo import train
from .reporting import plot_learning_curve, plot_tp_scores
from .runconfig import ConfigError, RunConfig, load_config
from .scenes import SceneSpec, generate_dataset, load_dataset, write_dataset

log = logging.getLogger("objectrl")


class RuntimeFailure(RuntimeError):
    """Operational failure that should exit with status 1."""


def _setup_logging() -> None:
    level = os.environ.get("OBJECTRL_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _load_run(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "threads", None):
        cfg.eval_threads = args.threads
    return cfg


def _load_eval_inputs(cfg: RunConfig):
    dataset = load_dataset(cfg.dataset)
    if cfg.eval_count is not None:
        dataset = dataset[: cfg.eval_count]
    if not dataset:
        raise RuntimeFailure(f"dataset {cfg.dataset} is empty")
    seed = cfg.eval_seed if cfg.eval_seed is not None else cfg.seed
    rng = np.random.default_rng(seed)
    return make_eval_set(dataset, cfg.env.kind, cfg.env.scale, rng)


def cmd_synth_data(args) -> int:
    if args.min_objects > args.max_objects:
        raise ConfigError("--min-objects must not exceed --max-objects")
    spec = SceneSpec(
        width=args.width,
        height=args.height,
        min_objects=args.min_objects,
        max_objects=args.max_objects,
    )
    rng = np.random.default_rng(args.seed)
    items = generate_dataset(spec, args.count, rng)
    manifest = write_dataset(items, args.out)
    log.info("wrote %d scenes to %s", len(items), manifest)
    print(manifest)
    return 0


def cmd_distort(args) -> int:
    if args.alpha < 0:
        raise ConfigError("--alpha must be >= 0")
    img = load_image(args.input)
    out = apply_distortion(img, DistortionKind(args.kind), args.alpha)
    save_image(out, args.output)
    return 0


def cmd_train(args) -> int:
    cfg = _load_run(args)
    dataset = load_dataset(cfg.dataset)
    if not dataset:
        raise RuntimeFailure(f"dataset {cfg.dataset} is empty")
    detector = make_detector(cfg.detector, timeout=cfg.detector_timeout_s)
    rng = np.random.default_rng(cfg.seed)
    env = DistortionEnv(cfg.env, dataset, detector, rng)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        with EpisodeLogWriter(cfg.out_dir / "episodes.jsonl") as episode_log:
            params, curve = train(
                env,
                cfg.ppo,
                rng,
                out_dir=cfg.out_dir,
                checkpoint_interval=cfg.checkpoint_interval,
                episode_log=episode_log,
            )
    finally:
        detector.close()
    if curve:
        plot_learning_curve(curve, cfg.out_dir / "curve.png")
    log.info(
        "trained %d episodes (%d detector calls); artifacts in %s",
        len(curve),
        detector.calls,
        cfg.out_dir,
    )
    return 0


def _emit(report, cfg: RunConfig, stem: str, figures: dict) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    emit_report(report, cfg.out_dir / f"{stem}.json", cfg.out_dir / f"{stem}.csv")
    plot_tp_scores(figures, cfg.out_dir / f"{stem}.png")
    log.info(
        "%s: tp_score=%s detector_calls=%d wall=%.2fs",
        report.method,
        report.tp_table.as_dict(),
        report.detector_calls,
        report.wall_time_s,
    )


def cmd_eval(args) -> int:
    cfg = _load_run(args)
    items = _load_eval_inputs(cfg)
    params = load_checkpoint(args.checkpoint)
    detector = make_detector(cfg.detector, timeout=cfg.detector_timeout_s)
    try:
        report = policy_eval(
            items, cfg.env.kind, params, detector, cfg.eval_k_max, cfg.eval_threads
        )
    finally:
        detector.close()
    _emit(report, cfg, "report_policy", {"policy": report})
    return 0


def cmd_grid_search(args) -> int:
    cfg = _load_run(args)
    items = _load_eval_inputs(cfg)
    detector = make_detector(cfg.detector, timeout=cfg.detector_timeout_s)
    try:
        report = grid_search_eval(
            items, cfg.env.kind, cfg.env.scale, detector, cfg.eval_k_max, cfg.eval_threads
        )
    finally:
        detector.close()
    _emit(report, cfg, "report_grid", {"grid search": report})
    return 0


def cmd_cross_eval(args) -> int:
    cfg = _load_run(args)
    items = _load_eval_inputs(cfg)
    params = load_checkpoint(args.checkpoint)
    native = make_detector(cfg.detector, timeout=cfg.detector_timeout_s)
    swapped = make_detector(args.swap_detector, timeout=cfg.detector_timeout_s)
    try:
        report = cross_policy_eval(
            items, cfg.env.kind, params, swapped, native, cfg.eval_k_max, cfg.eval_threads
        )
    finally:
        native.close()
        swapped.close()
    _emit(report, cfg, "report_cross", {"swap deficit": report})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="objectrl",
        description="Train and evaluate a detection-aware image correction policy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic annotated dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-objects", type=int, default=1)
    p.add_argument("--max-objects", type=int, default=4)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("distort", help="apply one photometric distortion to an image")
    p.add_argument("--kind", choices=[k.value for k in DistortionKind], required=True)
    p.add_argument("--alpha", type=float, required=True, help="distortion factor (>= 0)")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("train", help="train the correction policy")
    p.add_argument("--config", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained policy checkpoint")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid-search", help="run the exhaustive baseline")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("cross-eval", help="score a policy under a swapped detector")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--swap-detector", required=True, help="detector selector to swap in")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_cross_eval)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
