"""The single-image correction MDP.

Each episode picks a dataset image, damages it with a random photometric
distortion, and asks the agent for one correction factor.  The reward is +1
iff the corrected image scores at least as well (within a tolerance) as the
original and the distorted image combined: 2*s_state - s_original -
s_distorted >= -epsilon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detectors import Detector
from .boxes import GroundTruthBox, detection_score
from .imaging import (
    DistortionKind,
    DistortionScale,
    FactorMode,
    ImageBuffer,
    apply_distortion,
    resize_to_state,
    sample_factor,
)
from .scenes import DatasetItem


@dataclass(frozen=True)
class RewardConfig:
    """Weights of the detection score blend and the reward tolerance."""

    gamma_weight: float = 0.1
    epsilon_tol: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.gamma_weight <= 1.0:
            raise ValueError("gamma_weight must be in [0, 1]")
        if self.epsilon_tol < 0.0:
            raise ValueError("epsilon_tol must be >= 0")


@dataclass(frozen=True)
class EnvConfig:
    kind: DistortionKind = DistortionKind.BRIGHTNESS
    scale: DistortionScale = DistortionScale.MINOR
    horizon: int = 1
    reward: RewardConfig = field(default_factory=RewardConfig)
    factor_mode: FactorMode = FactorMode.CONTINUOUS_UNIFORM

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass
class EpisodeRecord:
    """The scored outcome of one environment step."""

    image_id: str
    distortion_factor: float
    action: float
    score_original: float
    score_distorted: float
    score_state: float
    margin: float
    reward: int
    detector_calls: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "image_id": self.image_id,
                "distortion_factor": self.distortion_factor,
                "action": self.action,
                "score_original": self.score_original,
                "score_distorted": self.score_distorted,
                "score_state": self.score_state,
                "margin": self.margin,
                "reward": self.reward,
                "detector_calls": self.detector_calls,
            }
        )


def compute_reward(
    score_original: float,
    score_distorted: float,
    score_state: float,
    cfg: RewardConfig,
) -> tuple[float, int]:
    """Margin of the agent's image over both references, and the +-1 reward."""
    margin = 2.0 * score_state - score_original - score_distorted
    reward = 1 if margin >= -cfg.epsilon_tol else -1
    return margin, reward


@dataclass
class EpisodeContext:
    """Internal per-episode state; exposed read-only for logging and demos."""

    item: DatasetItem
    distortion_factor: float
    distorted: ImageBuffer
    current: ImageBuffer
    score_original: float
    score_distorted: float
    detector_seed: int
    steps_taken: int = 0
    detector_calls: int = 2
    done: bool = False


class DistortionEnv:
    """Reset/step environment around a dataset, a distortion, and a detector."""

    def __init__(
        self,
        config: EnvConfig,
        dataset: list[DatasetItem],
        detector: Detector,
        rng: np.random.Generator,
    ):
        if not dataset:
            raise ValueError("dataset must not be empty")
        self.config = config
        self.dataset = dataset
        self.detector = detector
        self.rng = rng
        self.context: EpisodeContext | None = None

    def _score(self, img: ImageBuffer, gts: list[GroundTruthBox], seed: int) -> float:
        dets = self.detector.detect(img, gts, seed)
        return detection_score(dets, gts, self.config.reward.gamma_weight).combined

    def observe(self) -> np.ndarray:
        """128x128x3 float32 view of the current episode image, scaled to [0, 1]."""
        if self.context is None:
            raise RuntimeError("no active episode; call reset() first")
        resized = resize_to_state(self.context.current)
        return resized.pixels.astype(np.float32) / 255.0

    def reset(self) -> np.ndarray:
        """Start an episode: pick an image, distort it, score both references."""
        item = self.dataset[int(self.rng.integers(len(self.dataset)))]
        factor = sample_factor(self.config.scale, self.config.factor_mode, self.rng)
        detector_seed = int(self.rng.integers(2**31))
        distorted = apply_distortion(item.image, self.config.kind, factor)
        score_original = self._score(item.image, item.gts, detector_seed)
        score_distorted = self._score(distorted, item.gts, detector_seed)
        self.context = EpisodeContext(
            item=item,
            distortion_factor=factor,
            distorted=distorted,
            current=distorted,
            score_original=score_original,
            score_distorted=score_distorted,
            detector_seed=detector_seed,
        )
        return self.observe()

    def step(self, action: float) -> tuple[EpisodeRecord, bool]:
        """Apply the agent's factor to the episode image and score the result."""
        ctx = self.context
        if ctx is None or ctx.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        action = float(action)
        if not 0.0 <= action <= 2.0:
            raise ValueError(f"action must be in [0, 2], got {action}")

        ctx.current = apply_distortion(ctx.current, self.config.kind, action)
        score_state = self._score(ctx.current, ctx.item.gts, ctx.detector_seed)
        ctx.detector_calls += 1
        ctx.steps_taken += 1
        ctx.done = ctx.steps_taken >= self.config.horizon
        margin, reward = compute_reward(
            ctx.score_original, ctx.score_distorted, score_state, self.config.reward
        )
        record = EpisodeRecord(
            image_id=ctx.item.image_id,
            distortion_factor=ctx.distortion_factor,
            action=action,
            score_original=ctx.score_original,
            score_distorted=ctx.score_distorted,
            score_state=score_state,
            margin=margin,
            reward=reward,
            detector_calls=ctx.detector_calls,
        )
        return record, ctx.done


class EpisodeLogWriter:
    """Appends one EpisodeRecord per line to a JSONL file."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("a", encoding="utf-8")

    def write(self, record: EpisodeRecord) -> None:
        self._fh.write(record.to_json() + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
