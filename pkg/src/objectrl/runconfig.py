"""Run-configuration loading and validation.

Configs are JSON documents checked against the schema shipped in
``objectrl/schema/run_config.schema.json`` before any work starts; unknown
keys are rejected outright.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .environment import EnvConfig, RewardConfig
from .imaging import DistortionKind, DistortionScale, FactorMode
from .ppo import PpoConfig


class ConfigError(ValueError):
    """Config file failed schema validation or could not be read."""


def _schema() -> dict:
    text = resources.files("objectrl").joinpath("schema/run_config.schema.json").read_text()
    return json.loads(text)


@dataclass
class RunConfig:
    seed: int
    dataset: Path
    out_dir: Path
    detector: str
    env: EnvConfig
    ppo: PpoConfig
    detector_timeout_s: float = 30.0
    eval_seed: int | None = None
    eval_count: int | None = None
    eval_k_max: int = 5
    eval_threads: int = 1
    checkpoint_interval: int = 5000
    raw: dict = field(default_factory=dict)


def validate_config(doc: dict) -> dict:
    """Schema-check a parsed config document; returns it unchanged."""
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from exc
    return doc


def parse_config(doc: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate and materialise a RunConfig; relative paths resolve against
    `base_dir` (the config file's directory)."""
    validate_config(doc)
    base = base_dir or Path.cwd()

    env_doc = doc["env"]
    env = EnvConfig(
        kind=DistortionKind(env_doc["kind"]),
        scale=DistortionScale(env_doc["scale"]),
        horizon=env_doc.get("horizon", 1),
        reward=RewardConfig(
            gamma_weight=env_doc.get("gamma_weight", 0.1),
            epsilon_tol=env_doc.get("epsilon_tol", 0.01),
        ),
        factor_mode=FactorMode(env_doc.get("factor_mode", "continuous_uniform")),
    )
    try:
        ppo = PpoConfig(**doc.get("ppo", {}))
    except ValueError as exc:
        raise ConfigError(f"config invalid at ppo: {exc}") from exc

    eval_doc = doc.get("eval", {})
    train_doc = doc.get("train", {})

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    return RunConfig(
        seed=doc["seed"],
        dataset=resolve(doc["dataset"]),
        out_dir=resolve(doc["out_dir"]),
        detector=doc["detector"],
        env=env,
        ppo=ppo,
        detector_timeout_s=doc.get("detector_timeout_s", 30.0),
        eval_seed=eval_doc.get("seed"),
        eval_count=eval_doc.get("count"),
        eval_k_max=eval_doc.get("k_max", 5),
        eval_threads=eval_doc.get("threads", 1),
        checkpoint_interval=train_doc.get("checkpoint_interval", 5000),
        raw=doc,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc, base_dir=path.parent)
