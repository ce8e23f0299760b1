"""Actor and critic convolutional networks plus versioned checkpoints.

Both networks share the same architecture (six valid convolutions followed
by a small linear head) but never share weights.  The actor additionally
owns a single state-independent log standard deviation for its action
distribution.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

CHECKPOINT_MAGIC = b"ORL1"
CHECKPOINT_VERSION = 1
LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


@dataclass(frozen=True)
class NetworkSpec:
    """Conv stack as (kernel, stride, filters) triples plus linear head sizes."""

    conv_layers: tuple[tuple[int, int, int], ...] = (
        (4, 2, 8),
        (3, 2, 16),
        (3, 2, 32),
        (3, 2, 64),
        (3, 1, 128),
        (3, 1, 256),
    )
    head_sizes: tuple[int, ...] = (100, 25, 1)
    input_hw: int = 128
    in_channels: int = 3

    def conv_output(self) -> tuple[int, int]:
        """(side length, channels) after the conv stack, for valid convolutions."""
        side = self.input_hw
        channels = self.in_channels
        for kernel, stride, filters in self.conv_layers:
            side = (side - kernel) // stride + 1
            if side < 1:
                raise ValueError(f"conv stack shrinks a {self.input_hw}px input to nothing")
            channels = filters
        return side, channels

    @property
    def flat_size(self) -> int:
        side, channels = self.conv_output()
        return side * side * channels

    def to_dict(self) -> dict:
        return {
            "conv_layers": [list(layer) for layer in self.conv_layers],
            "head_sizes": list(self.head_sizes),
            "input_hw": self.input_hw,
            "in_channels": self.in_channels,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        return cls(
            conv_layers=tuple(tuple(layer) for layer in data["conv_layers"]),
            head_sizes=tuple(data["head_sizes"]),
            input_hw=int(data["input_hw"]),
            in_channels=int(data["in_channels"]),
        )


class ConvHead(nn.Module):
    """Conv stack + linear head emitting one scalar; ReLU after every hidden layer."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        convs = []
        channels = spec.in_channels
        for kernel, stride, filters in spec.conv_layers:
            convs.append(nn.Conv2d(channels, filters, kernel_size=kernel, stride=stride))
            channels = filters
        self.convs = nn.ModuleList(convs)
        linears = []
        size = spec.flat_size
        for out_size in spec.head_sizes:
            linears.append(nn.Linear(size, out_size))
            size = out_size
        self.linears = nn.ModuleList(linears)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = torch.relu(conv(x))
        x = x.flatten(start_dim=1)
        for linear in self.linears[:-1]:
            x = torch.relu(linear(x))
        return self.linears[-1](x)


class ActorNet(ConvHead):
    """Policy network: scalar pre-squash action mean plus a learned log std."""

    def __init__(self, spec: NetworkSpec, log_std_init: float = -0.5):
        super().__init__(spec)
        self.log_std = nn.Parameter(torch.tensor(float(log_std_init)))

    def clamp_log_std(self) -> None:
        with torch.no_grad():
            self.log_std.clamp_(LOG_STD_MIN, LOG_STD_MAX)


class CriticNet(ConvHead):
    """Value network: scalar state-value estimate."""


@dataclass
class PolicyParams:
    """Actor/critic pair with the architecture they were built from."""

    spec: NetworkSpec
    actor: ActorNet
    critic: CriticNet
    version: int = CHECKPOINT_VERSION

    @classmethod
    def init(cls, spec: NetworkSpec | None = None, seed: int = 0) -> "PolicyParams":
        spec = spec or NetworkSpec()
        generator_state = torch.random.get_rng_state()
        torch.manual_seed(seed)
        try:
            params = cls(spec=spec, actor=ActorNet(spec), critic=CriticNet(spec))
        finally:
            torch.random.set_rng_state(generator_state)
        return params

    @classmethod
    def zeros(cls, spec: NetworkSpec | None = None) -> "PolicyParams":
        """All-zero weights; the squashed action mean is then exactly 1.0."""
        params = cls.init(spec)
        with torch.no_grad():
            for tensor in params.tensors().values():
                tensor.zero_()
        return params

    def tensors(self) -> dict[str, torch.Tensor]:
        named = {}
        for prefix, module in (("actor", self.actor), ("critic", self.critic)):
            for name, tensor in module.state_dict().items():
                named[f"{prefix}.{name}"] = tensor
        return named

    def parameters(self):
        yield from self.actor.parameters()
        yield from self.critic.parameters()

    def all_finite(self) -> bool:
        return all(bool(torch.isfinite(t).all()) for t in self.tensors().values())


def obs_to_tensor(obs: np.ndarray) -> torch.Tensor:
    """(H, W, 3) or (N, H, W, 3) float observation to a channels-first batch."""
    arr = np.asarray(obs, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[np.newaxis]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


def actor_forward(params: PolicyParams, obs: np.ndarray) -> tuple[float, float]:
    """Pre-squash action mean and log std for one observation."""
    with torch.no_grad():
        mean_raw = params.actor(obs_to_tensor(obs))
        log_std = float(params.actor.log_std)
    return float(mean_raw.reshape(-1)[0]), log_std


def critic_forward(params: PolicyParams, obs: np.ndarray) -> float:
    """State-value estimate for one observation."""
    with torch.no_grad():
        value = params.critic(obs_to_tensor(obs))
    return float(value.reshape(-1)[0])


def save_checkpoint(params: PolicyParams, path) -> None:
    """Write magic + JSON header + raw little-endian float32 tensors."""
    tensors = params.tensors()
    payload = bytearray()
    manifest = []
    for name, tensor in tensors.items():
        data = tensor.detach().to(torch.float32).contiguous().numpy()
        payload.extend(data.astype("<f4").tobytes())
        manifest.append({"name": name, "shape": list(data.shape)})
    header = {
        "version": params.version,
        "spec": params.spec.to_dict(),
        "tensors": manifest,
        "checksum": hashlib.sha256(bytes(payload)).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(bytes(payload))


def load_checkpoint(path) -> PolicyParams:
    """Read a checkpoint; checks magic, version, checksum, and tensor shapes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a policy checkpoint (bad magic)")
    if len(blob) < 8:
        raise CheckpointError(f"{path} is truncated")
    (header_len,) = struct.unpack("<I", blob[4:8])
    header_end = 8 + header_len
    if len(blob) < header_end:
        raise CheckpointError(f"{path} is truncated")
    try:
        header = json.loads(blob[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt header") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path} has version {header.get('version')}, reader supports {CHECKPOINT_VERSION}"
        )
    payload = blob[header_end:]
    if hashlib.sha256(payload).hexdigest() != header.get("checksum"):
        raise CheckpointError(f"{path} failed its checksum (corrupt payload)")

    spec = NetworkSpec.from_dict(header["spec"])
    params = PolicyParams.zeros(spec)
    tensors = params.tensors()
    offset = 0
    loaded = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(payload):
            raise CheckpointError(f"{path} payload too short for tensor {name}")
        arr = np.frombuffer(payload[offset:end], dtype="<f4").reshape(shape)
        loaded[name] = torch.from_numpy(arr.copy())
        offset = end
    if offset != len(payload):
        raise CheckpointError(f"{path} has {len(payload) - offset} trailing payload bytes")
    if set(loaded) != set(tensors):
        raise CheckpointError(f"{path} tensor names do not match the declared spec")
    with torch.no_grad():
        for name, tensor in tensors.items():
            if tuple(tensor.shape) != tuple(loaded[name].shape):
                raise CheckpointError(
                    f"{path} tensor {name} has shape {tuple(loaded[name].shape)}, "
                    f"expected {tuple(tensor.shape)}"
                )
            tensor.copy_(loaded[name])
    return params
