"""Network architecture, forward determinism, and checkpoint format."""

import struct

import numpy as np
import pytest
import torch

from objectrl.networks import (
    CHECKPOINT_MAGIC,
    CheckpointError,
    NetworkSpec,
    PolicyParams,
    actor_forward,
    critic_forward,
    load_checkpoint,
    obs_to_tensor,
    save_checkpoint,
)

TINY_SPEC = NetworkSpec(conv_layers=((2, 1, 2),), head_sizes=(4, 1), input_hw=6)


def random_obs(rng, hw=128):
    return rng.random((hw, hw, 3)).astype(np.float32)


def test_default_conv_stack_sizes():
    spec = NetworkSpec()
    # 128 -> 63 -> 31 -> 15 -> 7 -> 5 -> 3 under valid convolutions.
    side, channels = spec.conv_output()
    assert (side, channels) == (3, 256)
    assert spec.flat_size == 3 * 3 * 256 == 2304


def test_intermediate_sizes_chain():
    sizes = [128]
    for kernel, stride, _ in NetworkSpec().conv_layers:
        sizes.append((sizes[-1] - kernel) // stride + 1)
    assert sizes == [128, 63, 31, 15, 7, 5, 3]


def test_first_linear_matches_flatten():
    params = PolicyParams.init(seed=0)
    assert params.actor.linears[0].in_features == 2304
    assert [lin.out_features for lin in params.actor.linears] == [100, 25, 1]


def test_conv_stack_cannot_vanish():
    with pytest.raises(ValueError):
        NetworkSpec(conv_layers=((4, 2, 8),) * 8).conv_output()


def test_zero_weights_forward_is_zero(rng):
    params = PolicyParams.zeros()
    obs = random_obs(rng)
    mean_raw, log_std = actor_forward(params, obs)
    assert mean_raw == 0.0
    assert log_std == 0.0
    assert critic_forward(params, obs) == 0.0


def test_forward_deterministic(rng):
    params = PolicyParams.init(seed=3)
    obs = random_obs(rng)
    assert actor_forward(params, obs) == actor_forward(params, obs)
    assert critic_forward(params, obs) == critic_forward(params, obs)


def test_forward_finite_for_random_weights(rng):
    params = PolicyParams.init(seed=11)
    for _ in range(5):
        mean_raw, log_std = actor_forward(params, random_obs(rng))
        assert np.isfinite(mean_raw) and np.isfinite(log_std)
        assert np.isfinite(critic_forward(params, random_obs(rng)))


def test_batch_matches_single(rng):
    params = PolicyParams.init(seed=7)
    batch = rng.random((4, 128, 128, 3)).astype(np.float32)
    with torch.no_grad():
        batched = params.critic(obs_to_tensor(batch)).reshape(-1).numpy()
    singles = np.array([critic_forward(params, obs) for obs in batch])
    assert np.allclose(batched, singles, atol=1e-5)


def test_init_is_seeded():
    a = PolicyParams.init(seed=42)
    b = PolicyParams.init(seed=42)
    for ta, tb in zip(a.tensors().values(), b.tensors().values()):
        assert torch.equal(ta, tb)


# --- checkpoints -------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    params = PolicyParams.init(seed=5)
    path = tmp_path / "policy.orl"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert loaded.spec == params.spec
    for name, tensor in params.tensors().items():
        assert torch.equal(tensor, loaded.tensors()[name]), name


def test_checkpoint_truncation_detected(tmp_path):
    params = PolicyParams.init(TINY_SPEC, seed=5)
    path = tmp_path / "policy.orl"
    save_checkpoint(params, path)
    data = path.read_bytes()
    path.write_bytes(data[:-20])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_corruption_detected(tmp_path):
    params = PolicyParams.init(TINY_SPEC, seed=5)
    path = tmp_path / "policy.orl"
    save_checkpoint(params, path)
    data = bytearray(path.read_bytes())
    data[-3] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_foreign_magic_rejected(tmp_path):
    params = PolicyParams.init(TINY_SPEC, seed=5)
    path = tmp_path / "policy.orl"
    save_checkpoint(params, path)
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_version_mismatch_rejected(tmp_path):
    params = PolicyParams.init(TINY_SPEC, seed=5)
    path = tmp_path / "policy.orl"
    save_checkpoint(params, path)
    blob = path.read_bytes()
    (header_len,) = struct.unpack("<I", blob[4:8])
    header = blob[8 : 8 + header_len].replace(b'"version": 1', b'"version": 9')
    path.write_bytes(CHECKPOINT_MAGIC + struct.pack("<I", len(header)) + header + blob[8 + header_len :])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_magic_bytes(tmp_path):
    params = PolicyParams.init(TINY_SPEC, seed=5)
    path = tmp_path / "policy.orl"
    save_checkpoint(params, path)
    assert path.read_bytes()[:4] == b"ORL1"
