import struct

import numpy as np
import pytest

from prefdiff.denoiser import (
    MAGIC,
    ArchConfig,
    Condition,
    ConditionBatch,
    clone_as_reference,
    clone_trainable,
    guided_eps,
    init_params,
    load_checkpoint,
    params_digest,
    predict_eps,
    save_checkpoint,
    timestep_features,
)
from prefdiff.diffcore import backward, tensor_sum
from prefdiff.errors import (
    CheckpointFormatError,
    ConditionKindMismatch,
    ConfigError,
    InvalidConditionError,
)


def test_init_is_deterministic(tiny_arch):
    assert params_digest(init_params(tiny_arch)) == params_digest(init_params(tiny_arch))
    assert params_digest(init_params(tiny_arch, seed=1)) != params_digest(init_params(tiny_arch))


def test_odd_time_dim_rejected(tiny_arch):
    with pytest.raises(ConfigError):
        init_params(tiny_arch.replace(time_dim=3))


def test_predict_eps_shapes(ref, rng):
    x = rng.standard_normal((5, 2))
    c = ConditionBatch("discrete", np.array([0, 1, 2, 3, 0]))
    assert predict_eps(ref, x, 7, c).shape == (5, 2)
    assert predict_eps(ref, x[0], 7, Condition.discrete(2)).shape == (2,)
    per_row = predict_eps(ref, x, np.arange(1, 6), c)
    assert per_row.shape == (5, 2)


def test_condition_changes_prediction(ref, rng):
    x = rng.standard_normal((1, 2))
    a = predict_eps(ref, x, 3, Condition.discrete(0)).data
    b = predict_eps(ref, x, 3, Condition.discrete(1)).data
    assert not np.allclose(a, b)


def test_out_of_range_condition(ref):
    with pytest.raises(InvalidConditionError):
        predict_eps(ref, np.zeros((1, 2)), 1, Condition.discrete(4))


def test_wrong_condition_kind(ref):
    with pytest.raises(InvalidConditionError):
        predict_eps(ref, np.zeros((1, 2)), 1, Condition.continuous([0.1, 0.2]))


def test_null_condition_ignores_value(ref, rng):
    x = rng.standard_normal((2, 2))
    a = predict_eps(ref, x, 5, ConditionBatch("discrete", np.array([0, 1])), use_null=True)
    b = predict_eps(ref, x, 5, ConditionBatch("discrete", np.array([3, 2])), use_null=True)
    np.testing.assert_array_equal(a.data, b.data)


def test_guidance_interpolates(ref, rng):
    x = rng.standard_normal((3, 2))
    c = ConditionBatch("discrete", np.array([0, 1, 2]))
    cond = predict_eps(ref, x, 4, c).data
    null = predict_eps(ref, x, 4, c, use_null=True).data
    np.testing.assert_allclose(guided_eps(ref, x, 4, c, 0.0).data, null)
    np.testing.assert_allclose(guided_eps(ref, x, 4, c, 1.0).data, cond)
    np.testing.assert_allclose(guided_eps(ref, x, 4, c, 3.0).data, null + 3.0 * (cond - null))
    with pytest.raises(ConfigError):
        guided_eps(ref, x, 4, c, -0.5)


def test_continuous_denoiser(rng):
    arch = ArchConfig.create(
        condition_kind="continuous", cond_dim=2, hidden=8, depth=1, time_dim=4, embed_dim=4
    )
    params = init_params(arch)
    c = ConditionBatch("continuous", rng.standard_normal((3, 2)))
    out = predict_eps(params, rng.standard_normal((3, 2)), 2, c, use_null=np.array([1, 0, 0]))
    assert out.shape == (3, 2)
    grads = backward(tensor_sum(out), params.parameters())
    assert np.any(grads[params.tensors["cond_null"]].data != 0)


def test_timestep_features_distinguish_steps():
    f = timestep_features(np.array([1, 2]), 2, 8)
    assert f.shape == (2, 8)
    assert not np.allclose(f[0], f[1])


def test_reference_clone_is_frozen(theta):
    ref = clone_as_reference(theta)
    assert ref.frozen
    assert not any(p.requires_grad for p in ref.parameters())
    assert params_digest(ref) == params_digest(theta)
    back = clone_trainable(ref)
    assert all(p.requires_grad for p in back.parameters())
    back.parameters()[0].data += 1.0
    assert params_digest(ref) == params_digest(theta)


def test_checkpoint_round_trip(theta, tmp_path):
    path = save_checkpoint(theta, tmp_path / "model.ckpt")
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    loaded = load_checkpoint(path)
    assert params_digest(loaded) == params_digest(theta)
    assert loaded.arch == theta.arch
    assert not loaded.frozen


def test_checkpoint_keeps_frozen_flag(theta, tmp_path):
    loaded = load_checkpoint(save_checkpoint(clone_as_reference(theta), tmp_path / "ref.ckpt"))
    assert loaded.frozen
    assert not any(p.requires_grad for p in loaded.parameters())


def test_checkpoint_bad_magic(theta, tmp_path):
    path = save_checkpoint(theta, tmp_path / "model.ckpt")
    path.write_bytes(b"NOTMAGIC" + path.read_bytes()[8:])
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_unknown_version(theta, tmp_path):
    path = save_checkpoint(theta, tmp_path / "model.ckpt")
    raw = bytearray(path.read_bytes())
    raw[8:12] = struct.pack("<I", 9)
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointFormatError, match="version"):
        load_checkpoint(path)


def test_checkpoint_truncated(theta, tmp_path):
    path = save_checkpoint(theta, tmp_path / "model.ckpt")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_checkpoint_digest_mismatch(theta, tmp_path):
    path = save_checkpoint(theta, tmp_path / "model.ckpt")
    raw = bytearray(path.read_bytes())
    raw[-8] ^= 0x01
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointFormatError, match="digest"):
        load_checkpoint(path)


def test_condition_validation():
    with pytest.raises(InvalidConditionError):
        Condition.discrete(-1)
    with pytest.raises(InvalidConditionError):
        Condition.continuous([np.inf, 0.0])
    with pytest.raises(ConditionKindMismatch):
        ConditionBatch.from_conditions([Condition.discrete(0), Condition.continuous([0.0, 1.0])])


def test_condition_batch_round_trip():
    conditions = [Condition.discrete(2), Condition.discrete(0)]
    batch = ConditionBatch.from_conditions(conditions)
    assert batch.to_conditions() == conditions
    assert list(batch.equal_rows(ConditionBatch.coerce(Condition.discrete(2), 2))) == [True, False]
