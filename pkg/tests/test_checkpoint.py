import struct

import numpy as np
import pytest

from earhr.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from earhr.errors import ConfigError, FormatError, ShapeError
from earhr.training import PairSet, TrainConfig, train
from earhr.unet import DenoiserModel, UNetConfig

SMALL = UNetConfig(depth=2, base_filters=4)


@pytest.fixture(scope="module")
def trained():
    rng = np.random.default_rng(0)
    data = PairSet(rng.uniform(0, 1, (8, 2, 64, 64)), rng.uniform(0, 1, (8, 1, 64, 64)), "a", 7.5)
    return train(DenoiserModel(SMALL, seed=2), data, TrainConfig(epochs=2, batch_size=4))


def test_round_trip(trained):
    blob = save_checkpoint(trained)
    assert blob[:4] == MAGIC
    back = load_checkpoint(blob)
    assert back.config == trained.config and back.norm_constant == 7.5
    assert back.meta.loss_history == trained.meta.loss_history
    w0, w1 = trained.weights(), back.weights()
    assert w0.keys() == w1.keys()
    assert all(np.array_equal(w0[k], w1[k]) for k in w0)
    x = np.random.default_rng(1).uniform(0, 1, (3, 2, 64, 64))
    assert np.array_equal(trained.predict(x), back.predict(x))


def test_little_endian_header(trained):
    blob = save_checkpoint(trained)
    version, n_json = struct.unpack_from("<II", blob, 4)
    assert version == 1
    (c,) = struct.unpack_from("<d", blob, 12 + n_json)
    assert c == 7.5


def test_bad_magic(trained):
    blob = bytearray(save_checkpoint(trained))
    blob[0:4] = b"XXXX"
    with pytest.raises(FormatError):
        load_checkpoint(bytes(blob))


def test_bad_version(trained):
    blob = bytearray(save_checkpoint(trained))
    blob[4:8] = struct.pack("<I", 99)
    with pytest.raises(FormatError):
        load_checkpoint(bytes(blob))


@pytest.mark.parametrize("keep", [3, 10, 200, -1])
def test_truncated(trained, keep):
    blob = save_checkpoint(trained)
    with pytest.raises(FormatError):
        load_checkpoint(blob[:keep])


def test_trailing_bytes(trained):
    with pytest.raises(FormatError):
        load_checkpoint(save_checkpoint(trained) + b"\0")


def test_depth_mismatch():
    blob = save_checkpoint(DenoiserModel(UNetConfig(depth=4, base_filters=2)))
    with pytest.raises(ShapeError):
        load_checkpoint(blob, expect=UNetConfig(depth=3, base_filters=2))
    assert load_checkpoint(blob, expect=UNetConfig(depth=4, base_filters=2)).config.depth == 4


def test_tensor_shape_mismatch(trained):
    """A config block that disagrees with the stored tensors is rejected."""
    blob = save_checkpoint(trained)
    n_json = struct.unpack_from("<I", blob, 8)[0]
    js = blob[12 : 12 + n_json].replace(b'"base_filters": 4', b'"base_filters": 5')
    forged = blob[:8] + struct.pack("<I", len(js)) + js + blob[12 + n_json :]
    with pytest.raises(ShapeError):
        load_checkpoint(forged)


def test_non_finite_not_saved():
    m = DenoiserModel(SMALL)
    m.net.head.bias.data.fill_(float("nan"))
    with pytest.raises(ConfigError):
        save_checkpoint(m)
