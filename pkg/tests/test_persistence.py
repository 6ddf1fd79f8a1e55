import hashlib
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from predmon.agent import QNetwork
from predmon.errors import ChecksumMismatch, CheckpointMissing, VersionUnsupported
from predmon.forecaster import ForecasterConfig, ForecastNetwork, predict_horizon, train_forecaster
from predmon.neural import adam_step
from predmon.persistence import MAGIC, load_checkpoint, read_checkpoint, save_checkpoint
from predmon.timeseries import fit_normalizer, make_windows


@pytest.fixture
def trained_forecaster():
    raw = 50 + 10 * np.sin(np.arange(120) / 4.0)[:, None]
    norm = fit_normalizer(raw)
    ds = make_windows(norm.apply(raw), 6, 3)
    net, _ = train_forecaster(ds, ForecasterConfig(window=6, horizon=3, hidden=5, epochs=2, seed=3), norm, ["x"])
    return net


def test_forecaster_round_trip(tmp_path, trained_forecaster):
    net = trained_forecaster
    save_checkpoint(net, tmp_path / "f.ckpt", {"note": "x"}, {"k": 1})
    ck = read_checkpoint(tmp_path / "f.ckpt")
    back = ck.model
    assert ck.kind == "forecaster" and ck.config == {"note": "x"} and ck.extra == {"k": 1}
    rng = np.random.default_rng(0)
    for _ in range(10):
        w = rng.uniform(40, 60, size=(6, 1))
        assert np.array_equal(predict_horizon(net, w), predict_horizon(back, w))
    for k, v in net.params().items():
        assert np.array_equal(back.params()[k], v)
    assert back.optimizer.step == net.optimizer.step
    assert all(np.array_equal(back.optimizer.m[k], net.optimizer.m[k]) for k in net.optimizer.m)
    assert np.array_equal(back.norm.shift, net.norm.shift)


@settings(max_examples=25)
@given(st.integers(1, 4), st.integers(2, 6), st.lists(st.integers(1, 8), max_size=2), st.integers(0, 2 ** 32 - 1))
def test_qnetwork_round_trip(tmp_path_factory, state_dim, k, hidden, seed):
    rng = np.random.default_rng(seed)
    net = QNetwork.init(state_dim, k, tuple(hidden), rng)
    adam_step(net.optimizer, net.params(), {n: rng.normal(size=v.shape) for n, v in net.params().items()})
    path = tmp_path_factory.mktemp("ck") / "q.ckpt"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    probes = rng.normal(size=(10, state_dim))
    assert np.array_equal(net.predict(probes), back.predict(probes))
    assert back.hidden == net.hidden


def test_save_is_deterministic(tmp_path):
    net = QNetwork.init(1, 3, (4,), np.random.default_rng(1))
    save_checkpoint(net, tmp_path / "a.ckpt")
    save_checkpoint(net, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_corrupted_byte(tmp_path):
    p = tmp_path / "q.ckpt"
    save_checkpoint(QNetwork.init(1, 3, (4,), np.random.default_rng(1)), p)
    blob = bytearray(p.read_bytes())
    blob[-40] ^= 0x01  # inside the float payload
    p.write_bytes(bytes(blob))
    with pytest.raises(ChecksumMismatch):
        load_checkpoint(p)


def test_future_version(tmp_path):
    p = tmp_path / "q.ckpt"
    save_checkpoint(QNetwork.init(1, 3, (4,), np.random.default_rng(1)), p)
    blob = bytearray(p.read_bytes())
    struct.pack_into("<I", blob, len(MAGIC), 99)
    body = bytes(blob[:-32])
    p.write_bytes(body + hashlib.sha256(body).digest())  # valid digest, future version
    with pytest.raises(VersionUnsupported):
        load_checkpoint(p)


def test_not_a_checkpoint(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_bytes(b"hello world" * 10)
    with pytest.raises(ChecksumMismatch):
        load_checkpoint(p)


def test_missing(tmp_path):
    with pytest.raises(CheckpointMissing):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_untrained_forecaster_round_trip(tmp_path):
    net = ForecastNetwork.init(("a", "b"), 4, 2, 3, 0.1, np.random.default_rng(0))
    save_checkpoint(net, tmp_path / "f.ckpt")
    back = load_checkpoint(tmp_path / "f.ckpt")
    w = np.random.default_rng(1).normal(size=(4, 2))
    assert np.array_equal(predict_horizon(net, w), predict_horizon(back, w))
    assert back.norm is None and back.channels == ("a", "b")
