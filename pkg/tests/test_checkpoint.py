"""Tests for binary checkpoints."""

import dataclasses
import struct

import numpy as np
import pytest

from src.aae import train_aae
from src.checkpoint import (
    MAGIC,
    load_aae,
    load_checkpoint_kind,
    load_gan,
    load_network,
    load_svm,
    save_aae,
    save_gan,
    save_network,
    save_svm,
)
from src.gan import generate, train_conditional_gan, train_vanilla_gan
from src.gmm import default_prior
from src.nn_core import init_network, predict
from src.settings import TrainSchedule
from src.svm import decision_values, train_svm


def _assert_same_network(a, b):
    assert a.layer_dims == b.layer_dims
    assert a.hidden_activation == b.hidden_activation
    assert a.output_activation == b.output_activation
    for x, y in zip(a.parameters(), b.parameters()):
        assert x.tobytes() == y.tobytes()


@pytest.fixture
def small_network():
    return init_network([3, 5, 2], np.random.default_rng(0), "tanh", "sigmoid")


class TestNetworkCheckpoint:
    """Tests for single-network payloads."""

    def test_round_trip_bit_identical(self, tmp_path, small_network):
        path = tmp_path / "net.ckpt"
        save_network(small_network, path)
        loaded = load_network(path)
        _assert_same_network(small_network, loaded)
        x = np.random.default_rng(1).normal(size=(4, 3))
        assert predict(loaded, x).tobytes() == predict(small_network, x).tobytes()

    def test_header(self, tmp_path, small_network):
        path = tmp_path / "net.ckpt"
        save_network(small_network, path)
        data = path.read_bytes()
        assert data[:8] == MAGIC
        assert struct.unpack("<I", data[8:12])[0] == 1
        assert data[12] == 0
        assert load_checkpoint_kind(path) == "network"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT" + bytes(8))
        with pytest.raises(ValueError, match="bad magic"):
            load_network(path)

    def test_bad_version(self, tmp_path, small_network):
        path = tmp_path / "net.ckpt"
        save_network(small_network, path)
        data = bytearray(path.read_bytes())
        data[8:12] = struct.pack("<I", 7)
        path.write_bytes(bytes(data))
        with pytest.raises(ValueError, match="version 7"):
            load_network(path)

    def test_unknown_kind(self, tmp_path, small_network):
        path = tmp_path / "net.ckpt"
        save_network(small_network, path)
        data = bytearray(path.read_bytes())
        data[12] = 9
        path.write_bytes(bytes(data))
        with pytest.raises(ValueError, match="unknown payload kind 9"):
            load_checkpoint_kind(path)

    def test_truncated(self, tmp_path, small_network):
        path = tmp_path / "net.ckpt"
        save_network(small_network, path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(ValueError, match="truncated"):
            load_network(path)

    def test_trailing_bytes(self, tmp_path, small_network):
        path = tmp_path / "net.ckpt"
        save_network(small_network, path)
        path.write_bytes(path.read_bytes() + b"\0\0")
        with pytest.raises(ValueError, match="2 trailing bytes"):
            load_network(path)

    def test_wrong_payload_kind(self, tmp_path, small_network):
        path = tmp_path / "net.ckpt"
        save_network(small_network, path)
        with pytest.raises(ValueError, match="expected a gan checkpoint, found network"):
            load_gan(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_network(tmp_path / "absent.ckpt")


class TestModelCheckpoints:
    """Tests for AAE, GAN and SVM payloads."""

    def test_aae_round_trip(self, tmp_path, tiny_corpus, fast_settings):
        model, _ = train_aae(tiny_corpus, default_prior(), fast_settings.aae, seed=1)
        path = tmp_path / "aae.ckpt"
        save_aae(model, path)
        loaded = load_aae(path)
        assert load_checkpoint_kind(path) == "aae"
        for name in ("encoder", "decoder", "latent_discriminator"):
            _assert_same_network(getattr(model, name), getattr(loaded, name))
        assert loaded.prior == model.prior
        assert loaded.normalizer.mean.tobytes() == model.normalizer.mean.tobytes()
        assert loaded.normalizer.std.tobytes() == model.normalizer.std.tobytes()

    def test_conditional_gan_round_trip(self, tmp_path, tiny_corpus):
        schedule = TrainSchedule(epochs=1, batch_size=16)
        model, _ = train_conditional_gan(tiny_corpus, None, default_prior(), schedule, seed=2)
        path = tmp_path / "gan.ckpt"
        save_gan(model, path)
        loaded = load_gan(path)
        assert loaded.conditional
        assert loaded.class_names == model.class_names
        assert loaded.schedule == model.schedule
        first, labels = generate(model, 12, seed=3)
        second, loaded_labels = generate(loaded, 12, seed=3)
        assert first.tobytes() == second.tobytes()
        assert labels == loaded_labels

    def test_vanilla_gan_keeps_code_prior(self, tmp_path):
        codes = np.random.default_rng(4).normal(size=(30, 2))
        schedule = TrainSchedule(gen_lr=1e-3, disc_lr=1e-3, epochs=1, batch_size=10)
        model, _ = train_vanilla_gan(codes, None, schedule, seed=5, code_prior=default_prior())
        path = tmp_path / "vanilla.ckpt"
        save_gan(model, path)
        loaded = load_gan(path)
        assert not loaded.conditional
        assert loaded.code_prior == model.code_prior
        assert generate(loaded, 5, seed=1)[0].tobytes() == generate(model, 5, seed=1)[0].tobytes()

    def test_schedule_missing_key(self, tmp_path, monkeypatch):
        """A schedule block without one of its keys is a format error, not a KeyError."""
        codes = np.random.default_rng(4).normal(size=(30, 2))
        schedule = TrainSchedule(gen_lr=1e-3, disc_lr=1e-3, epochs=1, batch_size=10)
        model, _ = train_vanilla_gan(codes, None, schedule, seed=5)
        path = tmp_path / "no_init.ckpt"
        with monkeypatch.context() as m:
            m.setattr("src.checkpoint.asdict",
                      lambda s: {k: v for k, v in dataclasses.asdict(s).items() if k != "init"})
            save_gan(model, path)
        with pytest.raises(ValueError, match=r"missing key\(s\) \['init'\]"):
            load_gan(path)

    def test_svm_round_trip(self, tmp_path, tiny_corpus):
        model = train_svm(tiny_corpus.features, tiny_corpus.labels, class_names=tiny_corpus.class_names)
        path = tmp_path / "svm.ckpt"
        save_svm(model, path)
        loaded = load_svm(path)
        assert loaded.class_names == model.class_names
        assert (loaded.gamma, loaded.C) == (model.gamma, model.C)
        x = tiny_corpus.features
        assert decision_values(loaded, x).tobytes() == decision_values(model, x).tobytes()
