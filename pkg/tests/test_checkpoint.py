"""Checkpoint round-trips and architecture guards."""
import numpy as np
import pytest

from lapse.errors import CheckpointError
from lapse.network.checkpoint import load_checkpoint, load_into, save_checkpoint
from lapse.network.classifier import HybridClassifier, init_parameters
from lapse.network.config import RecurrentHeadConfig, TransformerHeadConfig


def test_round_trip_is_bit_exact(tmp_path):
    config = TransformerHeadConfig(embed_dim=8, num_heads=2, ff_dim=4, seq_len=4)
    params = init_parameters(config, seed=0)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, config, params, extra={"epoch": 7})
    loaded_config, loaded, extra = load_checkpoint(path)
    assert loaded_config == config
    assert extra == {"epoch": 7}
    assert set(loaded) == set(params)
    for name in params:
        assert loaded[name].dtype == params[name].dtype
        np.testing.assert_array_equal(loaded[name], params[name])


def test_round_trip_recurrent_bidirectional(tmp_path):
    config = RecurrentHeadConfig(input_dim=6, units=4, cell="gru", bidirectional=True)
    params = init_parameters(config, seed=1)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, config, params)
    loaded_config, loaded, extra = load_checkpoint(path)
    assert loaded_config == config
    assert extra == {}
    for name in params:
        np.testing.assert_array_equal(loaded[name], params[name])


def test_classifier_predictions_survive_round_trip(tmp_path):
    config = RecurrentHeadConfig(input_dim=8, units=3, cell="lstm", seq_len=4)
    clf = HybridClassifier(config, seed=2)
    x = np.random.default_rng(3).standard_normal((2, 4, 8))
    before = clf.predict_proba(x)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, clf.config, clf.params)
    loaded_config, params, _ = load_checkpoint(path)
    restored = HybridClassifier(loaded_config, params=params)
    assert restored.config == config
    np.testing.assert_array_equal(restored.predict_proba(x), before)


def test_mismatched_config_is_rejected(tmp_path):
    saved = TransformerHeadConfig(embed_dim=8, num_heads=2, ff_dim=4, seq_len=4)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, saved, init_parameters(saved, seed=4))
    other = TransformerHeadConfig(embed_dim=8, num_heads=2, ff_dim=8, seq_len=4)
    with pytest.raises(CheckpointError):
        load_into(path, other)
    different_family = RecurrentHeadConfig(input_dim=8, units=3, cell="gru")
    with pytest.raises(CheckpointError):
        load_into(path, different_family)
    params, _ = load_into(path, saved)
    assert set(params) == set(init_parameters(saved, seed=4))


def test_reserved_parameter_name_is_rejected(tmp_path):
    config = TransformerHeadConfig(embed_dim=8, num_heads=2, ff_dim=4, seq_len=4)
    params = init_parameters(config, seed=5)
    params["__meta__"] = np.zeros(3)
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "model.ckpt", config, params)


def test_unreadable_and_corrupt_files(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")
    garbage = tmp_path / "garbage.ckpt"
    garbage.write_bytes(b"not an archive")
    with pytest.raises(CheckpointError):
        load_checkpoint(garbage)


def test_archive_without_metadata_is_rejected(tmp_path):
    path = tmp_path / "bare.ckpt"
    with open(path, "wb") as fh:
        np.savez(fh, weights=np.zeros(3))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
