"""Analytic gradients validated by central finite differences."""
import numpy as np
import pytest

from lapse.network.classifier import HybridClassifier
from lapse.network.config import RecurrentHeadConfig, TransformerHeadConfig

FD_STEP = 1e-4
REL_TOL = 1e-3
MIN_PASS_FRACTION = 0.99

HEAD_CONFIGS = [
    TransformerHeadConfig(embed_dim=8, num_heads=2, ff_dim=4, seq_len=4),
    RecurrentHeadConfig(input_dim=8, units=3, cell="lstm", seq_len=4),
    RecurrentHeadConfig(input_dim=8, units=3, cell="gru", seq_len=4),
    RecurrentHeadConfig(input_dim=8, units=3, cell="lstm", bidirectional=True, seq_len=4),
    RecurrentHeadConfig(input_dim=8, units=3, cell="gru", bidirectional=True, seq_len=4),
]


def head_id(config):
    if isinstance(config, TransformerHeadConfig):
        return "transformer"
    return ("bi" if config.bidirectional else "") + config.cell


def finite_difference_check(config, seed=0):
    clf = HybridClassifier(config, seed=seed)
    rng = np.random.default_rng(seed + 100)
    x = rng.standard_normal((3, 4, 8))
    labels = np.array([0, 1, 1])
    _, grads, _ = clf.loss_and_gradients(x, labels, rng=None)

    checked = 0
    passed = 0
    worst = 0.0
    for name, value in clf.params.items():
        flat = value.reshape(-1)
        grad_flat = grads[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + FD_STEP
            loss_hi, _, _ = clf.loss_and_gradients(x, labels, rng=None)
            flat[i] = original - FD_STEP
            loss_lo, _, _ = clf.loss_and_gradients(x, labels, rng=None)
            flat[i] = original
            numeric = (loss_hi - loss_lo) / (2 * FD_STEP)
            analytic = grad_flat[i]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            rel = abs(numeric - analytic) / denom
            checked += 1
            if rel <= REL_TOL:
                passed += 1
            worst = max(worst, rel)
    return checked, passed, worst


@pytest.mark.parametrize("config", HEAD_CONFIGS, ids=head_id)
def test_gradients_match_finite_differences(config):
    checked, passed, worst = finite_difference_check(config)
    assert checked > 0
    fraction = passed / checked
    assert fraction >= MIN_PASS_FRACTION, (
        f"{head_id(config)}: {passed}/{checked} within tolerance "
        f"(worst rel err {worst:.2e})"
    )


def test_gradient_covers_every_parameter():
    config = TransformerHeadConfig(embed_dim=8, num_heads=2, ff_dim=4, seq_len=4)
    clf = HybridClassifier(config, seed=3)
    x = np.random.default_rng(4).standard_normal((2, 4, 8))
    _, grads, _ = clf.loss_and_gradients(x, np.array([0, 1]), rng=None)
    assert set(grads) == set(clf.params)
    for name in grads:
        assert grads[name].shape == clf.params[name].shape
