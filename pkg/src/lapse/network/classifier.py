"""Parameter initialization and the unified classifier front end."""
from __future__ import annotations

import numpy as np

from ..errors import NumericError, ValidationError
from .config import HeadConfig, RecurrentHeadConfig, TransformerHeadConfig
from .layers import softmax, softmax_cross_entropy
from .recurrent import _gates, recurrent_backward, recurrent_forward
from .transformer import transformer_backward, transformer_forward

POS_EMBED_STD = 0.02


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _init_transformer(config: TransformerHeadConfig, rng: np.random.Generator) -> dict:
    d = config.embed_dim
    params: dict[str, np.ndarray] = {
        "pos_embed": rng.normal(0.0, POS_EMBED_STD, size=(config.seq_len, d))
    }
    for layer in range(config.num_layers):
        prefix = f"enc{layer}."
        for proj in ("q", "k", "v", "o"):
            params[prefix + f"attn.w_{proj}"] = _glorot(rng, d, d)
            params[prefix + f"attn.b_{proj}"] = np.zeros(d)
        params[prefix + "ln1.gamma"] = np.ones(d)
        params[prefix + "ln1.beta"] = np.zeros(d)
        params[prefix + "ff.w1"] = _glorot(rng, d, config.ff_dim)
        params[prefix + "ff.b1"] = np.zeros(config.ff_dim)
        params[prefix + "ff.w2"] = _glorot(rng, config.ff_dim, d)
        params[prefix + "ff.b2"] = np.zeros(d)
        params[prefix + "ln2.gamma"] = np.ones(d)
        params[prefix + "ln2.beta"] = np.zeros(d)
    params["head.w"] = _glorot(rng, d, config.num_classes)
    params["head.b"] = np.zeros(config.num_classes)
    return params


def _init_recurrent(config: RecurrentHeadConfig, rng: np.random.Generator) -> dict:
    params: dict[str, np.ndarray] = {}
    directions = ("fw", "bw") if config.bidirectional else ("fw",)
    for direction in directions:
        prefix = f"rnn.{direction}."
        for gate in _gates(config.cell):
            params[prefix + f"w_{gate}"] = _glorot(rng, config.input_dim, config.units)
            params[prefix + f"u_{gate}"] = _glorot(rng, config.units, config.units)
            # forget gate opens at init so early gradients reach back in time
            if config.cell == "lstm" and gate == "f":
                params[prefix + f"b_{gate}"] = np.ones(config.units)
            else:
                params[prefix + f"b_{gate}"] = np.zeros(config.units)
    params["mid.w"] = _glorot(rng, config.step_dim, config.mid_dim)
    params["mid.b"] = np.zeros(config.mid_dim)
    params["head.w"] = _glorot(rng, config.mid_dim, config.num_classes)
    params["head.b"] = np.zeros(config.num_classes)
    return params


def init_parameters(config: HeadConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Fresh float64 parameters; deterministic for a given (config, seed)."""
    rng = np.random.default_rng(seed)
    if isinstance(config, TransformerHeadConfig):
        return _init_transformer(config, rng)
    if isinstance(config, RecurrentHeadConfig):
        return _init_recurrent(config, rng)
    raise ValidationError(f"unknown config type {type(config).__name__}")


def _check_finite_params(params: dict) -> None:
    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            raise NumericError(f"parameter {name!r} contains non-finite values")


class HybridClassifier:
    """One classifier API over the transformer and recurrent heads.

    Holds a config plus a named-parameter dict; forward dispatch follows the
    config type.  Inputs are (batch, seq_len, feature_dim) float arrays.
    """

    def __init__(self, config: HeadConfig, params: dict | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_parameters(config, seed)

    @property
    def input_dim(self) -> int:
        if isinstance(self.config, TransformerHeadConfig):
            return self.config.embed_dim
        return self.config.input_dim

    def num_parameters(self) -> int:
        return sum(int(v.size) for v in self.params.values())

    def logits(self, x: np.ndarray, rng: np.random.Generator | None = None):
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise NumericError("input features contain non-finite values")
        if isinstance(self.config, TransformerHeadConfig):
            return transformer_forward(x, self.params, self.config, rng=rng)
        return recurrent_forward(x, self.params, self.config, rng=rng)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode class probabilities, (batch, num_classes)."""
        _check_finite_params(self.params)
        logits, _ = self.logits(x, rng=None)
        return softmax(logits, axis=-1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=-1)

    def loss_and_gradients(
        self,
        x: np.ndarray,
        labels: np.ndarray,
        rng: np.random.Generator | None = None,
    ):
        """Mean cross-entropy plus gradients for every parameter.

        Returns (loss, grads, probs).  rng drives dropout; pass None to
        evaluate the deterministic loss.
        """
        _check_finite_params(self.params)
        labels = np.asarray(labels)
        logits, cache = self.logits(x, rng=rng)
        if labels.shape != (logits.shape[0],):
            raise ValidationError(
                f"labels shape {labels.shape} does not match batch {logits.shape[0]}"
            )
        loss, probs, dlogits = softmax_cross_entropy(logits, labels)
        if isinstance(self.config, TransformerHeadConfig):
            _, grads = transformer_backward(dlogits, cache)
        else:
            _, grads = recurrent_backward(dlogits, cache, self.params)
        if not np.isfinite(loss):
            raise NumericError(f"loss is not finite: {loss}")
        return loss, grads, probs
