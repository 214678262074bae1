"""Recurrent heads: LSTM and GRU, unidirectional or bidirectional.

Cells follow the usual gate conventions.  LSTM: input, forget, candidate,
output gates with state c.  GRU: update gate z mixes the previous state with
a candidate n computed from the reset-gated state,
h = z * h_prev + (1 - z) * n.  Per-step outputs pass through dropout, a
linear time-distributed dense layer, mean pooling over time, dropout again,
and the class projection.
"""
from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .config import RecurrentHeadConfig
from .layers import (
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    mean_pool_time_backward,
    mean_pool_time_forward,
    sigmoid,
)

LSTM_GATES = ("i", "f", "g", "o")
GRU_GATES = ("z", "r", "n")


def _gates(cell: str) -> tuple[str, ...]:
    return LSTM_GATES if cell == "lstm" else GRU_GATES


def lstm_forward(x: np.ndarray, params: dict, prefix: str):
    """(B, T, D) -> per-step hidden states (B, T, U)."""
    b, t, _ = x.shape
    u = params[prefix + "b_i"].shape[0]
    h = np.zeros((b, u))
    c = np.zeros((b, u))
    outputs = np.empty((b, t, u))
    steps = []
    for step in range(t):
        xt = x[:, step, :]
        i = sigmoid(xt @ params[prefix + "w_i"] + h @ params[prefix + "u_i"] + params[prefix + "b_i"])
        f = sigmoid(xt @ params[prefix + "w_f"] + h @ params[prefix + "u_f"] + params[prefix + "b_f"])
        g = np.tanh(xt @ params[prefix + "w_g"] + h @ params[prefix + "u_g"] + params[prefix + "b_g"])
        o = sigmoid(xt @ params[prefix + "w_o"] + h @ params[prefix + "u_o"] + params[prefix + "b_o"])
        c_next = f * c + i * g
        tanh_c = np.tanh(c_next)
        h_next = o * tanh_c
        steps.append((xt, h, c, i, f, g, o, tanh_c))
        h, c = h_next, c_next
        outputs[:, step, :] = h
    return outputs, (steps, prefix)


def lstm_backward(doutputs: np.ndarray, cache, params: dict):
    steps, prefix = cache
    grads = {
        prefix + name: np.zeros_like(params[prefix + name])
        for gate in LSTM_GATES
        for name in (f"w_{gate}", f"u_{gate}", f"b_{gate}")
    }
    b, t, _ = doutputs.shape
    dx = np.empty((b, t, params[prefix + "w_i"].shape[0]))
    dh = np.zeros((b, params[prefix + "b_i"].shape[0]))
    dc = np.zeros_like(dh)
    for step in reversed(range(t)):
        xt, h_prev, c_prev, i, f, g, o, tanh_c = steps[step]
        dh = dh + doutputs[:, step, :]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c**2)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc = dc * f
        pre = {
            "i": di * i * (1.0 - i),
            "f": df * f * (1.0 - f),
            "g": dg * (1.0 - g**2),
            "o": do * o * (1.0 - o),
        }
        dxt = np.zeros_like(xt)
        dh = np.zeros_like(dh)
        for gate, dpre in pre.items():
            grads[prefix + f"w_{gate}"] += xt.T @ dpre
            grads[prefix + f"u_{gate}"] += h_prev.T @ dpre
            grads[prefix + f"b_{gate}"] += dpre.sum(axis=0)
            dxt += dpre @ params[prefix + f"w_{gate}"].T
            dh += dpre @ params[prefix + f"u_{gate}"].T
        dx[:, step, :] = dxt
    return dx, grads


def gru_forward(x: np.ndarray, params: dict, prefix: str):
    """(B, T, D) -> per-step hidden states (B, T, U)."""
    b, t, _ = x.shape
    u = params[prefix + "b_z"].shape[0]
    h = np.zeros((b, u))
    outputs = np.empty((b, t, u))
    steps = []
    for step in range(t):
        xt = x[:, step, :]
        z = sigmoid(xt @ params[prefix + "w_z"] + h @ params[prefix + "u_z"] + params[prefix + "b_z"])
        r = sigmoid(xt @ params[prefix + "w_r"] + h @ params[prefix + "u_r"] + params[prefix + "b_r"])
        rh = r * h
        n = np.tanh(xt @ params[prefix + "w_n"] + rh @ params[prefix + "u_n"] + params[prefix + "b_n"])
        h_next = z * h + (1.0 - z) * n
        steps.append((xt, h, z, r, rh, n))
        h = h_next
        outputs[:, step, :] = h
    return outputs, (steps, prefix)


def gru_backward(doutputs: np.ndarray, cache, params: dict):
    steps, prefix = cache
    grads = {
        prefix + name: np.zeros_like(params[prefix + name])
        for gate in GRU_GATES
        for name in (f"w_{gate}", f"u_{gate}", f"b_{gate}")
    }
    b, t, _ = doutputs.shape
    dx = np.empty((b, t, params[prefix + "w_z"].shape[0]))
    dh = np.zeros((b, params[prefix + "b_z"].shape[0]))
    for step in reversed(range(t)):
        xt, h_prev, z, r, rh, n = steps[step]
        dh = dh + doutputs[:, step, :]
        dz = dh * (h_prev - n)
        dn = dh * (1.0 - z)
        dh_prev = dh * z
        dpre_n = dn * (1.0 - n**2)
        grads[prefix + "w_n"] += xt.T @ dpre_n
        grads[prefix + "u_n"] += rh.T @ dpre_n
        grads[prefix + "b_n"] += dpre_n.sum(axis=0)
        drh = dpre_n @ params[prefix + "u_n"].T
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r
        dpre_z = dz * z * (1.0 - z)
        dpre_r = dr * r * (1.0 - r)
        for gate, dpre in (("z", dpre_z), ("r", dpre_r)):
            grads[prefix + f"w_{gate}"] += xt.T @ dpre
            grads[prefix + f"u_{gate}"] += h_prev.T @ dpre
            grads[prefix + f"b_{gate}"] += dpre.sum(axis=0)
            dh_prev = dh_prev + dpre @ params[prefix + f"u_{gate}"].T
        dx[:, step, :] = (
            dpre_z @ params[prefix + "w_z"].T
            + dpre_r @ params[prefix + "w_r"].T
            + dpre_n @ params[prefix + "w_n"].T
        )
        dh = dh_prev
    return dx, grads


def _cell_forward(cell: str, x: np.ndarray, params: dict, prefix: str):
    if cell == "lstm":
        return lstm_forward(x, params, prefix)
    return gru_forward(x, params, prefix)


def _cell_backward(cell: str, dout: np.ndarray, cache, params: dict):
    if cell == "lstm":
        return lstm_backward(dout, cache, params)
    return gru_backward(dout, cache, params)


def recurrent_steps_forward(x: np.ndarray, params: dict, config: RecurrentHeadConfig):
    """Per-step recurrent outputs: (B, T, units) or (B, T, 2 * units)."""
    fw_out, fw_cache = _cell_forward(config.cell, x, params, "rnn.fw.")
    if not config.bidirectional:
        return fw_out, (fw_cache, None)
    bw_out, bw_cache = _cell_forward(config.cell, x[:, ::-1, :], params, "rnn.bw.")
    merged = np.concatenate([fw_out, bw_out[:, ::-1, :]], axis=-1)
    return merged, (fw_cache, bw_cache)


def recurrent_steps_backward(dout: np.ndarray, caches, params: dict, config: RecurrentHeadConfig):
    fw_cache, bw_cache = caches
    if not config.bidirectional:
        return _cell_backward(config.cell, dout, fw_cache, params)
    units = config.units
    dfw = np.ascontiguousarray(dout[:, :, :units])
    dbw = np.ascontiguousarray(dout[:, ::-1, units:])
    dx_fw, grads_fw = _cell_backward(config.cell, dfw, fw_cache, params)
    dx_bw, grads_bw = _cell_backward(config.cell, dbw, bw_cache, params)
    grads_fw.update(grads_bw)
    return dx_fw + dx_bw[:, ::-1, :], grads_fw


def recurrent_forward(
    x: np.ndarray,
    params: dict,
    config: RecurrentHeadConfig,
    rng: np.random.Generator | None = None,
):
    """(B, T, D) features -> (B, num_classes) logits plus backward cache."""
    if x.ndim != 3 or x.shape[2] != config.input_dim:
        raise ValidationError(
            f"expected input (batch, time, {config.input_dim}), got {x.shape}"
        )
    if x.shape[1] > config.seq_len:
        raise ValidationError(
            f"sequence length {x.shape[1]} exceeds maximum {config.seq_len}"
        )
    steps, step_caches = recurrent_steps_forward(x, params, config)
    dropped1, mask1 = dropout_forward(steps, config.dropout_steps, rng)
    mid, mid_cache = dense_forward(dropped1, params["mid.w"], params["mid.b"])
    pooled, pool_shape = mean_pool_time_forward(mid)
    dropped2, mask2 = dropout_forward(pooled, config.dropout, rng)
    logits, head_cache = dense_forward(dropped2, params["head.w"], params["head.b"])
    cache = (step_caches, mask1, mid_cache, pool_shape, mask2, head_cache, config)
    return logits, cache


def recurrent_backward(dlogits: np.ndarray, cache, params: dict):
    step_caches, mask1, mid_cache, pool_shape, mask2, head_cache, config = cache
    ddropped2, dhead_w, dhead_b = dense_backward(dlogits, head_cache)
    dpooled = dropout_backward(ddropped2, mask2)
    dmid = mean_pool_time_backward(dpooled, pool_shape)
    ddropped1, dmid_w, dmid_b = dense_backward(dmid, mid_cache)
    dsteps = dropout_backward(ddropped1, mask1)
    dx, grads = recurrent_steps_backward(dsteps, step_caches, params, config)
    grads.update(
        {
            "mid.w": dmid_w,
            "mid.b": dmid_b,
            "head.w": dhead_w,
            "head.b": dhead_b,
        }
    )
    return dx, grads
