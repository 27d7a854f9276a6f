"""Batched single-layer LSTM forward and backward passes.

Gate order along the 4H axis is [input, forget, cell, output]. Weights:
W (I, 4H) on the input, U (H, 4H) on the recurrent state, bias b (4H,).
"""

from __future__ import annotations

import numpy as np

from .ops import sigmoid


def lstm_forward(x, h0, c0, W, U, b):
    """x (L, B, I), h0/c0 (B, H) -> (h_seq (L, B, H), (h_last, c_last), cache)."""
    length, batch, _ = x.shape
    hidden = h0.shape[1]
    h_seq = np.empty((length, batch, hidden))
    steps = []
    h, c = h0, c0
    for t in range(length):
        gates = x[t] @ W + h @ U + b
        i = sigmoid(gates[:, :hidden])
        f = sigmoid(gates[:, hidden : 2 * hidden])
        g = np.tanh(gates[:, 2 * hidden : 3 * hidden])
        o = sigmoid(gates[:, 3 * hidden :])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        steps.append((x[t], h, c, i, f, g, o, tanh_c))
        h, c = h_new, c_new
        h_seq[t] = h
    return h_seq, (h, c), (steps, W, U, h0.shape)


def lstm_backward(d_h_seq, d_h_last, d_c_last, cache):
    """Backprop through one layer.

    d_h_seq (L, B, H) holds gradients flowing into each step's output;
    d_h_last/d_c_last are extra gradients on the final state (pass zeros
    when unused). Returns (dx, dh0, dc0, dW, dU, db).
    """
    steps, W, U, h0_shape = cache
    length = len(steps)
    batch, hidden = h0_shape
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * hidden)
    dx = np.empty((length, batch, W.shape[0]))

    dh = np.array(d_h_last, copy=True)
    dc = np.array(d_c_last, copy=True)
    for t in range(length - 1, -1, -1):
        x_t, h_prev, c_prev, i, f, g, o, tanh_c = steps[t]
        dh_total = dh + d_h_seq[t]
        do = dh_total * tanh_c
        dc = dc + dh_total * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_prev = dc * f
        dgates = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dW += x_t.T @ dgates
        dU += h_prev.T @ dgates
        db += dgates.sum(axis=0)
        dx[t] = dgates @ W.T
        dh = dgates @ U.T
        dc = dc_prev
    return dx, dh, dc, dW, dU, db


def lstm_step(x_t, h, c, W, U, b):
    """Single inference step used by greedy decoding; no cache kept."""
    hidden = h.shape[1]
    gates = x_t @ W + h @ U + b
    i = sigmoid(gates[:, :hidden])
    f = sigmoid(gates[:, hidden : 2 * hidden])
    g = np.tanh(gates[:, 2 * hidden : 3 * hidden])
    o = sigmoid(gates[:, 3 * hidden :])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new
