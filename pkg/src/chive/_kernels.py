"""Compiled LSTM recurrence, forward and backward.

Gate layout along the last axis of the pre-activations: input, forget,
cell candidate, output (each ``hidden`` wide).
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def lstm_forward(xw, w_hh, resets, h0, c0):
    n, g4 = xw.shape
    hidden = g4 // 4
    hs = np.empty((n, hidden))
    cs = np.empty((n, hidden))
    acts = np.empty((n, g4))
    h = h0.copy()
    c = c0.copy()
    z = np.empty(g4)
    for t in range(n):
        if resets[t]:
            h[:] = 0.0
            c[:] = 0.0
        z[:] = xw[t]
        for k in range(hidden):
            hk = h[k]
            for j in range(g4):
                z[j] += hk * w_hh[k, j]
        for k in range(hidden):
            i = _sigmoid(z[k])
            f = _sigmoid(z[hidden + k])
            g = np.tanh(z[2 * hidden + k])
            o = _sigmoid(z[3 * hidden + k])
            acts[t, k] = i
            acts[t, hidden + k] = f
            acts[t, 2 * hidden + k] = g
            acts[t, 3 * hidden + k] = o
            c[k] = f * c[k] + i * g
            h[k] = o * np.tanh(c[k])
            cs[t, k] = c[k]
            hs[t, k] = h[k]
    return hs, cs, acts


@njit(cache=True)
def lstm_backward(dhs, hs, cs, acts, w_hh, resets, h0, c0):
    n, hidden = dhs.shape
    g4 = 4 * hidden
    dxw = np.empty((n, g4))
    dw_hh = np.zeros((hidden, g4))
    dh_next = np.zeros(hidden)
    dc_next = np.zeros(hidden)
    h_prev = np.empty(hidden)
    c_prev = np.empty(hidden)
    dh_prev = np.empty(hidden)
    for t in range(n - 1, -1, -1):
        if resets[t]:
            h_prev[:] = 0.0
            c_prev[:] = 0.0
        elif t == 0:
            h_prev[:] = h0
            c_prev[:] = c0
        else:
            h_prev[:] = hs[t - 1]
            c_prev[:] = cs[t - 1]
        for k in range(hidden):
            i = acts[t, k]
            f = acts[t, hidden + k]
            g = acts[t, 2 * hidden + k]
            o = acts[t, 3 * hidden + k]
            tc = np.tanh(cs[t, k])
            dh = dhs[t, k] + dh_next[k]
            dc = dc_next[k] + dh * o * (1.0 - tc * tc)
            dxw[t, k] = dc * g * i * (1.0 - i)
            dxw[t, hidden + k] = dc * c_prev[k] * f * (1.0 - f)
            dxw[t, 2 * hidden + k] = dc * i * (1.0 - g * g)
            dxw[t, 3 * hidden + k] = dh * tc * o * (1.0 - o)
            dc_next[k] = dc * f
        for k in range(hidden):
            s = 0.0
            hp = h_prev[k]
            for j in range(g4):
                dz = dxw[t, j]
                s += dz * w_hh[k, j]
                dw_hh[k, j] += hp * dz
            dh_prev[k] = s
        if resets[t]:
            dh_next[:] = 0.0
            dc_next[:] = 0.0
        else:
            dh_next[:] = dh_prev
    return dxw, dw_hh, dh_next, dc_next
