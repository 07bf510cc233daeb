"""Small numba kernels for the training hot loop."""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def scatter_add_rows(out, idx, vals):
    """out[idx[t]] += vals[t] for every row t (repeated indices accumulate)."""
    d = out.shape[1]
    for t in range(idx.shape[0]):
        r = idx[t]
        for c in range(d):
            out[r, c] += vals[t, c]


@numba.njit(cache=True, nogil=True)
def scatter_add_scaled(out, idx, src, scale):
    """out[idx[t]] += scale[t] * src[t]."""
    d = out.shape[1]
    for t in range(idx.shape[0]):
        r = idx[t]
        s = scale[t]
        for c in range(d):
            out[r, c] += s * src[t, c]


@numba.njit(cache=True, nogil=True)
def adam_update(p, g, m, v, lr, b1, b2, eps, c1, c2):
    flat_p = p.reshape(-1)
    flat_g = g.reshape(-1)
    flat_m = m.reshape(-1)
    flat_v = v.reshape(-1)
    for k in range(flat_p.shape[0]):
        gk = flat_g[k]
        mk = b1 * flat_m[k] + (1.0 - b1) * gk
        vk = b2 * flat_v[k] + (1.0 - b2) * gk * gk
        flat_m[k] = mk
        flat_v[k] = vk
        flat_p[k] -= lr * (mk / c1) / (np.sqrt(vk / c2) + eps)
