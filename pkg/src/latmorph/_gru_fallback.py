"""Pure-numpy GRU step kernels (used when the compiled extension is absent)."""

import numpy as np


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def gru_forward(x, h, w_ih, w_hh, b):
    """Return ``(h_new, cache)`` for a batch ``x`` [N, I], ``h`` [N, H]."""
    hid = h.shape[1]
    gx = x @ w_ih.T
    gx += b
    gzr = h @ w_hh[: 2 * hid].T
    gzr += gx[:, : 2 * hid]
    zr = _sigmoid(gzr)
    z = zr[:, :hid]
    r = zr[:, hid:]
    rh = r * h
    n = np.tanh(gx[:, 2 * hid:] + rh @ w_hh[2 * hid:].T)
    h_new = h + z * (n - h)
    return h_new, (z, r, n, rh)


def gru_backward(dh_new, x, h, w_ih, w_hh, cache):
    """Adjoints ``(dx, dh, dw_ih, dw_hh, db)`` given the output adjoint."""
    z, r, n, rh = cache
    hid = h.shape[1]
    dz = dh_new * (n - h)
    dn = dh_new * z
    da = np.empty((h.shape[0], 3 * hid), dtype=h.dtype)
    da_n = da[:, 2 * hid:]
    np.multiply(dn, 1.0 - n * n, out=da_n)
    drh = da_n @ w_hh[2 * hid:]
    np.multiply(dz, z * (1.0 - z), out=da[:, :hid])
    np.multiply(drh * h, r * (1.0 - r), out=da[:, hid: 2 * hid])
    dh = dh_new * (1.0 - z) + drh * r + da[:, : 2 * hid] @ w_hh[: 2 * hid]
    dx = da @ w_ih
    dw_ih = da.T @ x
    dw_hh = np.empty_like(w_hh)
    dw_hh[: 2 * hid] = da[:, : 2 * hid].T @ h
    dw_hh[2 * hid:] = da_n.T @ rh
    db = da.sum(axis=0)
    return dx, dh, dw_ih, dw_hh, db
