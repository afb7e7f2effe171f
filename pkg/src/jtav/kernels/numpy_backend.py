"""Pure-numpy implementations of the hot inner-loop kernels.

Every function here has a signature-identical twin in ``numba_backend``;
the active set is chosen in ``jtav.kernels`` via the JTAV_BACKEND env var.
Convolutions are GEMM-based (im2col feeding BLAS), pooling uses reshape
tricks, and the recurrent sweep is a plain python loop over time steps.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw):
    """(ci,h,w) -> (ci*kh*kw, h*w) patch matrix with same-padding."""
    ci, h, w = x.shape
    xpad = np.zeros((ci, h + kh - 1, w + kw - 1), dtype=x.dtype)
    xpad[:, kh // 2 : kh // 2 + h, kw // 2 : kw // 2 + w] = x
    win = sliding_window_view(xpad, (kh, kw), axis=(1, 2))  # (ci, h, w, kh, kw)
    cols = win.transpose(0, 3, 4, 1, 2).reshape(ci * kh * kw, h * w)
    return np.ascontiguousarray(cols)


_im2col = im2col


def conv2d_from_cols(cols, k, bias, h, w):
    co = k.shape[0]
    y = k.reshape(co, -1) @ cols
    y += bias[:, None]
    return y.reshape(co, h, w)


def conv2d_forward(x, k, bias):
    cols = im2col(x, k.shape[2], k.shape[3])
    return conv2d_from_cols(cols, k, bias, x.shape[1], x.shape[2])


def conv2d_input_grad(dy, k):
    # Gradient w.r.t. the input of a stride-1 same-padded cross-correlation
    # is another same-padded cross-correlation with the kernel flipped
    # spatially and its channel axes swapped.
    kflip = np.ascontiguousarray(k[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    zero = np.zeros(kflip.shape[0], dtype=dy.dtype)
    return conv2d_forward(dy, kflip, zero)


def conv2d_kernel_grad_cols(dy, cols, ci, kh, kw):
    co = dy.shape[0]
    dk = dy.reshape(co, -1) @ cols.T
    db = dy.sum(axis=(1, 2))
    return dk.reshape(co, ci, kh, kw), db


def conv2d_kernel_grad(dy, x, kh, kw):
    cols = im2col(x, kh, kw)
    return conv2d_kernel_grad_cols(dy, cols, x.shape[0], kh, kw)


def bn_stats(x):
    c = x.shape[0]
    xr = x.reshape(c, -1)
    return xr.mean(axis=1), xr.var(axis=1)


def bn_forward(x, gamma, beta, mu, inv_std):
    xhat = (x - mu[:, None, None]) * inv_std[:, None, None]
    y = gamma[:, None, None] * xhat + beta[:, None, None]
    return y, xhat


def bn_backward_train(g, xhat, gamma, inv_std):
    # Backward through per-channel standardization with batch statistics:
    # dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    # where dxhat = g * gamma; the means fold into dbeta/dgamma sums.
    n = g.shape[1] * g.shape[2]
    dbeta = g.sum(axis=(1, 2))
    dgamma = (g * xhat).sum(axis=(1, 2))
    m1 = gamma * dbeta / n
    m2 = gamma * dgamma / n
    dx = inv_std[:, None, None] * (
        gamma[:, None, None] * g - m1[:, None, None] - xhat * m2[:, None, None])
    return dx, dgamma, dbeta


def bn_backward_eval(g, xhat, gamma, inv_std):
    dbeta = g.sum(axis=(1, 2))
    dgamma = (g * xhat).sum(axis=(1, 2))
    dx = g * (gamma * inv_std)[:, None, None]
    return dx, dgamma, dbeta


def maxpool_forward(x, ph, pw):
    c, h, w = x.shape
    oh = -(-h // ph)
    ow = -(-w // pw)
    xpad = np.full((c, oh * ph, ow * pw), -np.inf, dtype=x.dtype)
    xpad[:, :h, :w] = x
    win = xpad.reshape(c, oh, ph, ow, pw).transpose(0, 1, 3, 2, 4).reshape(c, oh, ow, ph * pw)
    idx = win.argmax(axis=3)  # first occurrence on ties
    out = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
    # convert window-local index to a flat index into the unpadded (h, w) grid
    gy = np.arange(oh)[None, :, None] * ph + idx // pw
    gx = np.arange(ow)[None, None, :] * pw + idx % pw
    arg = gy * w + gx
    return out, arg.astype(np.int64)


def maxpool_backward(dy, arg, h, w):
    c = dy.shape[0]
    dx = np.zeros((c, h * w), dtype=dy.dtype)
    for ch in range(c):
        # pooling windows are disjoint, so indices within a channel are unique
        dx[ch, arg[ch].ravel()] += dy[ch].ravel()
    return dx.reshape(c, h, w)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_forward(xw, wh_zr, wh_c):
    """Run a GRU over precomputed input projections.

    xw is (T, 3H) holding W_x x_t + b for the z, r, candidate gates in that
    order; wh_zr (2H, H) and wh_c (H, H) are the recurrent weights. Returns
    the hidden sequence and the per-step gate values needed for backward.
    """
    T, h3 = xw.shape
    H = h3 // 3
    h_seq = np.zeros((T, H), dtype=xw.dtype)
    zs = np.zeros((T, H), dtype=xw.dtype)
    rs = np.zeros((T, H), dtype=xw.dtype)
    cs = np.zeros((T, H), dtype=xw.dtype)
    h = np.zeros(H, dtype=xw.dtype)
    for t in range(T):
        azr = wh_zr @ h
        z = _sigmoid(xw[t, :H] + azr[:H])
        r = _sigmoid(xw[t, H : 2 * H] + azr[H:])
        c = np.tanh(xw[t, 2 * H :] + wh_c @ (r * h))
        h = (1.0 - z) * h + z * c
        zs[t] = z
        rs[t] = r
        cs[t] = c
        h_seq[t] = h
    return h_seq, zs, rs, cs


def gru_backward(dh_out, wh_zr, wh_c, h_seq, zs, rs, cs):
    T, H = dh_out.shape
    dxw = np.zeros((T, 3 * H), dtype=dh_out.dtype)
    dwh_zr = np.zeros_like(wh_zr)
    dwh_c = np.zeros_like(wh_c)
    dh = np.zeros(H, dtype=dh_out.dtype)
    for t in range(T - 1, -1, -1):
        dh = dh + dh_out[t]
        h_prev = h_seq[t - 1] if t > 0 else np.zeros(H, dtype=dh_out.dtype)
        z, r, c = zs[t], rs[t], cs[t]
        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1.0 - z)
        dpre_c = dc * (1.0 - c * c)
        dxw[t, 2 * H :] = dpre_c
        dwh_c += np.outer(dpre_c, r * h_prev)
        drh = wh_c.T @ dpre_c
        dh_prev += drh * r
        dr = drh * h_prev
        dpre_z = dz * z * (1.0 - z)
        dpre_r = dr * r * (1.0 - r)
        dxw[t, :H] = dpre_z
        dxw[t, H : 2 * H] = dpre_r
        dpre_zr = np.concatenate((dpre_z, dpre_r))
        dwh_zr += np.outer(dpre_zr, h_prev)
        dh_prev += wh_zr.T @ dpre_zr
        dh = dh_prev
    return dxw, dwh_zr, dwh_c


def cqt_power(padded, kre, kim, offsets, lengths, hop, half, n_frames):
    """Per-bin windowed-DFT response power at every hop position.

    padded is the signal zero-padded by ``half`` on both sides; kernel row b
    occupies [offsets[b], offsets[b]+lengths[b]) of the (bins, Lmax) kernel
    matrices, centred so that frame n covers padded[n*hop : n*hop+2*half].
    """
    win = sliding_window_view(padded, 2 * half)[::hop][:n_frames]
    re = win @ kre.T
    im = win @ kim.T
    return (re * re + im * im).T
