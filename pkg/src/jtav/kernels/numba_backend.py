"""Numba-jitted twins of the numpy kernel set.

Compiled lazily with cache=True so repeat runs skip compilation. All loops
are single-threaded on purpose: results must be bit-reproducible and the
target machines are small. The convolutions still go through BLAS (np.dot
inside njit); numba's job there is the patch extraction, which is where
the numpy version pays for its strided-view copies.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def im2col(x, kh, kw):
    ci, h, w = x.shape
    oy = kh // 2
    ox = kw // 2
    cols = np.zeros((ci * kh * kw, h * w), dtype=x.dtype)
    row = 0
    for c in range(ci):
        for a in range(kh):
            da = a - oy
            i0 = max(0, -da)
            i1 = min(h, h - da)
            for b in range(kw):
                db = b - ox
                j0 = max(0, -db)
                j1 = min(w, w - db)
                if j1 > j0:
                    for i in range(i0, i1):
                        base = i * w
                        cols[row, base + j0:base + j1] = \
                            x[c, i + da, j0 + db:j1 + db]
                row += 1
    return cols


_im2col = im2col


@njit(cache=True)
def conv2d_from_cols(cols, k, bias, h, w):
    co, ci, kh, kw = k.shape
    kmat = np.ascontiguousarray(k).reshape(co, ci * kh * kw)
    y = np.dot(kmat, cols)
    for o in range(co):
        y[o, :] += bias[o]
    return y.reshape(co, h, w)


@njit(cache=True)
def conv2d_forward(x, k, bias):
    cols = im2col(x, k.shape[2], k.shape[3])
    return conv2d_from_cols(cols, k, bias, x.shape[1], x.shape[2])


@njit(cache=True)
def conv2d_input_grad(dy, k):
    co, ci, kh, kw = k.shape
    kflip = np.empty((ci, co, kh, kw), dtype=k.dtype)
    for o in range(co):
        for c in range(ci):
            for a in range(kh):
                for b in range(kw):
                    kflip[c, o, a, b] = k[o, c, kh - 1 - a, kw - 1 - b]
    zero = np.zeros(ci, dtype=dy.dtype)
    return conv2d_forward(dy, kflip, zero)


@njit(cache=True)
def conv2d_kernel_grad_cols(dy, cols, ci, kh, kw):
    co = dy.shape[0]
    hw = cols.shape[1]
    dy2 = np.ascontiguousarray(dy).reshape(co, hw)
    dk = np.dot(dy2, cols.T)
    db = np.zeros(co, dtype=dy.dtype)
    for o in range(co):
        db[o] = np.sum(dy2[o, :])
    return dk.reshape(co, ci, kh, kw), db


@njit(cache=True)
def conv2d_kernel_grad(dy, x, kh, kw):
    cols = im2col(x, kh, kw)
    return conv2d_kernel_grad_cols(dy, cols, x.shape[0], kh, kw)


@njit(cache=True)
def bn_stats(x):
    c, h, w = x.shape
    n = h * w
    mu = np.empty(c, dtype=x.dtype)
    var = np.empty(c, dtype=x.dtype)
    for ch in range(c):
        s = 0.0
        for i in range(h):
            for j in range(w):
                s += x[ch, i, j]
        m = s / n
        s2 = 0.0
        for i in range(h):
            for j in range(w):
                d = x[ch, i, j] - m
                s2 += d * d
        mu[ch] = m
        var[ch] = s2 / n
    return mu, var


@njit(cache=True)
def bn_forward(x, gamma, beta, mu, inv_std):
    c, h, w = x.shape
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    for ch in range(c):
        g = gamma[ch]
        bt = beta[ch]
        m = mu[ch]
        inv = inv_std[ch]
        for i in range(h):
            for j in range(w):
                v = (x[ch, i, j] - m) * inv
                xhat[ch, i, j] = v
                y[ch, i, j] = g * v + bt
    return y, xhat


@njit(cache=True)
def bn_backward_train(g, xhat, gamma, inv_std):
    c, h, w = g.shape
    n = h * w
    dgamma = np.empty(c, dtype=g.dtype)
    dbeta = np.empty(c, dtype=g.dtype)
    dx = np.empty_like(g)
    for ch in range(c):
        s1 = 0.0
        s2 = 0.0
        for i in range(h):
            for j in range(w):
                gv = g[ch, i, j]
                s1 += gv
                s2 += gv * xhat[ch, i, j]
        dbeta[ch] = s1
        dgamma[ch] = s2
        ga = gamma[ch]
        inv = inv_std[ch]
        m1 = ga * s1 / n
        m2 = ga * s2 / n
        for i in range(h):
            for j in range(w):
                dx[ch, i, j] = inv * (
                    ga * g[ch, i, j] - m1 - xhat[ch, i, j] * m2)
    return dx, dgamma, dbeta


@njit(cache=True)
def bn_backward_eval(g, xhat, gamma, inv_std):
    c, h, w = g.shape
    dgamma = np.empty(c, dtype=g.dtype)
    dbeta = np.empty(c, dtype=g.dtype)
    dx = np.empty_like(g)
    for ch in range(c):
        s1 = 0.0
        s2 = 0.0
        scale = gamma[ch] * inv_std[ch]
        for i in range(h):
            for j in range(w):
                gv = g[ch, i, j]
                s1 += gv
                s2 += gv * xhat[ch, i, j]
                dx[ch, i, j] = gv * scale
        dbeta[ch] = s1
        dgamma[ch] = s2
    return dx, dgamma, dbeta


@njit(cache=True)
def maxpool_forward(x, ph, pw):
    c, h, w = x.shape
    oh = -(-h // ph)
    ow = -(-w // pw)
    out = np.empty((c, oh, ow), dtype=x.dtype)
    arg = np.empty((c, oh, ow), dtype=np.int64)
    for ch in range(c):
        for i in range(oh):
            for j in range(ow):
                best = -np.inf
                bi = i * ph
                bj = j * pw
                for a in range(i * ph, min((i + 1) * ph, h)):
                    for b in range(j * pw, min((j + 1) * pw, w)):
                        v = x[ch, a, b]
                        if v > best:
                            best = v
                            bi = a
                            bj = b
                out[ch, i, j] = best
                arg[ch, i, j] = bi * w + bj
    return out, arg


@njit(cache=True)
def maxpool_backward(dy, arg, h, w):
    c, oh, ow = dy.shape
    dx = np.zeros((c, h * w), dtype=dy.dtype)
    for ch in range(c):
        for i in range(oh):
            for j in range(ow):
                dx[ch, arg[ch, i, j]] += dy[ch, i, j]
    return dx.reshape(c, h, w)


@njit(cache=True)
def gru_forward(xw, wh_zr, wh_c):
    T, h3 = xw.shape
    H = h3 // 3
    h_seq = np.zeros((T, H), dtype=xw.dtype)
    zs = np.zeros((T, H), dtype=xw.dtype)
    rs = np.zeros((T, H), dtype=xw.dtype)
    cs = np.zeros((T, H), dtype=xw.dtype)
    h = np.zeros(H, dtype=xw.dtype)
    rh = np.zeros(H, dtype=xw.dtype)
    for t in range(T):
        azr = np.dot(wh_zr, h)
        for m in range(H):
            zs[t, m] = 1.0 / (1.0 + np.exp(-(xw[t, m] + azr[m])))
            rs[t, m] = 1.0 / (1.0 + np.exp(-(xw[t, H + m] + azr[H + m])))
            rh[m] = rs[t, m] * h[m]
        ac = np.dot(wh_c, rh)
        for m in range(H):
            cs[t, m] = np.tanh(xw[t, 2 * H + m] + ac[m])
            h[m] = (1.0 - zs[t, m]) * h[m] + zs[t, m] * cs[t, m]
            h_seq[t, m] = h[m]
    return h_seq, zs, rs, cs


@njit(cache=True)
def gru_backward(dh_out, wh_zr, wh_c, h_seq, zs, rs, cs):
    T, H = dh_out.shape
    dxw = np.zeros((T, 3 * H), dtype=dh_out.dtype)
    dwh_zr = np.zeros_like(wh_zr)
    dwh_c = np.zeros_like(wh_c)
    dh = np.zeros(H, dtype=dh_out.dtype)
    h0 = np.zeros(H, dtype=dh_out.dtype)
    dpre_c = np.zeros(H, dtype=dh_out.dtype)
    dpre_zr = np.zeros(2 * H, dtype=dh_out.dtype)
    for t in range(T - 1, -1, -1):
        for m in range(H):
            dh[m] += dh_out[t, m]
        h_prev = h_seq[t - 1] if t > 0 else h0
        for m in range(H):
            z = zs[t, m]
            c = cs[t, m]
            dc = dh[m] * z
            dpre_c[m] = dc * (1.0 - c * c)
            dxw[t, 2 * H + m] = dpre_c[m]
        for m in range(H):
            v = dpre_c[m]
            for n in range(H):
                dwh_c[m, n] += v * rs[t, n] * h_prev[n]
        drh = np.dot(wh_c.T, dpre_c)
        for m in range(H):
            z = zs[t, m]
            r = rs[t, m]
            dr = drh[m] * h_prev[m]
            dpre_zr[m] = dh[m] * (cs[t, m] - h_prev[m]) * z * (1.0 - z)
            dpre_zr[H + m] = dr * r * (1.0 - r)
            dxw[t, m] = dpre_zr[m]
            dxw[t, H + m] = dpre_zr[H + m]
        for m in range(2 * H):
            v = dpre_zr[m]
            for n in range(H):
                dwh_zr[m, n] += v * h_prev[n]
        back = np.dot(wh_zr.T, dpre_zr)
        for m in range(H):
            dh[m] = dh[m] * (1.0 - zs[t, m]) + drh[m] * rs[t, m] + back[m]
    return dxw, dwh_zr, dwh_c


@njit(cache=True)
def cqt_power(padded, kre, kim, offsets, lengths, hop, half, n_frames):
    bins = kre.shape[0]
    out = np.empty((bins, n_frames), dtype=padded.dtype)
    for b in range(bins):
        off = offsets[b]
        ln = lengths[b]
        for f in range(n_frames):
            base = f * hop + off
            re = 0.0
            im = 0.0
            for i in range(ln):
                s = padded[base + i]
                re += s * kre[b, off + i]
                im += s * kim[b, off + i]
            out[b, f] = re * re + im * im
    return out
