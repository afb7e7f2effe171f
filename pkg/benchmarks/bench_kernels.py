"""Times the numpy and numba kernel implementations side by side.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 20]

Shapes mirror the hot paths of training at default scale: the conv/pool
stages of the spectrogram encoder, batch-norm over its widest stage, the
recurrent cell, and one constant-Q transform frame sweep. The jitted
backend is warmed up before timing so compilation cost is excluded.
"""

import argparse
import time

import numpy as np

from jtav.kernels import numpy_backend

try:
    from jtav.kernels import numba_backend
except ImportError:
    numba_backend = None


def conv_case(rng, ci, co, h, w):
    x = rng.standard_normal((ci, h, w))
    k = rng.standard_normal((co, ci, 3, 3))
    b = rng.standard_normal(co)
    dy = rng.standard_normal((co, h, w))

    def run(backend):
        cols = backend.im2col(x, 3, 3)
        out = backend.conv2d_from_cols(cols, k, b, h, w)
        backend.conv2d_input_grad(np.ascontiguousarray(dy), k)
        backend.conv2d_kernel_grad_cols(dy, cols, ci, 3, 3)
        return out

    return run


def pool_case(rng, c, h, w):
    x = rng.standard_normal((c, h, w))

    def run(backend):
        out, arg = backend.maxpool_forward(x, 2, 2)
        return backend.maxpool_backward(out, arg, h, w)

    return run


def bn_case(rng, c, h, w):
    x = rng.standard_normal((c, h, w))
    gamma = rng.standard_normal(c)
    g = rng.standard_normal((c, h, w))

    def run(backend):
        mu, var = backend.bn_stats(x)
        inv_std = 1.0 / np.sqrt(var + 1e-5)
        y, xhat = backend.bn_forward(x, gamma, np.zeros(c), mu, inv_std)
        return backend.bn_backward_train(g, xhat, gamma, inv_std)

    return run


def gru_case(rng, t, hdim):
    xw = rng.standard_normal((t, 3 * hdim))
    wh_zr = rng.standard_normal((2 * hdim, hdim)) * 0.1
    wh_c = rng.standard_normal((hdim, hdim)) * 0.1
    dh = rng.standard_normal((t, hdim))

    def run(backend):
        h_seq, zs, rs, cs = backend.gru_forward(xw, wh_zr, wh_c)
        return backend.gru_backward(dh, wh_zr, wh_c, h_seq, zs, rs, cs)

    return run


def cqt_case(rng):
    n = 22050 * 2
    padded = rng.standard_normal(n + 2048)
    lengths = np.linspace(1800, 64, 96).astype(np.int64)
    offsets = (2048 - lengths) // 2
    kre = rng.standard_normal((96, 2048))
    kim = rng.standard_normal((96, 2048))

    def run(backend):
        return backend.cqt_power(padded, kre, kim, offsets, lengths,
                                 1024, 1024, 1 + n // 1024)

    return run


CASES = [
    ("conv 1->32 on 96x216", lambda r: conv_case(r, 1, 32, 96, 216)),
    ("conv 32->32 on 48x108", lambda r: conv_case(r, 32, 32, 48, 108)),
    ("conv 64->32 on 12x27", lambda r: conv_case(r, 64, 32, 12, 27)),
    ("maxpool 32 x 96x216", lambda r: pool_case(r, 32, 96, 216)),
    ("batch norm 32 x 48x108", lambda r: bn_case(r, 32, 48, 108)),
    ("gru T=216 H=32", lambda r: gru_case(r, 216, 32)),
    ("cqt 2 s sweep", lambda r: cqt_case(r)),
]


def time_one(fn, backend, repeats):
    fn(backend)  # warmup (and jit compile for numba)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    rows = []
    for name, make in CASES:
        fn = make(rng)
        t_np = time_one(fn, numpy_backend, args.repeats)
        if numba_backend is not None:
            t_nb = time_one(fn, numba_backend, args.repeats)
            rows.append((name, t_np, t_nb, t_np / t_nb))
        else:
            rows.append((name, t_np, None, None))

    header = "%-26s %12s %12s %8s" % ("case", "numpy (ms)", "numba (ms)",
                                      "speedup")
    print(header)
    print("-" * len(header))
    for name, t_np, t_nb, ratio in rows:
        if t_nb is None:
            print("%-26s %12.3f %12s %8s" % (name, t_np * 1e3, "n/a", "n/a"))
        else:
            print("%-26s %12.3f %12.3f %7.1fx"
                  % (name, t_np * 1e3, t_nb * 1e3, ratio))
    if numba_backend is None:
        print("\nnumba is not installed; only the numpy backend was timed.")


if __name__ == "__main__":
    main()
