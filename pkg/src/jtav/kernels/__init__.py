"""Backend dispatch for the compute kernels.

Set JTAV_BACKEND=numpy to force the pure-numpy implementations, or
JTAV_BACKEND=numba to require the jitted ones (raising if numba is
missing). Unset, numba is used when importable and numpy otherwise.
The active choice is exposed as BACKEND for logging and tests.
"""

import os

from . import numpy_backend

_requested = os.environ.get("JTAV_BACKEND", "").strip().lower()

if _requested not in ("", "numpy", "numba"):
    raise ValueError(
        "JTAV_BACKEND must be 'numpy' or 'numba', got %r" % _requested
    )

if _requested == "numpy":
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import numba_backend as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _impl = numpy_backend
        BACKEND = "numpy"

im2col = _impl.im2col
conv2d_from_cols = _impl.conv2d_from_cols
conv2d_forward = _impl.conv2d_forward
conv2d_input_grad = _impl.conv2d_input_grad
conv2d_kernel_grad = _impl.conv2d_kernel_grad
conv2d_kernel_grad_cols = _impl.conv2d_kernel_grad_cols
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward
cqt_power = _impl.cqt_power
bn_stats = _impl.bn_stats
bn_forward = _impl.bn_forward
bn_backward_train = _impl.bn_backward_train
bn_backward_eval = _impl.bn_backward_eval
