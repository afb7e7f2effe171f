"""Named parameter registry and weight initializers.

Creation order is fixed by construction code, which makes checkpoints,
optimizer state and RNG consumption reproducible run to run.
"""

import numpy as np

from .autodiff import Tensor
from .errors import ContractError


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def context_vector(rng, dim):
    # small-scale normal draw for learned attention context vectors
    return rng.standard_normal(dim) * 0.01


class ParamSet:
    """Ordered name -> Tensor map for everything the optimizer touches."""

    def __init__(self):
        self._params = {}

    def add(self, name: str, array) -> Tensor:
        if name in self._params:
            raise ContractError("duplicate parameter name %r" % name)
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def adopt(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ContractError("duplicate parameter name %r" % name)
        if not tensor.requires_grad:
            raise ContractError("adopted parameter %r must require grad" % name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params.keys())

    def tensors(self):
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def arrays(self):
        """name -> data view, in creation order."""
        return {name: t.data for name, t in self._params.items()}

    def load_arrays(self, arrays):
        for name, t in self._params.items():
            if name not in arrays:
                raise ContractError("checkpoint missing parameter %r" % name)
            src = arrays[name]
            if src.shape != t.data.shape:
                raise ContractError(
                    "checkpoint shape %s for %r, expected %s"
                    % (src.shape, name, t.data.shape))
            t.data[...] = src
