"""Tiny module system on top of :mod:`fastfca.autodiff`."""
import numpy as np

from .. import autodiff as ad


class Module:
    """Container that discovers trainable tensors held in its attributes."""

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, ad.Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"parameter {name}: checkpoint shape {arr.shape}, model {p.shape}")
            p.data[...] = arr


class Conv1d(Module):
    """'Same' 1-D convolution over frames; uniform(+-1/sqrt(fan_in)) init."""

    def __init__(self, c_in, c_out, kernel_size, rng):
        bound = 1.0 / np.sqrt(c_in * kernel_size)
        self.weight = ad.Tensor(rng.uniform(-bound, bound, (c_out, c_in, kernel_size)),
                                requires_grad=True)
        self.bias = ad.Tensor(rng.uniform(-bound, bound, c_out), requires_grad=True)

    def __call__(self, x):
        return ad.conv1d(x, self.weight, self.bias)


class PReLU(Module):
    def __init__(self, channels, init=0.25):
        self.alpha = ad.Tensor(np.full(channels, init), requires_grad=True)

    def __call__(self, x):
        return ad.prelu(x, self.alpha, axis=1)

