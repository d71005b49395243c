"""Minimal layer/module system on top of the autodiff tensors.

Modules register child modules and parameters by attribute assignment.
``Module.__call__`` pushes the child's registration name onto the cost
scope stack, so a traced forward pass attributes MACs and element counts
to dotted layer paths.
"""

from __future__ import annotations

import math

import numpy as np

from . import costs
from . import tensor as T
from .tensor import Parameter, Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated (by clipping) to two standard deviations."""
    return np.clip(rng.standard_normal(shape), -2.0, 2.0) * std


def kaiming_normal_fan_out(rng: np.random.Generator, shape, groups: int = 1) -> np.ndarray:
    cout, _, kh, kw = shape
    fan_out = cout * kh * kw // groups
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_out)


class Module:
    def __init__(self):
        self.__dict__["_modules"] = {}
        self.__dict__["_params"] = {}
        self.__dict__["_local_name"] = ""
        self.__dict__["training"] = True

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
            value._local_name = key
        self.__dict__[key] = value

    def __call__(self, *args, **kwargs):
        if self._local_name:
            with costs.scope(self._local_name):
                return self.forward(*args, **kwargs)
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_modules(self, prefix: str = ""):
        yield prefix, self
        for name, mod in self._modules.items():
            yield from mod.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self, prefix: str = ""):
        for path, mod in self.named_modules(prefix):
            for name, param in mod._params.items():
                yield f"{path}.{name}" if path else name, param

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True):
        for _, mod in self.named_modules():
            mod.__dict__["training"] = mode
        return self

    def eval(self):
        return self.train(False)

    def assign_parameter_names(self) -> None:
        """Stamp each parameter with its dotted path from this root."""
        seen = set()
        for path, param in self.named_parameters():
            if path in seen:
                raise ValueError(f"duplicate parameter name {path!r}")
            seen.add(path)
            param.name = path


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for mod in modules:
            self.append(mod)

    def append(self, mod: Module) -> None:
        name = str(len(self._items))
        self._items.append(mod)
        self._modules[name] = mod
        mod._local_name = name

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def forward(self, x):
        for mod in self._items:
            x = mod(x)
        return x


class Linear(Module):
    def __init__(self, din: int, dout: int, rng: np.random.Generator, bias: bool = True,
                 init: str = "trunc"):
        super().__init__()
        self.din, self.dout = din, dout
        if init == "trunc":
            weight = trunc_normal(rng, (din, dout))
        elif init == "he":
            # Fan-in-scaled normal; keeps ReLU branches alive under the
            # high-lr point-cloud recipe where the 0.02 convention stalls.
            weight = math.sqrt(2.0 / din) * rng.standard_normal((din, dout))
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Parameter(weight)
        self.bias = Parameter(np.zeros(dout)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        flat = T.reshape(x, (-1, self.din)) if len(lead) != 1 else x
        y = T.matmul(flat, self.weight)
        if self.bias is not None:
            y = T.add(y, self.bias)
        if len(lead) != 1:
            y = T.reshape(y, lead + (self.dout,))
        return y


class Conv2d(Module):
    def __init__(
        self,
        cin: int,
        cout: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        groups: int = 1,
        bias: bool = True,
        init: str = "kaiming",
    ):
        super().__init__()
        self.stride, self.padding, self.groups = stride, padding, groups
        shape = (cout, cin // groups, kernel_size, kernel_size)
        if init == "kaiming":
            w = kaiming_normal_fan_out(rng, shape, groups)
        elif init == "trunc":
            w = trunc_normal(rng, shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(cout)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class BatchNorm(Module):
    """Batch normalization over (N,C) or (N,C,H,W), channel axis 1."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x: Tensor) -> Tensor:
        return T.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            self.training,
            self.momentum,
            self.eps,
        )


class DropPath(Module):
    """Per-sample residual-branch drop with 1/(1-rate) rescaling, train only."""

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("drop rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        if self.rng is None:
            raise RuntimeError("DropPath with rate > 0 needs a generator")
        keep = (self.rng.random(x.shape[0]) >= self.rate).astype(np.float64)
        mask = keep.reshape((-1,) + (1,) * (len(x.shape) - 1)) / (1.0 - self.rate)
        return T.mul(x, Tensor(mask))


class Identity(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x
