"""Grouped 2-D convolution kernels.

Two interchangeable backends: a compiled Cython extension for the hot
inner loops and a vectorized numpy fallback. The compiled one is selected
at import time when available; set ``STARKERNEL_CONV_BACKEND=numpy`` (or
``cython``) to force a choice. Both expose the same three functions and
agree to float64 roundoff; ``starkernel bench-conv`` compares their speed.
"""

from __future__ import annotations

import os

from . import _conv_numpy

_BACKENDS = {"numpy": _conv_numpy}

try:
    from . import _conv_cython

    _BACKENDS["cython"] = _conv_cython
except ImportError:
    _conv_cython = None

_requested = os.environ.get("STARKERNEL_CONV_BACKEND")
if _requested is not None and _requested not in _BACKENDS:
    raise ImportError(
        f"STARKERNEL_CONV_BACKEND={_requested!r} unavailable "
        f"(have: {', '.join(sorted(_BACKENDS))})"
    )
_active = _BACKENDS[_requested or ("cython" if "cython" in _BACKENDS else "numpy")]


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    for name, mod in _BACKENDS.items():
        if mod is _active:
            return name
    raise AssertionError("no active backend")


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable (have: {available_backends()})")
    _active = _BACKENDS[name]


def conv2d_forward(x, w, stride, padding, groups):
    return _active.conv2d_forward(x, w, stride, padding, groups)


def conv2d_grad_input(gy, w, x_shape, stride, padding, groups):
    return _active.conv2d_grad_input(gy, w, x_shape, stride, padding, groups)


def conv2d_grad_weight(gy, x, w_shape, stride, padding, groups):
    return _active.conv2d_grad_weight(gy, x, w_shape, stride, padding, groups)
