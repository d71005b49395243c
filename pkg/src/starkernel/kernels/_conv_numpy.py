"""Pure-numpy grouped convolution (cross-correlation) backend.

Forward and weight gradients run einsum over a strided sliding-window view
(no patch materialization); the input gradient scatters one (kh, kw) offset
at a time onto the padded gradient buffer. Pointwise stride-1 convolutions
take a tensordot shortcut.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(x, w, stride, padding, groups):
    n, c, h, wd = x.shape
    cout, cg, kh, kw = w.shape
    if kh == 1 and kw == 1 and stride == 1 and padding == 0 and groups == 1:
        y = np.tensordot(w[:, :, 0, 0], x, axes=([1], [1]))
        return np.ascontiguousarray(y.transpose(1, 0, 2, 3))
    win = _windows(x, kh, kw, stride, padding)
    if groups == 1:
        return np.einsum("nchwkl,ockl->nohw", win, w, optimize=True)
    if groups == c and cout == c:
        return np.einsum("nchwkl,ckl->nchw", win, w[:, 0], optimize=True)
    og = cout // groups
    out = np.empty((n, cout, win.shape[2], win.shape[3]))
    for g in range(groups):
        out[:, g * og : (g + 1) * og] = np.einsum(
            "nchwkl,ockl->nohw",
            win[:, g * cg : (g + 1) * cg],
            w[g * og : (g + 1) * og],
            optimize=True,
        )
    return out


def conv2d_grad_input(gy, w, x_shape, stride, padding, groups):
    n, c, h, wd = x_shape
    cout, cg, kh, kw = w.shape
    og = cout // groups
    ho, wo = gy.shape[2:]
    gxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    depthwise = groups == c and cout == c
    for k in range(kh):
        for l in range(kw):
            if groups == 1:
                patch = np.einsum("nohw,oc->nchw", gy, w[:, :, k, l], optimize=True)
            elif depthwise:
                patch = gy * w[None, :, 0, k, l, None, None]
            else:
                parts = [
                    np.einsum(
                        "nohw,oc->nchw",
                        gy[:, g * og : (g + 1) * og],
                        w[g * og : (g + 1) * og, :, k, l],
                        optimize=True,
                    )
                    for g in range(groups)
                ]
                patch = np.concatenate(parts, axis=1)
            gxp[:, :, k : k + stride * ho : stride, l : l + stride * wo : stride] += patch
    if padding:
        return gxp[:, :, padding : padding + h, padding : padding + wd].copy()
    return gxp


def conv2d_grad_weight(gy, x, w_shape, stride, padding, groups):
    cout, cg, kh, kw = w_shape
    og = cout // groups
    win = _windows(x, kh, kw, stride, padding)
    if groups == 1:
        return np.einsum("nohw,nchwkl->ockl", gy, win, optimize=True)
    if groups == x.shape[1] and cout == x.shape[1]:
        return np.einsum("nchw,nchwkl->ckl", gy, win, optimize=True)[:, None]
    gw = np.empty(w_shape)
    for g in range(groups):
        gw[g * og : (g + 1) * og] = np.einsum(
            "nohw,nchwkl->ockl",
            gy[:, g * og : (g + 1) * og],
            win[:, g * cg : (g + 1) * cg],
            optimize=True,
        )
    return gw
