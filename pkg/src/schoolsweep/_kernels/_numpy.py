"""Pure-numpy convolution/pooling kernels (fallback backend).

Convolutions are lowered to BLAS matmuls via strided windows, so this
backend is fast enough for desk-scale training when the compiled
extension is unavailable.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _windows3x3(x_padded: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    n, c = x_padded.shape[:2]
    sn, sc, sh, sw = x_padded.strides
    return as_strided(x_padded, (n, c, out_h, out_w, 3, 3), (sn, sc, sh, sw, sh, sw))


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1.

    x: [N, Cin, H, W]; w: [Cout, Cin, 3, 3]; b: [Cout] -> [N, Cout, H, W]
    """
    n, cin, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = _windows3x3(xp, h, wd)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # [N, H, W, Cout]
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    out += b[None, :, None, None]
    return out


def conv3x3_backward(
    x: np.ndarray, w: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv3x3_forward w.r.t. input, weights, and bias."""
    n, cin, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = _windows3x3(xp, h, wd)
    dw = np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))  # [Cout, Cin, 3, 3]
    db = dout.sum(axis=(0, 2, 3))
    dp = np.pad(dout, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dwin = _windows3x3(dp, h, wd)
    w_rot = w[:, :, ::-1, ::-1]
    dx = np.tensordot(dwin, w_rot, axes=([1, 4, 5], [0, 2, 3]))  # [N, H, W, Cin]
    return np.ascontiguousarray(dx.transpose(0, 3, 1, 2)), dw, db


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling, stride 2. Returns (pooled, argmax in {0..3}).

    Ties pick the smallest flattened offset within the window, so the
    backward routing is deterministic.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    xr = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = xr.argmax(axis=-1)
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return out, idx.astype(np.int8)


def maxpool2_backward(dout: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Routes pooled gradients back to the argmax positions."""
    n, c, h2, w2 = dout.shape
    dxr = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(dxr, idx[..., None].astype(np.int64), dout[..., None], axis=-1)
    return dxr.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
