"""Pure NumPy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and results match the compiled module exactly, including the
accumulation order in :func:`col2im`, so either backend yields bitwise-equal
training runs.
"""

import numpy as np


def _tap_window(k, dilation, padding, size, out_size):
    """Output index range [lo, hi) whose source pixel is inside the input."""
    off = k * dilation - padding
    lo = max(0, -off)
    hi = min(out_size, size - off)
    return off, lo, hi


def im2col(x, kernel, dilation, padding):
    n, c, h, w = x.shape
    oh = h + 2 * padding - dilation * (kernel - 1)
    ow = w + 2 * padding - dilation * (kernel - 1)
    if oh <= 0 or ow <= 0:
        raise ValueError(f"kernel footprint exceeds padded input ({h}x{w})")
    cols = np.zeros((n, c, kernel, kernel, oh, ow), dtype=np.float64)
    for ki in range(kernel):
        iy, y0, y1 = _tap_window(ki, dilation, padding, h, oh)
        for kj in range(kernel):
            ix, x0, x1 = _tap_window(kj, dilation, padding, w, ow)
            if y1 > y0 and x1 > x0:
                cols[:, :, ki, kj, y0:y1, x0:x1] = x[:, :, y0 + iy:y1 + iy, x0 + ix:x1 + ix]
    return cols.reshape(n, c * kernel * kernel, oh * ow)


def col2im(cols, shape, kernel, dilation, padding):
    n, c, h, w = shape
    oh = h + 2 * padding - dilation * (kernel - 1)
    ow = w + 2 * padding - dilation * (kernel - 1)
    cols = cols.reshape(n, c, kernel, kernel, oh, ow)
    dx = np.zeros((n, c, h, w), dtype=np.float64)
    for ki in range(kernel):
        iy, y0, y1 = _tap_window(ki, dilation, padding, h, oh)
        for kj in range(kernel):
            ix, x0, x1 = _tap_window(kj, dilation, padding, w, ow)
            if y1 > y0 and x1 > x0:
                dx[:, :, y0 + iy:y1 + iy, x0 + ix:x1 + ix] += cols[:, :, ki, kj, y0:y1, x0:x1]
    return dx


def maxpool2x2_forward(x):
    n, c, h, w = x.shape
    windows = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    # argmax returns the first maximum, i.e. row-major scan order in the window
    arg = windows.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(windows, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2x2_backward(grad, arg):
    n, c, oh, ow = grad.shape
    windows = np.zeros((n, c, oh, ow, 4), dtype=np.float64)
    np.put_along_axis(windows, arg[..., None].astype(np.intp), grad[..., None], axis=-1)
    return np.ascontiguousarray(
        windows.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * oh, 2 * ow)
    )
