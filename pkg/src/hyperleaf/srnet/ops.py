"""Differentiable primitives on channels-last batches ``(B, H, W, C)``.

Every ``*_forward`` returns its output and a cache; the matching
``*_backward`` takes the cache and the upstream gradient.  All arithmetic is
float64.
"""
import numpy as np

from ..errors import DimensionError


def shift_stack(t: np.ndarray, k: int, sign: int = 1) -> np.ndarray:
    """Stack the ``k*k`` shifted copies of ``t`` (zero fill).

    Returns ``(B, H, W, k*k, C)`` with ``out[:, i, j, di*k+dj] =
    t[:, i + sign*(di-p), j + sign*(dj-p)]``, ``p = k // 2``.  With
    ``sign=+1`` this is the usual im2col buffer.
    """
    b, h, w, c = t.shape
    p = k // 2
    tp = np.zeros((b, h + 2 * p, w + 2 * p, c))
    tp[:, p:p + h, p:p + w] = t
    out = np.empty((b, h, w, k * k, c))
    for di in range(k):
        for dj in range(k):
            r, q = p + sign * (di - p), p + sign * (dj - p)
            out[:, :, :, di * k + dj] = tp[:, r:r + h, q:q + w]
    return out


def shift_sum(z: np.ndarray, k: int, sign: int = 1) -> np.ndarray:
    """Adjoint-style reduction: ``out[:, i, j] = sum_tap z[:, i + sign*(di-p),
    j + sign*(dj-p), tap]`` over in-range positions."""
    b, h, w, _, c = z.shape
    p = k // 2
    out = np.zeros((b, h, w, c))
    for di in range(k):
        s = sign * (di - p)
        i0, i1 = max(0, -s), min(h, h - s)
        for dj in range(k):
            t = sign * (dj - p)
            j0, j1 = max(0, -t), min(w, w - t)
            if i0 < i1 and j0 < j1:
                out[:, i0:i1, j0:j1] += z[:, i0 + s:i1 + s, j0 + t:j1 + t, di * k + dj]
    return out


def conv2d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray):
    """Same-padded stride-1 cross-correlation.

    ``kernel`` has shape ``(C_out, C_in, k, k)`` with odd ``k``.  The
    shifted copies are taken of whichever side has fewer channels, which
    keeps the temporary buffers small.
    """
    if x.ndim != 4:
        raise DimensionError(f"expected (B, H, W, C) input, got shape {x.shape}")
    c_out, c_in, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise DimensionError(f"kernel must be square with odd size, got {kernel.shape}")
    if x.shape[3] != c_in:
        raise DimensionError(f"input has {x.shape[3]} channels, kernel expects {c_in}")
    if bias.shape != (c_out,):
        raise DimensionError(f"bias shape {bias.shape} does not match {c_out} outputs")
    b, h, w, _ = x.shape
    k = kh
    taps = kernel.transpose(2, 3, 1, 0).reshape(k * k, c_in, c_out)
    cols = None
    if k == 1:
        y = x.reshape(-1, c_in) @ taps[0]
    elif c_in <= c_out:
        cols = shift_stack(x, k, +1).reshape(-1, k * k * c_in)
        y = cols @ taps.reshape(k * k * c_in, c_out)
    else:
        z = x.reshape(-1, c_in) @ taps.transpose(1, 0, 2).reshape(c_in, k * k * c_out)
        y = shift_sum(z.reshape(b, h, w, k * k, c_out), k, +1)
    y = y.reshape(b, h, w, c_out)
    y += bias
    return y, (x, cols, kernel)


def conv2d_backward(cache, dy: np.ndarray):
    """Return ``(dx, dkernel, dbias)``."""
    x, cols, kernel = cache
    c_out, c_in, k, _ = kernel.shape
    b, h, w, _ = x.shape
    dy2 = dy.reshape(-1, c_out)
    dbias = dy2.sum(axis=0)
    taps = kernel.transpose(2, 3, 1, 0).reshape(k * k, c_in, c_out)
    if k == 1:
        dx = (dy2 @ taps[0].T).reshape(x.shape)
        dkernel = (x.reshape(-1, c_in).T @ dy2).T.reshape(c_out, c_in, 1, 1)
        return dx, dkernel, dbias
    dstack = None
    if c_out <= c_in:
        dstack = shift_stack(dy, k, -1).reshape(-1, k * k * c_out)
        dx = dstack @ taps.transpose(0, 2, 1).reshape(k * k * c_out, c_in)
    else:
        u = dy2 @ taps.transpose(2, 0, 1).reshape(c_out, k * k * c_in)
        dx = shift_sum(u.reshape(b, h, w, k * k, c_in), k, -1)
    dx = dx.reshape(x.shape)
    if cols is None and dstack is None:
        if c_in <= c_out:
            cols = shift_stack(x, k, +1).reshape(-1, k * k * c_in)
        else:
            dstack = shift_stack(dy, k, -1).reshape(-1, k * k * c_out)
    if cols is not None:
        dtaps = (cols.T @ dy2).reshape(k * k, c_in, c_out)
    else:
        dtaps = (x.reshape(-1, c_in).T @ dstack).reshape(c_in, k * k, c_out).transpose(1, 0, 2)
    dkernel = dtaps.reshape(k, k, c_in, c_out).transpose(3, 2, 0, 1)
    return dx, dkernel, dbias


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(mask, dy):
    return dy * mask


def concat_channels(tensors):
    return np.concatenate(tensors, axis=3), [t.shape[3] for t in tensors]


def split_channels(sizes, dy):
    return np.split(dy, np.cumsum(sizes)[:-1], axis=3)


# Channel layout for the x2 shuffle: input channel 4*c + 2*dy + dx feeds
# output pixel (2*i + dy, 2*j + dx) of output channel c.

def pixel_shuffle_x2(x):
    b, h, w, c4 = x.shape
    if c4 % 4:
        raise DimensionError(f"pixel shuffle needs channels divisible by 4, got {c4}")
    c = c4 // 4
    return x.reshape(b, h, w, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(b, 2 * h, 2 * w, c)


def pixel_unshuffle_x2(y):
    b, h2, w2, c = y.shape
    if h2 % 2 or w2 % 2:
        raise DimensionError(f"spatial dims must be even, got {(h2, w2)}")
    h, w = h2 // 2, w2 // 2
    return y.reshape(b, h, 2, w, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, h, w, 4 * c)


def softmax_channels(x):
    z = x - x.max(axis=3, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=3, keepdims=True)


def softmax_backward(s, dy):
    return s * (dy - np.sum(dy * s, axis=3, keepdims=True))


def l1_loss(pred, target):
    """Mean absolute error and its gradient (sign, with 0 at ties)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size
