"""Dense tensor kernels: same-padding convolution, elementwise ops, concat.

Tensors are plain C-contiguous numpy arrays in float32 or float64. All
kernels preserve the operand dtype and accumulate in that dtype. The
convolution lowers to a single matrix product per call (im2col + GEMM),
which keeps every result bit-identical across repeated calls and across
batch partitionings: each output row is one independent dot product.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def require_tensor(x, name="tensor"):
    """Check the array invariants (rank >= 1, positive extents, float dtype)."""
    if not isinstance(x, np.ndarray):
        raise ShapeError(f"{name}: expected ndarray, got {type(x).__name__}")
    if x.ndim < 1:
        raise ShapeError(f"{name}: rank must be >= 1")
    if 0 in x.shape:
        raise ShapeError(f"{name}: extents must be positive, got {x.shape}")
    if x.dtype not in FLOAT_DTYPES:
        raise ShapeError(f"{name}: dtype must be float32 or float64, got {x.dtype}")
    return x


def _same_dims(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"operand extents differ: {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"operand dtypes differ: {a.dtype} vs {b.dtype}")


def _im2col(x, kh, kw):
    """Patch matrix [B, Cin*kh*kw, H*W] of x under same-(zero)padding.

    Built from kh*kw contiguous block copies so the cost stays close to a
    memcpy; 1x1 kernels reshape in place with no copy at all.
    """
    b, c, h, w = x.shape
    if kh == 1 and kw == 1:
        return np.ascontiguousarray(x).reshape(b, c, h * w)
    ph, pw = kh // 2, kw // 2
    pad = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    pad[:, :, ph:ph + h, pw:pw + w] = x
    cols = np.empty((b, c, kh, kw, h, w), dtype=x.dtype)
    for di in range(kh):
        for dj in range(kw):
            cols[:, :, di, dj] = pad[:, :, di:di + h, dj:dj + w]
    return cols.reshape(b, c * kh * kw, h * w)


def conv2d(x, kernel, bias=None):
    """Same-padding 2D convolution (cross-correlation, zeros outside).

    x: [B, Cin, H, W]; kernel: [Cout, Cin, Kh, Kw] with odd Kh, Kw;
    bias: [Cout] or None. Returns [B, Cout, H, W] in x's dtype.
    """
    require_tensor(x, "input")
    require_tensor(kernel, "kernel")
    if x.ndim != 4:
        raise ShapeError(f"input must be rank 4, got {x.shape}")
    if kernel.ndim != 4:
        raise ShapeError(f"kernel must be rank 4, got {kernel.shape}")
    b, cin, h, w = x.shape
    cout, ck, kh, kw = kernel.shape
    if ck != cin:
        raise ShapeError(f"kernel expects {ck} input channels, input has {cin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"kernel extents must be odd, got {kh}x{kw}")
    if x.dtype != kernel.dtype:
        raise ShapeError(f"input dtype {x.dtype} != kernel dtype {kernel.dtype}")
    if bias is not None:
        require_tensor(bias, "bias")
        if bias.shape != (cout,):
            raise ShapeError(f"bias must have shape ({cout},), got {bias.shape}")
        if bias.dtype != x.dtype:
            raise ShapeError(f"bias dtype {bias.dtype} != input dtype {x.dtype}")
    cols = _im2col(x, kh, kw)
    out = np.matmul(kernel.reshape(cout, cin * kh * kw), cols)
    if bias is not None:
        out += bias[:, None]
    return out.reshape(b, cout, h, w)


def conv2d_input_grad(gout, kernel):
    """Gradient of conv2d w.r.t. its input given upstream gradient gout.

    Equals a same-padding convolution of gout with the kernel flipped in
    both spatial axes and its channel axes swapped.
    """
    flipped = np.ascontiguousarray(kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv2d(gout, flipped)


def conv2d_kernel_grad(gout, x, kh, kw):
    """Gradient of conv2d w.r.t. the kernel; recomputes the patch matrix."""
    b, cin, h, w = x.shape
    cout = gout.shape[1]
    cols = _im2col(x, kh, kw)
    gmat = np.ascontiguousarray(gout).reshape(b, cout, h * w)
    return np.matmul(gmat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(cout, cin, kh, kw)


def sigmoid(x):
    out = np.exp(-x)
    out += 1.0
    np.reciprocal(out, out=out)
    return out


def tanh(x):
    return np.tanh(x)


def add(a, b):
    _same_dims(a, b)
    return a + b


def sub(a, b):
    _same_dims(a, b)
    return a - b


def mul(a, b):
    _same_dims(a, b)
    return a * b


def scale(x, c):
    return x * x.dtype.type(c)


def one_minus(x):
    return 1.0 - x if x.dtype == np.float64 else np.float32(1.0) - x


_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "one_minus": one_minus}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op, *operands):
    """Apply a named elementwise op. scale takes (tensor, scalar)."""
    if op in _UNARY:
        (x,) = operands
        require_tensor(x)
        return _UNARY[op](x)
    if op in _BINARY:
        a, b = operands
        require_tensor(a)
        require_tensor(b)
        return _BINARY[op](a, b)
    if op == "scale":
        x, c = operands
        require_tensor(x)
        return scale(x, c)
    raise ConfigError(f"unknown elementwise op {op!r}")


def concat_channels(parts):
    """Concatenate rank-4 tensors along the channel axis (axis 1)."""
    if not parts:
        raise ShapeError("concat_channels needs at least one part")
    for p in parts:
        require_tensor(p)
        if p.ndim != 4:
            raise ShapeError(f"concat_channels parts must be rank 4, got {p.shape}")
    first = parts[0]
    for p in parts[1:]:
        if (p.shape[0], p.shape[2], p.shape[3]) != (first.shape[0], first.shape[2], first.shape[3]):
            raise ShapeError(f"batch/spatial extents differ: {first.shape} vs {p.shape}")
        if p.dtype != first.dtype:
            raise ShapeError(f"dtypes differ: {first.dtype} vs {p.dtype}")
    return np.concatenate(parts, axis=1)
