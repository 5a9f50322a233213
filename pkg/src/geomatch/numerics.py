"""Dense-array kernels shared by every stage of the matching pipeline.

Feature maps and matrices are carried as numpy float32 arrays ("tensors",
row-major). Reductions, matrix products and convolutions accumulate in
float64 before rounding back to float32 so that sums over thousands of
patches stay stable. All functions here are pure and thread-safe.
"""

from __future__ import annotations

import numpy as np

Tensor = np.ndarray


def as_tensor(data, shape=None) -> Tensor:
    """Convert to a float32 tensor, optionally reshaping."""
    arr = np.asarray(data, dtype=np.float32)
    if shape is not None:
        arr = arr.reshape(shape)
    return arr


def check_finite(t: Tensor, name: str = "tensor") -> None:
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{name} contains non-finite values")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with float64 accumulation, float32 result."""
    out = np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)
    return out.astype(np.float32)


def softmax(t: Tensor, axis: int) -> Tensor:
    """Softmax along `axis` with max-subtraction for stability.

    Slices along `axis` sum to 1 within 1e-6 for any finite input,
    including very large logits.
    """
    t = np.asarray(t)
    if not -t.ndim <= axis < t.ndim:
        raise ValueError(f"softmax axis {axis} out of range for rank {t.ndim}")
    x = t.astype(np.float64)
    x = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(x)
    return (e / np.sum(e, axis=axis, keepdims=True)).astype(np.float32)


def conv2d(inp: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """2-D convolution (cross-correlation), zero-padded to "same" size.

    Args:
        inp: H x W x Cin feature map.
        kernel: k x k x Cin x Cout weights, k odd.
        bias: optional Cout vector added to every output pixel.

    Returns:
        H x W x Cout float32 map.
    """
    inp = np.asarray(inp)
    kernel = np.asarray(kernel)
    if inp.ndim != 3:
        raise ValueError(f"conv2d input must be HxWxC, got shape {inp.shape}")
    if kernel.ndim != 4 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError(f"conv2d kernel must be kxkxCinxCout, got {kernel.shape}")
    k = kernel.shape[0]
    if k % 2 == 0:
        raise ValueError(f"conv2d kernel size must be odd, got {k}")
    if kernel.shape[2] != inp.shape[2]:
        raise ValueError(
            f"channel mismatch: input has {inp.shape[2]}, kernel expects {kernel.shape[2]}"
        )
    h, w, cin = inp.shape
    cout = kernel.shape[3]
    if bias is not None:
        bias = np.asarray(bias)
        if bias.shape != (cout,):
            raise ValueError(f"bias must have shape ({cout},), got {bias.shape}")

    pad = k // 2
    padded = np.zeros((h + 2 * pad, w + 2 * pad, cin), dtype=np.float64)
    padded[pad : pad + h, pad : pad + w, :] = inp
    # windows: (H, W, Cin, k, k)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(0, 1))
    out = np.einsum("hwcij,ijco->hwo", windows, kernel.astype(np.float64))
    if bias is not None:
        out = out + bias.astype(np.float64)
    return out.astype(np.float32)


def bilinear_sample(grid: Tensor, points) -> Tensor:
    """Sample an H x W x C map at continuous (x, y) pixel positions.

    Integer coordinates reproduce grid values exactly; fractional
    coordinates interpolate linearly between the four neighbors.

    Args:
        grid: H x W x C map (C may be 1 for scalar maps as HxWx1).
        points: (N, 2) array of (x, y) positions with 0 <= x <= W-1 and
            0 <= y <= H-1.

    Returns:
        N x C float32 samples.

    Raises:
        ValueError: if any point lies outside the valid range; the message
            names the offending point indices so the caller can decide
            between discarding and clamping before retrying.
    """
    grid = np.asarray(grid)
    if grid.ndim != 3:
        raise ValueError(f"bilinear_sample map must be HxWxC, got shape {grid.shape}")
    h, w, _ = grid.shape
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    bad = (x < 0) | (x > w - 1) | (y < 0) | (y > h - 1) | ~np.isfinite(x) | ~np.isfinite(y)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        raise ValueError(f"points out of range at indices {idx.tolist()[:8]} (of {idx.size})")

    x0 = np.clip(np.floor(x).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(y).astype(np.int64), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]

    g = grid.astype(np.float64)
    top = g[y0, x0] * (1 - fx) + g[y0, x1] * fx
    bot = g[y1, x0] * (1 - fx) + g[y1, x1] * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)
