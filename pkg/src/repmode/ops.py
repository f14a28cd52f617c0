"""
Dense 3D tensor primitives.

All tensors are rank-5 ``numpy.ndarray`` values laid out as
``[N, C, D, H, W]`` (feature maps) or ``[C_O, C_I, K, K, K]`` (kernels),
dtype float32 or float64. Convolution is cross-correlation.

Usage:
    from repmode.ops import Padding3, conv3d

    out = conv3d(x, kernel, padding=Padding3.same(3))
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal, NamedTuple

import numpy as np
from numpy.typing import NDArray

from .exceptions import DimensionError, GeometryError, StatisticsError

Tensor5 = NDArray[np.floating[Any]]

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
SPATIAL_AXES = (2, 3, 4)
REDUCE_AXES = (0, 2, 3, 4)


def check_tensor5(x: np.ndarray, name: str = "tensor") -> None:
    """Raise DimensionError unless ``x`` is a rank-5 float32/float64 array."""
    if not isinstance(x, np.ndarray) or x.ndim != 5:
        raise DimensionError(f"{name} must be a rank-5 array, got shape {np.shape(x)}")
    if x.dtype not in FLOAT_DTYPES:
        raise DimensionError(f"{name} must be float32 or float64, got {x.dtype}")


@dataclass(frozen=True)
class Padding3:
    """Symmetric zero padding per spatial axis."""

    d: int = 0
    h: int = 0
    w: int = 0

    def __post_init__(self) -> None:
        if min(self.d, self.h, self.w) < 0:
            raise GeometryError(f"Padding must be nonnegative, got {self.as_tuple()}")

    @classmethod
    def same(cls, kernel_size: int) -> Padding3:
        """Padding preserving extents for a stride-1 odd kernel."""
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise GeometryError(f"'same' padding needs an odd kernel, got K={kernel_size}")
        amount = (kernel_size - 1) // 2
        return cls(amount, amount, amount)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.d, self.h, self.w)


NO_PADDING = Padding3()


@dataclass
class BNParams:
    """Per-channel batch-normalization parameters and running statistics."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    # Frozen BN always uses running statistics and never updates them
    frozen: bool = field(default=False)

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise StatisticsError(f"BN epsilon must be positive, got {self.eps}")
        if np.any(self.running_var < 0):
            raise StatisticsError("BN running variance must be nonnegative")

    @classmethod
    def create(
        cls,
        channels: int,
        dtype: np.dtype | type = np.float32,
        momentum: float = 0.1,
        eps: float = 1e-5,
    ) -> BNParams:
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            momentum=momentum,
            eps=eps,
        )

    @property
    def channels(self) -> int:
        return int(self.gamma.shape[0])


class BNCache(NamedTuple):
    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    batch_stats: bool


def _output_extent(size: int, pad: int, kernel: int, stride: int, axis: str) -> int:
    span = size + 2 * pad - kernel
    if span < 0:
        raise GeometryError(f"Kernel extent {kernel} exceeds padded {axis} extent {size + 2 * pad}")
    if span % stride:
        raise GeometryError(
            f"Output {axis} extent is not exact: ({size} + 2*{pad} - {kernel}) / {stride}"
        )
    return span // stride + 1


def _pad(x: np.ndarray, padding: Padding3) -> np.ndarray:
    if padding.as_tuple() == (0, 0, 0):
        return x
    pads = ((0, 0), (0, 0), (padding.d, padding.d), (padding.h, padding.h), (padding.w, padding.w))
    return np.pad(x, pads)


def _crop(x: np.ndarray, padding: Padding3) -> np.ndarray:
    d, h, w = padding.as_tuple()
    return x[:, :, d : x.shape[2] - d, h : x.shape[3] - h, w : x.shape[4] - w]


def _tap(offset: tuple[int, int, int], extents: tuple[int, ...], stride: int) -> tuple[slice, ...]:
    i, j, k = offset
    od, oh, ow = extents
    return (
        slice(None),
        slice(None),
        slice(i, i + stride * (od - 1) + 1, stride),
        slice(j, j + stride * (oh - 1) + 1, stride),
        slice(k, k + stride * (ow - 1) + 1, stride),
    )


def conv3d(
    x: Tensor5,
    kernel: Tensor5,
    bias: np.ndarray | None = None,
    padding: Padding3 = NO_PADDING,
    stride: int = 1,
) -> Tensor5:
    """
    Direct 3D cross-correlation over a zero-padded input.

    The loop runs over kernel taps; each tap contracts the channel axis of a
    strided input window with one ``[C_O, C_I]`` kernel slice.

    Args:
        x: Input ``[N, C_I, D, H, W]``
        kernel: Kernel ``[C_O, C_I, K_d, K_h, K_w]``
        bias: Optional ``[C_O]`` vector added per output channel
        padding: Symmetric zero padding
        stride: 1 or 2

    Returns:
        Output ``[N, C_O, D', H', W']``
    """
    check_tensor5(x, "input")
    check_tensor5(kernel, "kernel")
    if stride not in (1, 2):
        raise GeometryError(f"stride must be 1 or 2, got {stride}")
    n, c_in = x.shape[:2]
    c_out, k_in = kernel.shape[:2]
    if k_in != c_in:
        raise DimensionError(f"Kernel expects {k_in} input channels, input has {c_in}")
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(f"Bias shape {bias.shape} does not match {c_out} output channels")

    extents = tuple(
        _output_extent(x.shape[2 + a], padding.as_tuple()[a], kernel.shape[2 + a], stride, axis)
        for a, axis in enumerate("DHW")
    )
    xp = _pad(x, padding)
    dtype = np.result_type(x, kernel)
    acc = np.zeros((n, *extents, c_out), dtype=dtype)
    for offset in np.ndindex(*kernel.shape[2:]):
        window = xp[_tap(offset, extents, stride)]
        acc += np.tensordot(window, kernel[(slice(None), slice(None), *offset)], axes=([1], [1]))
    if bias is not None:
        acc += bias
    return np.ascontiguousarray(np.moveaxis(acc, -1, 1))


def conv3d_backward(
    dout: Tensor5,
    x: Tensor5,
    kernel: Tensor5,
    padding: Padding3 = NO_PADDING,
    stride: int = 1,
) -> tuple[Tensor5, Tensor5, np.ndarray]:
    """
    Gradients of ``conv3d`` with respect to input, kernel and bias.

    Returns:
        ``(d_input, d_kernel, d_bias)``
    """
    xp = _pad(x, padding)
    dxp = np.zeros_like(xp, dtype=np.result_type(xp, dout))
    dkernel = np.empty_like(kernel, dtype=np.result_type(kernel, dout))
    extents = dout.shape[2:]
    dout_last = np.moveaxis(dout, 1, -1)
    for offset in np.ndindex(*kernel.shape[2:]):
        tap = _tap(offset, extents, stride)
        dkernel[(slice(None), slice(None), *offset)] = np.tensordot(
            dout, xp[tap], axes=(REDUCE_AXES, REDUCE_AXES)
        )
        contribution = np.tensordot(
            dout_last, kernel[(slice(None), slice(None), *offset)], axes=([4], [0])
        )
        dxp[tap] += np.moveaxis(contribution, -1, 1)
    return _crop(dxp, padding), dkernel, dout.sum(axis=REDUCE_AXES)


def conv_transpose3d(x: Tensor5, kernel: Tensor5, stride: int = 2) -> Tensor5:
    """
    Stride-2 transposed convolution with a 2x2x2 kernel ``[C_I, C_O, 2, 2, 2]``.

    This is the adjoint of ``conv3d(·, kernel, stride=2)``; output extents
    are exactly double the input's.
    """
    check_tensor5(x, "input")
    check_tensor5(kernel, "kernel")
    if stride != 2 or kernel.shape[2:] != (2, 2, 2):
        raise GeometryError(
            f"Transposed convolution supports a 2x2x2 kernel with stride 2, "
            f"got kernel {kernel.shape[2:]} stride {stride}"
        )
    if kernel.shape[0] != x.shape[1]:
        raise DimensionError(
            f"Kernel expects {kernel.shape[0]} input channels, input has {x.shape[1]}"
        )
    n, _, d, h, w = x.shape
    out = np.empty((n, kernel.shape[1], 2 * d, 2 * h, 2 * w), dtype=np.result_type(x, kernel))
    x_last = np.moveaxis(x, 1, -1)
    for i, j, k in np.ndindex(2, 2, 2):
        tile = np.tensordot(x_last, kernel[:, :, i, j, k], axes=([4], [0]))
        out[:, :, i::2, j::2, k::2] = np.moveaxis(tile, -1, 1)
    return out


def conv_transpose3d_backward(
    dout: Tensor5, x: Tensor5, kernel: Tensor5
) -> tuple[Tensor5, Tensor5]:
    """Gradients of ``conv_transpose3d``: ``(d_input, d_kernel)``."""
    dx = conv3d(dout, kernel, stride=2)
    dkernel = np.empty_like(kernel, dtype=np.result_type(kernel, dout))
    for i, j, k in np.ndindex(2, 2, 2):
        dkernel[:, :, i, j, k] = np.tensordot(
            x, dout[:, :, i::2, j::2, k::2], axes=(REDUCE_AXES, REDUCE_AXES)
        )
    return dx, dkernel


def avgpool3d(x: Tensor5, kernel_size: int) -> Tensor5:
    """
    Stride-1 same-padded average pooling with divisor ``K**3``.

    Padded zeros count toward the mean. The operator is a symmetric box
    filter, so it is also its own adjoint.
    """
    check_tensor5(x, "input")
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise GeometryError(f"Average pooling needs an odd kernel, got K={kernel_size}")
    if kernel_size == 1:
        return x.copy()
    radius = kernel_size // 2
    out = x
    for axis in SPATIAL_AXES:
        pads = [(0, 0)] * 5
        pads[axis] = (radius, radius)
        padded = np.pad(out, pads)
        length = out.shape[axis]
        summed = np.zeros_like(out)
        for shift in range(kernel_size):
            index = [slice(None)] * 5
            index[axis] = slice(shift, shift + length)
            summed += padded[tuple(index)]
        out = summed
    return out / kernel_size**3


def _bcast(v: np.ndarray) -> np.ndarray:
    return v[None, :, None, None, None]


def batchnorm_forward(
    x: Tensor5,
    params: BNParams,
    mode: Literal["train", "infer"] = "infer",
) -> tuple[Tensor5, BNCache]:
    """
    Batch normalization returning the output and the backward cache.

    Train mode normalizes with batch statistics and updates the running
    statistics in place; infer mode (and any frozen BN) uses running stats.
    """
    check_tensor5(x, "input")
    if x.shape[1] != params.channels:
        raise DimensionError(f"BN has {params.channels} channels, input has {x.shape[1]}")
    batch_stats = mode == "train" and not params.frozen
    if batch_stats:
        count = x.size // max(x.shape[1], 1)
        if count == 0:
            raise StatisticsError("Batch normalization over an empty batch")
        mean = x.mean(axis=REDUCE_AXES)
        var = x.var(axis=REDUCE_AXES)
        unbiased = var * (count / (count - 1)) if count > 1 else var
        m = params.momentum
        params.running_mean *= 1 - m
        params.running_mean += m * mean
        params.running_var *= 1 - m
        params.running_var += m * unbiased
    else:
        mean, var = params.running_mean, params.running_var
    inv_std = 1.0 / np.sqrt(var + params.eps)
    xhat = (x - _bcast(mean)) * _bcast(inv_std)
    out = _bcast(params.gamma) * xhat + _bcast(params.beta)
    return out.astype(x.dtype, copy=False), BNCache(xhat, inv_std, params.gamma, batch_stats)


def batchnorm(
    x: Tensor5, params: BNParams, mode: Literal["train", "infer"] = "infer"
) -> Tensor5:
    """Batch normalization (see ``batchnorm_forward``)."""
    return batchnorm_forward(x, params, mode)[0]


def batchnorm_backward(dout: Tensor5, cache: BNCache) -> tuple[Tensor5, np.ndarray, np.ndarray]:
    """Gradients of batch normalization: ``(d_input, d_gamma, d_beta)``."""
    xhat, inv_std, gamma, batch_stats = cache
    dgamma = np.sum(dout * xhat, axis=REDUCE_AXES)
    dbeta = dout.sum(axis=REDUCE_AXES)
    dxhat = dout * _bcast(gamma)
    if not batch_stats:
        return dxhat * _bcast(inv_std), dgamma, dbeta
    count = dout.size // dout.shape[1]
    dx = (
        _bcast(inv_std / count)
        * (
            count * dxhat
            - _bcast(dxhat.sum(axis=REDUCE_AXES))
            - xhat * _bcast(np.sum(dxhat * xhat, axis=REDUCE_AXES))
        )
    )
    return dx, dgamma, dbeta


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise ``max(0, x)``."""
    return np.maximum(x, 0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0)
