"""Dense row-major arrays and the primitive numeric ops layers are built from.

A tensor here is a C-contiguous numpy array, float32 by default (gradient
checks run the same code on float64 replicas). There is no broadcasting
beyond bias-add over the last axis; every other shape change is an explicit
reshape, which keeps backward passes auditable.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

DTYPE = np.float32


def tensor(data, dtype=DTYPE) -> np.ndarray:
    """Build a C-contiguous array of the working dtype."""
    return np.ascontiguousarray(data, dtype=dtype)


def zeros(shape, dtype=DTYPE) -> np.ndarray:
    validate_shape(shape)
    return np.zeros(shape, dtype=dtype)


def validate_shape(shape) -> tuple[int, ...]:
    """Check rank >= 1 and every dim >= 1; returns the shape as a tuple."""
    dims = tuple(int(d) for d in shape)
    if len(dims) < 1 or any(d < 1 for d in dims):
        raise ShapeError(f"invalid shape {dims}: rank >= 1 and all dims >= 1 required")
    return dims


def assert_finite(x: np.ndarray, what: str = "tensor") -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{what} contains non-finite values")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """2-D matrix product; inner dimensions must agree."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    return a @ b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Pass upstream gradient where the forward input was positive."""
    if x.shape != upstream.shape:
        raise ShapeError(f"relu_backward shape mismatch: {x.shape} vs {upstream.shape}")
    return np.where(x > 0, upstream, 0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Exp-normalize a 1-D logit vector; max-subtraction keeps exp in range."""
    if logits.ndim != 1 or logits.size < 1:
        raise ShapeError(f"softmax needs a non-empty 1-D vector, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax input contains non-finite values")
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / np.sum(e)


def pad2d(x: np.ndarray, pad: int) -> np.ndarray:
    """Zero-pad the two leading (spatial) axes of an [H, W, C] tensor."""
    if x.ndim != 3:
        raise ShapeError(f"pad2d needs an [H, W, C] tensor, got shape {x.shape}")
    if pad < 0:
        raise ShapeError(f"pad2d pad must be >= 0, got {pad}")
    if pad == 0:
        return x
    return np.pad(x, ((pad, pad), (pad, pad), (0, 0)))


def slice_axis(x: np.ndarray, axis: int, start: int, stop: int) -> np.ndarray:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} invalid for shape {x.shape}")
    axis %= x.ndim
    n = x.shape[axis]
    if not (0 <= start < stop <= n):
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis {axis} of shape {x.shape}")
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    return x[tuple(idx)]


def reshape(x: np.ndarray, shape) -> np.ndarray:
    dims = validate_shape(shape)
    if int(np.prod(dims)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} ({x.size} elements) to {dims}")
    return np.ascontiguousarray(x).reshape(dims)


def transpose(x: np.ndarray, axes=None) -> np.ndarray:
    if axes is not None and sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"axes {tuple(axes)} is not a permutation for shape {x.shape}")
    return np.transpose(x, axes)


def reduce_sum(x: np.ndarray, axis=None) -> np.ndarray:
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} invalid for shape {x.shape}")
    return np.sum(x, axis=axis)


def argmax(x: np.ndarray, axis=None):
    """Index of the maximum; exact ties resolve to the lowest index."""
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} invalid for shape {x.shape}")
    return np.argmax(x, axis=axis)
