"""Forward/backward passes and parameter accounting for every layer kind.

Conventions:
  - images are channels-last [H, W, C]; dense vectors are 1-D
  - conv kernels are [Kh, Kw, Cin, Cout], dense weights [In, Out]
  - LSTM packs the four gates along the last axis of W[In, 4H], U[H, 4H]
    and bias[4H] in the fixed order [input, forget, candidate, output];
    model files depend on that order
  - parameters are read-only during forward/backward; only the optimizer
    mutates them

Convolution forward and backward are phrased as im2col / col2im plus the
shared matmul kernel, so conv and dense exercise one numeric hot path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError

GATE_ORDER = "ifgo"


# ---------------------------------------------------------------------------
# initialization

def he_uniform(shape, fan_in: int, rng: np.random.Generator, dtype=T.DTYPE) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator,
                   dtype=T.DTYPE) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_conv(kh: int, kw: int, cin: int, cout: int, rng: np.random.Generator,
              dtype=T.DTYPE) -> dict[str, np.ndarray]:
    return {
        "kernels": he_uniform((kh, kw, cin, cout), kh * kw * cin, rng, dtype),
        "bias": np.zeros(cout, dtype=dtype),
    }


def init_dense(n_in: int, n_out: int, rng: np.random.Generator,
               dtype=T.DTYPE) -> dict[str, np.ndarray]:
    return {
        "weights": he_uniform((n_in, n_out), n_in, rng, dtype),
        "bias": np.zeros(n_out, dtype=dtype),
    }


def init_lstm(n_in: int, hidden: int, rng: np.random.Generator,
              dtype=T.DTYPE) -> dict[str, np.ndarray]:
    """Glorot kernels; forget-gate bias starts at 1, the rest at 0."""
    bias = np.zeros(4 * hidden, dtype=dtype)
    bias[hidden:2 * hidden] = 1.0
    return {
        "w_input": glorot_uniform((n_in, 4 * hidden), n_in, 4 * hidden, rng, dtype),
        "w_recurrent": glorot_uniform((hidden, 4 * hidden), hidden, 4 * hidden, rng, dtype),
        "bias": bias,
    }


def param_count(params: dict[str, np.ndarray]) -> int:
    return sum(int(p.size) for p in params.values())


# ---------------------------------------------------------------------------
# convolution (3x3, stride 1, same/valid)

def conv_output_hw(h: int, w: int, kh: int, kw: int, padding: str) -> tuple[int, int]:
    if padding == "same":
        return h, w
    if padding == "valid":
        if h < kh or w < kw:
            raise ShapeError(
                f"valid conv needs input >= kernel: input {h}x{w}, kernel {kh}x{kw}")
        return h - kh + 1, w - kw + 1
    raise ConfigError(f"unknown padding {padding!r}")


def _im2col(x: np.ndarray, kh: int, kw: int, oh: int, ow: int) -> np.ndarray:
    """Unroll kh x kw windows of an (already padded) [H, W, C] input into a
    [oh*ow, kh*kw*C] matrix whose column order matches kernels.reshape(-1, Cout)."""
    c = x.shape[2]
    cols = np.empty((oh * ow, kh * kw * c), dtype=x.dtype)
    k = 0
    for i in range(kh):
        for j in range(kw):
            cols[:, k * c:(k + 1) * c] = x[i:i + oh, j:j + ow, :].reshape(oh * ow, c)
            k += 1
    return cols


def _col2im(cols: np.ndarray, h: int, w: int, c: int, kh: int, kw: int,
            oh: int, ow: int) -> np.ndarray:
    """Scatter-add [oh*ow, kh*kw*C] columns back onto a padded [H, W, C] grid."""
    out = np.zeros((h, w, c), dtype=cols.dtype)
    k = 0
    for i in range(kh):
        for j in range(kw):
            out[i:i + oh, j:j + ow, :] += cols[:, k * c:(k + 1) * c].reshape(oh, ow, c)
            k += 1
    return out


def conv2d_forward(x: np.ndarray, params: dict[str, np.ndarray],
                   padding: str = "same") -> np.ndarray:
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be [H, W, C], got shape {x.shape}")
    kernels, bias = params["kernels"], params["bias"]
    kh, kw, cin, cout = kernels.shape
    if x.shape[2] != cin:
        raise ShapeError(f"conv2d channels mismatch: input {x.shape} vs kernels {kernels.shape}")
    h, w = x.shape[:2]
    oh, ow = conv_output_hw(h, w, kh, kw, padding)
    xp = T.pad2d(x, (kh - 1) // 2) if padding == "same" else x
    cols = _im2col(xp, kh, kw, oh, ow)
    out = T.matmul(cols, kernels.reshape(kh * kw * cin, cout)) + bias
    return out.reshape(oh, ow, cout)


def conv2d_backward(x: np.ndarray, params: dict[str, np.ndarray], upstream: np.ndarray,
                    padding: str = "same") -> dict[str, np.ndarray]:
    """Gradients for kernels, bias, and input. Bias grad is the per-channel
    sum of the upstream gradient."""
    kernels = params["kernels"]
    kh, kw, cin, cout = kernels.shape
    h, w = x.shape[:2]
    oh, ow = conv_output_hw(h, w, kh, kw, padding)
    if upstream.shape != (oh, ow, cout):
        raise ShapeError(
            f"conv2d upstream shape {upstream.shape} != forward output {(oh, ow, cout)}")
    pad = (kh - 1) // 2 if padding == "same" else 0
    xp = T.pad2d(x, pad) if pad else x
    cols = _im2col(xp, kh, kw, oh, ow)
    up = upstream.reshape(oh * ow, cout)
    d_kernels = T.matmul(cols.T, up).reshape(kh, kw, cin, cout)
    d_bias = up.sum(axis=0)
    d_cols = T.matmul(up, kernels.reshape(kh * kw * cin, cout).T)
    d_xp = _col2im(d_cols, xp.shape[0], xp.shape[1], cin, kh, kw, oh, ow)
    d_x = d_xp[pad:pad + h, pad:pad + w, :] if pad else d_xp
    return {"kernels": d_kernels, "bias": d_bias, "input": d_x}


# ---------------------------------------------------------------------------
# max pooling (2x2, stride 2; odd trailing row/column dropped)

def maxpool2d_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (pooled, indices); indices record the winning position 0..3
    within each window (row-major, ties to the lowest index)."""
    if x.ndim != 3:
        raise ShapeError(f"maxpool input must be [H, W, C], got shape {x.shape}")
    h, w, c = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool needs H, W >= 2, got {h}x{w}")
    oh, ow = h // 2, w // 2
    windows = np.stack([
        x[0:2 * oh:2, 0:2 * ow:2, :],
        x[0:2 * oh:2, 1:2 * ow:2, :],
        x[1:2 * oh:2, 0:2 * ow:2, :],
        x[1:2 * oh:2, 1:2 * ow:2, :],
    ])
    idx = np.argmax(windows, axis=0)
    out = np.take_along_axis(windows, idx[None], axis=0)[0]
    return out, idx


def maxpool2d_backward(indices: np.ndarray, upstream: np.ndarray,
                       input_shape: tuple[int, int, int]) -> np.ndarray:
    """Route each upstream value to its recorded argmax position."""
    oh, ow, c = upstream.shape
    if indices.shape != upstream.shape:
        raise ShapeError(f"maxpool indices {indices.shape} vs upstream {upstream.shape}")
    d_x = np.zeros(input_shape, dtype=upstream.dtype)
    rows = 2 * np.arange(oh)[:, None, None] + indices // 2
    cols = 2 * np.arange(ow)[None, :, None] + indices % 2
    chan = np.broadcast_to(np.arange(c), indices.shape)
    np.add.at(d_x, (rows, cols, chan), upstream)
    return d_x


# ---------------------------------------------------------------------------
# dense

def dense_forward(x: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    weights, bias = params["weights"], params["bias"]
    if x.ndim != 1 or x.shape[0] != weights.shape[0]:
        raise ShapeError(f"dense input shape {x.shape} vs weights {weights.shape}")
    return T.matmul(x[None, :], weights)[0] + bias


def dense_backward(x: np.ndarray, params: dict[str, np.ndarray],
                   upstream: np.ndarray) -> dict[str, np.ndarray]:
    weights = params["weights"]
    if upstream.shape != (weights.shape[1],):
        raise ShapeError(f"dense upstream shape {upstream.shape} vs weights {weights.shape}")
    return {
        "weights": T.matmul(x[:, None], upstream[None, :]),
        "bias": upstream.copy(),
        "input": T.matmul(weights, upstream[:, None])[:, 0],
    }


# ---------------------------------------------------------------------------
# dropout (inverted: survivors scaled at train time, inference is identity)

@dataclass
class DropoutMask:
    rate: float
    mask: np.ndarray | None  # 0/1 keep mask; None means identity (inference)


def dropout_forward(x: np.ndarray, rate: float, mode: str,
                    rng: np.random.Generator | None = None) -> tuple[np.ndarray, DropoutMask]:
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "infer" or rate == 0.0:
        return x, DropoutMask(rate, None)
    if mode != "train":
        raise ConfigError(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    if rng is None:
        raise ConfigError("train-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - rate))
    return x * keep * scale, DropoutMask(rate, keep)


def dropout_backward(mask: DropoutMask, upstream: np.ndarray) -> np.ndarray:
    if mask.mask is None:
        return upstream
    scale = upstream.dtype.type(1.0 / (1.0 - mask.rate))
    return upstream * mask.mask * scale


# ---------------------------------------------------------------------------
# flatten

def flatten(x: np.ndarray) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeError(f"flatten expects [H, W, C], got shape {x.shape}")
    return T.reshape(x, (x.size,))


# ---------------------------------------------------------------------------
# LSTM

def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_cell_step(x: np.ndarray, h: np.ndarray, c: np.ndarray,
                   params: dict[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray, dict]:
    """One recurrence step.

    z = x W + h U + b is split into [i, f, g, o]; then
    c' = sigmoid(f) * c + sigmoid(i) * tanh(g) and h' = sigmoid(o) * tanh(c').
    The cache retains everything the backward pass needs.
    """
    w, u, b = params["w_input"], params["w_recurrent"], params["bias"]
    n_in, four_h = w.shape
    hidden = four_h // 4
    if x.shape != (n_in,) or h.shape != (hidden,) or c.shape != (hidden,):
        raise ShapeError(
            f"lstm step shapes: x {x.shape}, h {h.shape}, c {c.shape} "
            f"vs W {w.shape}")
    z = T.matmul(x[None, :], w)[0] + T.matmul(h[None, :], u)[0] + b
    zi, zf, zg, zo = (z[k * hidden:(k + 1) * hidden] for k in range(4))
    i, f, o = _sigmoid(zi), _sigmoid(zf), _sigmoid(zo)
    g = np.tanh(zg)
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    cache = {"x": x, "h_prev": h, "c_prev": c, "i": i, "f": f, "g": g, "o": o,
             "tanh_c": tanh_c}
    return h_new, c_new, cache


def lstm_cell_backward(cache: dict, params: dict[str, np.ndarray],
                       dh: np.ndarray, dc: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of one step given dL/dh' and dL/dc' (dc accumulates the
    contribution flowing straight through the cell state)."""
    w, u = params["w_input"], params["w_recurrent"]
    i, f, g, o = cache["i"], cache["f"], cache["g"], cache["o"]
    tanh_c = cache["tanh_c"]
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    d_zo = dh * tanh_c * o * (1.0 - o)
    d_zf = dc_total * cache["c_prev"] * f * (1.0 - f)
    d_zi = dc_total * g * i * (1.0 - i)
    d_zg = dc_total * i * (1.0 - g * g)
    dz = np.concatenate([d_zi, d_zf, d_zg, d_zo])
    return {
        "w_input": T.matmul(cache["x"][:, None], dz[None, :]),
        "w_recurrent": T.matmul(cache["h_prev"][:, None], dz[None, :]),
        "bias": dz,
        "input": T.matmul(w, dz[:, None])[:, 0],
        "h_prev": T.matmul(u, dz[:, None])[:, 0],
        "c_prev": dc_total * f,
    }


def lstm_forward(sequence: np.ndarray, params: dict[str, np.ndarray],
                 return_caches: bool = False):
    """Run the cell over t = 1..T from zero state; returns the final hidden
    state (the sequence's summary vector feeding the dense head)."""
    if sequence.ndim != 2:
        raise ShapeError(f"lstm input must be [T, In], got shape {sequence.shape}")
    if sequence.shape[0] < 1:
        raise ConfigError("lstm sequence must have at least one step")
    hidden = params["w_recurrent"].shape[0]
    h = np.zeros(hidden, dtype=sequence.dtype)
    c = np.zeros(hidden, dtype=sequence.dtype)
    caches = []
    for t in range(sequence.shape[0]):
        h, c, cache = lstm_cell_step(sequence[t], h, c, params)
        if return_caches:
            caches.append(cache)
    if return_caches:
        return h, caches
    return h


def lstm_backward(caches: list[dict], params: dict[str, np.ndarray],
                  dh_last: np.ndarray) -> dict[str, np.ndarray]:
    """Backpropagate through time from the final hidden state only."""
    hidden = params["w_recurrent"].shape[0]
    grads = {
        "w_input": np.zeros_like(params["w_input"]),
        "w_recurrent": np.zeros_like(params["w_recurrent"]),
        "bias": np.zeros_like(params["bias"]),
    }
    t_steps = len(caches)
    d_input = np.zeros((t_steps, params["w_input"].shape[0]), dtype=dh_last.dtype)
    dh = dh_last
    dc = np.zeros(hidden, dtype=dh_last.dtype)
    for t in range(t_steps - 1, -1, -1):
        step = lstm_cell_backward(caches[t], params, dh, dc)
        grads["w_input"] += step["w_input"]
        grads["w_recurrent"] += step["w_recurrent"]
        grads["bias"] += step["bias"]
        d_input[t] = step["input"]
        dh, dc = step["h_prev"], step["c_prev"]
    grads["input"] = d_input
    return grads
