"""Architecture specs, the two stock classifiers, summaries, and inference.

The CNN default is five blocks of [3x3 conv (same) + ReLU, 3x3 conv (valid)
+ ReLU, 2x2 max pool] with filters 32..512, dropout, flatten, a 1500-unit
ReLU dense layer, dropout, and a 38-way softmax head (7,842,762 trainable
parameters). The LSTM default runs a 128-unit cell over [15, 1280]
sequences into a 128-unit ReLU dense layer and the same softmax head
(742,822 parameters).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import layers as L
from . import tensor as T
from .errors import ConfigError, ModelStateError, ShapeError


@dataclass(frozen=True)
class CnnConfig:
    input_size: int = 128
    channels: int = 3
    filters: tuple[int, ...] = (32, 64, 128, 256, 512)
    dense_units: int = 1500
    classes: int = 38
    conv_dropout: float = 0.25
    dense_dropout: float = 0.4


@dataclass(frozen=True)
class LstmConfig:
    timesteps: int = 15
    features: int = 1280
    hidden: int = 128
    dense_units: int = 128
    classes: int = 38


@dataclass
class LayerSpec:
    """One layer of a sequential model: kind, name, and shape bookkeeping."""
    kind: str                 # conv | maxpool | dropout | flatten | dense | lstm
    name: str
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    activation: str | None = None   # relu | softmax | None
    padding: str | None = None      # conv only
    rate: float | None = None       # dropout only


@dataclass
class ModelSpec:
    arch: str                 # cnn | lstm
    config: CnnConfig | LstmConfig
    layers: list[LayerSpec]
    input_shape: tuple[int, ...]
    classes: int


@dataclass
class SequentialModel:
    spec: ModelSpec
    params: list[dict[str, np.ndarray]]   # one dict per layer, empty if none
    label_map: list[str] = field(default_factory=list)

    @property
    def total_params(self) -> int:
        return sum(L.param_count(p) for p in self.params)

    def layer_param_counts(self) -> list[int]:
        return [L.param_count(p) for p in self.params]


@dataclass
class SummaryRow:
    name: str
    kind: str
    output_shape: tuple[int, ...]
    params: int


_KIND_LABEL = {"conv": "Conv2D", "maxpool": "MaxPooling2D", "dropout": "Dropout",
               "flatten": "Flatten", "dense": "Dense", "lstm": "LSTM"}


class _Namer:
    """Keras-style layer names: first use is bare, repeats get _1, _2, ..."""

    def __init__(self):
        self._counts: dict[str, int] = {}

    def __call__(self, base: str) -> str:
        n = self._counts.get(base, 0)
        self._counts[base] = n + 1
        return base if n == 0 else f"{base}_{n}"


def build_cnn(config: CnnConfig | None = None, *, seed: int = 0) -> SequentialModel:
    """Build the convolutional classifier; defaults give the stock network."""
    cfg = config or CnnConfig()
    if cfg.input_size < 3 or cfg.channels < 1 or cfg.classes < 2 or cfg.dense_units < 1:
        raise ConfigError(f"invalid CNN config: {cfg}")
    if not cfg.filters or any(f < 1 for f in cfg.filters):
        raise ConfigError(f"CNN filter progression must be positive: {cfg.filters}")
    rng = np.random.default_rng(seed)
    name = _Namer()
    specs: list[LayerSpec] = []
    params: list[dict[str, np.ndarray]] = []
    shape = (cfg.input_size, cfg.input_size, cfg.channels)

    def add(spec: LayerSpec, p: dict[str, np.ndarray]) -> tuple[int, ...]:
        specs.append(spec)
        params.append(p)
        return spec.output_shape

    for n_filters in cfg.filters:
        for padding in ("same", "valid"):
            layer_name = name("conv2d")
            h, w, cin = shape
            if padding == "valid" and (h < 3 or w < 3):
                raise ConfigError(
                    f"layer {layer_name}: input {h}x{w} too small for a 3x3 valid conv")
            oh, ow = L.conv_output_hw(h, w, 3, 3, padding)
            shape = add(LayerSpec("conv", layer_name, shape, (oh, ow, n_filters),
                                  activation="relu", padding=padding),
                        L.init_conv(3, 3, cin, n_filters, rng))
        layer_name = name("max_pooling2d")
        h, w, c = shape
        if h < 2 or w < 2:
            raise ConfigError(f"layer {layer_name}: input {h}x{w} too small for 2x2 pooling")
        shape = add(LayerSpec("maxpool", layer_name, shape, (h // 2, w // 2, c)), {})

    shape = add(LayerSpec("dropout", name("dropout"), shape, shape,
                          rate=cfg.conv_dropout), {})
    flat = int(np.prod(shape))
    shape = add(LayerSpec("flatten", name("flatten"), shape, (flat,)), {})
    shape = add(LayerSpec("dense", name("dense"), shape, (cfg.dense_units,),
                          activation="relu"),
                L.init_dense(flat, cfg.dense_units, rng))
    shape = add(LayerSpec("dropout", name("dropout"), shape, shape,
                          rate=cfg.dense_dropout), {})
    shape = add(LayerSpec("dense", name("dense"), shape, (cfg.classes,),
                          activation="softmax"),
                L.init_dense(cfg.dense_units, cfg.classes, rng))

    spec = ModelSpec("cnn", cfg, specs, (cfg.input_size, cfg.input_size, cfg.channels),
                     cfg.classes)
    return SequentialModel(spec, params)


def build_lstm(config: LstmConfig | None = None, *, seed: int = 0) -> SequentialModel:
    """Build the recurrent classifier; defaults give the stock network."""
    cfg = config or LstmConfig()
    if min(cfg.timesteps, cfg.features, cfg.hidden, cfg.dense_units) < 1 or cfg.classes < 2:
        raise ConfigError(f"invalid LSTM config: {cfg}")
    rng = np.random.default_rng(seed)
    name = _Namer()
    in_shape = (cfg.timesteps, cfg.features)
    specs = [
        LayerSpec("lstm", name("lstm"), in_shape, (cfg.hidden,)),
        LayerSpec("dense", name("dense"), (cfg.hidden,), (cfg.dense_units,),
                  activation="relu"),
        LayerSpec("dense", name("dense"), (cfg.dense_units,), (cfg.classes,),
                  activation="softmax"),
    ]
    params = [
        L.init_lstm(cfg.features, cfg.hidden, rng),
        L.init_dense(cfg.hidden, cfg.dense_units, rng),
        L.init_dense(cfg.dense_units, cfg.classes, rng),
    ]
    spec = ModelSpec("lstm", cfg, specs, in_shape, cfg.classes)
    return SequentialModel(spec, params)


# ---------------------------------------------------------------------------
# summary

def summary_rows(model: SequentialModel) -> list[SummaryRow]:
    return [SummaryRow(s.name, _KIND_LABEL[s.kind], s.output_shape, L.param_count(p))
            for s, p in zip(model.spec.layers, model.params)]


def _shape_str(shape: Iterable[int]) -> str:
    return "(" + ", ".join(str(d) for d in shape) + ")"


def summary(model: SequentialModel) -> str:
    """Fixed-width table: Layer (Type) | Output Shape | Param #, plus totals."""
    rows = summary_rows(model)
    entries = [(f"{r.name} ({r.kind})", _shape_str(r.output_shape), f"{r.params:,}")
               for r in rows]
    name_w = max(len("Layer (Type)"), *(len(e[0]) for e in entries)) + 2
    shape_w = max(len("Output Shape"), *(len(e[1]) for e in entries)) + 2
    param_w = max(len("Param #"), *(len(e[2]) for e in entries))
    lines = [f"{'Layer (Type)':<{name_w}}{'Output Shape':<{shape_w}}{'Param #':>{param_w}}",
             "=" * (name_w + shape_w + param_w)]
    lines += [f"{n:<{name_w}}{s:<{shape_w}}{p:>{param_w}}" for n, s, p in entries]
    total = model.total_params
    lines += ["=" * (name_w + shape_w + param_w),
              f"Total params: {total:,}",
              f"Trainable params: {total:,}",
              "Non-trainable params: 0"]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# forward / backward / predict

def _check_input(model: SequentialModel, x: np.ndarray) -> None:
    if tuple(x.shape) != model.spec.input_shape:
        raise ShapeError(
            f"input shape mismatch: expected {model.spec.input_shape}, got {tuple(x.shape)}")


def _forward(model: SequentialModel, x: np.ndarray, mode: str,
             rng: np.random.Generator | None) -> tuple[np.ndarray, list]:
    _check_input(model, x)
    caches: list = []
    out = x
    for spec, params in zip(model.spec.layers, model.params):
        if spec.kind == "conv":
            pre = L.conv2d_forward(out, params, spec.padding)
            caches.append(("conv", out, pre))
            out = T.relu(pre) if spec.activation == "relu" else pre
        elif spec.kind == "maxpool":
            pooled, idx = L.maxpool2d_forward(out)
            caches.append(("maxpool", out.shape, idx))
            out = pooled
        elif spec.kind == "dropout":
            out, mask = L.dropout_forward(out, spec.rate, mode, rng)
            caches.append(("dropout", mask))
        elif spec.kind == "flatten":
            caches.append(("flatten", out.shape))
            out = L.flatten(out)
        elif spec.kind == "dense":
            pre = L.dense_forward(out, params)
            caches.append(("dense", out, pre))
            if spec.activation == "relu":
                out = T.relu(pre)
            elif spec.activation == "softmax":
                out = T.softmax(pre)
            else:
                out = pre
        elif spec.kind == "lstm":
            h, step_caches = L.lstm_forward(out, params, return_caches=True)
            caches.append(("lstm", step_caches))
            out = h
        else:
            raise ConfigError(f"unknown layer kind {spec.kind!r}")
    return out, caches


def forward(model: SequentialModel, x: np.ndarray, mode: str = "infer",
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Class probabilities for one sample; inference is deterministic."""
    probs, _ = _forward(model, x, mode, rng)
    return probs


def forward_train(model: SequentialModel, x: np.ndarray,
                  rng: np.random.Generator | None = None) -> tuple[np.ndarray, list]:
    """Train-mode forward returning per-layer caches for backward()."""
    return _forward(model, x, "train", rng)


def backward(model: SequentialModel, caches: list,
             d_logits: np.ndarray) -> list[dict[str, np.ndarray]]:
    """Backpropagate d(loss)/d(logits) through every layer.

    The softmax head is fused with the loss: callers pass the gradient with
    respect to the final pre-softmax logits (probs - onehot for
    cross-entropy), so the last activation is not re-differentiated here.
    """
    grads: list[dict[str, np.ndarray]] = [dict() for _ in model.params]
    d_out = d_logits
    for li in range(len(model.spec.layers) - 1, -1, -1):
        spec, params, cache = model.spec.layers[li], model.params[li], caches[li]
        if spec.kind == "dense":
            _, x_in, pre = cache
            if spec.activation == "relu":
                d_out = T.relu_backward(pre, d_out)
            g = L.dense_backward(x_in, params, d_out)
            d_out = g.pop("input")
            grads[li] = g
        elif spec.kind == "conv":
            _, x_in, pre = cache
            if spec.activation == "relu":
                d_out = T.relu_backward(pre, d_out)
            g = L.conv2d_backward(x_in, params, d_out, spec.padding)
            d_out = g.pop("input")
            grads[li] = g
        elif spec.kind == "maxpool":
            _, in_shape, idx = cache
            d_out = L.maxpool2d_backward(idx, d_out, in_shape)
        elif spec.kind == "dropout":
            d_out = L.dropout_backward(cache[1], d_out)
        elif spec.kind == "flatten":
            d_out = T.reshape(d_out, cache[1])
        elif spec.kind == "lstm":
            g = L.lstm_backward(cache[1], params, d_out)
            d_out = g.pop("input")
            grads[li] = g
    return grads


def predict(model: SequentialModel, x: np.ndarray) -> tuple[str, float]:
    """Most likely class name and its probability; ties go to the lowest id."""
    if not model.label_map:
        raise ModelStateError("model has no label map; train or load one first")
    if len(model.label_map) != model.spec.classes:
        raise ModelStateError(
            f"label map has {len(model.label_map)} entries for {model.spec.classes} classes")
    probs = forward(model, x, mode="infer")
    k = int(T.argmax(probs))
    return model.label_map[k], float(probs[k])
