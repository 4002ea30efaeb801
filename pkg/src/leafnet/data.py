"""Dataset scanning, image loading, batching, fixtures, and model files.

Dataset layout is folder-per-class under train/ and valid/:

    <root>/train/<ClassName>/*.{jpg,jpeg,png,ppm}
    <root>/valid/<ClassName>/*.{jpg,jpeg,png,ppm}

Class ids are assigned by sorting class names in byte order, so the same
tree gives the same label map on any machine.

PPM (P6) and 8-bit PNG decode natively; JPEG needs pillow (optional extra).
Pixel values are scaled to [0, 1]; CNN inputs resize to a square RGB image,
LSTM inputs resize then reshape row-major into [timesteps, features].

Model files: magic b"LEAF", u32-LE version, u32-LE manifest length, UTF-8
JSON manifest (architecture config, label map, layer/parameter order, gate
order), then raw little-endian float32 parameter blobs in manifest order.
Round trips are bit-exact.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import struct
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from . import models as M
from .errors import ConfigError, DatasetError, DecodeError, ModelFormatError

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".ppm"}
SPLITS = ("train", "valid")

MAGIC = b"LEAF"
FORMAT_VERSION = 1


class DatasetWarning(UserWarning):
    pass


class Record(NamedTuple):
    path: Path
    label: int
    split: str


@dataclass
class DatasetIndex:
    label_map: list[str]            # sorted class names; index is the class id
    records: list[Record]

    def for_split(self, split: str) -> list[Record]:
        return [r for r in self.records if r.split == split]

    def counts(self) -> dict[str, int]:
        out = {s: 0 for s in SPLITS}
        for r in self.records:
            out[r.split] += 1
        return out


def scan_dataset(root: str | Path) -> DatasetIndex:
    """Index every image under <root>/{train,valid}/<class>/."""
    root = Path(root)
    for split in SPLITS:
        if not (root / split).is_dir():
            raise DatasetError(f"missing split directory: {root / split}")
    per_split_classes = {
        split: {d.name for d in (root / split).iterdir() if d.is_dir()}
        for split in SPLITS
    }
    valid_only = per_split_classes["valid"] - per_split_classes["train"]
    if valid_only:
        warnings.warn(
            f"classes only in valid/: {sorted(valid_only)}", DatasetWarning)
    label_map = sorted(per_split_classes["train"] | per_split_classes["valid"])
    ids = {name: i for i, name in enumerate(label_map)}
    records: list[Record] = []
    for split in SPLITS:
        for name in sorted(per_split_classes[split]):
            class_dir = root / split / name
            for f in sorted(class_dir.iterdir()):
                if f.is_file() and f.suffix.lower() in IMAGE_EXTENSIONS:
                    records.append(Record(f, ids[name], split))
    return DatasetIndex(label_map, records)


# ---------------------------------------------------------------------------
# decoding

def _decode_ppm(data: bytes, path: Path) -> np.ndarray:
    """Binary PPM (P6), maxval <= 255."""
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos:pos + 1].isspace():
                pos += 1
            elif data[pos:pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DecodeError(f"{path}: truncated PPM header")
        return data[start:pos]

    if token() != b"P6":
        raise DecodeError(f"{path}: not a P6 PPM file")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise DecodeError(f"{path}: bad PPM header") from exc
    if maxval > 255 or maxval < 1:
        raise DecodeError(f"{path}: unsupported PPM maxval {maxval}")
    pos += 1  # single whitespace after maxval
    pixels = data[pos:pos + width * height * 3]
    if len(pixels) != width * height * 3:
        raise DecodeError(f"{path}: PPM pixel data truncated")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _decode_png(data: bytes, path: Path) -> np.ndarray:
    """8-bit non-interlaced PNG, color types gray / RGB / gray+alpha / RGBA."""
    if data[:8] != b"\x89PNG\r\n\x1a\n":
        raise DecodeError(f"{path}: not a PNG file")
    pos = 8
    width = height = channels = None
    idat = bytearray()
    while pos + 8 <= len(data):
        (length,), ctype = struct.unpack(">I", data[pos:pos + 4]), data[pos + 4:pos + 8]
        if pos + 12 + length > len(data):
            raise DecodeError(f"{path}: PNG chunk {ctype!r} truncated")
        chunk = data[pos + 8:pos + 8 + length]
        pos += 12 + length
        if ctype == b"IHDR":
            width, height, depth, color, _, _, interlace = struct.unpack(">IIBBBBB", chunk)
            if depth != 8 or interlace != 0:
                raise DecodeError(f"{path}: only 8-bit non-interlaced PNG supported")
            channels = {0: 1, 2: 3, 4: 2, 6: 4}.get(color)
            if channels is None:
                raise DecodeError(f"{path}: unsupported PNG color type {color}")
        elif ctype == b"IDAT":
            idat.extend(chunk)
        elif ctype == b"IEND":
            break
    if width is None or not idat:
        raise DecodeError(f"{path}: PNG missing IHDR or IDAT")
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise DecodeError(f"{path}: PNG deflate stream corrupt") from exc
    stride = width * channels
    if len(raw) != height * (stride + 1):
        raise DecodeError(f"{path}: PNG scanline data has wrong size")
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int64)
    for y in range(height):
        offset = y * (stride + 1)
        filt = raw[offset]
        line = np.frombuffer(raw, dtype=np.uint8,
                             count=stride, offset=offset + 1).astype(np.int64)
        if filt == 0:
            cur = line
        elif filt == 2:
            cur = (line + prev) & 0xFF
        elif filt in (1, 3, 4):
            cur = np.zeros(stride, dtype=np.int64)
            for x in range(stride):
                left = cur[x - channels] if x >= channels else 0
                up = prev[x]
                ul = prev[x - channels] if x >= channels else 0
                if filt == 1:
                    pred = left
                elif filt == 3:
                    pred = (left + up) // 2
                else:
                    pred = _paeth(left, up, ul)
                cur[x] = (line[x] + pred) & 0xFF
        else:
            raise DecodeError(f"{path}: unknown PNG filter {filt}")
        out[y] = cur
        prev = cur
    img = out.reshape(height, width, channels)
    if channels == 1:
        img = np.repeat(img, 3, axis=2)
    elif channels == 2:
        img = np.repeat(img[:, :, :1], 3, axis=2)
    elif channels == 4:
        img = img[:, :, :3]
    return img


def _decode_jpeg(path: Path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:
        raise DecodeError(
            f"{path}: JPEG decoding needs pillow (pip install leafnet[jpeg])") from exc
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def decode_image(path: str | Path) -> np.ndarray:
    """Decode to a uint8 [H, W, 3] array (grayscale replicated, alpha dropped)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    if data[:2] == b"P6":
        return _decode_ppm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _decode_png(data, path)
    if data[:2] == b"\xff\xd8":
        return _decode_jpeg(path)
    raise DecodeError(f"{path}: unrecognized image format")


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resample; identity when sizes match."""
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.astype(np.float64, copy=True)
    src = img.astype(np.float64)
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0f, x0f = np.floor(ys), np.floor(xs)
    ty, tx = ys - y0f, xs - x0f
    y0 = np.clip(y0f, 0, h - 1).astype(int)
    y1 = np.clip(y0f + 1, 0, h - 1).astype(int)
    x0 = np.clip(x0f, 0, w - 1).astype(int)
    x1 = np.clip(x0f + 1, 0, w - 1).astype(int)
    ty = ty[:, None, None]
    tx = tx[None, :, None]
    top = src[y0][:, x0] * (1 - tx) + src[y0][:, x1] * tx
    bottom = src[y1][:, x0] * (1 - tx) + src[y1][:, x1] * tx
    return top * (1 - ty) + bottom * ty


def lstm_image_size(timesteps: int, features: int) -> int:
    """Square RGB resize whose pixel count equals timesteps * features."""
    side = math.isqrt(timesteps * features // 3)
    if side * side * 3 != timesteps * features:
        raise ConfigError(
            f"timesteps * features = {timesteps * features} is not 3 * n^2; "
            "no square RGB resize matches")
    return side


def load_image(path: str | Path, target: str = "cnn", *, cnn_size: int = 128,
               timesteps: int = 15, features: int = 1280) -> np.ndarray:
    """Decode, resize, and scale one image for the requested model input."""
    raw = decode_image(path)
    if target == "cnn":
        resized = bilinear_resize(raw, cnn_size, cnn_size)
        return (resized / 255.0).astype(np.float32)
    if target == "lstm":
        side = lstm_image_size(timesteps, features)
        resized = bilinear_resize(raw, side, side)
        scaled = (resized / 255.0).astype(np.float32)
        return scaled.reshape(timesteps, features)
    raise ConfigError(f"unknown load target {target!r}")


# ---------------------------------------------------------------------------
# batching and datasets

def _epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng(seed ^ epoch).permutation(n)


def batches(index: DatasetIndex, split: str, batch_size: int, seed: int, epoch: int,
            loader: Callable[[Path], np.ndarray] | None = None
            ) -> Iterator[tuple[list[np.ndarray], list[int]]]:
    """Seeded epoch-dependent shuffle; the final short batch is included."""
    records = index.for_split(split)
    if not records:
        raise ConfigError(f"split {split!r} has no records")
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    loader = loader or load_image
    order = _epoch_order(len(records), seed, epoch)
    for start in range(0, len(records), batch_size):
        chunk = [records[i] for i in order[start:start + batch_size]]
        yield [loader(r.path) for r in chunk], [r.label for r in chunk]


class MemoryDataset:
    """In-memory (input, label) pairs with the shared dataset interface."""

    def __init__(self, inputs: Sequence[np.ndarray], labels: Sequence[int],
                 class_names: list[str]):
        if len(inputs) != len(labels):
            raise ConfigError("inputs and labels differ in length")
        self.inputs = list(inputs)
        self.labels = [int(y) for y in labels]
        self.class_names = class_names

    def __len__(self) -> int:
        return len(self.inputs)

    def batches(self, batch_size: int, seed: int, epoch: int):
        order = _epoch_order(len(self.inputs), seed, epoch)
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            yield [self.inputs[i] for i in idx], [self.labels[i] for i in idx]

    def samples(self):
        yield from zip(self.inputs, self.labels)


class DiskDataset:
    """Lazy folder-per-class dataset over one split of a DatasetIndex."""

    def __init__(self, index: DatasetIndex, split: str,
                 loader: Callable[[Path], np.ndarray] | None = None):
        self.index = index
        self.split = split
        self.loader = loader or load_image
        self._records = index.for_split(split)

    def __len__(self) -> int:
        return len(self._records)

    def batches(self, batch_size: int, seed: int, epoch: int):
        yield from batches(self.index, self.split, batch_size, seed, epoch, self.loader)

    def samples(self):
        for r in self._records:
            yield self.loader(r.path), r.label


def _base_colors(k: int) -> np.ndarray:
    """K well-separated RGB anchors (hue wheel at fixed saturation/value)."""
    colors = np.zeros((k, 3))
    for i in range(k):
        hue = (i / k) * 6.0
        sector, frac = int(hue) % 6, hue - int(hue)
        v, p, q, t = 0.9, 0.15, 0.9 - 0.75 * frac, 0.15 + 0.75 * frac
        colors[i] = [(v, t, p), (q, v, p), (p, v, t),
                     (p, q, v), (t, p, v), (v, p, q)][sector]
    return colors


def synth_dataset(classes: int, per_class: int, seed: int, *,
                  size: int = 32) -> MemoryDataset:
    """Class-separable fixture: class k is a base color plus sigma=0.05 noise."""
    if classes < 2:
        raise ConfigError(f"need at least 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    colors = _base_colors(classes)
    width = len(str(classes - 1))
    names = [f"class_{i:0{width}d}" for i in range(classes)]
    inputs, labels = [], []
    for k in range(classes):
        for _ in range(per_class):
            img = colors[k] + rng.normal(0.0, 0.05, size=(size, size, 3))
            inputs.append(np.clip(img, 0.0, 1.0).astype(np.float32))
            labels.append(k)
    return MemoryDataset(inputs, labels, names)


def synth_base_colors(classes: int) -> np.ndarray:
    """The anchors synth_dataset draws around (for nearest-color oracles)."""
    return _base_colors(classes)


# ---------------------------------------------------------------------------
# model files

def _manifest(model: M.SequentialModel) -> dict:
    return {
        "format": "leaf",
        "version": FORMAT_VERSION,
        "arch": model.spec.arch,
        "config": dataclasses.asdict(model.spec.config),
        "label_map": list(model.label_map),
        "gate_order": "ifgo",
        "layers": [
            {"name": spec.name,
             "params": [{"name": key, "shape": list(p.shape)}
                        for key, p in params.items()]}
            for spec, params in zip(model.spec.layers, model.params)
        ],
    }


def save_model(model: M.SequentialModel, path: str | Path) -> None:
    """Write atomically: a failed save leaves no partial file behind."""
    path = Path(path)
    manifest = json.dumps(_manifest(model)).encode("utf-8")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    blob += struct.pack("<I", len(manifest))
    blob += manifest
    for params in model.params:
        for p in params.values():
            blob += np.ascontiguousarray(p, dtype="<f4").tobytes()
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bytes(blob))
    os.replace(tmp, path)


def _rebuild(arch: str, config: dict) -> M.SequentialModel:
    if arch == "cnn":
        config = dict(config, filters=tuple(config["filters"]))
        return M.build_cnn(M.CnnConfig(**config))
    if arch == "lstm":
        return M.build_lstm(M.LstmConfig(**config))
    raise ModelFormatError(f"unknown architecture {arch!r} in model file")


def load_model(path: str | Path) -> M.SequentialModel:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic at offset 0")
    if len(data) < 12:
        raise ModelFormatError(f"{path}: truncated header at offset {len(data)}")
    version, = struct.unpack("<I", data[4:8])
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    mlen, = struct.unpack("<I", data[8:12])
    if len(data) < 12 + mlen:
        raise ModelFormatError(f"{path}: manifest truncated at offset {len(data)}")
    try:
        manifest = json.loads(data[12:12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: manifest unreadable: {exc}") from exc
    model = _rebuild(manifest["arch"], manifest["config"])
    declared = manifest["layers"]
    if len(declared) != len(model.params):
        raise ModelFormatError(f"{path}: manifest declares {len(declared)} layers, "
                               f"architecture has {len(model.params)}")
    offset = 12 + mlen
    for spec, params, entry in zip(model.spec.layers, model.params, declared):
        if entry["name"] != spec.name:
            raise ModelFormatError(
                f"{path}: layer {entry['name']!r} does not match {spec.name!r}")
        for decl in entry["params"]:
            key, shape = decl["name"], tuple(decl["shape"])
            if key not in params or params[key].shape != shape:
                raise ModelFormatError(
                    f"{path}: parameter {spec.name}.{key} shape {shape} unexpected")
            nbytes = int(np.prod(shape)) * 4
            if offset + nbytes > len(data):
                raise ModelFormatError(f"{path}: parameter blob truncated at offset {offset}")
            params[key] = np.frombuffer(
                data, dtype="<f4", count=int(np.prod(shape)), offset=offset
            ).reshape(shape).astype(np.float32)
            offset += nbytes
    if offset != len(data):
        raise ModelFormatError(f"{path}: {len(data) - offset} trailing bytes at offset {offset}")
    model.label_map = list(manifest["label_map"])
    return model
