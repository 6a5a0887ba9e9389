"""
On-disk formats: PNG/PPM images, the SSWP weight file, dataset folders and CSV reports.

SSWP layout (all integers little-endian):

    magic      4s   b"SSWP"
    version    u32  1
    kind       u8   0 = encoder, 1 = inverse network
    name       u32 byte length + utf-8
    paired     u32 byte length + utf-8 (encoder name an inverse net belongs to; empty for encoders)
    mean       3 x f32
    scale      3 x f32
    count      u32  number of layer records
    per layer:
      tag      u8   see LAYER_TAGS
      filter, stride, padding, in_ch, out_ch   5 x u32 (max-pool/upsample store their factor in filter)
      weights  u64 byte length + f32 data in (k, k, in, out) order
      bias     u64 byte length + f32 data
"""

import csv
import io
import logging
import math
import os
import struct
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..config import worker_count
from ..errors import ImageFormatError, ShapeError, WeightFileError
from .encoder import EncoderSpec
from .inverse_net import InverseNetSpec
from .layers import Layer, LayerKind, LayerParams, LayerSpec, RESAMPLING_KINDS
from .tensor import Tensor, get_dtype

logger = logging.getLogger(__name__)

MAGIC = b"SSWP"
VERSION = 1
KIND_ENCODER = 0
KIND_INVERSE = 1

LAYER_TAGS = {
    LayerKind.CONV: 0,
    LayerKind.TRANSPOSED_CONV: 1,
    LayerKind.MAXPOOL: 2,
    LayerKind.RELU: 3,
    LayerKind.INSTANCE_NORM: 4,
    LayerKind.NN_UPSAMPLE: 5,
}
TAG_KINDS = {tag: kind for kind, tag in LAYER_TAGS.items()}

IMAGE_FORMATS = {".png": "PNG", ".ppm": "PPM"}
_LAYER_HEADER = struct.Struct("<B5I")
_MIN_LAYER_RECORD = _LAYER_HEADER.size + 16

Model = Union[EncoderSpec, InverseNetSpec]


def _write_atomic(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


# ---------------------------------------------------------------- images

def _magic(path: str) -> bytes:
    with open(path, "rb") as handle:
        return handle.read(2)


def load_image(path: str) -> Tensor:
    """Decodes an 8-bit PNG or binary PPM (P6) into an h x w x 3 tensor in [0, 1]."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Image not found: {path}")
    try:
        with Image.open(path) as img:
            if img.format not in ("PNG", "PPM"):
                raise ImageFormatError(f"{path}: unsupported image format {img.format}.")
            if img.format == "PPM" and (img.mode != "RGB" or _magic(path) != b"P6"):
                raise ImageFormatError(f"{path}: only binary RGB PPM (P6) is supported.")
            if img.mode not in ("RGB", "RGBA", "L", "LA", "P"):
                raise ImageFormatError(f"{path}: unsupported pixel mode {img.mode}.")
            img.load()
            pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except ImageFormatError:
        raise
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError, EOFError,
            Image.DecompressionBombError) as exc:
        raise ImageFormatError(f"{path}: cannot decode image ({exc}).") from exc
    return pixels.astype(get_dtype()) / get_dtype().type(255)


def to_uint8(image: Tensor) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"Expected an h x w x 3 image, got shape {image.shape}.")
    return np.rint(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)


def save_image(path: str, image: Tensor) -> None:
    """Clamps to [0, 1] and writes PNG or PPM (P6), chosen by the file extension."""
    fmt = IMAGE_FORMATS.get(os.path.splitext(path)[1].lower())
    if fmt is None:
        raise ImageFormatError(f"{path}: unsupported extension, use .png or .ppm.")
    buffer = io.BytesIO()
    Image.fromarray(to_uint8(image), "RGB").save(buffer, format=fmt)
    _write_atomic(path, buffer.getvalue())


def resize_bilinear(image: Tensor, target_h: int, target_w: int) -> Tensor:
    """
    Corner-aligned bilinear resampling: output row i samples source row
    i * (h - 1) / (target_h - 1); a target extent of 1 samples the center (h - 1) / 2.
    """
    if target_h < 1 or target_w < 1:
        raise ShapeError(f"Resize targets must be >= 1, got {target_h}x{target_w}.")
    h, w = image.shape[:2]
    if (h, w) == (target_h, target_w):
        return np.array(image, copy=True)

    def coords(src: int, dst: int):
        pos = np.full(dst, (src - 1) / 2.0) if dst == 1 else np.arange(dst) * ((src - 1) / (dst - 1))
        low = np.floor(pos).astype(int)
        high = np.minimum(low + 1, src - 1)
        return low, high, (pos - low).astype(image.dtype)

    y0, y1, wy = coords(h, target_h)
    x0, x1, wx = coords(w, target_w)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = image[y0][:, x0] * (1 - wx) + image[y0][:, x1] * wx
    bottom = image[y1][:, x0] * (1 - wx) + image[y1][:, x1] * wx
    return (top * (1 - wy) + bottom * wy).astype(image.dtype)


# ---------------------------------------------------------------- weight files

def _pack_text(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _pack_array(values: Optional[np.ndarray]) -> bytes:
    if values is None:
        return struct.pack("<Q", 0)
    raw = np.ascontiguousarray(values, dtype="<f4").tobytes()
    return struct.pack("<Q", len(raw)) + raw


def encode_weights(model: Model) -> bytes:
    if isinstance(model, InverseNetSpec):
        kind, paired = KIND_INVERSE, model.encoder_name
        mean, scale = (0.0, 0.0, 0.0), (1.0, 1.0, 1.0)
    else:
        kind, paired = KIND_ENCODER, ""
        mean, scale = model.mean, model.scale
    parts = [
        struct.pack("<4sIB", MAGIC, VERSION, kind),
        _pack_text(model.name),
        _pack_text(paired),
        struct.pack("<3f", *mean),
        struct.pack("<3f", *scale),
        struct.pack("<I", len(model.layers)),
    ]
    for layer in model.layers:
        spec = layer.spec
        first = spec.factor if spec.kind in RESAMPLING_KINDS else spec.filter_size
        parts.append(_LAYER_HEADER.pack(
            LAYER_TAGS[spec.kind], first, spec.stride, spec.padding, spec.in_channels, spec.out_channels
        ))
        parts.append(_pack_array(layer.params.weights if layer.params else None))
        parts.append(_pack_array(layer.params.bias if layer.params else None))
    return b"".join(parts)


def save_weights(path: str, model: Model) -> None:
    _write_atomic(path, encode_weights(model))


class _Reader:
    """Bounds-checked cursor over a weight file; every failure is a WeightFileError."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.layer: Optional[int] = None

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def fail(self, message: str) -> WeightFileError:
        return WeightFileError(message, self.layer)

    def take(self, size: int, what: str) -> bytes:
        if size > self.remaining:
            raise self.fail(f"truncated while reading {what} (need {size} bytes, {self.remaining} left)")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def text(self, what: str) -> str:
        (size,) = self.unpack("<I", f"{what} length")
        try:
            return self.take(size, what).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise self.fail(f"{what} is not valid utf-8") from exc

    def array(self, expected_shape: Optional[tuple], what: str) -> Optional[np.ndarray]:
        (size,) = self.unpack("<Q", f"{what} length")
        if expected_shape is None:
            if size:
                raise self.fail(f"{what} payload of {size} bytes on a layer without parameters")
            return None
        expected = math.prod(expected_shape) * 4
        if size != expected:
            raise self.fail(f"{what} payload is {size} bytes, shape {expected_shape} needs {expected}")
        raw = self.take(size, what)
        return np.frombuffer(raw, dtype="<f4").astype(get_dtype()).reshape(expected_shape)


def decode_weights(data: bytes) -> Model:
    reader = _Reader(bytes(data))
    magic, version, kind = reader.unpack("<4sIB", "header")
    if magic != MAGIC:
        raise reader.fail(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise reader.fail(f"unsupported version {version}")
    if kind not in (KIND_ENCODER, KIND_INVERSE):
        raise reader.fail(f"unknown model kind {kind}")
    name = reader.text("name")
    paired = reader.text("paired name")
    mean = reader.unpack("<3f", "mean")
    scale = reader.unpack("<3f", "scale")
    (count,) = reader.unpack("<I", "layer count")
    if count * _MIN_LAYER_RECORD > reader.remaining:
        raise reader.fail(f"declares {count} layers but only {reader.remaining} bytes follow")

    layers: List[Layer] = []
    for index in range(count):
        reader.layer = index
        tag, first, stride, padding, in_ch, out_ch = reader.unpack(_LAYER_HEADER.format, "layer header")
        if tag not in TAG_KINDS:
            raise reader.fail(f"unknown layer tag {tag}")
        layer_kind = TAG_KINDS[tag]
        try:
            if layer_kind in RESAMPLING_KINDS:
                spec = LayerSpec(layer_kind, stride=stride, padding=padding, in_channels=in_ch,
                                 out_channels=out_ch, factor=first)
            else:
                spec = LayerSpec(layer_kind, first, stride, padding, in_ch, out_ch)
        except ShapeError as exc:
            raise reader.fail(str(exc)) from exc
        weights = reader.array(spec.weight_shape if spec.has_params else None, "weights")
        bias = reader.array((spec.out_channels,) if spec.has_params else None, "bias")
        try:
            layers.append(Layer(spec, LayerParams(weights, bias) if spec.has_params else None))
        except ShapeError as exc:
            raise reader.fail(str(exc)) from exc

    reader.layer = None
    if reader.remaining:
        raise reader.fail(f"{reader.remaining} trailing bytes after the last layer")
    try:
        if kind == KIND_ENCODER:
            return EncoderSpec(name, layers, mean, scale)
        return InverseNetSpec(name, paired, layers)
    except ShapeError as exc:
        raise reader.fail(f"inconsistent architecture: {exc}") from exc


def load_weights(path: str) -> Model:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Weight file not found: {path}")
    with open(path, "rb") as handle:
        return decode_weights(handle.read())


# ---------------------------------------------------------------- datasets

@dataclass
class DatasetFolder:
    root: str
    role: str
    paths: List[str] = field(default_factory=list)
    target_size: Optional[int] = None
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.paths)

    def load_images(self, workers: Optional[int] = None) -> List[Tensor]:
        """Decodes every image, resized to target_size x target_size when one is set."""
        def load(path: str) -> Tensor:
            image = load_image(path)
            if self.target_size:
                image = resize_bilinear(image, self.target_size, self.target_size)
            return image

        with ThreadPoolExecutor(max_workers=workers or worker_count()) as pool:
            return list(pool.map(load, self.paths))


def enumerate_dataset(folder: str, role: str = "natural", target_size: Optional[int] = None) -> DatasetFolder:
    """Lists decodable images in lexicographic name order; undecodable files are skipped and counted."""
    if not os.path.isdir(folder):
        raise FileNotFoundError(f"Dataset folder not found: {folder}")
    dataset = DatasetFolder(folder, role, target_size=target_size)
    for name in sorted(os.listdir(folder)):
        path = os.path.join(folder, name)
        if not os.path.isfile(path):
            continue
        try:
            load_image(path)
        except ImageFormatError:
            dataset.skipped += 1
            continue
        dataset.paths.append(path)
    if dataset.skipped:
        logger.warning("Skipped %d undecodable files in %s", dataset.skipped, folder)
    logger.info("Dataset %s (%s): %d images", folder, role, len(dataset.paths))
    return dataset


# ---------------------------------------------------------------- reports

def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def save_activations(path: str, activations: Tensor) -> None:
    with open(path, "wb") as handle:
        np.save(handle, np.asarray(activations, dtype=np.float32))
