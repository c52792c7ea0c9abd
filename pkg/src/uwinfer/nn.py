"""Tiny CNN: one 3x3/stride-2 convolution with ReLU, then a dense softmax layer.

Activations are laid out channels-last; the flattened feature index of
conv output ``(i, j, f)`` is ``(i * out + j) * num_filters + f``.
"""
from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .dsp import InputPlane
from .errors import FormatError, InvalidInputError

PROB_FLOOR = 1e-12

MAGIC = b"AQNN"
FORMAT_VERSION = 1
FLAG_QUANTIZED = 0x1
HEADER = struct.Struct("<4sHHHHH")
TENSOR_NAMES = ("conv_weights", "conv_bias", "dense_weights", "dense_bias")


@dataclass(frozen=True)
class ModelConfig:
    n: int
    num_classes: int
    num_filters: int = 8
    kernel: int = 3
    stride: int = 2

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidInputError("num_classes must be >= 2")
        if self.num_filters < 1 or self.kernel < 1 or self.stride < 1:
            raise InvalidInputError("num_filters, kernel and stride must be >= 1")
        if self.n < self.kernel:
            raise InvalidInputError(f"input side {self.n} is smaller than the kernel {self.kernel}")

    @property
    def conv_out(self) -> int:
        return (self.n - self.kernel) // self.stride + 1

    @property
    def flat_len(self) -> int:
        return self.conv_out ** 2 * self.num_filters

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        f, k = self.num_filters, self.kernel
        return {
            "conv_weights": (f, k, k),
            "conv_bias": (f,),
            "dense_weights": (self.flat_len, self.num_classes),
            "dense_bias": (self.num_classes,),
        }

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.tensor_shapes().values())


@dataclass(frozen=True)
class Model:
    config: ModelConfig
    conv_weights: np.ndarray
    conv_bias: np.ndarray
    dense_weights: np.ndarray
    dense_bias: np.ndarray

    def __post_init__(self):
        for name, shape in self.config.tensor_shapes().items():
            value = np.ascontiguousarray(getattr(self, name))
            if value.shape != shape:
                raise InvalidInputError(f"{name} has shape {value.shape}, expected {shape}")
            if not np.all(np.isfinite(value)):
                raise InvalidInputError(f"{name} contains non-finite values")
            object.__setattr__(self, name, value)

    @property
    def dtype(self) -> np.dtype:
        return self.conv_weights.dtype

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def astype(self, dtype) -> "Model":
        return dataclasses.replace(self, **{k: v.astype(dtype) for k, v in self.tensors().items()})

    def copy(self) -> "Model":
        return dataclasses.replace(self, **{k: v.copy() for k, v in self.tensors().items()})

    def equals(self, other: "Model") -> bool:
        return self.config == other.config and all(
            a.dtype == b.dtype and np.array_equal(a, b)
            for a, b in zip(self.tensors().values(), other.tensors().values()))


class Gradients(NamedTuple):
    conv_weights: np.ndarray
    conv_bias: np.ndarray
    dense_weights: np.ndarray
    dense_bias: np.ndarray


@dataclass(frozen=True)
class InferenceResult:
    probabilities: np.ndarray
    predicted_class: int


def zero_model(config: ModelConfig, dtype=np.float32) -> Model:
    return Model(config, **{k: np.zeros(s, dtype=dtype) for k, s in config.tensor_shapes().items()})


def init_model(config: ModelConfig, seed: int, dtype=np.float32) -> Model:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    k2 = config.kernel ** 2

    def glorot(shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape).astype(dtype)

    shapes = config.tensor_shapes()
    return Model(
        config,
        conv_weights=glorot(shapes["conv_weights"], k2, k2 * config.num_filters),
        conv_bias=np.zeros(shapes["conv_bias"], dtype=dtype),
        dense_weights=glorot(shapes["dense_weights"], config.flat_len, config.num_classes),
        dense_bias=np.zeros(shapes["dense_bias"], dtype=dtype),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def _as_input(model: Model, plane: InputPlane | np.ndarray) -> np.ndarray:
    x = plane.values if isinstance(plane, InputPlane) else np.asarray(plane)
    if x.shape != (model.config.n, model.config.n):
        raise InvalidInputError(
            f"input plane is {x.shape}, model expects {(model.config.n, model.config.n)}")
    return np.ascontiguousarray(x, dtype=model.dtype)


def _forward_pass(model: Model, x: np.ndarray):
    cfg = model.config
    z = kernels.conv_forward(x, model.conv_weights, model.conv_bias, cfg.stride)
    a = np.maximum(z, 0)
    logits = a.reshape(-1) @ model.dense_weights + model.dense_bias
    return z, a, logits


def logits(model: Model, plane: InputPlane | np.ndarray) -> np.ndarray:
    return _forward_pass(model, _as_input(model, plane))[2]


def forward(model: Model, plane: InputPlane | np.ndarray) -> InferenceResult:
    probs = softmax(logits(model, plane))
    return InferenceResult(probs, int(np.argmax(probs)))


def _check_label(model: Model, label: int) -> int:
    if not 0 <= int(label) < model.config.num_classes:
        raise InvalidInputError(f"label {label} outside [0, {model.config.num_classes})")
    return int(label)


def _xent(z: np.ndarray, label: int) -> tuple[float, np.ndarray, bool]:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max()
    lse = np.log(np.exp(shifted).sum())
    raw = float(lse - shifted[label])
    cap = -np.log(PROB_FLOOR)
    return min(raw, cap), np.exp(shifted - lse), raw > cap


def loss(model: Model, plane: InputPlane | np.ndarray, label: int) -> float:
    """Cross-entropy ``-log(max(p_label, 1e-12))``."""
    label = _check_label(model, label)
    return _xent(logits(model, plane), label)[0]


def loss_and_gradients(model: Model, plane: InputPlane | np.ndarray, label: int) -> tuple[float, Gradients]:
    label = _check_label(model, label)
    cfg = model.config
    x = _as_input(model, plane)
    z, a, zl = _forward_pass(model, x)
    value, probs, floored = _xent(zl, label)
    dlogits = probs
    dlogits[label] -= 1.0
    if floored:
        # the probability floor makes the loss locally constant
        dlogits[:] = 0.0
    dlogits = dlogits.astype(model.dtype)
    d_dense_w = np.outer(a.reshape(-1), dlogits)
    da = (model.dense_weights @ dlogits).reshape(z.shape)
    dz = np.where(z > 0, da, 0).astype(model.dtype)
    d_conv_w, d_conv_b = kernels.conv_backward(x, dz, cfg.stride, cfg.kernel)
    return value, Gradients(d_conv_w, d_conv_b, d_dense_w, dlogits)


def backward(model: Model, plane: InputPlane | np.ndarray, label: int) -> Gradients:
    return loss_and_gradients(model, plane, label)[1]


Example = tuple[InputPlane | np.ndarray, int]


def train(model: Model, dataset: Sequence[Example], epochs: int, learning_rate: float, seed: int,
          batch_size: int = 1) -> Model:
    """Plain SGD with per-epoch shuffling; returns a new model."""
    if not dataset:
        raise InvalidInputError("training set is empty")
    if learning_rate < 0:
        raise InvalidInputError("learning rate must be non-negative")
    if epochs < 0 or batch_size < 1:
        raise InvalidInputError("epochs must be >= 0 and batch_size >= 1")
    trained = model.copy()
    if learning_rate == 0:
        return trained
    params = trained.tensors()
    inputs = [_as_input(trained, x) for x, _ in dataset]
    labels = [_check_label(trained, y) for _, y in dataset]
    lr = trained.dtype.type(learning_rate)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            total = None
            for idx in batch:
                _, grads = loss_and_gradients(trained, inputs[idx], labels[idx])
                total = list(grads) if total is None else [t + g for t, g in zip(total, grads)]
            step = lr / trained.dtype.type(len(batch))
            for name, g in zip(TENSOR_NAMES, total):
                params[name] -= step * g
    return trained


def accuracy(model: Model, dataset: Sequence[Example]) -> float:
    if not dataset:
        return float("nan")
    hits = sum(forward(model, x).predicted_class == int(y) for x, y in dataset)
    return hits / len(dataset)


def mean_loss(model: Model, dataset: Sequence[Example]) -> float:
    return float(np.mean([loss(model, x, y) for x, y in dataset]))


# -- weights file ----------------------------------------------------------

def pack_header(config: ModelConfig, flags: int) -> bytes:
    if config.kernel != 3 or config.stride != 2:
        raise FormatError("the weights format stores only 3x3/stride-2 models", field="config")
    for name in ("n", "num_classes", "num_filters"):
        if not 0 <= getattr(config, name) <= 0xFFFF:
            raise FormatError("value does not fit in u16", field=name)
    return HEADER.pack(MAGIC, FORMAT_VERSION, flags, config.n, config.num_classes, config.num_filters)


def unpack_header(data: bytes) -> tuple[ModelConfig, int]:
    if len(data) < HEADER.size:
        raise FormatError(f"file is {len(data)} bytes, shorter than the {HEADER.size}-byte header",
                          field="header")
    magic, version, flags, n, c, f = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", field="magic")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", field="version")
    if flags & ~FLAG_QUANTIZED:
        raise FormatError(f"unknown flag bits 0x{flags:04X}", field="flags")
    try:
        config = ModelConfig(n=n, num_classes=c, num_filters=f)
    except InvalidInputError as exc:
        raise FormatError(str(exc), field="config") from None
    return config, flags


def save_model(model: Model) -> bytes:
    parts = [pack_header(model.config, 0)]
    parts += [t.astype("<f4").tobytes() for t in model.tensors().values()]
    return b"".join(parts)


def load_model(data: bytes) -> Model:
    config, flags = unpack_header(data)
    if flags & FLAG_QUANTIZED:
        raise FormatError("file holds a quantized model; use quant.load_quantized", field="flags")
    offset = HEADER.size
    tensors = {}
    for name, shape in config.tensor_shapes().items():
        nbytes = 4 * int(np.prod(shape))
        if offset + nbytes > len(data):
            raise FormatError("truncated tensor payload", field=name)
        tensors[name] = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=offset) \
            .astype(np.float32).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes", field="payload")
    try:
        return Model(config, **tensors)
    except InvalidInputError as exc:
        raise FormatError(str(exc), field="payload") from None
