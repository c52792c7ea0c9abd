"""int16 model conversion and device memory accounting."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import nn
from .device import DeviceProfile
from .dsp import InputPlane
from .errors import FormatError, InvalidInputError

INT16_MAX = 32767
ADC_WINDOW_BYTES_PER_SAMPLE = 2  # 12-bit codes stored in 16-bit words
ACTIVATION_BYTES = 4  # float32 compute


@dataclass(frozen=True)
class QuantizedModel:
    config: nn.ModelConfig
    ints: dict[str, np.ndarray]
    scales: dict[str, float]

    def __post_init__(self):
        shapes = self.config.tensor_shapes()
        if set(self.ints) != set(shapes) or set(self.scales) != set(shapes):
            raise InvalidInputError(f"quantized tensors must be exactly {sorted(shapes)}")
        for name, shape in shapes.items():
            q = self.ints[name]
            if q.shape != shape or q.dtype != np.int16:
                raise InvalidInputError(f"{name}: expected int16 array of shape {shape}")
            if not self.scales[name] > 0:
                raise InvalidInputError(f"{name}: scale must be positive")

    def dequantize(self, dtype=np.float32) -> nn.Model:
        return nn.Model(self.config, **{
            name: (self.ints[name].astype(np.float64) * self.scales[name]).astype(dtype)
            for name in nn.TENSOR_NAMES})

    def equals(self, other: "QuantizedModel") -> bool:
        return (self.config == other.config and self.scales == other.scales
                and all(np.array_equal(self.ints[k], other.ints[k]) for k in nn.TENSOR_NAMES))


def quantize_tensor(w: np.ndarray) -> tuple[np.ndarray, float]:
    """Symmetric per-tensor int16: ``scale = max|w| / 32767`` (1.0 for all-zero)."""
    w = np.asarray(w, dtype=np.float64)
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    if peak == 0.0:
        return np.zeros(w.shape, dtype=np.int16), 1.0
    # stored as float32 in the weights file, so quantize against that value
    scale = float(np.float32(peak / INT16_MAX))
    q = np.clip(np.round(w / scale), -INT16_MAX, INT16_MAX)
    return q.astype(np.int16), scale


def quantize(model: nn.Model | QuantizedModel) -> QuantizedModel:
    if isinstance(model, QuantizedModel):
        return model
    ints, scales = {}, {}
    for name, tensor in model.tensors().items():
        ints[name], scales[name] = quantize_tensor(tensor)
    return QuantizedModel(model.config, ints, scales)


def forward_quantized(qmodel: QuantizedModel, plane: InputPlane | np.ndarray) -> nn.InferenceResult:
    """int16 storage, float arithmetic on the dequantized weights."""
    return nn.forward(qmodel.dequantize(), plane)


# -- weights file ----------------------------------------------------------

_SCALE = struct.Struct("<f")


def save_quantized(qmodel: QuantizedModel) -> bytes:
    parts = [nn.pack_header(qmodel.config, nn.FLAG_QUANTIZED)]
    for name in nn.TENSOR_NAMES:
        parts.append(_SCALE.pack(qmodel.scales[name]))
        parts.append(qmodel.ints[name].astype("<i2").tobytes())
    return b"".join(parts)


def load_quantized(data: bytes) -> QuantizedModel:
    config, flags = nn.unpack_header(data)
    if not flags & nn.FLAG_QUANTIZED:
        raise FormatError("file holds a float model; use nn.load_model", field="flags")
    offset = nn.HEADER.size
    ints, scales = {}, {}
    for name, shape in config.tensor_shapes().items():
        count = int(np.prod(shape))
        if offset + _SCALE.size + 2 * count > len(data):
            raise FormatError("truncated tensor payload", field=name)
        (scale,) = _SCALE.unpack_from(data, offset)
        if not (np.isfinite(scale) and scale > 0):
            raise FormatError(f"invalid scale {scale!r}", field=name)
        offset += _SCALE.size
        ints[name] = np.frombuffer(data, dtype="<i2", count=count, offset=offset) \
            .astype(np.int16).reshape(shape)
        scales[name] = float(scale)
        offset += 2 * count
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes", field="payload")
    return QuantizedModel(config, ints, scales)


def load_any(data: bytes) -> nn.Model | QuantizedModel:
    _, flags = nn.unpack_header(data)
    return load_quantized(data) if flags & nn.FLAG_QUANTIZED else nn.load_model(data)


def save_any(model: nn.Model | QuantizedModel) -> bytes:
    return save_quantized(model) if isinstance(model, QuantizedModel) else nn.save_model(model)


# -- footprint -------------------------------------------------------------

@dataclass(frozen=True)
class FootprintReport:
    model_bytes: int
    working_buffer_bytes: int
    total_bytes: int
    limit_bytes: int
    fits: bool


def model_bytes(model: nn.Model | QuantizedModel) -> int:
    """Exact size of the model's weights file."""
    cfg = model.config
    if isinstance(model, QuantizedModel):
        return nn.HEADER.size + len(nn.TENSOR_NAMES) * _SCALE.size + 2 * cfg.num_params
    return nn.HEADER.size + 4 * cfg.num_params


def working_buffer_bytes(config: nn.ModelConfig, profile: DeviceProfile) -> int:
    """Statically allocated buffers: ADC window, input plane, conv map, logits."""
    activations = config.n ** 2 + config.flat_len + config.num_classes
    return ADC_WINDOW_BYTES_PER_SAMPLE * profile.window_len + ACTIVATION_BYTES * activations


def footprint(model: nn.Model | QuantizedModel, profile: DeviceProfile) -> FootprintReport:
    weights = model_bytes(model)
    buffers = working_buffer_bytes(model.config, profile)
    total = weights + buffers
    return FootprintReport(weights, buffers, total, profile.memory_limit_bytes,
                           total <= profile.memory_limit_bytes)
