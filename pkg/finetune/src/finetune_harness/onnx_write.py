"""ONNX protobuf serialization, written directly against the wire format.

Emits standard opset-17 models (ir_version 8) from numpy weights without
needing the onnx package. Only the message fields required for inference
graphs are produced: nodes, initializers (raw_data tensors), value infos,
and the default-domain opset import.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING = 1, 2, 3
_ATTR_FLOATS, _ATTR_INTS = 6, 7
_DTYPE_FLOAT, _DTYPE_INT64 = 1, 7


def _varint(n: int) -> bytes:
    if n < 0:
        n &= (1 << 64) - 1
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _key(field: int, wire: int) -> bytes:
    return _varint((field << 3) | wire)


def _w_varint(field: int, value: int) -> bytes:
    return _key(field, 0) + _varint(value)


def _w_bytes(field: int, payload: bytes) -> bytes:
    return _key(field, 2) + _varint(len(payload)) + payload


def _w_str(field: int, text: str) -> bytes:
    return _w_bytes(field, text.encode("utf-8"))


def _w_float(field: int, value: float) -> bytes:
    return _key(field, 5) + struct.pack("<f", value)


def _tensor(name: str, array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype == np.int64:
        dtype = _DTYPE_INT64
        raw = array.astype("<i8").tobytes()
    else:
        dtype = _DTYPE_FLOAT
        raw = array.astype("<f4").tobytes()
    body = b"".join(_w_varint(1, int(d)) for d in array.shape)
    body += _w_varint(2, dtype)
    body += _w_str(8, name)
    body += _w_bytes(9, raw)
    return body


def _attr(name: str, value) -> bytes:
    body = _w_str(1, name)
    if isinstance(value, bool):
        raise TypeError("attributes take ints, not bools")
    if isinstance(value, float):
        body += _w_float(2, value) + _w_varint(20, _ATTR_FLOAT)
    elif isinstance(value, int):
        body += _w_varint(3, value) + _w_varint(20, _ATTR_INT)
    elif isinstance(value, str):
        body += _w_bytes(4, value.encode()) + _w_varint(20, _ATTR_STRING)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        body += _w_bytes(8, b"".join(_varint(v) for v in value)) + _w_varint(20, _ATTR_INTS)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, float) for v in value):
        body += _w_bytes(7, struct.pack(f"<{len(value)}f", *value)) + _w_varint(20, _ATTR_FLOATS)
    else:
        raise TypeError(f"unsupported attribute {name}={value!r}")
    return body


def _value_info(name: str, dims: list[int]) -> bytes:
    shape = b"".join(_w_bytes(1, _w_varint(1, d)) for d in dims)
    tensor_type = _w_varint(1, _DTYPE_FLOAT) + _w_bytes(2, shape)
    return _w_str(1, name) + _w_bytes(2, _w_bytes(1, tensor_type))


class GraphBuilder:
    """Accumulates nodes/initializers and serializes a ModelProto."""

    def __init__(self, name: str, opset: int = 17, producer: str = "finetune-harness"):
        self.name = name
        self.opset = opset
        self.producer = producer
        self._nodes: list[bytes] = []
        self._initializers: list[bytes] = []
        self._inputs: list[bytes] = []
        self._outputs: list[bytes] = []
        self._n = 0

    def _fresh(self, hint: str) -> str:
        self._n += 1
        return f"{hint}_{self._n}"

    def add_input(self, name: str, dims: list[int]) -> str:
        self._inputs.append(_value_info(name, dims))
        return name

    def mark_output(self, name: str, dims: list[int]) -> None:
        self._outputs.append(_value_info(name, dims))

    def init(self, hint: str, array: np.ndarray) -> str:
        name = self._fresh(hint)
        self._initializers.append(_tensor(name, array))
        return name

    def node(self, op: str, inputs: list[str], hint: str | None = None, **attrs) -> str:
        out = self._fresh(hint or op.lower())
        body = b"".join(_w_str(1, i) for i in inputs)
        body += _w_str(2, out)
        body += _w_str(4, op)
        body += b"".join(_w_bytes(5, _attr(k, v)) for k, v in attrs.items())
        self._nodes.append(body)
        return out

    # thin op helpers keep the exporter readable
    def reshape(self, x: str, shape: list[int]) -> str:
        s = self.init("shape", np.asarray(shape, dtype=np.int64))
        return self.node("Reshape", [x, s])

    def transpose(self, x: str, perm: list[int]) -> str:
        return self.node("Transpose", [x], perm=list(perm))

    def matmul(self, a: str, b: str) -> str:
        return self.node("MatMul", [a, b])

    def add(self, a: str, b: str) -> str:
        return self.node("Add", [a, b])

    def mul(self, a: str, b: str) -> str:
        return self.node("Mul", [a, b])

    def softmax(self, x: str, axis: int = -1) -> str:
        return self.node("Softmax", [x], axis=axis)

    def layer_norm(self, x: str, scale: str, bias: str, epsilon: float = 1e-5) -> str:
        return self.node(
            "LayerNormalization", [x, scale, bias], axis=-1, epsilon=epsilon
        )

    def reduce_mean(self, x: str, axes: list[int], keepdims: int = 0) -> str:
        return self.node("ReduceMean", [x], axes=list(axes), keepdims=keepdims)

    def erf(self, x: str) -> str:
        return self.node("Erf", [x])

    def gelu(self, x: str) -> str:
        inv_sqrt2 = self.init("inv_sqrt2", np.float32(1.0 / np.sqrt(2.0)))
        one = self.init("one", np.float32(1.0))
        half = self.init("half", np.float32(0.5))
        return self.mul(self.mul(x, half), self.add(self.erf(self.mul(x, inv_sqrt2)), one))

    def serialize(self) -> bytes:
        graph = b"".join(_w_bytes(1, n) for n in self._nodes)
        graph += _w_str(2, self.name)
        graph += b"".join(_w_bytes(5, t) for t in self._initializers)
        graph += b"".join(_w_bytes(11, vi) for vi in self._inputs)
        graph += b"".join(_w_bytes(12, vi) for vi in self._outputs)
        opset = _w_str(1, "") + _w_varint(2, self.opset)
        return (
            _w_varint(1, 8)          # ir_version
            + _w_str(2, self.producer)
            + _w_bytes(7, graph)
            + _w_bytes(8, opset)
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_bytes(self.serialize())
        return path
