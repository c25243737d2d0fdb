"""Minimal ONNX protobuf writer used to forge small graphs in tests.

Only the fields the reader consumes are emitted, but the encoding follows
the real ONNX schema (ir_version 8, default-domain opset 17), so files are
ordinary ONNX models.
"""

from __future__ import annotations

import struct

import numpy as np

ATTR_FLOAT, ATTR_INT, ATTR_STRING, ATTR_TENSOR = 1, 2, 3, 4
ATTR_FLOATS, ATTR_INTS = 6, 7


def varint(n: int) -> bytes:
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def key(field: int, wire: int) -> bytes:
    return varint((field << 3) | wire)


def f_varint(field: int, value: int) -> bytes:
    return key(field, 0) + varint(value)


def f_bytes(field: int, payload: bytes) -> bytes:
    return key(field, 2) + varint(len(payload)) + payload


def f_str(field: int, text: str) -> bytes:
    return f_bytes(field, text.encode("utf-8"))


def tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype == np.int64:
        dtype_code = 7
        raw = arr.astype("<i8").tobytes()
    else:
        dtype_code = 1
        raw = arr.astype("<f4").tobytes()
    body = b"".join(f_varint(1, int(d)) for d in arr.shape)
    body += f_varint(2, dtype_code)
    body += f_str(8, name)
    body += f_bytes(9, raw)
    return body


def attribute(name: str, value) -> bytes:
    body = f_str(1, name)
    if isinstance(value, float):
        body += key(2, 5) + struct.pack("<f", value) + f_varint(20, ATTR_FLOAT)
    elif isinstance(value, int):
        body += f_varint(3, value & ((1 << 64) - 1)) + f_varint(20, ATTR_INT)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        packed = b"".join(varint(v & ((1 << 64) - 1)) for v in value)
        body += f_bytes(8, packed) + f_varint(20, ATTR_INTS)
    else:
        raise TypeError(f"unsupported attribute {name}={value!r}")
    return body


def node(op_type: str, inputs: list[str], outputs: list[str], **attrs) -> bytes:
    body = b"".join(f_str(1, i) for i in inputs)
    body += b"".join(f_str(2, o) for o in outputs)
    body += f_str(4, op_type)
    body += b"".join(f_bytes(5, attribute(k, v)) for k, v in attrs.items())
    return body


def value_info(name: str, dims: list[int | None]) -> bytes:
    shape = b"".join(
        f_bytes(1, f_varint(1, d) if d is not None else f_str(2, "N")) for d in dims
    )
    tensor_type = f_varint(1, 1) + f_bytes(2, shape)  # elem_type FLOAT
    return f_str(1, name) + f_bytes(2, f_bytes(1, tensor_type))


def model(
    nodes: list[bytes],
    initializers: list[bytes],
    inputs: list[bytes],
    outputs: list[bytes],
    opset: int = 17,
) -> bytes:
    graph = b"".join(f_bytes(1, n) for n in nodes)
    graph += f_str(2, "g")
    graph += b"".join(f_bytes(5, t) for t in initializers)
    graph += b"".join(f_bytes(11, vi) for vi in inputs)
    graph += b"".join(f_bytes(12, vi) for vi in outputs)
    opset_import = f_str(1, "") + f_varint(2, opset)
    return (
        f_varint(1, 8)  # ir_version
        + f_str(2, "carovd-tests")
        + f_bytes(7, graph)
        + f_bytes(8, opset_import)
    )


def channel_mean_softmax_model(weights: np.ndarray, bias: np.ndarray) -> bytes:
    """probs = Softmax(mean_THW(x) @ W + b) over a [1,16,224,224,3] input."""
    nodes = [
        node("ReduceMean", ["clip"], ["pooled"], axes=[1, 2, 3], keepdims=0),
        node("MatMul", ["pooled", "W"], ["scores"]),
        node("Add", ["scores", "b"], ["logits"]),
        node("Softmax", ["logits"], ["probs"], axis=-1),
    ]
    inits = [tensor("W", weights.astype(np.float32)), tensor("b", bias.astype(np.float32))]
    return model(
        nodes,
        inits,
        [value_info("clip", [1, 16, 224, 224, 3])],
        [value_info("probs", [1, 2])],
    )
