"""Self-contained reader and executor for a restricted ONNX subset.

Inference graphs arrive as standard ONNX protobuf files, but only the op
vocabulary below is executed (enough for transformer-style classifiers:
matmuls, layer norm, softmax attention, erf-based GELU, reshapes):

    Add Sub Mul Div MatMul Gemm Sqrt Erf Exp Tanh Sigmoid Relu Pow
    Softmax Transpose Reshape Flatten Concat Slice Gather Unsqueeze
    Squeeze ReduceMean LayerNormalization Identity Cast Constant

The protobuf wire format is decoded directly (varint / 32-bit / 64-bit /
length-delimited) against the stable ONNX field numbers, so no onnx
dependency is required. Unknown fields are skipped; unknown ops raise.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from .errors import ModelLoadError, ShapeMismatch

_WIRE_VARINT = 0
_WIRE_64BIT = 1
_WIRE_LEN = 2
_WIRE_32BIT = 5

# TensorProto.DataType values we accept
_DTYPE_FLOAT = 1
_DTYPE_INT64 = 7
_NP_DTYPES = {_DTYPE_FLOAT: np.dtype("<f4"), _DTYPE_INT64: np.dtype("<i8")}


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise ModelLoadError("truncated varint in graph file")
        byte = data[pos]
        result |= (byte & 0x7F) << shift
        pos += 1
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise ModelLoadError("varint overflow in graph file")


def _iter_fields(data: bytes):
    """Yield (field_number, wire_type, value) over one serialized message."""
    pos = 0
    while pos < len(data):
        key, pos = _read_varint(data, pos)
        number, wire = key >> 3, key & 0x07
        if wire == _WIRE_VARINT:
            value, pos = _read_varint(data, pos)
        elif wire == _WIRE_64BIT:
            value = data[pos : pos + 8]
            pos += 8
        elif wire == _WIRE_LEN:
            length, pos = _read_varint(data, pos)
            value = data[pos : pos + length]
            pos += length
        elif wire == _WIRE_32BIT:
            value = data[pos : pos + 4]
            pos += 4
        else:
            raise ModelLoadError(f"unsupported wire type {wire}")
        if pos > len(data):
            raise ModelLoadError("truncated field in graph file")
        yield number, wire, value


def _signed(value: int) -> int:
    # protobuf int64 arrives as two's-complement varint
    return value - (1 << 64) if value >= (1 << 63) else value


def _parse_tensor(data: bytes) -> tuple[str, np.ndarray]:
    dims: list[int] = []
    dtype = _DTYPE_FLOAT
    name = ""
    raw = b""
    float_data: list[float] = []
    int64_data: list[int] = []
    for number, wire, value in _iter_fields(data):
        if number == 1 and wire == _WIRE_VARINT:
            dims.append(_signed(value))
        elif number == 1 and wire == _WIRE_LEN:  # packed dims
            pos = 0
            while pos < len(value):
                v, pos = _read_varint(value, pos)
                dims.append(_signed(v))
        elif number == 2:
            dtype = value
        elif number == 4 and wire == _WIRE_LEN:  # packed floats
            float_data.extend(struct.unpack(f"<{len(value) // 4}f", value))
        elif number == 4 and wire == _WIRE_32BIT:
            float_data.append(struct.unpack("<f", value)[0])
        elif number == 7 and wire == _WIRE_LEN:
            pos = 0
            while pos < len(value):
                v, pos = _read_varint(value, pos)
                int64_data.append(_signed(v))
        elif number == 7 and wire == _WIRE_VARINT:
            int64_data.append(_signed(value))
        elif number == 8:
            name = value.decode("utf-8")
        elif number == 9:
            raw = value
    if dtype not in _NP_DTYPES:
        raise ModelLoadError(f"initializer {name!r}: unsupported data type {dtype}")
    np_dtype = _NP_DTYPES[dtype]
    if raw:
        arr = np.frombuffer(raw, dtype=np_dtype)
    elif float_data and dtype == _DTYPE_FLOAT:
        arr = np.asarray(float_data, dtype=np_dtype)
    elif int64_data and dtype == _DTYPE_INT64:
        arr = np.asarray(int64_data, dtype=np_dtype)
    else:
        arr = np.zeros(0, dtype=np_dtype)
    return name, arr.reshape(dims).copy()


def _parse_attribute(data: bytes) -> tuple[str, object]:
    name = ""
    f_val = None
    i_val = None
    s_val = None
    t_val = None
    floats: list[float] = []
    ints: list[int] = []
    for number, wire, value in _iter_fields(data):
        if number == 1:
            name = value.decode("utf-8")
        elif number == 2:
            f_val = struct.unpack("<f", value)[0]
        elif number == 3:
            i_val = _signed(value)
        elif number == 4:
            s_val = value
        elif number == 5:
            t_val = _parse_tensor(value)[1]
        elif number == 7 and wire == _WIRE_LEN:
            floats.extend(struct.unpack(f"<{len(value) // 4}f", value))
        elif number == 7 and wire == _WIRE_32BIT:
            floats.append(struct.unpack("<f", value)[0])
        elif number == 8 and wire == _WIRE_LEN:
            pos = 0
            while pos < len(value):
                v, pos = _read_varint(value, pos)
                ints.append(_signed(v))
        elif number == 8 and wire == _WIRE_VARINT:
            ints.append(_signed(value))
    for candidate in (f_val, i_val, s_val, t_val):
        if candidate is not None:
            return name, candidate
    if floats:
        return name, floats
    return name, ints


@dataclass
class GraphNode:
    op_type: str
    inputs: list[str]
    outputs: list[str]
    attrs: dict[str, object] = field(default_factory=dict)


def _parse_node(data: bytes) -> GraphNode:
    node = GraphNode(op_type="", inputs=[], outputs=[])
    for number, wire, value in _iter_fields(data):
        if number == 1:
            node.inputs.append(value.decode("utf-8"))
        elif number == 2:
            node.outputs.append(value.decode("utf-8"))
        elif number == 4:
            node.op_type = value.decode("utf-8")
        elif number == 5:
            k, v = _parse_attribute(value)
            node.attrs[k] = v
    return node


def _parse_value_info(data: bytes) -> tuple[str, list[int | None]]:
    name = ""
    dims: list[int | None] = []
    for number, wire, value in _iter_fields(data):
        if number == 1:
            name = value.decode("utf-8")
        elif number == 2:  # TypeProto
            for n2, _, v2 in _iter_fields(value):
                if n2 == 1:  # tensor_type
                    for n3, _, v3 in _iter_fields(v2):
                        if n3 == 2:  # shape
                            for n4, _, v4 in _iter_fields(v3):
                                if n4 == 1:  # dim
                                    dim_value: int | None = None
                                    for n5, w5, v5 in _iter_fields(v4):
                                        if n5 == 1 and w5 == _WIRE_VARINT:
                                            dim_value = _signed(v5)
                                    dims.append(dim_value)
    return name, dims


@dataclass
class OnnxGraph:
    nodes: list[GraphNode]
    initializers: dict[str, np.ndarray]
    inputs: list[tuple[str, list[int | None]]]
    outputs: list[str]
    opset: int = 17


def load_graph(path: str | Path) -> OnnxGraph:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ModelLoadError(f"cannot read graph file {path}: {exc}") from exc

    graph_bytes = None
    opset = 17
    for number, wire, value in _iter_fields(data):
        if number == 7 and wire == _WIRE_LEN:
            graph_bytes = value
        elif number == 8 and wire == _WIRE_LEN:  # opset_import
            for n2, w2, v2 in _iter_fields(value):
                if n2 == 2 and w2 == _WIRE_VARINT:
                    opset = _signed(v2)
    if graph_bytes is None:
        raise ModelLoadError(f"{path}: no graph in model file")

    nodes: list[GraphNode] = []
    initializers: dict[str, np.ndarray] = {}
    inputs: list[tuple[str, list[int | None]]] = []
    outputs: list[str] = []
    for number, wire, value in _iter_fields(graph_bytes):
        if number == 1:
            nodes.append(_parse_node(value))
        elif number == 5:
            name, arr = _parse_tensor(value)
            initializers[name] = arr
        elif number == 11:
            inputs.append(_parse_value_info(value))
        elif number == 12:
            outputs.append(_parse_value_info(value)[0])
    graph_inputs = [(n, d) for n, d in inputs if n not in initializers]
    return OnnxGraph(
        nodes=nodes,
        initializers=initializers,
        inputs=graph_inputs,
        outputs=outputs,
        opset=opset,
    )


# --- execution --------------------------------------------------------------

def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _layer_norm(node: GraphNode, vals: list[np.ndarray]) -> np.ndarray:
    x = vals[0]
    scale = vals[1]
    bias = vals[2] if len(vals) > 2 else None
    axis = int(node.attrs.get("axis", -1))
    eps = np.float32(node.attrs.get("epsilon", 1e-5))
    if axis < 0:
        axis += x.ndim
    axes = tuple(range(axis, x.ndim))
    mean = x.mean(axis=axes, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=axes, keepdims=True)
    out = centered / np.sqrt(var + eps) * scale
    if bias is not None:
        out = out + bias
    return out.astype(x.dtype)


def _gemm(node: GraphNode, vals: list[np.ndarray]) -> np.ndarray:
    a, b = vals[0], vals[1]
    if int(node.attrs.get("transA", 0)):
        a = a.T
    if int(node.attrs.get("transB", 0)):
        b = b.T
    out = np.float32(node.attrs.get("alpha", 1.0)) * (a @ b)
    if len(vals) > 2:
        out = out + np.float32(node.attrs.get("beta", 1.0)) * vals[2]
    return out


def _slice(node: GraphNode, vals: list[np.ndarray]) -> np.ndarray:
    x = vals[0]
    starts = vals[1].astype(np.int64)
    ends = vals[2].astype(np.int64)
    axes = vals[3].astype(np.int64) if len(vals) > 3 else np.arange(len(starts))
    steps = vals[4].astype(np.int64) if len(vals) > 4 else np.ones(len(starts), np.int64)
    slices = [slice(None)] * x.ndim
    for s, e, a, st in zip(starts, ends, axes, steps):
        slices[int(a)] = slice(int(s), int(e), int(st))
    return x[tuple(slices)]


def _reduce_mean(node: GraphNode, vals: list[np.ndarray]) -> np.ndarray:
    x = vals[0]
    axes = node.attrs.get("axes")
    if axes is None and len(vals) > 1:
        axes = [int(v) for v in vals[1]]
    keepdims = bool(node.attrs.get("keepdims", 1))
    axis = tuple(int(a) for a in axes) if axes else None
    return x.mean(axis=axis, keepdims=keepdims, dtype=x.dtype)


_OPS = {
    "Add": lambda n, v: v[0] + v[1],
    "Sub": lambda n, v: v[0] - v[1],
    "Mul": lambda n, v: v[0] * v[1],
    "Div": lambda n, v: v[0] / v[1],
    "MatMul": lambda n, v: v[0] @ v[1],
    "Gemm": _gemm,
    "Sqrt": lambda n, v: np.sqrt(v[0]),
    "Erf": lambda n, v: erf(v[0]).astype(v[0].dtype),
    "Exp": lambda n, v: np.exp(v[0]),
    "Tanh": lambda n, v: np.tanh(v[0]),
    "Sigmoid": lambda n, v: (1.0 / (1.0 + np.exp(-v[0]))).astype(v[0].dtype),
    "Relu": lambda n, v: np.maximum(v[0], 0),
    "Pow": lambda n, v: np.power(v[0], v[1]),
    "Softmax": lambda n, v: _softmax(v[0], int(n.attrs.get("axis", -1))),
    "Transpose": lambda n, v: np.transpose(v[0], n.attrs.get("perm")),
    "Reshape": lambda n, v: v[0].reshape([int(d) for d in v[1]]),
    "Flatten": lambda n, v: v[0].reshape(
        int(np.prod(v[0].shape[: int(n.attrs.get("axis", 1))]) or 1), -1
    ),
    "Concat": lambda n, v: np.concatenate(v, axis=int(n.attrs["axis"])),
    "Slice": _slice,
    "Gather": lambda n, v: np.take(v[0], v[1].astype(np.int64), axis=int(n.attrs.get("axis", 0))),
    "Unsqueeze": lambda n, v: np.expand_dims(v[0], tuple(int(a) for a in v[1])),
    "Squeeze": lambda n, v: np.squeeze(v[0], tuple(int(a) for a in v[1]) if len(v) > 1 else None),
    "ReduceMean": _reduce_mean,
    "LayerNormalization": _layer_norm,
    "Identity": lambda n, v: v[0],
    "Cast": lambda n, v: v[0].astype(_NP_DTYPES.get(int(n.attrs.get("to", 1)), np.float32)),
    "Constant": lambda n, v: n.attrs["value"],
}


def run_graph(graph: OnnxGraph, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Execute nodes in file order (graphs are serialized topologically)."""
    env: dict[str, np.ndarray] = dict(graph.initializers)
    for name, declared in graph.inputs:
        if name not in feeds:
            raise ShapeMismatch(f"graph input {name!r} not fed")
        arr = np.asarray(feeds[name])
        for dim, got in zip(declared, arr.shape):
            if dim is not None and dim != got:
                raise ShapeMismatch(
                    f"graph input {name!r} expects {declared}, got {list(arr.shape)}"
                )
        env[name] = arr
    for node in graph.nodes:
        op = _OPS.get(node.op_type)
        if op is None:
            raise ModelLoadError(f"unsupported op {node.op_type!r}")
        vals = [env[i] for i in node.inputs if i]
        result = op(node, vals)
        env[node.outputs[0]] = result
    missing = [o for o in graph.outputs if o not in env]
    if missing:
        raise ModelLoadError(f"graph outputs never produced: {missing}")
    return {o: env[o] for o in graph.outputs}
