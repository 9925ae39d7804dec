"""Reference forward-pass interpreter over model graphs.

Float32 row-major semantics, one layer at a time; the instrumented variant
additionally reports exact multiply-accumulate counts and the peak activation
footprint under sequential execution (one input plus one output buffer live).
"""

from __future__ import annotations

import numpy as np

from .builder import ModelGraph
from .errors import ArchexError, ShapeMismatchError
from .registry import LayerConfig

ParamStore = dict[int, dict[str, np.ndarray]]


def init_params(graph: ModelGraph, seed: int) -> ParamStore:
    """Deterministic uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] initialization."""
    rng = np.random.default_rng(seed)
    store: ParamStore = {}
    for index, layer in enumerate(graph.layers):
        if not layer.weight_shapes:
            continue
        weight_shape = layer.weight_shapes.get("weight")
        if weight_shape is not None and len(weight_shape) > 1:
            fan_in = int(np.prod(weight_shape[1:]))
        else:
            fan_in = layer.input_shape.elements()
        bound = 1.0 / np.sqrt(fan_in)
        store[index] = {
            name: rng.uniform(-bound, bound, size=shape).astype(np.float32)
            for name, shape in layer.weight_shapes.items()
        }
    return store


def _run_linear(layer: LayerConfig, tensors: dict, x: np.ndarray) -> np.ndarray:
    return tensors["weight"] @ x + tensors["bias"]


def _run_conv1d(layer: LayerConfig, tensors: dict, x: np.ndarray) -> np.ndarray:
    w, b = tensors["weight"], tensors["bias"]
    k = layer.params["kernel_size"]
    s = layer.params.get("stride", 1)
    p = layer.params.get("padding", 0)
    out_len = layer.output_shape.extents[1]
    xp = np.pad(x, ((0, 0), (p, p))) if p else x
    acc = np.zeros((w.shape[0], out_len), dtype=np.float32)
    for t in range(k):
        acc += w[:, :, t] @ xp[:, t : t + s * out_len : s]
    return acc + b[:, None]


def _run_maxpool(layer: LayerConfig, tensors: dict, x: np.ndarray) -> np.ndarray:
    k = layer.params["kernel_size"]
    s = layer.params["stride"]
    out_len = layer.output_shape.extents[1]
    out = x[:, 0 : s * out_len : s].copy()
    for t in range(1, k):
        np.maximum(out, x[:, t : t + s * out_len : s], out=out)
    return out


_RUNTIME_OPS = {
    "linear": _run_linear,
    "conv1d": _run_conv1d,
    "maxpool": _run_maxpool,
    "relu": lambda layer, tensors, x: np.maximum(x, 0.0),
    "identity": lambda layer, tensors, x: x,
    "flatten": lambda layer, tensors, x: x.reshape(-1),
}


def register_op_semantics(op_name: str, fn) -> None:
    """Give a custom registered op reference semantics in the interpreter."""
    _RUNTIME_OPS[op_name] = fn


def _layer_macs(layer: LayerConfig, out: np.ndarray) -> int:
    # Derived from the actually computed arrays, not from graph metadata.
    if layer.op_name == "linear":
        return int(out.size) * layer.input_shape.extents[0]
    if layer.op_name == "conv1d":
        return int(out.size) * layer.input_shape.extents[0] * layer.params["kernel_size"]
    return 0


def _forward(graph: ModelGraph, params: ParamStore, x: np.ndarray, counted: bool):
    x = np.asarray(x, dtype=np.float32)
    if x.shape != graph.input_shape.extents:
        raise ShapeMismatchError(f"input shape {x.shape} != graph input {graph.input_shape}")
    macs = 0
    peak_elems = 0
    for index, layer in enumerate(graph.layers):
        fn = _RUNTIME_OPS.get(layer.op_name)
        if fn is None:
            raise ArchexError(f"op '{layer.op_name}' has no reference semantics")
        out = fn(layer, params.get(index, {}), x)
        out = np.asarray(out, dtype=np.float32)
        if out.shape != layer.output_shape.extents:
            raise ShapeMismatchError(
                f"layer {index} ('{layer.op_name}') produced {out.shape}, "
                f"declared {layer.output_shape}"
            )
        if counted:
            macs += _layer_macs(layer, out)
            peak_elems = max(peak_elems, x.size + out.size)
        x = out
    return x, macs, peak_elems * 4


def forward(graph: ModelGraph, params: ParamStore, x: np.ndarray) -> np.ndarray:
    out, _, _ = _forward(graph, params, x, counted=False)
    return out


def forward_counted(graph: ModelGraph, params: ParamStore, x: np.ndarray):
    """Forward pass plus (exact MAC count, peak activation bytes)."""
    return _forward(graph, params, x, counted=True)
