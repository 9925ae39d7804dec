"""Portable C99 source generation for model graphs.

The bundle is self-contained: weights as static arrays, a single
``infer(const float *in, float *out)`` entry point, no heap allocation, no
dependencies beyond the standard library. Per-op emitters can be overridden
per backend to swap in target-specific implementations.
"""

from __future__ import annotations

import numpy as np

from .builder import ModelGraph
from .errors import CapabilityError, ShapeMismatchError
from .registry import LayerConfig


def _c_float(value: float) -> str:
    text = f"{float(value):.9g}"
    if not any(ch in text for ch in ".eE") :
        text += ".0"
    return text + "f"


def _array_literal(values: np.ndarray) -> str:
    # Trailing commas are valid C99 in initializer lists.
    flat = [_c_float(v) for v in np.asarray(values, dtype=np.float32).reshape(-1)]
    return "\n".join(
        "    " + ", ".join(flat[start : start + 8]) + ","
        for start in range(0, len(flat), 8)
    )


def _emit_linear(layer: LayerConfig, idx: int, src: str, dst: str) -> str:
    n_in = layer.input_shape.extents[0]
    n_out = layer.output_shape.extents[0]
    return f"""    {{
        for (int o = 0; o < {n_out}; ++o) {{
            float acc = l{idx}_bias[o];
            for (int i = 0; i < {n_in}; ++i) {{
                acc += l{idx}_weight[o * {n_in} + i] * {src}[i];
            }}
            {dst}[o] = acc;
        }}
    }}"""


def _emit_conv1d(layer: LayerConfig, idx: int, src: str, dst: str) -> str:
    in_ch, in_len = layer.input_shape.extents
    out_ch, out_len = layer.output_shape.extents
    k = layer.params["kernel_size"]
    s = layer.params.get("stride", 1)
    p = layer.params.get("padding", 0)
    return f"""    {{
        for (int oc = 0; oc < {out_ch}; ++oc) {{
            for (int j = 0; j < {out_len}; ++j) {{
                float acc = l{idx}_bias[oc];
                for (int ic = 0; ic < {in_ch}; ++ic) {{
                    for (int t = 0; t < {k}; ++t) {{
                        int pos = j * {s} + t - {p};
                        if (pos >= 0 && pos < {in_len}) {{
                            acc += l{idx}_weight[(oc * {in_ch} + ic) * {k} + t] * {src}[ic * {in_len} + pos];
                        }}
                    }}
                }}
                {dst}[oc * {out_len} + j] = acc;
            }}
        }}
    }}"""


def _emit_maxpool(layer: LayerConfig, idx: int, src: str, dst: str) -> str:
    channels, in_len = layer.input_shape.extents
    _, out_len = layer.output_shape.extents
    k = layer.params["kernel_size"]
    s = layer.params["stride"]
    return f"""    {{
        for (int c = 0; c < {channels}; ++c) {{
            for (int j = 0; j < {out_len}; ++j) {{
                float best = {src}[c * {in_len} + j * {s}];
                for (int t = 1; t < {k}; ++t) {{
                    float v = {src}[c * {in_len} + j * {s} + t];
                    if (v > best) {{
                        best = v;
                    }}
                }}
                {dst}[c * {out_len} + j] = best;
            }}
        }}
    }}"""


def _emit_relu(layer: LayerConfig, idx: int, src: str, dst: str) -> str:
    n = layer.input_shape.elements()
    return f"""    {{
        for (int i = 0; i < {n}; ++i) {{
            {dst}[i] = {src}[i] > 0.0f ? {src}[i] : 0.0f;
        }}
    }}"""


def _emit_copy(layer: LayerConfig, idx: int, src: str, dst: str) -> str:
    n = layer.input_shape.elements()
    return f"""    {{
        for (int i = 0; i < {n}; ++i) {{
            {dst}[i] = {src}[i];
        }}
    }}"""


C_EMITTERS = {
    "linear": _emit_linear,
    "conv1d": _emit_conv1d,
    "maxpool": _emit_maxpool,
    "relu": _emit_relu,
    "identity": _emit_copy,
    "flatten": _emit_copy,  # row-major layout makes the reshape a plain copy
}

C_TEMPLATE_OPS = tuple(C_EMITTERS)

_BENCH_MAIN = """#include <stdio.h>
#include <time.h>

#include "model.h"

int main(void) {
    static float in[MODEL_INPUT_ELEMS];
    static float out[MODEL_OUTPUT_ELEMS];
    unsigned int state = 12345u;
    for (int i = 0; i < MODEL_INPUT_ELEMS; ++i) {
        state = state * 1664525u + 1013904223u;
        in[i] = (float)(state >> 8) / 16777216.0f - 0.5f;
    }
    const int iters = 100;
    clock_t start = clock();
    for (int r = 0; r < iters; ++r) {
        infer(in, out);
    }
    double elapsed = (double)(clock() - start) / CLOCKS_PER_SEC;
    double checksum = 0.0;
    for (int i = 0; i < MODEL_OUTPUT_ELEMS; ++i) {
        checksum += (double)out[i];
    }
    printf("latency_s_per_inference %.9f\\n", elapsed / iters);
    printf("output_checksum %.6f\\n", checksum);
    return 0;
}
"""


def generate_c(graph: ModelGraph, params, overrides: dict | None = None) -> dict[str, str]:
    """Emit {model.h, model.c, weights.c, bench_main.c} for the graph."""
    emitters = dict(C_EMITTERS)
    emitters.update(overrides or {})

    weight_decls = []
    weight_defs = []
    for idx, layer in enumerate(graph.layers):
        if layer.op_name not in emitters:
            raise CapabilityError(f"no C template for op '{layer.op_name}'")
        for name, shape in layer.weight_shapes.items():
            tensors = params.get(idx) if hasattr(params, "get") else None
            if tensors is None or name not in tensors:
                raise ShapeMismatchError(f"missing parameter tensor '{name}' for layer {idx}")
            tensor = np.asarray(tensors[name], dtype=np.float32)
            if tensor.shape != shape:
                raise ShapeMismatchError(
                    f"layer {idx} tensor '{name}' is {tensor.shape}, declared {shape}"
                )
            size = tensor.size
            weight_decls.append(f"extern const float l{idx}_{name}[{size}];")
            weight_defs.append(
                f"const float l{idx}_{name}[{size}] = {{\n{_array_literal(tensor)}\n}};"
            )

    # Ping-pong scratch buffers; layer i writes buffer i % 2, the last writes out.
    n = len(graph.layers)
    buf_sizes = [0, 0]
    for i, layer in enumerate(graph.layers[:-1]):
        slot = i % 2
        buf_sizes[slot] = max(buf_sizes[slot], layer.output_shape.elements())

    body = []
    for i, layer in enumerate(graph.layers):
        src = "in" if i == 0 else f"buf_{'ab'[(i - 1) % 2]}"
        dst = "out" if i == n - 1 else f"buf_{'ab'[i % 2]}"
        body.append(
            f"    /* layer {i}: {layer.op_name} "
            f"{list(layer.input_shape.extents)} -> {list(layer.output_shape.extents)} */"
        )
        body.append(emitters[layer.op_name](layer, i, src, dst))

    buffers = []
    if buf_sizes[0]:
        buffers.append(f"    static float buf_a[{buf_sizes[0]}];")
    if buf_sizes[1]:
        buffers.append(f"    static float buf_b[{buf_sizes[1]}];")

    model_c = "#include \"model.h\"\n\nvoid infer(const float *in, float *out) {\n"
    if buffers:
        model_c += "\n".join(buffers) + "\n"
    model_c += "\n".join(body) + "\n}\n"

    decls = "\n".join(weight_decls)
    model_h = f"""#ifndef MODEL_H
#define MODEL_H

#define MODEL_INPUT_ELEMS {graph.input_shape.elements()}
#define MODEL_OUTPUT_ELEMS {graph.output_shape.elements()}

void infer(const float *in, float *out);

{decls}

#endif /* MODEL_H */
"""

    weights_c = "#include \"model.h\"\n\n" + "\n\n".join(weight_defs) + "\n"
    if not weight_defs:
        weights_c = "#include \"model.h\"\n\n/* graph has no parameter tensors */\n"

    return {
        "model.h": model_h,
        "model.c": model_c,
        "weights.c": weights_c,
        "bench_main.c": _BENCH_MAIN,
    }
