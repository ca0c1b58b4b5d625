"""Time the compiled and pure-Python convolution backends on layer shapes from the tiny network.

    python benchmarks/bench_kernels.py [--repeat 5] [--dtype f32] [--json]
"""
import argparse
import json
import time

import numpy as np

from revsci.numerics import (
    DTYPES,
    ConvSpec,
    available_backends,
    conv3d_backward_data,
    conv3d_backward_weights,
    conv3d_forward,
    use_backend,
)

# (label, in_channels, out_channels, kernel, stride, input extents (B, nx, ny))
LAYERS = [
    ("extract.0 5x5x5", 1, 16, 5, 1, (8, 64, 64)),
    ("extract.1 3x3x3", 16, 16, 3, 1, (8, 64, 64)),
    ("extract.3 stride 2", 16, 16, 3, (1, 2, 2), (8, 64, 64)),
    ("group conv 3x3x3", 8, 8, 3, 1, (8, 32, 32)),
    ("1x1x1 mix", 16, 16, 1, 1, (8, 64, 64)),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_layer(layer, backend, repeat, dtype):
    label, cin, cout, k, stride, extents = layer
    spec = ConvSpec.same(cin, cout, k, stride)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((cin, *extents)).astype(dtype)
    w = rng.standard_normal(spec.weight_shape).astype(dtype)
    b = np.zeros(cout, dtype)
    with use_backend(backend):
        y = conv3d_forward(x, w, b, spec)
        g = np.ones_like(y)
        return {
            "layer": label,
            "backend": backend,
            "forward": best_of(lambda: conv3d_forward(x, w, b, spec), repeat),
            "backward_data": best_of(lambda: conv3d_backward_data(g, w, spec, extents), repeat),
            "backward_weights": best_of(lambda: conv3d_backward_weights(g, x, spec), repeat),
        }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--dtype", choices=sorted(DTYPES), default="f32")
    parser.add_argument("--json", action="store_true", help="print rows as JSON instead of a table")
    args = parser.parse_args()

    rows = [bench_layer(layer, backend, args.repeat, DTYPES[args.dtype])
            for layer in LAYERS for backend in available_backends()]
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'layer':<22}{'backend':<10}{'forward':>10}{'bwd data':>10}{'bwd wgt':>10}  (ms, best of {args.repeat})")
    for r in rows:
        print(f"{r['layer']:<22}{r['backend']:<10}{1e3 * r['forward']:>10.2f}"
              f"{1e3 * r['backward_data']:>10.2f}{1e3 * r['backward_weights']:>10.2f}")


if __name__ == "__main__":
    main()
