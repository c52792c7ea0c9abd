"""Compiled vs numpy convolution kernels.

    python3 benchmarks/bench_kernels.py [--n 16] [--repeat 5]

Times the raw forward/backward kernels and one SGD epoch over a small
synthetic dataset with each backend swapped into ``uwinfer.kernels``.
"""
from __future__ import annotations

import argparse
import timeit
from contextlib import contextmanager

import numpy as np

from uwinfer import _conv_py, kernels, nn, pipeline, synth
from uwinfer.device import DeviceProfile


@contextmanager
def using(backend):
    saved = kernels.conv_forward, kernels.conv_backward
    kernels.conv_forward, kernels.conv_backward = backend.conv_forward, backend.conv_backward
    try:
        yield
    finally:
        kernels.conv_forward, kernels.conv_backward = saved


def best_of(fn, repeat: int, number: int) -> float:
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = {"python": _conv_py}
    if kernels.compiled_backend is not None:
        backends["compiled"] = kernels.compiled_backend
    else:
        print("compiled extension not built; timing the numpy backend only")

    rng = np.random.default_rng(0)
    cfg = nn.ModelConfig(n=args.n, num_classes=4)
    x = rng.random((args.n, args.n)).astype(np.float32)
    w = rng.normal(size=(8, 3, 3)).astype(np.float32)
    b = np.zeros(8, dtype=np.float32)
    dz = rng.normal(size=(cfg.conv_out, cfg.conv_out, 8)).astype(np.float32)

    clips = synth.synth_dataset(synth.SyntheticDatasetSpec(clips_per_class=25))
    data = pipeline.planes_for(clips, DeviceProfile(), args.n)
    model = nn.init_model(cfg, 0)

    rows = []
    for name, backend in backends.items():
        fwd = best_of(lambda: backend.conv_forward(x, w, b, 2), args.repeat, 2000)
        bwd = best_of(lambda: backend.conv_backward(x, dz, 2, 3), args.repeat, 2000)
        with using(backend):
            epoch = best_of(lambda: nn.train(model, data, 1, 0.05, 0), args.repeat, 1)
        rows.append((name, fwd, bwd, epoch))

    print(f"N={args.n}, {len(data)} training planes, best of {args.repeat}")
    print(f"{'backend':<10}{'forward us':>12}{'backward us':>13}{'epoch ms':>11}")
    for name, fwd, bwd, epoch in rows:
        print(f"{name:<10}{fwd * 1e6:>12.2f}{bwd * 1e6:>13.2f}{epoch * 1e3:>11.1f}")
    if len(rows) == 2:
        (_, pf, pb, pe), (_, cf, cb, ce) = rows
        print(f"speedup   {pf / cf:>11.1f}x{pb / cb:>12.1f}x{pe / ce:>10.1f}x")


if __name__ == "__main__":
    main()
